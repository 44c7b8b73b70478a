#include "mathrec/model/model.hpp"

namespace mathrec::model {

template class Model<double>;
template class Model<float>;

}  // namespace mathrec::model
