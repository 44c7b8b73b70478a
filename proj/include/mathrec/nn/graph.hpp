#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "mathrec/error.hpp"

namespace mathrec::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until zero_grad() or a backward pass reaches it
  bool trainable = true;

  bool has_grad() const { return grad.rows() == value.rows() && grad.cols() == value.cols(); }
};

/// Named parameters in insertion order. References stay valid as the store grows.
template <typename Scalar>
class ParamStore {
 public:
  using Param = Parameter<Scalar>;

  Param& add(std::string name, Matrix<Scalar> init, bool trainable = true) {
    if (index_.count(name)) throw InputError("duplicate parameter name '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(init), {}, trainable});
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Param& get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Param& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

  void zero_grad() {
    for (auto& p : params_) p.grad = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Matrix<Scalar> xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
                              std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
class Graph;

/// Handle to one node of a Graph.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  const Matrix<Scalar>& grad() const { return graph_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return graph_->requires_grad(id_); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse id
/// order is a valid topological order for the backward sweep.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using Backprop = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return tracking_; }

  Var<Scalar> constant(Mat value) { return push(std::move(value), false, nullptr, nullptr); }

  Var<Scalar> variable(Mat value) { return push(std::move(value), tracking_, nullptr, nullptr); }

  /// Leaf bound to a stored parameter; gradients flow back into p.grad.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    const auto it = bound_.find(&p);
    if (it != bound_.end()) return {this, it->second};
    auto v = push(p.value, tracking_ && p.trainable, nullptr, &p);
    bound_.emplace(&p, v.id());
    return v;
  }

  /// Appends an op result. backprop is dropped when no input needs a gradient.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, Backprop backprop) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, needs ? std::move(backprop) : nullptr, nullptr);
  }
  Var<Scalar> record(Mat value, const std::vector<Var<Scalar>>& inputs, Backprop backprop) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, needs ? std::move(backprop) : nullptr, nullptr);
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient slot of a node, zero-initialised on first use.
  Mat& grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(const Var<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.rows(), loss.cols()));
    if (!requires_grad(loss.id())) return;
    grad_slot(loss.id())(0, 0) = Scalar(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (n.backprop && n.grad.size() != 0) n.backprop(*this, id);
    }
    for (auto& n : nodes_) {
      if (!n.param || n.grad.size() == 0) continue;
      if (!n.param->has_grad()) n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backprop backprop;
    Parameter<Scalar>* param = nullptr;
    bool requires_grad = false;
  };

  Var<Scalar> push(Mat value, bool requires_grad, Backprop backprop, Parameter<Scalar>* param) {
    nodes_.push_back({std::move(value), {}, std::move(backprop), param, requires_grad});
    return {this, nodes_.size() - 1};
  }

  bool tracking_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, std::size_t> bound_;
};

}  // namespace mathrec::nn
