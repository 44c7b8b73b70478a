#include "mathrec/train.hpp"

namespace mathrec {

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::ofstream flags;
  for (const auto& p : predictions) {
    out << p.image_id << '\t' << p.latex << '\n';
    if (!p.empty_expression && !p.truncated) continue;
    if (!flags.is_open()) {
      flags.open(path.string() + ".flags");
      if (!flags) throw IoError("cannot write " + path.string() + ".flags");
    }
    flags << p.image_id << '\t' << (p.empty_expression ? "empty-expression" : "truncated") << '\n';
  }
}

std::vector<PredictionLine> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<PredictionLine> out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(number) + ": expected image_id<TAB>latex");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace mathrec
