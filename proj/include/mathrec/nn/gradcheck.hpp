#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mathrec/nn/graph.hpp"

namespace mathrec::nn {

struct GradCheckReport {
  double max_relative_error = 0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against centered finite
/// differences. The error for one coordinate is
/// |analytic - numeric| / max(1, |numeric|). When per_param_limit > 0 at most
/// that many coordinates are sampled from each parameter.
template <typename Scalar, typename LossFn>
GradCheckReport grad_check_report(LossFn&& loss_fn, ParamStore<Scalar>& store, double eps,
                                  std::size_t per_param_limit = 0, std::uint64_t seed = 7) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw InputError("grad_check eps must lie in [1e-7, 1e-3]");
  auto evaluate = [&](bool track) {
    Graph<Scalar> g(track);
    Var<Scalar> loss = loss_fn(g);
    const double v = static_cast<double>(loss.value()(0, 0));
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    if (track) g.backward(loss);
    return v;
  };

  store.zero_grad();
  evaluate(true);

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (auto& p : store) {
    if (!p.trainable) continue;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    if (per_param_limit > 0 && coords.size() > per_param_limit) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_param_limit);
    }
    for (const auto i : coords) {
      Scalar& x = p.value.data()[i];
      const Scalar saved = x;
      x = static_cast<Scalar>(saved + eps);
      const double plus = evaluate(false);
      x = static_cast<Scalar>(saved - eps);
      const double minus = evaluate(false);
      x = saved;
      const double numeric = (plus - minus) / (2 * eps);
      const double analytic = static_cast<double>(p.grad.data()[i]);
      if (!std::isfinite(numeric) || !std::isfinite(analytic))
        throw NumericError("grad_check: non-finite gradient for " + p.name);
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coordinates;
      if (err > report.max_relative_error || report.worst_index < 0) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

template <typename Scalar, typename LossFn>
double grad_check(LossFn&& loss_fn, ParamStore<Scalar>& store, double eps, std::size_t per_param_limit = 0) {
  return grad_check_report<Scalar>(std::forward<LossFn>(loss_fn), store, eps, per_param_limit).max_relative_error;
}

}  // namespace mathrec::nn
