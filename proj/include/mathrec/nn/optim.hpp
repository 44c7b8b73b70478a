#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "mathrec/nn/graph.hpp"

namespace mathrec::nn {

template <typename Scalar>
struct OptimizerState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::map<std::string, Matrix<Scalar>> first_moment;
  std::map<std::string, Matrix<Scalar>> second_moment;

  // Plateau schedule.
  int halve_patience = 3;
  int stop_patience = 10;
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;  // stop counter
  int epochs_since_adjustment = 0;   // plateau counter, reset on improvement or halving
  int halvings = 0;
  bool stop = false;
};

/// One Adam update with bias-corrected moments.
template <typename Scalar>
void adam_step(ParamStore<Scalar>& store, OptimizerState<Scalar>& state) {
  if (!(state.learning_rate > 0)) throw StateError("learning rate must be positive");
  for (const auto& p : store)
    if (p.trainable && !p.has_grad()) throw StateError("parameter '" + p.name + "' has no gradient");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto lr = static_cast<Scalar>(state.learning_rate);
  const auto eps = static_cast<Scalar>(state.epsilon);
  for (auto& p : store) {
    if (!p.trainable) continue;
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    if (m.size() == 0) m = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    if (v.size() == 0) v = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    const auto m_hat = m.array() / static_cast<Scalar>(c1);
    const auto v_hat = v.array() / static_cast<Scalar>(c2);
    p.value.array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

struct ScheduleEvent {
  bool improved = false;
  bool halved = false;
  bool stop = false;
};

/// Called once per epoch. A new running minimum resets both counters; three
/// epochs without one halve the learning rate, ten raise the stop flag.
template <typename Scalar>
ScheduleEvent lr_schedule(OptimizerState<Scalar>& state, double validation_loss) {
  ScheduleEvent ev;
  if (validation_loss < state.best_loss) {
    state.best_loss = validation_loss;
    state.epochs_since_improvement = 0;
    state.epochs_since_adjustment = 0;
    ev.improved = true;
  } else {
    ++state.epochs_since_improvement;
    ++state.epochs_since_adjustment;
    if (state.epochs_since_adjustment >= state.halve_patience) {
      state.learning_rate *= 0.5;
      state.epochs_since_adjustment = 0;
      ++state.halvings;
      ev.halved = true;
    }
    if (state.epochs_since_improvement >= state.stop_patience) state.stop = true;
  }
  ev.stop = state.stop;
  return ev;
}

}  // namespace mathrec::nn
