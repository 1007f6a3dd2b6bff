/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hies {

/// Squared data mismatch S_d = (1/2) sum ((g_i - d_i)/sigma_i)^2. Expected
/// value against the observed data is N_d/2 for a calibrated model.
inline double mismatch(const Eigen::VectorXd& response, const Eigen::VectorXd& data,
                       const Eigen::VectorXd& noise_std) {
  if (response.size() != data.size() || response.size() != noise_std.size())
    throw std::invalid_argument("mismatch: length mismatch");
  return 0.5 * ((response - data).array() / noise_std.array()).square().sum();
}

struct LMOptions {
  double lambda0 = 5000.0;
  double factor = 4.0;             // multiplicative lambda schedule
  int max_iter = 25;               // stop when the iteration count exceeds this
  double min_rel_reduction = 0.005;  // stop when an accepted step improves less than this
};

/// Levenberg-Marquardt schedule state. lambda shrinks by `factor` on
/// improvement and grows by `factor` on worsening; iteration stops after two
/// consecutive increases, when the iteration budget is exhausted, or when an
/// accepted step reduces the mean mismatch by too little.
struct LMState {
  double lambda = 0.0;
  int iteration = 0;
  int consecutive_increases = 0;
  double current_mismatch = std::numeric_limits<double>::infinity();
  bool stopped = false;
  std::string stop_reason;
};

inline LMState lm_init(const LMOptions& opts, double initial_mismatch) {
  LMState s;
  s.lambda = opts.lambda0;
  s.current_mismatch = initial_mismatch;
  if (!(s.lambda > 0.0)) throw std::invalid_argument("lm_init: lambda0 must be > 0");
  return s;
}

struct LMDecision {
  bool accept = false;
  bool stop = false;
};

/// One controller step given the candidate's mean mismatch.
inline LMDecision lm_step_control(LMState& state, double new_mean_mismatch, const LMOptions& opts) {
  if (state.stopped) return {false, true};
  state.iteration += 1;
  LMDecision d;
  if (new_mean_mismatch < state.current_mismatch) {
    d.accept = true;
    state.consecutive_increases = 0;
    double rel = (state.current_mismatch - new_mean_mismatch) /
                 std::max(state.current_mismatch, std::numeric_limits<double>::min());
    state.current_mismatch = new_mean_mismatch;
    state.lambda /= opts.factor;
    if (rel < opts.min_rel_reduction) {
      state.stopped = true;
      state.stop_reason = "small_reduction";
    }
  } else {
    d.accept = false;
    state.lambda *= opts.factor;
    state.consecutive_increases += 1;
    if (state.consecutive_increases >= 2) {
      state.stopped = true;
      state.stop_reason = "lambda_increased_twice";
    }
  }
  if (!state.stopped && state.iteration >= opts.max_iter) {
    state.stopped = true;
    state.stop_reason = "max_iterations";
  }
  d.stop = state.stopped;
  return d;
}

/// Per-iteration mismatch bookkeeping, one row per (iteration, member).
struct MismatchRecord {
  int iteration = 0;
  int member = 0;
  double s_d_pert = 0.0;  // vs perturbed data, (1/2)||(g + e' - d)/sigma||^2
  double s_d_obs = 0.0;   // vs observed data
  double lambda = 0.0;
  bool accepted = false;
  bool active = true;
};

}  // namespace hies
