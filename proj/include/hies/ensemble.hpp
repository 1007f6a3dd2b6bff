/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "hies/observer.hpp"
#include "hies/problem.hpp"
#include "hies/rng.hpp"

namespace hies {

/// Ensemble of whitened states, one column per member, together with the
/// prior anchors x' and observation perturbations e' retained for the
/// stochastic objective. Members start at their anchors.
struct Ensemble {
  Eigen::MatrixXd states;             // n_state x n_members
  Eigen::MatrixXd anchors;            // n_state x n_members
  Eigen::MatrixXd obs_perturbations;  // n_data x n_members

  int n_members() const { return static_cast<int>(states.cols()); }
};

/// Independent prior draws, one RNG stream per member keyed by
/// (seed, member index): z iid standard normal per cell, log-hyperparameters
/// from their Gaussians, orientation from the GVM prior, e' ~ N(0, C_d).
/// Draw order within a stream is fixed (z, hyper, e') so results are
/// bitwise reproducible for a given seed.
inline Ensemble sample_prior_ensemble(const Problem& problem, int n_members, std::uint64_t seed) {
  if (n_members < 1) throw std::invalid_argument("sample_prior_ensemble: need at least one member");
  Ensemble e;
  e.states.resize(problem.n_state(), n_members);
  e.anchors.resize(problem.n_state(), n_members);
  e.obs_perturbations.resize(problem.n_data(), n_members);
  for (int i = 0; i < n_members; ++i) {
    RngStream rng(seed, StreamTag::kMember, static_cast<std::uint64_t>(i));
    Eigen::VectorXd z = rng.normal_vector(problem.n_field());
    Eigen::VectorXd raw_hyper;
    if (problem.hierarchical()) raw_hyper = sample_hyper(problem.hyper_prior(), rng);
    Eigen::VectorXd xw = problem.whiten(z, raw_hyper);
    e.states.col(i) = xw;
    e.anchors.col(i) = xw;
    e.obs_perturbations.col(i) = perturb_observations(problem.observations().noise_std, rng);
  }
  return e;
}

}  // namespace hies
