/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "hies/problem.hpp"
#include "hies/rng.hpp"
#include "hies/util.hpp"

namespace hies {

// ---------------------------------------------------------------------------
// Exact posterior reference for the linear-Gaussian 1D benchmark, by
// marginal-then-conditional sampling: the hyperparameter posterior
// p(theta | d) ~ p(d | theta) p(theta) is evaluated on a dense grid (two
// hyperparameters make this trivially cheap), and z | theta, d is the exact
// Gaussian conditional.
// ---------------------------------------------------------------------------

/// log N(d; G m_pr, G L L^T G^T + C_d) for a linear observer.
inline double log_marginal_likelihood(const Problem& problem, const Eigen::VectorXd& raw_hyper) {
  if (!problem.forward_model().linear())
    throw std::invalid_argument("log_marginal_likelihood: requires a linear observer");
  Eigen::MatrixXd gm = problem.forward_model().sensitivity();
  CovOperator cov = problem.cov_for(raw_hyper, false);
  Eigen::MatrixXd a = gm * cov.L;  // n_data x n_field
  Eigen::MatrixXd sigma = a * a.transpose();
  sigma.diagonal() += problem.observations().noise_std.array().square().matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("log_marginal_likelihood: data covariance not positive definite");
  Eigen::VectorXd resid = problem.observations().values - gm * problem.prior_mean_field();
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double quad = resid.dot(llt.solve(resid));
  int nd = problem.n_data();
  return -0.5 * (nd * std::log(2.0 * M_PI) + logdet + quad);
}

/// Hyperparameter posterior on a tensor grid covering prior mean +- span
/// prior standard deviations per axis, trapezoid-normalized.
struct HyperGrid {
  Eigen::VectorXd axis1, axis2;   // hyperparameter values per grid line
  Eigen::MatrixXd log_posterior;  // unnormalized log p(d|theta) + log p(theta)
  Eigen::MatrixXd weights;        // normalized; sums to 1
  Eigen::VectorXd marginal1, marginal2;

  double mean1() const { return marginal1.dot(axis1); }
  double mean2() const { return marginal2.dot(axis2); }
  double std1() const {
    return std::sqrt((marginal1.array() * (axis1.array() - mean1()).square()).sum());
  }
  double std2() const {
    return std::sqrt((marginal2.array() * (axis2.array() - mean2()).square()).sum());
  }
};

inline HyperGrid posterior_hyper_grid(const Problem& problem, int resolution = 101,
                                      double span_sds = 4.0, int workers = 1) {
  if (!problem.hierarchical() || problem.n_hyper() != 2 || problem.hyper_prior().circular)
    throw std::invalid_argument("posterior_hyper_grid: needs the two-Gaussian hyper prior");
  if (resolution < 50) throw std::invalid_argument("posterior_hyper_grid: resolution must be >= 50");
  const auto& prior = problem.hyper_prior().gauss;

  HyperGrid grid;
  grid.axis1 = Eigen::VectorXd::LinSpaced(resolution, prior[0].mean - span_sds * prior[0].std,
                                          prior[0].mean + span_sds * prior[0].std);
  grid.axis2 = Eigen::VectorXd::LinSpaced(resolution, prior[1].mean - span_sds * prior[1].std,
                                          prior[1].mean + span_sds * prior[1].std);
  grid.log_posterior.resize(resolution, resolution);
  parallel_for(resolution, workers, [&](int i) {
    for (int j = 0; j < resolution; ++j) {
      Eigen::Vector2d theta(grid.axis1[i], grid.axis2[j]);
      double lp = log_marginal_likelihood(problem, theta);
      double r0 = (theta[0] - prior[0].mean) / prior[0].std;
      double r1 = (theta[1] - prior[1].mean) / prior[1].std;
      grid.log_posterior(i, j) = lp - 0.5 * (r0 * r0 + r1 * r1);
    }
  });

  double max_log = grid.log_posterior.maxCoeff();
  grid.weights = (grid.log_posterior.array() - max_log).exp();
  // trapezoid weights per axis (uniform spacing): ends carry half weight
  Eigen::VectorXd tw = Eigen::VectorXd::Ones(resolution);
  tw[0] = tw[resolution - 1] = 0.5;
  grid.weights = tw.asDiagonal() * grid.weights * tw.asDiagonal();
  grid.weights /= grid.weights.sum();
  grid.marginal1 = grid.weights.rowwise().sum();
  grid.marginal2 = grid.weights.colwise().sum().transpose();
  return grid;
}

/// Exact Gaussian conditional of z given (theta, d):
/// mean = A^T S^{-1} (d - G m_pr), cov = I - A^T S^{-1} A, with A = G L and
/// S = A A^T + C_d.
struct ConditionalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov_chol;  // lower-triangular factor
};

inline ConditionalGaussian conditional_z_moments(const Problem& problem,
                                                 const Eigen::VectorXd& raw_hyper) {
  if (!problem.forward_model().linear())
    throw std::invalid_argument("conditional_z_moments: requires a linear observer");
  Eigen::MatrixXd gm = problem.forward_model().sensitivity();
  CovOperator cov = problem.cov_for(raw_hyper, false);
  Eigen::MatrixXd a = gm * cov.L;
  Eigen::MatrixXd sigma = a * a.transpose();
  sigma.diagonal() += problem.observations().noise_std.array().square().matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("conditional_z_moments: data covariance not positive definite");
  Eigen::VectorXd resid = problem.observations().values - gm * problem.prior_mean_field();
  ConditionalGaussian cg;
  cg.mean = a.transpose() * llt.solve(resid);
  Eigen::MatrixXd cond = Eigen::MatrixXd::Identity(problem.n_field(), problem.n_field()) -
                         a.transpose() * llt.solve(a);
  Eigen::LLT<Eigen::MatrixXd> cond_llt(cond);
  if (cond_llt.info() != Eigen::Success)
    throw std::runtime_error("conditional_z_moments: conditional covariance factorization failed");
  cg.cov_chol = cond_llt.matrixL();
  return cg;
}

inline Field conditional_z_sample(const Problem& problem, const Eigen::VectorXd& raw_hyper,
                                  RngStream& rng) {
  ConditionalGaussian cg = conditional_z_moments(problem, raw_hyper);
  Eigen::VectorXd z = cg.mean + cg.cov_chol * rng.normal_vector(problem.n_field());
  return Field(problem.grid(), z);
}

/// Exact posterior draws of (theta, z) for the linear problem: theta from the
/// grid posterior (categorical over nodes), then z from its conditional.
/// Conditional moments are cached per visited node.
struct MtcSamples {
  Eigen::MatrixXd hyper;  // n x 2 raw draws
  Eigen::MatrixXd z;      // n_field x n
};

inline MtcSamples mtc_sample(const Problem& problem, const HyperGrid& grid, int n,
                             std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("mtc_sample: need n >= 1");
  int res1 = static_cast<int>(grid.axis1.size());
  int res2 = static_cast<int>(grid.axis2.size());
  std::vector<double> cdf(static_cast<size_t>(res1) * res2);
  double acc = 0.0;
  for (int i = 0; i < res1; ++i)
    for (int j = 0; j < res2; ++j) {
      acc += grid.weights(i, j);
      cdf[static_cast<size_t>(i) * res2 + j] = acc;
    }

  MtcSamples out;
  out.hyper.resize(n, 2);
  out.z.resize(problem.n_field(), n);
  std::map<int, ConditionalGaussian> cache;
  RngStream rng(seed, StreamTag::kOracle);
  for (int k = 0; k < n; ++k) {
    double u = rng.uniform() * acc;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    int flat = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                         static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    int i = flat / res2, j = flat % res2;
    Eigen::Vector2d theta(grid.axis1[i], grid.axis2[j]);
    out.hyper(k, 0) = theta[0];
    out.hyper(k, 1) = theta[1];
    auto found = cache.find(flat);
    if (found == cache.end())
      found = cache.emplace(flat, conditional_z_moments(problem, theta)).first;
    out.z.col(k) = found->second.mean + found->second.cov_chol * rng.normal_vector(problem.n_field());
  }
  return out;
}

/// Kolmogorov distance between an empirical sample and a grid marginal,
/// with the grid CDF interpolated linearly between nodes.
inline double kolmogorov_distance(std::vector<double> samples, const Eigen::VectorXd& axis,
                                  const Eigen::VectorXd& pmf) {
  if (samples.empty()) throw std::invalid_argument("kolmogorov_distance: empty sample");
  std::sort(samples.begin(), samples.end());
  Eigen::VectorXd cdf(pmf.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pmf.size(); ++i) {
    acc += pmf[i];
    cdf[i] = acc;
  }
  auto grid_cdf = [&](double x) -> double {
    if (x <= axis[0]) return 0.0;
    if (x >= axis[axis.size() - 1]) return 1.0;
    int hi = static_cast<int>(std::upper_bound(axis.data(), axis.data() + axis.size(), x) -
                              axis.data());
    double t = (x - axis[hi - 1]) / (axis[hi] - axis[hi - 1]);
    return cdf[hi - 1] + t * (cdf[hi] - cdf[hi - 1]);
  };
  double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t k = 0; k < samples.size(); ++k) {
    double f = grid_cdf(samples[k]);
    d = std::max(d, std::abs(static_cast<double>(k) / n - f));
    d = std::max(d, std::abs(static_cast<double>(k + 1) / n - f));
  }
  return d;
}

}  // namespace hies
