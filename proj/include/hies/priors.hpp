/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hies/kernels.hpp"
#include "hies/rng.hpp"

namespace hies {

// ---------------------------------------------------------------------------
// Hyperparameter priors. Log-parameters carry independent Gaussian priors;
// the 2D orientation carries a Gauss-von-Mises (GVM) prior
//   g(phi; mu, kappa) = exp(kappa cos 2(phi - mu)) / (pi I0(kappa)),
// a circular density with period pi. For the smoother updates the state is
// whitened so all formulas can use C_x = I: Gaussian components map to
// (value - mean)/std, and the orientation maps to 2 sqrt(kappa) (phi - mu),
// matching the pseudo prior variance 1/(4 kappa) of the positive-definite
// Gauss-Newton Hessian approximation.
// ---------------------------------------------------------------------------

struct GaussianMoments {
  double mean = 0.0;
  double std = 1.0;
};

struct CircularPrior {
  double mu = 0.0;     // circular mean, radians
  double kappa = 0.0;  // concentration, >= 0
};

struct HyperPrior {
  std::vector<GaussianMoments> gauss;      // log-parameters, in state order
  std::optional<CircularPrior> circular;   // if present, phi is the last component

  int dim() const { return static_cast<int>(gauss.size()) + (circular ? 1 : 0); }

  void validate() const {
    for (const auto& g : gauss)
      if (!(g.std > 0.0)) throw std::invalid_argument("HyperPrior: stds must be > 0");
    if (circular && !(circular->kappa >= 0.0))
      throw std::invalid_argument("HyperPrior: kappa must be >= 0");
  }
};

/// log I0, switching to the large-argument asymptotic series to avoid
/// overflow of cyl_bessel_i.
inline double log_bessel_i0(double x) {
  if (x < 0.0) throw std::invalid_argument("log_bessel_i0: argument must be >= 0");
  if (x < 50.0) return std::log(std::cyl_bessel_i(0.0, x));
  double inv = 1.0 / x;
  double series = 1.0 + inv * (0.125 + inv * (0.0703125 + inv * 0.0732421875));
  return x - 0.5 * std::log(2.0 * M_PI * x) + std::log(series);
}

inline double gvm_log_density(double phi, double mu, double kappa) {
  if (!(kappa >= 0.0)) throw std::invalid_argument("gvm_log_density: kappa must be >= 0");
  return kappa * std::cos(2.0 * (phi - mu)) - std::log(M_PI) - log_bessel_i0(kappa);
}

inline double gvm_density(double phi, double mu, double kappa) {
  return std::exp(gvm_log_density(phi, mu, kappa));
}

/// Rejection sampler: uniform proposals on [-pi/2, pi/2), acceptance
/// probability exp(kappa (cos 2(phi - mu) - 1)). Exact for any kappa >= 0;
/// acceptance degrades for very concentrated priors but the intended regime
/// is moderate kappa.
inline double gvm_sample(double mu, double kappa, RngStream& rng) {
  if (!(kappa >= 0.0)) throw std::invalid_argument("gvm_sample: kappa must be >= 0");
  for (;;) {
    double phi = -M_PI / 2.0 + M_PI * rng.uniform();
    double accept = std::exp(kappa * (std::cos(2.0 * (phi - mu)) - 1.0));
    if (rng.uniform() < accept) return wrap_orientation(phi);
  }
}

/// Scale of the whitening map per hyper component: d(raw)/d(whitened).
/// Gaussian components: the prior std. Circular component: 1/(2 sqrt(kappa)).
inline Eigen::VectorXd hyper_whitening_scale(const HyperPrior& prior) {
  prior.validate();
  Eigen::VectorXd s(prior.dim());
  for (size_t i = 0; i < prior.gauss.size(); ++i) s[i] = prior.gauss[i].std;
  if (prior.circular) {
    if (!(prior.circular->kappa > 0.0))
      throw std::invalid_argument(
          "hyper_whitening_scale: kappa = 0 leaves the orientation block of the pseudo prior "
          "covariance undefined; use a Gaussian-free treatment or kappa > 0");
    s[prior.dim() - 1] = 1.0 / (2.0 * std::sqrt(prior.circular->kappa));
  }
  return s;
}

inline Eigen::VectorXd whiten_hyper(const HyperPrior& prior, const Eigen::VectorXd& raw) {
  if (raw.size() != prior.dim()) throw std::invalid_argument("whiten_hyper: length mismatch");
  Eigen::VectorXd s = hyper_whitening_scale(prior);
  Eigen::VectorXd w(prior.dim());
  for (size_t i = 0; i < prior.gauss.size(); ++i) w[i] = (raw[i] - prior.gauss[i].mean) / s[i];
  if (prior.circular) {
    int j = prior.dim() - 1;
    w[j] = wrap_orientation(raw[j] - prior.circular->mu) / s[j];
  }
  return w;
}

inline Eigen::VectorXd unwhiten_hyper(const HyperPrior& prior, const Eigen::VectorXd& white) {
  if (white.size() != prior.dim()) throw std::invalid_argument("unwhiten_hyper: length mismatch");
  Eigen::VectorXd s = hyper_whitening_scale(prior);
  Eigen::VectorXd raw(prior.dim());
  for (size_t i = 0; i < prior.gauss.size(); ++i) raw[i] = prior.gauss[i].mean + s[i] * white[i];
  if (prior.circular) {
    int j = prior.dim() - 1;
    raw[j] = prior.circular->mu + s[j] * white[j];  // not wrapped; kernels are pi-periodic
  }
  return raw;
}

/// Raw hyperparameter draw from the prior.
inline Eigen::VectorXd sample_hyper(const HyperPrior& prior, RngStream& rng) {
  prior.validate();
  Eigen::VectorXd raw(prior.dim());
  for (size_t i = 0; i < prior.gauss.size(); ++i)
    raw[i] = prior.gauss[i].mean + prior.gauss[i].std * rng.normal();
  if (prior.circular)
    raw[prior.dim() - 1] = gvm_sample(prior.circular->mu, prior.circular->kappa, rng);
  return raw;
}

/// Whitened prior residual of the hyper block for the update equations.
/// Gaussian path: plain whitened difference. Circular path: the orientation
/// component becomes sqrt(kappa) sin 2(phi - phi'), the whitened image of the
/// (1/2) sin 2(phi - phi') residual paired with pseudo variance 1/(4 kappa);
/// it agrees with the Gaussian residual to third order in (phi - phi') and is
/// periodic, so large orientation uncertainty is handled consistently.
inline Eigen::VectorXd whitened_hyper_residual(const HyperPrior& prior,
                                               const Eigen::VectorXd& white,
                                               const Eigen::VectorXd& anchor_white,
                                               bool circular_residual) {
  if (white.size() != prior.dim() || anchor_white.size() != prior.dim())
    throw std::invalid_argument("whitened_hyper_residual: length mismatch");
  Eigen::VectorXd r = white - anchor_white;
  if (circular_residual && prior.circular) {
    int j = prior.dim() - 1;
    double sk = 2.0 * std::sqrt(prior.circular->kappa);
    double dphi = (white[j] - anchor_white[j]) / sk;  // raw angle difference
    r[j] = std::sqrt(prior.circular->kappa) * std::sin(2.0 * dphi);
  }
  return r;
}

/// Prior-term quantities in raw coordinates, following the gradient of the
/// stochastic objective: gradient [(z - z*); C_u^{-1}(u - u*); 2 kappa
/// sin 2(phi - phi*)], the scaled residual [(z - z*); (u - u*);
/// (1/2) sin 2(phi - phi*)], and the diagonal of the pseudo prior covariance
/// blockdiag(I, C_u, 1/(4 kappa)).
struct PriorTerms {
  Eigen::VectorXd gradient;
  Eigen::VectorXd scaled_residual;
  Eigen::VectorXd pseudo_cov_diag;
};

inline PriorTerms prior_gradient_terms(const Eigen::VectorXd& x, const Eigen::VectorXd& anchor,
                                       int n_field, const HyperPrior& prior) {
  if (x.size() != anchor.size() || x.size() != n_field + prior.dim())
    throw std::invalid_argument("prior_gradient_terms: shape mismatch");
  prior.validate();
  int n = static_cast<int>(x.size());
  PriorTerms t;
  t.gradient.resize(n);
  t.scaled_residual.resize(n);
  t.pseudo_cov_diag.resize(n);
  t.gradient.head(n_field) = x.head(n_field) - anchor.head(n_field);
  t.scaled_residual.head(n_field) = t.gradient.head(n_field);
  t.pseudo_cov_diag.head(n_field).setOnes();
  for (size_t i = 0; i < prior.gauss.size(); ++i) {
    int j = n_field + static_cast<int>(i);
    double var = prior.gauss[i].std * prior.gauss[i].std;
    t.gradient[j] = (x[j] - anchor[j]) / var;
    t.scaled_residual[j] = x[j] - anchor[j];
    t.pseudo_cov_diag[j] = var;
  }
  if (prior.circular) {
    int j = n - 1;
    double kappa = prior.circular->kappa;
    if (!(kappa > 0.0))
      throw std::invalid_argument(
          "prior_gradient_terms: kappa = 0 makes the orientation block of the pseudo prior "
          "covariance undefined; treat the orientation without the Gaussian form");
    double s2 = std::sin(2.0 * (x[j] - anchor[j]));
    t.gradient[j] = 2.0 * kappa * s2;
    t.scaled_residual[j] = 0.5 * s2;
    t.pseudo_cov_diag[j] = 1.0 / (4.0 * kappa);
  }
  return t;
}

}  // namespace hies
