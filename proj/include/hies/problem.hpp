/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hies/cov_operator.hpp"
#include "hies/grid.hpp"
#include "hies/kernels.hpp"
#include "hies/observer.hpp"
#include "hies/priors.hpp"

namespace hies {

// ---------------------------------------------------------------------------
// Hierarchical inverse problem in the non-centered parameterization
// m = m_pr + L(theta) z. The smoothers see a whitened state
// x = (z, whitened hyper) whose prior covariance is the identity: z is iid
// standard normal by construction and the hyper block is rescaled by its
// prior moments. Hyperparameter meaning follows the kernel family:
//   1D families:  (ln sigma, ln a)
//   Gaussian2D:   (ln rho, ln alpha, phi); sigma is fixed
// With hierarchical = false the kernel is frozen at its configured values and
// the state is just z.
// ---------------------------------------------------------------------------

class Problem {
 public:
  Problem(GridSpec grid, KernelSpec kernel, bool hierarchical, HyperPrior prior,
          bool circular_residual, Eigen::VectorXd m_pr, std::shared_ptr<const ForwardModel> forward,
          ObsSet obs)
      : grid_(grid),
        kernel_(kernel),
        hierarchical_(hierarchical),
        prior_(std::move(prior)),
        circular_residual_(circular_residual),
        m_pr_(std::move(m_pr)),
        forward_(std::move(forward)),
        obs_(std::move(obs)) {
    grid_.validate();
    kernel_.validate();
    obs_.validate();
    if (!forward_) throw std::invalid_argument("Problem: missing forward model");
    if (m_pr_.size() != grid_.size()) throw std::invalid_argument("Problem: m_pr length mismatch");
    if (obs_.size() != forward_->data_dim())
      throw std::invalid_argument("Problem: observation count does not match forward model");
    if (hierarchical_) {
      prior_.validate();
      int expected = kernel_.is_1d() ? 2 : 3;
      if (prior_.dim() != expected)
        throw std::invalid_argument("Problem: hyper prior dimension must be " +
                                    std::to_string(expected) + " for this kernel family");
      if (!kernel_.is_1d() && !prior_.circular)
        throw std::invalid_argument("Problem: 2D problems need a circular orientation prior");
      if (kernel_.is_1d() && prior_.circular)
        throw std::invalid_argument("Problem: 1D problems have no orientation hyperparameter");
    }
  }

  const GridSpec& grid() const { return grid_; }
  const KernelSpec& base_kernel() const { return kernel_; }
  const HyperPrior& hyper_prior() const { return prior_; }
  const ObsSet& observations() const { return obs_; }
  const ForwardModel& forward_model() const { return *forward_; }
  const Eigen::VectorXd& prior_mean_field() const { return m_pr_; }
  bool hierarchical() const { return hierarchical_; }
  bool circular_residual() const { return circular_residual_; }

  int n_field() const { return grid_.size(); }
  int n_hyper() const { return hierarchical_ ? prior_.dim() : 0; }
  int n_state() const { return n_field() + n_hyper(); }
  int n_data() const { return obs_.size(); }
  StateLayout layout() const { return {n_field(), n_hyper()}; }

  /// Kernel with the raw hyperparameters substituted.
  KernelSpec kernel_for(const Eigen::VectorXd& raw_hyper) const {
    KernelSpec k = kernel_;
    if (!hierarchical_) {
      if (raw_hyper.size() != 0)
        throw std::invalid_argument("Problem: fixed-covariance problem takes no hyperparameters");
      return k;
    }
    if (raw_hyper.size() != prior_.dim())
      throw std::invalid_argument("Problem: hyper vector length mismatch");
    if (k.is_1d()) {
      k.sigma = std::exp(raw_hyper[0]);
      k.range = std::exp(raw_hyper[1]);
    } else {
      k.aniso.rho = std::exp(raw_hyper[0]);
      k.aniso.alpha = std::exp(raw_hyper[1]);
      k.aniso.phi = raw_hyper[2];
    }
    return k;
  }

  Eigen::VectorXd raw_hyper_of(const Eigen::VectorXd& xw) const {
    check_state(xw);
    if (!hierarchical_) return Eigen::VectorXd();
    return unwhiten_hyper(prior_, xw.tail(prior_.dim()));
  }

  Eigen::VectorXd z_of(const Eigen::VectorXd& xw) const {
    check_state(xw);
    return xw.head(n_field());
  }

  /// Whitened state from raw components.
  Eigen::VectorXd whiten(const Eigen::VectorXd& z, const Eigen::VectorXd& raw_hyper) const {
    if (z.size() != n_field()) throw std::invalid_argument("Problem: z length mismatch");
    if (!hierarchical_) return z;
    return pack_state(grid_, z, whiten_hyper(prior_, raw_hyper));
  }

  CovOperator cov_for(const Eigen::VectorXd& raw_hyper, bool with_derivatives) const {
    KernelSpec k = kernel_for(raw_hyper);
    return with_derivatives ? build_L_with_derivatives(grid_, k) : build_L(grid_, k);
  }

  Eigen::VectorXd realize(const Eigen::VectorXd& xw) const {
    CovOperator cov = cov_for(raw_hyper_of(xw), false);
    return realize_m(m_pr_, cov, z_of(xw));
  }

  Eigen::VectorXd run_forward(const Eigen::VectorXd& xw) const {
    return forward_->run(Field(grid_, realize(xw)));
  }

  /// Jacobian of m with respect to the whitened state: the raw M_x with each
  /// hyper column scaled by d(raw)/d(whitened).
  Eigen::MatrixXd whitened_field_jacobian(const Eigen::VectorXd& xw) const {
    check_state(xw);
    if (!hierarchical_) return cov_for(Eigen::VectorXd(), false).L;
    Eigen::VectorXd raw = raw_hyper_of(xw);
    CovOperator cov = cov_for(raw, true);
    Eigen::MatrixXd mx = assemble_Mx(cov, z_of(xw));
    Eigen::VectorXd scale = hyper_whitening_scale(prior_);
    // chain the log-parameter derivatives to whitened coordinates
    for (int k = 0; k < prior_.dim(); ++k) mx.col(n_field() + k) *= scale[k];
    return mx;
  }

  bool has_analytic_sensitivity() const { return forward_->linear(); }

  /// G = G_m M_x in whitened coordinates (linear observers only).
  Eigen::MatrixXd analytic_sensitivity(const Eigen::VectorXd& xw) const {
    if (!has_analytic_sensitivity())
      throw std::runtime_error("Problem: analytic sensitivity requires a linear forward model");
    return forward_->sensitivity() * whitened_field_jacobian(xw);
  }

  /// Whitened prior residual used by the update equations.
  Eigen::VectorXd prior_residual(const Eigen::VectorXd& xw, const Eigen::VectorXd& anchor_w) const {
    check_state(xw);
    check_state(anchor_w);
    Eigen::VectorXd r = xw - anchor_w;
    if (hierarchical_ && circular_residual_ && prior_.circular) {
      r.tail(prior_.dim()) = whitened_hyper_residual(prior_, xw.tail(prior_.dim()),
                                                     anchor_w.tail(prior_.dim()), true);
    }
    return r;
  }

  /// Observation anchors (x, y) per datum.
  Eigen::MatrixXd observation_anchors() const {
    auto meta = forward_->observation_meta();
    Eigen::MatrixXd a(meta.size(), 2);
    for (size_t i = 0; i < meta.size(); ++i) {
      a(static_cast<int>(i), 0) = meta[i].x;
      a(static_cast<int>(i), 1) = meta[i].y;
    }
    return a;
  }

 private:
  void check_state(const Eigen::VectorXd& xw) const {
    if (xw.size() != n_state())
      throw std::invalid_argument("Problem: state length " + std::to_string(xw.size()) +
                                  " does not match " + std::to_string(n_state()));
  }

  GridSpec grid_;
  KernelSpec kernel_;
  bool hierarchical_;
  HyperPrior prior_;
  bool circular_residual_;
  Eigen::VectorXd m_pr_;
  std::shared_ptr<const ForwardModel> forward_;
  ObsSet obs_;
};

}  // namespace hies
