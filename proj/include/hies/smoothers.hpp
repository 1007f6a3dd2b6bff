/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include "hies/ensemble.hpp"
#include "hies/lm.hpp"
#include "hies/localization.hpp"
#include "hies/problem.hpp"
#include "hies/util.hpp"

namespace hies {

// ---------------------------------------------------------------------------
// All updates work in whitened coordinates (prior covariance = identity).
//
// Gauss-Newton/Levenberg-Marquardt step shared by RML and the hybrid scheme:
//   dx = -r/(1+lambda)
//        - G^T [ (1+lambda) C_d + G G^T ]^{-1} ( innov - G r/(1+lambda) )
// with r the (possibly circular) whitened prior residual and
// innov = g(m) + e' - d_obs. RML uses the analytic G; the hybrid uses
// G = G_m_hat * M_x with G_m_hat regressed from the ensemble and the
// member-specific analytic M_x, which gives every member its own gain.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd lm_gain_update(const Eigen::MatrixXd& g, const Eigen::VectorXd& prior_residual,
                                      const Eigen::VectorXd& innovation,
                                      const Eigen::VectorXd& noise_var, double lambda) {
  int nd = static_cast<int>(innovation.size());
  if (g.rows() != nd || noise_var.size() != nd || g.cols() != prior_residual.size())
    throw std::invalid_argument("lm_gain_update: dimension mismatch");
  double damp = 1.0 + lambda;
  Eigen::MatrixXd m = g * g.transpose();
  m.diagonal() += damp * noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("lm_gain_update: data-space system not positive definite");
  Eigen::VectorXd rhs = innovation - g * (prior_residual / damp);
  return -prior_residual / damp - g.transpose() * llt.solve(rhs);
}

/// Ensemble regression of the data-to-field sensitivity G_m ~= dD (dM)^+ via
/// a truncated SVD pseudo-inverse of the centered field ensemble. Singular
/// directions are kept up to the requested energy fraction.
struct GmEstimate {
  Eigen::MatrixXd left;   // dD V_k S_k^{-1}, n_data x rank
  Eigen::MatrixXd basis;  // U_k, n_field x rank
  int rank = 0;
  bool degenerate = false;  // all singular values below threshold

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return left * (basis.transpose() * v); }
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& w) const {
    return basis * (left.transpose() * w);
  }
  Eigen::MatrixXd apply_matrix(const Eigen::MatrixXd& m) const {
    return left * (basis.transpose() * m);
  }
  Eigen::MatrixXd dense() const { return left * basis.transpose(); }
};

inline GmEstimate estimate_Gm(const Eigen::MatrixXd& dm, const Eigen::MatrixXd& dd,
                              double energy_fraction = 0.99) {
  if (dm.cols() != dd.cols()) throw std::invalid_argument("estimate_Gm: member count mismatch");
  if (dm.cols() < 2) throw std::invalid_argument("estimate_Gm: need at least two members");
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
    throw std::invalid_argument("estimate_Gm: energy fraction must be in (0, 1]");
  GmEstimate est;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  double total = sv.squaredNorm();
  if (!(total > 0.0)) {
    est.degenerate = true;
    est.left.resize(dd.rows(), 0);
    est.basis.resize(dm.rows(), 0);
    return est;
  }
  double floor = 1e-12 * sv[0];
  double target = energy_fraction * total;
  double acc = 0.0;
  int k = 0;
  while (k < sv.size() && sv[k] > floor) {
    acc += sv[k] * sv[k];
    ++k;
    if (acc >= target) break;
  }
  est.rank = k;
  est.basis = svd.matrixU().leftCols(k);
  est.left = dd * svd.matrixV().leftCols(k) * sv.head(k).cwiseInverse().asDiagonal();
  return est;
}

/// RML / Appendix-style LM step for one member with analytic sensitivity.
inline Eigen::VectorXd rml_update(const Problem& problem, const Eigen::VectorXd& xw,
                                  const Eigen::VectorXd& anchor_w, const Eigen::VectorXd& response,
                                  const Eigen::VectorXd& obs_perturbation, double lambda) {
  Eigen::MatrixXd g = problem.analytic_sensitivity(xw);
  Eigen::VectorXd r = problem.prior_residual(xw, anchor_w);
  Eigen::VectorXd innovation = response + obs_perturbation - problem.observations().values;
  Eigen::VectorXd noise_var = problem.observations().noise_std.array().square();
  return xw + lm_gain_update(g, r, innovation, noise_var, lambda);
}

/// Hybrid-IES LM step for one member: ensemble G_m chained with the member's
/// analytic M_x.
inline Eigen::VectorXd hybrid_update(const Problem& problem, const GmEstimate& gm,
                                     const Eigen::VectorXd& xw, const Eigen::VectorXd& anchor_w,
                                     const Eigen::VectorXd& response,
                                     const Eigen::VectorXd& obs_perturbation, double lambda) {
  Eigen::MatrixXd mx = problem.whitened_field_jacobian(xw);
  Eigen::MatrixXd g = gm.apply_matrix(mx);
  Eigen::VectorXd r = problem.prior_residual(xw, anchor_w);
  Eigen::VectorXd innovation = response + obs_perturbation - problem.observations().values;
  Eigen::VectorXd noise_var = problem.observations().noise_std.array().square();
  return xw + lm_gain_update(g, r, innovation, noise_var, lambda);
}

/// Shared-sensitivity IES step for all members at once:
///   dx_i = -(1/(1+l)) dX (dX^T r_i)
///          - K [ (1+l) C_d + dD dD^T ]^{-1} ( innov_i - (1/(1+l)) dD (dX^T r_i) )
/// with dX, dD the centered ensembles over active members scaled by
/// 1/sqrt(N-1) and K = dX dD^T, optionally Gaspari-Cohn tapered on the
/// latent-field rows (hyperparameter rows stay untapered).
inline Eigen::MatrixXd ies_update_all(const Problem& problem, const Eigen::MatrixXd& states,
                                      const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& responses,
                                      const Eigen::MatrixXd& obs_perturbations, double lambda,
                                      const Eigen::MatrixXd* taper) {
  int ne = static_cast<int>(states.cols());
  if (ne < 2) throw std::invalid_argument("ies_update_all: need at least two members");
  double damp = 1.0 + lambda;
  Eigen::VectorXd noise_var = problem.observations().noise_std.array().square();
  const Eigen::VectorXd& d_obs = problem.observations().values;

  double norm = 1.0 / std::sqrt(static_cast<double>(ne - 1));
  Eigen::MatrixXd dx = (states.colwise() - states.rowwise().mean()) * norm;
  Eigen::MatrixXd dd = (responses.colwise() - responses.rowwise().mean()) * norm;

  Eigen::MatrixXd m = dd * dd.transpose();
  m.diagonal() += damp * noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("ies_update_all: data-space system not positive definite");

  Eigen::MatrixXd gain_num = dx * dd.transpose();  // n_state x n_data
  if (taper) {
    if (taper->rows() != problem.n_field() || taper->cols() != problem.n_data())
      throw std::invalid_argument("ies_update_all: taper shape mismatch");
    gain_num.topRows(problem.n_field()).array() *= taper->array();
  }

  Eigen::MatrixXd out(states.rows(), ne);
  for (int i = 0; i < ne; ++i) {
    Eigen::VectorXd r = problem.prior_residual(states.col(i), anchors.col(i));
    Eigen::VectorXd proj = dx.transpose() * r;  // ensemble-subspace coefficients
    Eigen::VectorXd innovation =
        responses.col(i) + obs_perturbations.col(i) - d_obs - dd * (proj / damp);
    out.col(i) = states.col(i) - dx * (proj / damp) - gain_num * llt.solve(innovation);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling driver.
// ---------------------------------------------------------------------------

enum class SamplerMethod { kRML, kIES, kHybrid };

struct SamplerOptions {
  SamplerMethod method = SamplerMethod::kRML;
  LMOptions lm;
  /// IES/hybrid: initialize lambda from the initial mean mismatch,
  /// lambda0 = mean(S_d_pert) / (2 N_d). RML keeps lm.lambda0.
  bool lambda0_from_mismatch = true;
  std::optional<LocalizationSpec> localization;  // applied in IES only
  double gm_energy = 0.99;
  int workers = 1;
};

struct MemberStatus {
  bool failed = false;
  std::string reason;     // forward failure description
  std::string stop_reason;  // LM stop reason (RML: per member)
  int iterations = 0;
};

struct SamplerResult {
  Ensemble ensemble;          // final states, anchors and perturbations
  Eigen::MatrixXd responses;  // n_data x n_members, final forward responses
  std::vector<MismatchRecord> history;
  std::vector<MemberStatus> status;

  int n_failed() const {
    int n = 0;
    for (const auto& s : status) n += s.failed ? 1 : 0;
    return n;
  }

  /// Ensemble means over non-failed members.
  double mean_s_d_obs(const Problem& problem) const {
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < responses.cols(); ++i) {
      if (status[i].failed) continue;
      acc += mismatch(responses.col(i), problem.observations().values,
                      problem.observations().noise_std);
      n += 1;
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
  }
};

namespace detail {

inline double member_s_pert(const Problem& p, const Eigen::VectorXd& response,
                            const Eigen::VectorXd& eps) {
  return mismatch(response + eps, p.observations().values, p.observations().noise_std);
}

inline double member_s_obs(const Problem& p, const Eigen::VectorXd& response) {
  return mismatch(response, p.observations().values, p.observations().noise_std);
}

}  // namespace detail

/// Runs the chosen sampler. RML minimizes each member independently with its
/// own lambda schedule; IES and the hybrid share one lambda across the
/// ensemble and accept or reject the whole iteration on the mean mismatch
/// against perturbed data. Members whose forward model fails are frozen at
/// their last good state, excluded from ensemble statistics and flagged.
inline SamplerResult run_sampler(const Problem& problem, const Ensemble& init,
                                 const SamplerOptions& opts) {
  if (init.states.rows() != problem.n_state())
    throw std::invalid_argument("run_sampler: ensemble/problem state mismatch");
  if (opts.method == SamplerMethod::kRML && !problem.has_analytic_sensitivity())
    throw std::invalid_argument("run_sampler: RML needs an analytic sensitivity (linear observer)");

  int ne = init.n_members();
  SamplerResult result;
  result.ensemble = init;
  result.responses.resize(problem.n_data(), ne);
  result.status.assign(ne, MemberStatus{});

  if (opts.method == SamplerMethod::kRML) {
    std::vector<std::vector<MismatchRecord>> member_hist(ne);
    parallel_for(ne, opts.workers, [&](int i) {
      Eigen::VectorXd x = init.states.col(i);
      const Eigen::VectorXd anchor = init.anchors.col(i);
      const Eigen::VectorXd eps = init.obs_perturbations.col(i);
      MemberStatus& st = result.status[i];
      Eigen::VectorXd g;
      try {
        g = problem.run_forward(x);
      } catch (const std::exception& e) {
        st.failed = true;
        st.reason = e.what();
        result.responses.col(i).setConstant(std::numeric_limits<double>::quiet_NaN());
        return;
      }
      LMState lm = lm_init(opts.lm, detail::member_s_pert(problem, g, eps));
      member_hist[i].push_back({0, i, lm.current_mismatch, detail::member_s_obs(problem, g),
                                lm.lambda, true, true});
      while (!lm.stopped) {
        double lambda_used = lm.lambda;
        try {
          Eigen::VectorXd cand = rml_update(problem, x, anchor, g, eps, lambda_used);
          Eigen::VectorXd g_cand = problem.run_forward(cand);
          LMDecision dec = lm_step_control(lm, detail::member_s_pert(problem, g_cand, eps), opts.lm);
          if (dec.accept) {
            x = cand;
            g = g_cand;
          }
          member_hist[i].push_back({lm.iteration, i, detail::member_s_pert(problem, g, eps),
                                    detail::member_s_obs(problem, g), lambda_used, dec.accept, true});
        } catch (const std::exception& e) {
          st.failed = true;
          st.reason = e.what();
          break;
        }
      }
      st.stop_reason = lm.stop_reason;
      st.iterations = lm.iteration;
      result.ensemble.states.col(i) = x;
      result.responses.col(i) = g;
    });
    for (int i = 0; i < ne; ++i)
      for (const auto& rec : member_hist[i]) result.history.push_back(rec);
    return result;
  }

  // --- ensemble methods (IES / hybrid) ---
  if (ne < 2) throw std::invalid_argument("run_sampler: ensemble methods need >= 2 members");

  Eigen::MatrixXd states = init.states;
  Eigen::MatrixXd responses(problem.n_data(), ne);
  Eigen::MatrixXd fields(problem.n_field(), ne);  // m per member, for the hybrid regression
  std::vector<uint8_t> active(ne, 1);

  parallel_for(ne, opts.workers, [&](int i) {
    try {
      Eigen::VectorXd m = problem.realize(states.col(i));
      fields.col(i) = m;
      responses.col(i) = problem.forward_model().run(Field(problem.grid(), m));
    } catch (const std::exception& e) {
      active[i] = 0;
      result.status[i].failed = true;
      result.status[i].reason = e.what();
      responses.col(i).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  });

  auto active_indices = [&]() {
    std::vector<int> idx;
    for (int i = 0; i < ne; ++i)
      if (active[i]) idx.push_back(i);
    return idx;
  };
  auto mean_s_pert = [&](const Eigen::MatrixXd& resp, const std::vector<int>& idx) {
    double acc = 0.0;
    for (int i : idx) acc += detail::member_s_pert(problem, resp.col(i), init.obs_perturbations.col(i));
    return acc / static_cast<double>(idx.size());
  };
  auto record_all = [&](int iteration, double lambda, bool accepted) {
    for (int i = 0; i < ne; ++i) {
      MismatchRecord rec;
      rec.iteration = iteration;
      rec.member = i;
      rec.active = active[i] != 0;
      rec.lambda = lambda;
      rec.accepted = accepted;
      if (rec.active) {
        rec.s_d_pert = detail::member_s_pert(problem, responses.col(i), init.obs_perturbations.col(i));
        rec.s_d_obs = detail::member_s_obs(problem, responses.col(i));
      } else {
        rec.s_d_pert = rec.s_d_obs = std::numeric_limits<double>::quiet_NaN();
      }
      result.history.push_back(rec);
    }
  };

  std::vector<int> idx = active_indices();
  if (idx.size() < 2) throw std::runtime_error("run_sampler: fewer than two members survived the initial forward runs");

  LMOptions lm_opts = opts.lm;
  if (opts.lambda0_from_mismatch)
    lm_opts.lambda0 = mean_s_pert(responses, idx) / (2.0 * problem.n_data());
  LMState lm = lm_init(lm_opts, mean_s_pert(responses, idx));
  record_all(0, lm.lambda, true);

  std::optional<Eigen::MatrixXd> taper;
  if (opts.method == SamplerMethod::kIES && opts.localization)
    taper = build_taper(problem.grid(), problem.observation_anchors(), *opts.localization);

  while (!lm.stopped) {
    idx = active_indices();
    if (idx.size() < 2) {
      lm.stopped = true;
      lm.stop_reason = "too_few_active_members";
      break;
    }
    double lambda_used = lm.lambda;

    // gather active columns
    Eigen::MatrixXd xs(problem.n_state(), idx.size()), as(problem.n_state(), idx.size()),
        rs(problem.n_data(), idx.size()), es(problem.n_data(), idx.size());
    for (size_t k = 0; k < idx.size(); ++k) {
      xs.col(k) = states.col(idx[k]);
      as.col(k) = result.ensemble.anchors.col(idx[k]);
      rs.col(k) = responses.col(idx[k]);
      es.col(k) = init.obs_perturbations.col(idx[k]);
    }

    Eigen::MatrixXd candidates(problem.n_state(), idx.size());
    if (opts.method == SamplerMethod::kIES) {
      candidates = ies_update_all(problem, xs, as, rs, es, lambda_used,
                                  taper ? &taper.value() : nullptr);
    } else {
      double norm = 1.0 / std::sqrt(static_cast<double>(idx.size() - 1));
      Eigen::MatrixXd fs(problem.n_field(), idx.size());
      for (size_t k = 0; k < idx.size(); ++k) fs.col(k) = fields.col(idx[k]);
      Eigen::MatrixXd dm = (fs.colwise() - fs.rowwise().mean()) * norm;
      Eigen::MatrixXd dd = (rs.colwise() - rs.rowwise().mean()) * norm;
      GmEstimate gm = estimate_Gm(dm, dd, opts.gm_energy);
      parallel_for(static_cast<int>(idx.size()), opts.workers, [&](int k) {
        candidates.col(k) =
            hybrid_update(problem, gm, xs.col(k), as.col(k), rs.col(k), es.col(k), lambda_used);
      });
    }

    // evaluate candidates; failures freeze the member at its current state
    Eigen::MatrixXd cand_resp(problem.n_data(), idx.size());
    Eigen::MatrixXd cand_fields(problem.n_field(), idx.size());
    std::vector<uint8_t> cand_ok(idx.size(), 1);
    parallel_for(static_cast<int>(idx.size()), opts.workers, [&](int k) {
      try {
        Eigen::VectorXd m = problem.realize(candidates.col(k));
        cand_fields.col(k) = m;
        cand_resp.col(k) = problem.forward_model().run(Field(problem.grid(), m));
      } catch (const std::exception& e) {
        cand_ok[k] = 0;
        result.status[idx[k]].failed = true;
        result.status[idx[k]].reason = e.what();
      }
    });
    std::vector<int> still;
    for (size_t k = 0; k < idx.size(); ++k) {
      if (cand_ok[k])
        still.push_back(static_cast<int>(k));
      else
        active[idx[k]] = 0;
    }
    if (still.size() < 2) {
      lm.stopped = true;
      lm.stop_reason = "too_few_active_members";
      break;
    }

    double cand_mean = 0.0;
    for (int k : still)
      cand_mean += detail::member_s_pert(problem, cand_resp.col(k), es.col(k));
    cand_mean /= static_cast<double>(still.size());

    LMDecision dec = lm_step_control(lm, cand_mean, lm_opts);
    if (dec.accept) {
      for (int k : still) {
        states.col(idx[k]) = candidates.col(k);
        responses.col(idx[k]) = cand_resp.col(k);
        fields.col(idx[k]) = cand_fields.col(k);
      }
    }
    record_all(lm.iteration, lambda_used, dec.accept);
  }

  for (int i = 0; i < ne; ++i) {
    result.status[i].stop_reason = lm.stop_reason;
    result.status[i].iterations = lm.iteration;
  }
  result.ensemble.states = states;
  result.responses = responses;
  return result;
}

}  // namespace hies
