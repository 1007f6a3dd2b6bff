/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "hies/grid.hpp"
#include "hies/observer.hpp"

namespace hies {

/// Corey relative permeabilities with zero residual saturations:
/// krw = krw_end S^nw, kro = kro_end (1-S)^no.
struct CoreyRelPerm {
  double exp_w = 2.0;
  double exp_o = 2.0;
  double krw_end = 1.0;
  double kro_end = 1.0;
  double mu_w = 1.0;
  double mu_o = 1.0;

  double mobility_w(double s) const { return krw_end * std::pow(s, exp_w) / mu_w; }
  double mobility_o(double s) const { return kro_end * std::pow(1.0 - s, exp_o) / mu_o; }
  double total_mobility(double s) const { return mobility_w(s) + mobility_o(s); }
  double frac_flow(double s) const {
    double lw = mobility_w(s);
    return lw / (lw + mobility_o(s));
  }

  /// max |dfw/dS| over [0,1], used for the CFL limit.
  double max_frac_flow_slope() const {
    const int n = 2000;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      double s0 = static_cast<double>(i) / n;
      double s1 = static_cast<double>(i + 1) / n;
      best = std::max(best, std::abs(frac_flow(s1) - frac_flow(s0)) * n);
    }
    return best;
  }
};

struct Well {
  int ix = 0;
  int iy = 0;
  double rate = 0.0;  // total-fluid rate, positive magnitude
};

/// Two-phase incompressible waterflood, rate-controlled wells. Injectors
/// inject water; producers withdraw total fluid at fixed equal-total rate.
/// Total injection must balance total production.
struct FlowModel {
  GridSpec grid;
  std::vector<Well> injectors;
  std::vector<Well> producers;
  double porosity = 0.2;
  CoreyRelPerm relperm;
  double initial_sw = 0.0;
  std::vector<double> obs_times;
  double cfl = 0.75;
  long max_substeps_per_interval = 2000000;

  void validate() const {
    grid.validate();
    if (injectors.empty() || producers.empty())
      throw std::invalid_argument("FlowModel: need at least one injector and one producer");
    if (!(porosity > 0.0)) throw std::invalid_argument("FlowModel: porosity must be > 0");
    if (!(initial_sw >= 0.0 && initial_sw <= 1.0))
      throw std::invalid_argument("FlowModel: initial saturation must be in [0,1]");
    if (obs_times.empty()) throw std::invalid_argument("FlowModel: empty observation schedule");
    double prev = 0.0;
    for (double t : obs_times) {
      if (!(t > prev)) throw std::invalid_argument("FlowModel: observation times must be increasing and > 0");
      prev = t;
    }
    double qin = 0.0, qout = 0.0;
    std::vector<bool> used(grid.size(), false);
    for (const auto& w : injectors) {
      int c = grid.index(w.ix, w.iy);
      if (used[c]) throw std::invalid_argument("FlowModel: two wells share a cell");
      used[c] = true;
      if (!(w.rate > 0.0)) throw std::invalid_argument("FlowModel: injector rates must be > 0");
      qin += w.rate;
    }
    for (const auto& w : producers) {
      int c = grid.index(w.ix, w.iy);
      if (used[c]) throw std::invalid_argument("FlowModel: two wells share a cell");
      used[c] = true;
      if (!(w.rate > 0.0)) throw std::invalid_argument("FlowModel: producer rates must be > 0");
      qout += w.rate;
    }
    if (std::abs(qin - qout) > 1e-12 * std::max(qin, qout))
      throw std::invalid_argument("FlowModel: total injection must equal total production");
  }
};

struct MassBalanceDiag {
  double max_water_balance_rel = 0.0;  // | (inj - prod) - d(WIP) | / cumulative injected
  double max_pressure_residual_rel = 0.0;
  long total_substeps = 0;
};

struct WatercutSeries {
  std::vector<double> times;
  Eigen::MatrixXd watercut;  // n_times x n_producers
  MassBalanceDiag diag;
};

namespace detail {

struct FlowWorkspace {
  // faces: x-faces (nx-1)*ny then y-faces nx*(ny-1); face f connects lo(f) -> hi(f)
  std::vector<int> lo, hi;
  std::vector<double> t_geo;   // harmonic-mean K times geometric factor
  std::vector<double> flux;    // signed lo->hi total flux
  Eigen::VectorXd source;      // per-cell total source (+inj, -prod)
  Eigen::VectorXd pressure;
};

inline void build_faces(const GridSpec& g, const Eigen::VectorXd& perm, FlowWorkspace& ws) {
  int nx = g.nx, ny = g.ny;
  int nfx = (nx - 1) * ny, nfy = nx * (ny - 1);
  ws.lo.resize(nfx + nfy);
  ws.hi.resize(nfx + nfy);
  ws.t_geo.resize(nfx + nfy);
  int f = 0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix + 1 < nx; ++ix, ++f) {
      int i = iy * nx + ix, j = iy * nx + ix + 1;
      ws.lo[f] = i;
      ws.hi[f] = j;
      ws.t_geo[f] = 2.0 * perm[i] * perm[j] / (perm[i] + perm[j]) * (g.dy / g.dx);
    }
  for (int iy = 0; iy + 1 < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix, ++f) {
      int i = iy * nx + ix, j = (iy + 1) * nx + ix;
      ws.lo[f] = i;
      ws.hi[f] = j;
      ws.t_geo[f] = 2.0 * perm[i] * perm[j] / (perm[i] + perm[j]) * (g.dx / g.dy);
    }
}

/// Solves -div(K lambda grad p) = q with one reference cell pinned to zero
/// (the system is otherwise singular up to a constant). The reference cell
/// must not carry a well so that its dropped balance equation is implied by
/// the remaining ones. Returns the relative residual of the pinned system.
inline double solve_pressure(const GridSpec& g, FlowWorkspace& ws, int ref,
                             const std::vector<double>& face_mobility) {
  int n = g.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(ws.lo.size() * 4 + n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  for (size_t f = 0; f < ws.lo.size(); ++f) {
    int i = ws.lo[f], j = ws.hi[f];
    double c = ws.t_geo[f] * face_mobility[f];
    diag[i] += c;
    diag[j] += c;
    if (i != ref && j != ref) {
      trip.emplace_back(i, j, -c);
      trip.emplace_back(j, i, -c);
    }
  }
  for (int i = 0; i < n; ++i)
    if (i != ref) trip.emplace_back(i, i, diag[i]);
  trip.emplace_back(ref, ref, 1.0);
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());

  Eigen::VectorXd b = ws.source;
  b[ref] = 0.0;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success)
    throw ForwardFailure("flow: pressure factorization failed (check well configuration)");
  Eigen::VectorXd p = solver.solve(b);
  p += solver.solve(b - a * p);  // one refinement step
  if (!p.allFinite()) throw ForwardFailure("flow: pressure solve produced non-finite values");
  ws.pressure = p;
  double bn = b.norm();
  return bn > 0.0 ? (b - a * p).norm() / bn : 0.0;
}

inline void compute_fluxes(FlowWorkspace& ws, const std::vector<double>& face_mobility) {
  ws.flux.resize(ws.lo.size());
  for (size_t f = 0; f < ws.lo.size(); ++f)
    ws.flux[f] = ws.t_geo[f] * face_mobility[f] * (ws.pressure[ws.lo[f]] - ws.pressure[ws.hi[f]]);
}

}  // namespace detail

/// Sequential IMPES: per observation interval, solve the incompressible
/// pressure equation with mobility upwinded from the previous flux field
/// (bootstrap pass uses arithmetic-average mobility), then advance the
/// saturation with explicit upwind transport under a CFL limit. Water cut at
/// a producer is the fractional flow of the producing cell.
inline WatercutSeries simulate_flow(const Field& lnK, const FlowModel& model) {
  model.validate();
  if (!(lnK.grid == model.grid)) throw std::invalid_argument("simulate_flow: lnK grid mismatch");
  if (!lnK.values.allFinite()) throw ForwardFailure("simulate_flow: non-finite lnK");

  const GridSpec& g = model.grid;
  int n = g.size();
  Eigen::VectorXd perm = lnK.values.array().exp();
  if (!perm.allFinite()) throw ForwardFailure("simulate_flow: permeability overflow");

  detail::FlowWorkspace ws;
  detail::build_faces(g, perm, ws);
  ws.source = Eigen::VectorXd::Zero(n);
  std::vector<std::pair<int, double>> inj, prod;
  for (const auto& w : model.injectors) {
    int c = g.index(w.ix, w.iy);
    ws.source[c] += w.rate;
    inj.emplace_back(c, w.rate);
  }
  for (const auto& w : model.producers) {
    int c = g.index(w.ix, w.iy);
    ws.source[c] -= w.rate;
    prod.emplace_back(c, w.rate);
  }

  int ref = 0;
  while (ref < n && ws.source[ref] != 0.0) ++ref;
  if (ref == n) throw std::invalid_argument("simulate_flow: every cell carries a well");

  const CoreyRelPerm& rp = model.relperm;
  double pv = model.porosity * g.cell_measure();
  double dfw_max = std::max(rp.max_frac_flow_slope(), 1e-12);

  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, model.initial_sw);
  std::vector<double> face_mob(ws.lo.size());

  WatercutSeries out;
  out.times = model.obs_times;
  out.watercut.resize(static_cast<int>(model.obs_times.size()), static_cast<int>(prod.size()));

  double cum_winj = 0.0, cum_wprod = 0.0;
  double wip0 = s.sum() * pv;
  double t = 0.0;

  for (size_t step = 0; step < model.obs_times.size(); ++step) {
    double t_end = model.obs_times[step];

    // pass 1: arithmetic-average mobility to get flow directions
    for (size_t f = 0; f < ws.lo.size(); ++f)
      face_mob[f] = 0.5 * (rp.total_mobility(s[ws.lo[f]]) + rp.total_mobility(s[ws.hi[f]]));
    double res1 = detail::solve_pressure(g, ws, ref, face_mob);
    detail::compute_fluxes(ws, face_mob);
    // pass 2: upwind mobility by the pass-1 flux sign
    for (size_t f = 0; f < ws.lo.size(); ++f)
      face_mob[f] = rp.total_mobility(s[ws.flux[f] >= 0.0 ? ws.lo[f] : ws.hi[f]]);
    double res2 = detail::solve_pressure(g, ws, ref, face_mob);
    detail::compute_fluxes(ws, face_mob);
    out.diag.max_pressure_residual_rel = std::max(out.diag.max_pressure_residual_rel, std::max(res1, res2));
    if (std::max(res1, res2) > 1e-8)
      throw ForwardFailure("flow: pressure residual too large (ill-conditioned system)");

    // CFL limit from per-cell total outflux
    Eigen::VectorXd outflux = Eigen::VectorXd::Zero(n);
    for (size_t f = 0; f < ws.lo.size(); ++f) {
      if (ws.flux[f] >= 0.0)
        outflux[ws.lo[f]] += ws.flux[f];
      else
        outflux[ws.hi[f]] -= ws.flux[f];
    }
    for (auto& [c, q] : prod) outflux[c] += q;
    double dt_stab = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (outflux[i] > 0.0) dt_stab = std::min(dt_stab, pv / outflux[i]);
    dt_stab = model.cfl * dt_stab / dfw_max;
    if (!(dt_stab > 0.0)) throw ForwardFailure("flow: empty flow field");

    double interval = t_end - t;
    long nsub = std::max<long>(1, static_cast<long>(std::ceil(interval / dt_stab)));
    if (nsub > model.max_substeps_per_interval)
      throw ForwardFailure("flow: CFL sub-step count overflow (" + std::to_string(nsub) + ")");
    double dt = interval / static_cast<double>(nsub);

    Eigen::VectorXd ds(n);
    for (long k = 0; k < nsub; ++k) {
      ds.setZero();
      for (size_t f = 0; f < ws.lo.size(); ++f) {
        int donor = ws.flux[f] >= 0.0 ? ws.lo[f] : ws.hi[f];
        double fw = rp.frac_flow(s[donor]) * ws.flux[f];
        ds[ws.lo[f]] -= fw;
        ds[ws.hi[f]] += fw;
      }
      double dwprod = 0.0;
      for (auto& [c, q] : inj) ds[c] += q;  // injected fluid is water
      for (auto& [c, q] : prod) {
        double wq = rp.frac_flow(s[c]) * q;
        ds[c] -= wq;
        dwprod += wq;
      }
      s += (dt / pv) * ds;
      s = s.cwiseMax(0.0).cwiseMin(1.0);  // roundoff projection; CFL keeps it physical
      cum_winj += dt * ws.source.cwiseMax(0.0).sum();
      cum_wprod += dt * dwprod;
      double wip = s.sum() * pv;
      if (cum_winj > 0.0) {
        double rel = std::abs((cum_winj - cum_wprod) - (wip - wip0)) / cum_winj;
        out.diag.max_water_balance_rel = std::max(out.diag.max_water_balance_rel, rel);
      }
    }
    out.diag.total_substeps += nsub;
    t = t_end;

    for (size_t p = 0; p < prod.size(); ++p)
      out.watercut(static_cast<int>(step), static_cast<int>(p)) = rp.frac_flow(s[prod[p].first]);
  }
  return out;
}

/// Water-cut forward model: responses are the per-producer water cut at each
/// observation time, ordered time-major (all producers at t0, then t1, ...).
class WatercutModel final : public ForwardModel {
 public:
  explicit WatercutModel(FlowModel model) : model_(std::move(model)) { model_.validate(); }

  int data_dim() const override {
    return static_cast<int>(model_.obs_times.size() * model_.producers.size());
  }

  Eigen::VectorXd run(const Field& m) const override {
    WatercutSeries series = simulate_flow(m, model_);
    Eigen::VectorXd d(data_dim());
    int np = static_cast<int>(model_.producers.size());
    for (int ti = 0; ti < series.watercut.rows(); ++ti)
      for (int p = 0; p < np; ++p) d[ti * np + p] = series.watercut(ti, p);
    return d;
  }

  std::vector<ObsMeta> observation_meta() const override {
    std::vector<ObsMeta> meta;
    meta.reserve(data_dim());
    for (double time : model_.obs_times)
      for (size_t p = 0; p < model_.producers.size(); ++p) {
        const Well& w = model_.producers[p];
        auto c = model_.grid.cell_coords(model_.grid.index(w.ix, w.iy));
        meta.push_back({"prod_" + std::to_string(p), time, c[0], c[1]});
      }
    return meta;
  }

  const FlowModel& model() const { return model_; }

 private:
  FlowModel model_;
};

}  // namespace hies
