/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "hies/grid.hpp"
#include "hies/kernels.hpp"

namespace hies {

/// Discretized square-root operator L with L L^T ~= C_m, plus the analytic
/// derivative operators with respect to the kernel's log-parameters
/// (1D: ln sigma, ln a; 2D: ln rho, ln alpha, phi). Entries carry a
/// sqrt(cell measure) scaling so the discrete product approximates the
/// continuous convolution. Boundary cells use the same translation-invariant
/// kernel; no boundary correction is applied.
struct CovOperator {
  GridSpec grid;
  KernelSpec kernel;
  Eigen::MatrixXd L;
  std::vector<Eigen::MatrixXd> dL;  // empty unless built with derivatives

  int n_hyper_derivs() const { return static_cast<int>(dL.size()); }
};

namespace detail {

inline constexpr int kDenseGuard = 10000;

inline void check_dense_guard(const GridSpec& grid) {
  if (grid.size() > kDenseGuard)
    throw std::invalid_argument("build_L: grid size " + std::to_string(grid.size()) +
                                " exceeds dense-storage guard " + std::to_string(kDenseGuard));
}

// Fill matrices from a per-lattice-offset table; entries depend only on the
// cell offset so the kernel is evaluated O(nx*ny) times instead of O(N^2).
template <typename TableFn>
void fill_from_offsets(const GridSpec& grid, int n_mats, TableFn&& table_value,
                       std::vector<Eigen::MatrixXd*>& mats) {
  int nx = grid.nx, ny = grid.ny, n = grid.size();
  int ox = 2 * nx - 1;
  int oy = 2 * ny - 1;
  std::vector<Eigen::VectorXd> table(static_cast<size_t>(ox) * oy);
  for (int diy = -(ny - 1); diy <= ny - 1; ++diy)
    for (int dix = -(nx - 1); dix <= nx - 1; ++dix)
      table[(diy + ny - 1) * ox + (dix + nx - 1)] = table_value(dix * grid.dx, diy * grid.dy);
  for (int m = 0; m < n_mats; ++m) mats[m]->resize(n, n);
  for (int j = 0; j < n; ++j) {
    int jx = j % nx, jy = j / nx;
    for (int i = 0; i < n; ++i) {
      int ix = i % nx, iy = i / nx;
      const Eigen::VectorXd& v = table[(iy - jy + ny - 1) * ox + (ix - jx + nx - 1)];
      for (int m = 0; m < n_mats; ++m) (*mats[m])(i, j) = v[m];
    }
  }
}

}  // namespace detail

/// Builds L (no derivative operators).
inline CovOperator build_L(const GridSpec& grid, const KernelSpec& kernel) {
  grid.validate();
  kernel.validate();
  detail::check_dense_guard(grid);
  if (kernel.is_1d() && !grid.is_1d())
    throw std::invalid_argument("build_L: 1D kernel family on a 2D grid");

  double scale = std::sqrt(grid.cell_measure());
  CovOperator cov;
  cov.grid = grid;
  cov.kernel = kernel;
  std::vector<Eigen::MatrixXd*> mats = {&cov.L};
  detail::fill_from_offsets(grid, 1, [&](double rx, double ry) -> Eigen::VectorXd {
    Eigen::VectorXd v(1);
    if (kernel.is_1d())
      v[0] = (rx == 0.0 ? sqrt_kernel_1d_cell_avg(kernel, grid.dx).f : sqrt_kernel_1d(kernel, rx).f);
    else
      v[0] = sqrt_kernel_2d(kernel, rx, ry).f;
    return v * scale;
  }, mats);
  return cov;
}

/// Builds L together with its analytic derivative operators. Layout of dL:
/// 1D families: { dL/dln sigma, dL/dln a }; Gaussian2D: { dL/dln rho,
/// dL/dln alpha, dL/dphi } (sigma is not a hyperparameter in 2D).
inline CovOperator build_L_with_derivatives(const GridSpec& grid, const KernelSpec& kernel) {
  grid.validate();
  kernel.validate();
  detail::check_dense_guard(grid);
  if (kernel.is_1d() && !grid.is_1d())
    throw std::invalid_argument("build_L_with_derivatives: 1D kernel family on a 2D grid");

  double scale = std::sqrt(grid.cell_measure());
  CovOperator cov;
  cov.grid = grid;
  cov.kernel = kernel;
  if (kernel.is_1d()) {
    cov.dL.resize(2);
    std::vector<Eigen::MatrixXd*> mats = {&cov.L, &cov.dL[0], &cov.dL[1]};
    detail::fill_from_offsets(grid, 3, [&](double rx, double) -> Eigen::VectorXd {
      Kernel1DValues k = (rx == 0.0) ? sqrt_kernel_1d_cell_avg(kernel, grid.dx)
                                     : sqrt_kernel_1d(kernel, rx);
      Eigen::VectorXd v(3);
      v << k.f, k.df_dlog_sigma, k.df_dlog_range;
      return v * scale;
    }, mats);
  } else {
    cov.dL.resize(3);
    std::vector<Eigen::MatrixXd*> mats = {&cov.L, &cov.dL[0], &cov.dL[1], &cov.dL[2]};
    detail::fill_from_offsets(grid, 4, [&](double rx, double ry) -> Eigen::VectorXd {
      Kernel2DValues k = sqrt_kernel_2d(kernel, rx, ry);
      Eigen::VectorXd v(4);
      v << k.f, k.df_dlog_rho, k.df_dlog_alpha, k.df_dphi;
      return v * scale;
    }, mats);
  }
  return cov;
}

/// m = m_pr + L z
inline Eigen::VectorXd realize_m(const Eigen::VectorXd& m_pr, const CovOperator& cov,
                                 const Eigen::VectorXd& z) {
  if (m_pr.size() != cov.L.rows() || z.size() != cov.L.cols())
    throw std::invalid_argument("realize_m: dimension mismatch");
  return m_pr + cov.L * z;
}

inline Field realize_m(const Field& m_pr, const CovOperator& cov, const Field& z) {
  if (!(m_pr.grid == cov.grid) || !(z.grid == cov.grid))
    throw std::invalid_argument("realize_m: fields not on the operator grid");
  return Field(cov.grid, realize_m(m_pr.values, cov, z.values));
}

/// Jacobian of m with respect to the raw state (z, hyper):
/// M_x = [ L | (dL/dh_1) z | ... | (dL/dh_k) z ].
inline Eigen::MatrixXd assemble_Mx(const CovOperator& cov, const Eigen::VectorXd& z) {
  if (z.size() != cov.L.cols()) throw std::invalid_argument("assemble_Mx: z length mismatch");
  int n = static_cast<int>(cov.L.rows());
  int nh = cov.n_hyper_derivs();
  Eigen::MatrixXd m(n, n + nh);
  m.leftCols(n) = cov.L;
  for (int k = 0; k < nh; ++k) m.col(n + k) = cov.dL[k] * z;
  return m;
}

/// Map of (L L^T)[c][j] - C(r_cj) over cells j, for the grid's center cell c.
inline Field cov_error_map(const CovOperator& cov) {
  const GridSpec& g = cov.grid;
  int c = g.index(g.nx / 2, g.ny / 2);
  auto cc = g.cell_coords(c);
  Eigen::VectorXd row = cov.L.row(c) * cov.L.transpose();
  Eigen::VectorXd err(g.size());
  for (int j = 0; j < g.size(); ++j) {
    auto cj = g.cell_coords(j);
    err[j] = row[j] - covariance_value(cov.kernel, cc[0] - cj[0], cc[1] - cj[1]);
  }
  return Field(g, err);
}

}  // namespace hies
