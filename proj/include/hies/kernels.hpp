/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace hies {

// ---------------------------------------------------------------------------
// Geometric anisotropy: coordinates are rotated by phi and stretched by alpha
// before an isotropic kernel is evaluated. The effective squared distance is
// q = x^T H x with H = A^T A and A = diag(1, alpha) * rotation(phi). alpha > 1
// shortens the range in the second principal direction. H is pi-periodic in
// phi, so orientations live on [-pi/2, pi/2).
// ---------------------------------------------------------------------------

struct AnisoParams {
  double rho = 1.0;    // principal correlation range
  double alpha = 1.0;  // ratio of ranges in the two principal directions
  double phi = 0.0;    // orientation of the principal axis, radians

  void validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("AnisoParams: rho must be > 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("AnisoParams: alpha must be > 0");
    if (!std::isfinite(phi)) throw std::invalid_argument("AnisoParams: phi must be finite");
  }
};

/// Representative orientation in [-pi/2, pi/2).
inline double wrap_orientation(double phi) {
  double w = phi - M_PI * std::round(phi / M_PI);
  if (w >= M_PI / 2.0) w -= M_PI;  // round-half-away edge case lands on +pi/2
  return w;
}

inline Eigen::Matrix2d aniso_matrix(const AnisoParams& p) {
  double c = std::cos(p.phi), s = std::sin(p.phi);
  double a2 = p.alpha * p.alpha;
  Eigen::Matrix2d h;
  h(0, 0) = c * c + a2 * s * s;
  h(0, 1) = (1.0 - a2) * s * c;
  h(1, 0) = h(0, 1);
  h(1, 1) = s * s + a2 * c * c;
  return h;
}

inline double aniso_distance_sq(double dx, double dy, const AnisoParams& p) {
  Eigen::Matrix2d h = aniso_matrix(p);
  return dx * (h(0, 0) * dx + h(0, 1) * dy) + dy * (h(1, 0) * dx + h(1, 1) * dy);
}

struct AnisoDerivatives {
  Eigen::Matrix2d dH_dphi;
  Eigen::Matrix2d dH_dalpha;
};

/// dH/dphi = (1 - alpha^2) [[-sin 2phi, cos 2phi], [cos 2phi, sin 2phi]]
/// dH/dalpha = alpha [[1 - cos 2phi, -sin 2phi], [-sin 2phi, 1 + cos 2phi]]
inline AnisoDerivatives aniso_matrix_derivatives(const AnisoParams& p) {
  double c2 = std::cos(2.0 * p.phi), s2 = std::sin(2.0 * p.phi);
  double k = 1.0 - p.alpha * p.alpha;
  AnisoDerivatives d;
  d.dH_dphi << -k * s2, k * c2, k * c2, k * s2;
  d.dH_dalpha << p.alpha * (1.0 - c2), -p.alpha * s2, -p.alpha * s2, p.alpha * (1.0 + c2);
  return d;
}

// ---------------------------------------------------------------------------
// Convolution square roots f with f * f^T = C:
//
//   Exponential1D  C(r) = sigma^2 exp(-|r|/a)
//     symmetric    f(r) = sigma sqrt(2) / (sqrt(a) pi) K0(|r|/a)
//     one-sided    f(r) = sigma sqrt(2/a) H(r) exp(-r/a)
//   Gaussian1D     C(r) = sigma^2 exp(-r^2/a^2)
//                  f(r) = sigma (4/(a^2 pi))^{1/4} exp(-2 r^2/a^2)
//   Gaussian2D     C(r) = sigma^2 exp(-3 r^2/rho^2),  r^2 = x^T H x
//                  f(r) = 2 sigma sqrt(3) / (rho sqrt(pi)) exp(-6 r^2/rho^2)
//
// The symmetric exponential factor is singular at r = 0 (K0 diverges); the
// matrix diagonal is evaluated as the cell average of f over one cell width,
// by 16-point Gauss-Legendre quadrature. K0 is integrable so the average is
// finite.
// ---------------------------------------------------------------------------

enum class KernelFamily { kExponential1D, kGaussian1D, kGaussian2D };
enum class ExpVariant { kSymmetric, kOneSided };

struct KernelSpec {
  KernelFamily family = KernelFamily::kGaussian1D;
  double sigma = 1.0;
  ExpVariant variant = ExpVariant::kSymmetric;  // Exponential1D only
  double range = 1.0;                           // 1D families: a
  AnisoParams aniso;                            // Gaussian2D: rho, alpha, phi

  bool is_1d() const { return family != KernelFamily::kGaussian2D; }

  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("KernelSpec: sigma must be finite and >= 0");
    if (is_1d()) {
      if (!(range > 0.0)) throw std::invalid_argument("KernelSpec: range must be > 0");
    } else {
      aniso.validate();
    }
  }
};

/// Point values of a 1D factor together with its log-parameter derivatives.
struct Kernel1DValues {
  double f = 0.0;
  double df_dlog_sigma = 0.0;  // = f, all factors are linear in sigma
  double df_dlog_range = 0.0;
};

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; symmetric).
inline constexpr int kGL16 = 8;
inline constexpr double kGL16Nodes[kGL16] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr double kGL16Weights[kGL16] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

/// Average of g over [-h/2, h/2] for even g, via 16-point quadrature.
template <typename Fn>
double cell_average_even(double h, Fn&& g) {
  // integrate over [0, h/2] and scale; nodes avoid the singular point at 0.
  double half = 0.5 * h;
  double acc = 0.0;
  for (int i = 0; i < kGL16; ++i) {
    double lo = 0.5 * half * (1.0 - kGL16Nodes[i]);
    double hi = 0.5 * half * (1.0 + kGL16Nodes[i]);
    acc += kGL16Weights[i] * (g(lo) + g(hi));
  }
  return acc * 0.5;  // (half/2 * acc) * 2 / h
}

}  // namespace detail

/// Point evaluation of a 1D factor. The offset r is signed (the one-sided
/// exponential factor is supported on r >= 0). The symmetric exponential
/// factor returns +inf at r = 0; use sqrt_kernel_1d_cell_avg for diagonals.
inline Kernel1DValues sqrt_kernel_1d(const KernelSpec& k, double r) {
  Kernel1DValues out;
  double a = k.range;
  switch (k.family) {
    case KernelFamily::kGaussian1D: {
      double pref = k.sigma * std::pow(4.0 / (a * a * M_PI), 0.25);
      out.f = pref * std::exp(-2.0 * r * r / (a * a));
      out.df_dlog_range = out.f * (4.0 * r * r / (a * a) - 0.5);
      break;
    }
    case KernelFamily::kExponential1D: {
      if (k.variant == ExpVariant::kOneSided) {
        if (r < 0.0) {
          out.f = 0.0;
          out.df_dlog_range = 0.0;
        } else {
          out.f = k.sigma * std::sqrt(2.0 / a) * std::exp(-r / a);
          out.df_dlog_range = out.f * (r / a - 0.5);
        }
      } else {
        double x = std::abs(r) / a;
        double pref = k.sigma * std::sqrt(2.0 / a) / M_PI;
        if (x == 0.0) {
          out.f = std::numeric_limits<double>::infinity();
          out.df_dlog_range = -std::numeric_limits<double>::infinity();
        } else {
          out.f = pref * std::cyl_bessel_k(0.0, x);
          // d/dln a [a^{-1/2} K0(r/a)] = a^{-1/2} (-K0/2 + (r/a) K1)
          out.df_dlog_range = pref * (-0.5 * std::cyl_bessel_k(0.0, x) + x * std::cyl_bessel_k(1.0, x));
        }
      }
      break;
    }
    case KernelFamily::kGaussian2D:
      throw std::invalid_argument("sqrt_kernel_1d: Gaussian2D requires the 2D evaluation");
  }
  out.df_dlog_sigma = out.f;
  return out;
}

/// Diagonal (r = 0) entry as a cell average over one cell width. Only the
/// symmetric exponential factor actually needs the quadrature; the other
/// families return the point value.
inline Kernel1DValues sqrt_kernel_1d_cell_avg(const KernelSpec& k, double cell_width) {
  if (k.family == KernelFamily::kExponential1D && k.variant == ExpVariant::kSymmetric) {
    if (!(cell_width > 0.0))
      throw std::invalid_argument("sqrt_kernel_1d_cell_avg: cell width must be > 0");
    double a = k.range;
    double pref = k.sigma * std::sqrt(2.0 / a) / M_PI;
    Kernel1DValues out;
    out.f = detail::cell_average_even(
        cell_width, [&](double s) { return pref * std::cyl_bessel_k(0.0, s / a); });
    out.df_dlog_range = detail::cell_average_even(cell_width, [&](double s) {
      double x = s / a;
      return pref * (-0.5 * std::cyl_bessel_k(0.0, x) + x * std::cyl_bessel_k(1.0, x));
    });
    out.df_dlog_sigma = out.f;
    return out;
  }
  return sqrt_kernel_1d(k, 0.0);
}

/// 2D factor values and derivatives with respect to (ln rho, ln alpha, phi).
struct Kernel2DValues {
  double f = 0.0;
  double df_dlog_rho = 0.0;
  double df_dlog_alpha = 0.0;
  double df_dphi = 0.0;
};

inline Kernel2DValues sqrt_kernel_2d(const KernelSpec& k, double dx, double dy) {
  const AnisoParams& p = k.aniso;
  Eigen::Matrix2d h = aniso_matrix(p);
  AnisoDerivatives dh = aniso_matrix_derivatives(p);
  double q = dx * (h(0, 0) * dx + h(0, 1) * dy) + dy * (h(1, 0) * dx + h(1, 1) * dy);
  double q_phi = dx * (dh.dH_dphi(0, 0) * dx + dh.dH_dphi(0, 1) * dy) +
                 dy * (dh.dH_dphi(1, 0) * dx + dh.dH_dphi(1, 1) * dy);
  double q_alpha = dx * (dh.dH_dalpha(0, 0) * dx + dh.dH_dalpha(0, 1) * dy) +
                   dy * (dh.dH_dalpha(1, 0) * dx + dh.dH_dalpha(1, 1) * dy);
  double rho2 = p.rho * p.rho;

  Kernel2DValues out;
  out.f = 2.0 * k.sigma * std::sqrt(3.0) / (p.rho * std::sqrt(M_PI)) * std::exp(-6.0 * q / rho2);
  out.df_dlog_rho = (12.0 * q / rho2 - 1.0) * out.f;
  out.df_dphi = -(6.0 / rho2) * q_phi * out.f;
  out.df_dlog_alpha = -(6.0 / rho2) * p.alpha * q_alpha * out.f;
  return out;
}

/// Plain factor value at a lattice offset; 1D families use rx as the signed
/// distance, Gaussian2D uses the (rx, ry) offset.
inline double sqrt_kernel_value(const KernelSpec& k, double rx, double ry = 0.0) {
  if (k.is_1d()) return sqrt_kernel_1d(k, rx).f;
  return sqrt_kernel_2d(k, rx, ry).f;
}

/// Closed-form covariance the factor reproduces under convolution; used by
/// fidelity checks and the L L^T - C error map.
inline double covariance_value(const KernelSpec& k, double rx, double ry = 0.0) {
  double s2 = k.sigma * k.sigma;
  switch (k.family) {
    case KernelFamily::kExponential1D:
      return s2 * std::exp(-std::abs(rx) / k.range);
    case KernelFamily::kGaussian1D:
      return s2 * std::exp(-rx * rx / (k.range * k.range));
    case KernelFamily::kGaussian2D: {
      double q = aniso_distance_sq(rx, ry, k.aniso);
      return s2 * std::exp(-3.0 * q / (k.aniso.rho * k.aniso.rho));
    }
  }
  return 0.0;
}

}  // namespace hies
