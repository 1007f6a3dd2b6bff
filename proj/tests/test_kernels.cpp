/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hies/kernels.hpp"
#include "hies/rng.hpp"

using namespace hies;

TEST_CASE("anisotropic distance basics") {
  AnisoParams p{1.0, 2.0, 0.0};
  // H is diagonal at phi = 0
  CHECK(aniso_distance_sq(1.0, 0.0, p) == Catch::Approx(1.0));
  CHECK(aniso_distance_sq(0.0, 1.0, p) == Catch::Approx(4.0));

  // alpha = 1: isotropic for any phi
  RngStream rng(3, 1);
  for (int k = 0; k < 20; ++k) {
    AnisoParams iso{1.0, 1.0, -M_PI / 2.0 + M_PI * rng.uniform()};
    double dx = rng.normal(), dy = rng.normal();
    CHECK(aniso_distance_sq(dx, dy, iso) == Catch::Approx(dx * dx + dy * dy).epsilon(1e-12));
  }

  CHECK(aniso_distance_sq(0.0, 0.0, p) == 0.0);
}

TEST_CASE("anisotropic distance matches explicit rotation-stretch composition") {
  AnisoParams p{1.0, 2.0, M_PI / 4.0};
  // x* = diag(1, alpha) * rotation(phi) * x, distance = |x*|^2
  double c = std::cos(p.phi), s = std::sin(p.phi);
  double dx = 1.0, dy = 1.0;
  double rx = c * dx + s * dy;
  double ry = p.alpha * (-s * dx + c * dy);
  CHECK(aniso_distance_sq(dx, dy, p) == Catch::Approx(rx * rx + ry * ry).epsilon(1e-12));
}

TEST_CASE("H derivatives: closed form vs finite differences") {
  CHECK(aniso_matrix_derivatives(AnisoParams{1.0, 1.0, 0.7}).dH_dphi.norm() == 0.0);

  AnisoParams p0{1.0, 1.0, 0.0};
  Eigen::Matrix2d da0 = aniso_matrix_derivatives(p0).dH_dalpha;
  CHECK(da0(0, 0) == Catch::Approx(0.0).margin(1e-14));
  CHECK(da0(1, 1) == Catch::Approx(2.0));
  CHECK(da0(0, 1) == Catch::Approx(0.0).margin(1e-14));

  RngStream rng(5, 9);
  const double h = 1e-5;
  for (int k = 0; k < 100; ++k) {
    AnisoParams p{std::exp(rng.normal() * 0.3), std::exp(rng.normal() * 0.5),
                  -M_PI / 2.0 + M_PI * rng.uniform()};
    AnisoDerivatives d = aniso_matrix_derivatives(p);

    AnisoParams pp = p, pm = p;
    pp.phi += h;
    pm.phi -= h;
    Eigen::Matrix2d fd_phi = (aniso_matrix(pp) - aniso_matrix(pm)) / (2.0 * h);
    double scale_phi = std::max(d.dH_dphi.norm(), 1e-12);
    CHECK((fd_phi - d.dH_dphi).norm() / scale_phi < 1e-6);

    pp = pm = p;
    pp.alpha += h;
    pm.alpha -= h;
    Eigen::Matrix2d fd_a = (aniso_matrix(pp) - aniso_matrix(pm)) / (2.0 * h);
    CHECK((fd_a - d.dH_dalpha).norm() / d.dH_dalpha.norm() < 1e-6);
  }
}

TEST_CASE("2D factor value at zero offset") {
  KernelSpec k;
  k.family = KernelFamily::kGaussian2D;
  k.sigma = 2.0;
  k.aniso = {1.0, 1.0, 0.0};
  // 2 sigma sqrt(3) / (rho sqrt(pi)) at r = 0
  CHECK(sqrt_kernel_value(k, 0.0, 0.0) == Catch::Approx(4.0 * std::sqrt(3.0 / M_PI)).epsilon(1e-14));
}

TEST_CASE("one-sided exponential factor is causal") {
  KernelSpec k;
  k.family = KernelFamily::kExponential1D;
  k.variant = ExpVariant::kOneSided;
  k.sigma = 1.3;
  k.range = 0.2;
  CHECK(sqrt_kernel_value(k, -0.01) == 0.0);
  CHECK(sqrt_kernel_value(k, -5.0) == 0.0);
  CHECK(sqrt_kernel_value(k, 0.0) == Catch::Approx(1.3 * std::sqrt(2.0 / 0.2)));
}

TEST_CASE("kernels are pi-periodic in orientation") {
  KernelSpec k;
  k.family = KernelFamily::kGaussian2D;
  k.sigma = 1.0;
  k.aniso = {0.8, 3.0, 0.4};
  KernelSpec k2 = k;
  k2.aniso.phi += M_PI;
  RngStream rng(17, 4);
  for (int i = 0; i < 50; ++i) {
    double dx = rng.normal(), dy = rng.normal();
    Kernel2DValues a = sqrt_kernel_2d(k, dx, dy);
    Kernel2DValues b = sqrt_kernel_2d(k2, dx, dy);
    CHECK(a.f == Catch::Approx(b.f).epsilon(1e-12));
    CHECK(a.df_dphi == Catch::Approx(b.df_dphi).margin(1e-12));
    CHECK(a.df_dlog_rho == Catch::Approx(b.df_dlog_rho).margin(1e-12));
    CHECK(a.df_dlog_alpha == Catch::Approx(b.df_dlog_alpha).margin(1e-12));
  }
}

// Numerical-convolution oracle: the discrete self-convolution of the factor
// must reproduce the closed-form covariance on interior cells.
TEST_CASE("1D Gaussian factor self-convolution reproduces the covariance") {
  KernelSpec k;
  k.family = KernelFamily::kGaussian1D;
  k.sigma = 1.7;
  double dx = 1.0;
  for (double a : {5.0, 8.0, 15.0}) {
    k.range = a;
    // sum_j f(r_i - s_j) f(r_k - s_j) dx over a wide lattice
    int half = static_cast<int>(std::ceil(6.0 * a));
    for (double lag : {0.0, 1.0, 3.0, a / 2.0, a}) {
      double acc = 0.0;
      for (int j = -half; j <= half; ++j)
        acc += sqrt_kernel_value(k, -j * dx) * sqrt_kernel_value(k, lag - j * dx) * dx;
      double expected = covariance_value(k, lag);
      CHECK(acc == Catch::Approx(expected).epsilon(0.01));
    }
  }
}

TEST_CASE("wrap_orientation maps into [-pi/2, pi/2)") {
  CHECK(wrap_orientation(0.3) == Catch::Approx(0.3));
  CHECK(wrap_orientation(0.3 + M_PI) == Catch::Approx(0.3));
  CHECK(wrap_orientation(0.3 - 3.0 * M_PI) == Catch::Approx(0.3).epsilon(1e-12));
  CHECK(wrap_orientation(M_PI / 2.0) == Catch::Approx(-M_PI / 2.0));
  CHECK(wrap_orientation(-M_PI / 2.0) >= -M_PI / 2.0);
  CHECK(wrap_orientation(-M_PI / 2.0) < M_PI / 2.0);
}

TEST_CASE("16-point Gauss-Legendre table is consistent") {
  double sum = 0.0;
  for (int i = 0; i < detail::kGL16; ++i) sum += detail::kGL16Weights[i];
  CHECK(2.0 * sum == Catch::Approx(2.0).epsilon(1e-14));
  // integrates x^2 on [-h/2, h/2] exactly: average = h^2/12
  double avg = detail::cell_average_even(2.0, [](double s) { return s * s; });
  CHECK(avg == Catch::Approx(4.0 / 12.0).epsilon(1e-13));
}
