/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "hies/cov_operator.hpp"
#include "hies/rng.hpp"

using namespace hies;

namespace {

KernelSpec gauss1d(double sigma, double a) {
  KernelSpec k;
  k.family = KernelFamily::kGaussian1D;
  k.sigma = sigma;
  k.range = a;
  return k;
}

KernelSpec exp1d(double sigma, double a, ExpVariant v) {
  KernelSpec k;
  k.family = KernelFamily::kExponential1D;
  k.sigma = sigma;
  k.range = a;
  k.variant = v;
  return k;
}

KernelSpec gauss2d(double sigma, AnisoParams p) {
  KernelSpec k;
  k.family = KernelFamily::kGaussian2D;
  k.sigma = sigma;
  k.aniso = p;
  return k;
}

// relative max difference between an analytic derivative operator and central
// finite differences of build_L under a parameter bump
double max_rel_fd_error(const GridSpec& grid, const KernelSpec& base, int which,
                        const std::function<KernelSpec(double)>& bumped, double h) {
  CovOperator cov = build_L_with_derivatives(grid, base);
  Eigen::MatrixXd fd = (build_L(grid, bumped(h)).L - build_L(grid, bumped(-h)).L) / (2.0 * h);
  double worst = 0.0;
  for (int i = 0; i < fd.rows(); ++i)
    for (int j = 0; j < fd.cols(); ++j) {
      if (std::abs(cov.L(i, j)) <= 1e-12) continue;  // skip effectively-zero entries
      double denom = std::max(std::abs(cov.dL[which](i, j)), 1e-10 * std::abs(cov.L(i, j)));
      worst = std::max(worst, std::abs(fd(i, j) - cov.dL[which](i, j)) / denom);
    }
  return worst;
}

}  // namespace

TEST_CASE("L is linear in sigma") {
  GridSpec g{40, 1, 1.0 / 40.0, 1.0, 0.0, 0.0};
  CHECK(build_L(g, gauss1d(0.0, 0.2)).L.norm() == 0.0);

  Eigen::MatrixXd l1 = build_L(g, gauss1d(1.0, 0.2)).L;
  Eigen::MatrixXd l3 = build_L(g, gauss1d(3.0, 0.2)).L;
  CHECK((l3 - 3.0 * l1).norm() / l3.norm() < 1e-14);

  GridSpec g2{10, 6, 0.1, 0.1, 0.0, 0.0};
  Eigen::MatrixXd m1 = build_L(g2, gauss2d(1.0, {0.4, 2.0, 0.3})).L;
  Eigen::MatrixXd m2 = build_L(g2, gauss2d(2.0, {0.4, 2.0, 0.3})).L;
  CHECK((m2 - 2.0 * m1).norm() / m2.norm() < 1e-14);
}

TEST_CASE("LL^T reproduces the Gaussian covariance on interior cells") {
  GridSpec g{150, 1, 1.0 / 150.0, 1.0, 0.0, 0.0};
  for (double cells : {5.0, 8.0, 15.0}) {
    double a = cells * g.dx;
    double sigma = 1.3;
    CovOperator cov = build_L(g, gauss1d(sigma, a));
    Eigen::MatrixXd c = cov.L * cov.L.transpose();
    int margin = static_cast<int>(std::ceil(3.0 * cells));
    for (int i = margin; i < g.nx - margin; i += 7)
      for (int j = margin; j < g.nx - margin; j += 5) {
        double r = (i - j) * g.dx;
        CHECK(std::abs(c(i, j) - covariance_value(gauss1d(sigma, a), r)) <=
              0.02 * sigma * sigma);
      }
    CHECK(c(g.nx / 2, g.nx / 2) == Catch::Approx(sigma * sigma).epsilon(0.02));
  }
}

TEST_CASE("LL^T for the symmetric exponential factor within 5%") {
  GridSpec g{200, 1, 1.0 / 200.0, 1.0, 0.0, 0.0};
  double a = 10.0 * g.dx;
  double sigma = 1.0;
  CovOperator cov = build_L(g, exp1d(sigma, a, ExpVariant::kSymmetric));
  Eigen::MatrixXd c = cov.L * cov.L.transpose();
  int mid = g.nx / 2;
  for (int lag : {0, 2, 5, 10, 20}) {
    double expected = covariance_value(exp1d(sigma, a, ExpVariant::kSymmetric), lag * g.dx);
    CHECK(std::abs(c(mid, mid + lag) - expected) <= 0.05 * sigma * sigma);
  }
}

TEST_CASE("LL^T for the one-sided exponential factor within 5%") {
  // the jump at r = 0 makes this variant first-order in dx/a, so the 5%
  // level needs a longer range than the symmetric factor
  GridSpec g{400, 1, 1.0 / 400.0, 1.0, 0.0, 0.0};
  double a = 40.0 * g.dx;
  CovOperator cov = build_L(g, exp1d(1.0, a, ExpVariant::kOneSided));
  Eigen::MatrixXd c = cov.L * cov.L.transpose();
  int mid = g.nx / 2;
  for (int lag : {0, 3, 10, 25, 60}) {
    double expected = covariance_value(exp1d(1.0, a, ExpVariant::kOneSided), lag * g.dx);
    CHECK(std::abs(c(mid, mid + lag) - expected) <= 0.05);
  }
}

TEST_CASE("LL^T reproduces the isotropic 2D Gaussian covariance") {
  GridSpec g{36, 20, 1.0 / 15.0, 1.0 / 15.0, 0.0, 0.0};
  double rho = 6.0 * g.dx;
  double sigma = 2.0;
  KernelSpec k = gauss2d(sigma, {rho, 1.0, 0.0});
  CovOperator cov = build_L(g, k);
  Eigen::MatrixXd c = cov.L * cov.L.transpose();
  int i0 = g.index(17, 9);
  for (int lag = 0; lag <= 6; ++lag) {
    int j = g.index(17 - lag, 9);
    double expected = covariance_value(k, lag * g.dx, 0.0);
    CHECK(std::abs(c(i0, j) - expected) <= 0.02 * sigma * sigma);
  }
  int jd = g.index(14, 6);
  auto ci = g.cell_coords(i0);
  auto cj = g.cell_coords(jd);
  CHECK(std::abs(c(i0, jd) - covariance_value(k, ci[0] - cj[0], ci[1] - cj[1])) <=
        0.02 * sigma * sigma);
}

TEST_CASE("rotating phi by pi leaves L unchanged") {
  GridSpec g{12, 7, 0.1, 0.1, 0.0, 0.0};
  Eigen::MatrixXd l1 = build_L(g, gauss2d(1.0, {0.5, 4.0, 0.37})).L;
  Eigen::MatrixXd l2 = build_L(g, gauss2d(1.0, {0.5, 4.0, 0.37 + M_PI})).L;
  CHECK((l1 - l2).norm() / l1.norm() < 1e-12);
}

TEST_CASE("derivative operators match finite differences") {
  const double h = 1e-5;

  SECTION("1D Gaussian") {
    GridSpec g{30, 1, 1.0 / 30.0, 1.0, 0.0, 0.0};
    KernelSpec base = gauss1d(std::exp(0.1), std::exp(-1.5));
    CovOperator cov = build_L_with_derivatives(g, base);
    CHECK((cov.dL[0] - cov.L).norm() == 0.0);  // dL/dln sigma = L exactly
    double err = max_rel_fd_error(g, base, 1, [&](double dh) {
      return gauss1d(base.sigma, std::exp(std::log(base.range) + dh));
    }, h);
    CHECK(err < 1e-5);
  }

  SECTION("1D exponential, both variants") {
    GridSpec g{30, 1, 1.0 / 30.0, 1.0, 0.0, 0.0};
    for (auto variant : {ExpVariant::kSymmetric, ExpVariant::kOneSided}) {
      KernelSpec base = exp1d(1.2, 0.23, variant);
      CovOperator cov = build_L_with_derivatives(g, base);
      CHECK((cov.dL[0] - cov.L).norm() == 0.0);
      double err = max_rel_fd_error(g, base, 1, [&](double dh) {
        return exp1d(base.sigma, std::exp(std::log(base.range) + dh), variant);
      }, h);
      CHECK(err < 1e-5);
    }
  }

  SECTION("2D Gaussian: ln rho, ln alpha, phi") {
    GridSpec g{10, 6, 0.1, 0.1, 0.0, 0.0};
    RngStream rng(23, 8);
    for (int rep = 0; rep < 5; ++rep) {
      AnisoParams p{std::exp(-0.7 + 0.3 * rng.normal()), std::exp(0.8 + 0.4 * rng.normal()),
                    -M_PI / 2.0 + M_PI * rng.uniform()};
      KernelSpec base = gauss2d(1.5, p);
      double e0 = max_rel_fd_error(g, base, 0, [&](double dh) {
        AnisoParams q = p;
        q.rho = std::exp(std::log(p.rho) + dh);
        return gauss2d(1.5, q);
      }, h);
      double e1 = max_rel_fd_error(g, base, 1, [&](double dh) {
        AnisoParams q = p;
        q.alpha = std::exp(std::log(p.alpha) + dh);
        return gauss2d(1.5, q);
      }, h);
      double e2 = max_rel_fd_error(g, base, 2, [&](double dh) {
        AnisoParams q = p;
        q.phi = p.phi + dh;
        return gauss2d(1.5, q);
      }, h);
      CHECK(e0 < 1e-5);
      CHECK(e1 < 1e-5);
      CHECK(e2 < 1e-5);
    }
  }

  SECTION("alpha = 1 gives zero orientation sensitivity") {
    GridSpec g{8, 5, 0.1, 0.1, 0.0, 0.0};
    CovOperator cov = build_L_with_derivatives(g, gauss2d(1.0, {0.4, 1.0, 0.9}));
    CHECK(cov.dL[2].norm() == 0.0);
  }
}

TEST_CASE("assemble_Mx block structure") {
  GridSpec g{12, 1, 1.0 / 12.0, 1.0, 0.0, 0.0};
  CovOperator cov = build_L_with_derivatives(g, gauss1d(1.0, 0.3));

  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(12);
  Eigen::MatrixXd mx0 = assemble_Mx(cov, z0);
  REQUIRE(mx0.rows() == 12);
  REQUIRE(mx0.cols() == 14);
  CHECK(mx0.leftCols(12) == cov.L);
  CHECK(mx0.rightCols(2).norm() == 0.0);

  RngStream rng(2, 2);
  Eigen::VectorXd z = rng.normal_vector(12);
  Eigen::MatrixXd mx = assemble_Mx(cov, z);
  for (int k = 0; k < 12; ++k) {
    Eigen::VectorXd ek = Eigen::VectorXd::Unit(12, k);
    CHECK((mx.leftCols(12) * ek - cov.L * ek).norm() == 0.0);
  }
}

TEST_CASE("Mx times a state perturbation matches finite differences of m") {
  GridSpec g{10, 6, 0.1, 0.1, 0.0, 0.0};
  Eigen::VectorXd m_pr = Eigen::VectorXd::Zero(g.size());
  RngStream rng(31, 5);
  Eigen::VectorXd z = rng.normal_vector(g.size());
  Eigen::Vector3d hyper(-0.6, 0.9, 0.4);  // ln rho, ln alpha, phi

  auto m_of = [&](const Eigen::VectorXd& zz, const Eigen::Vector3d& hh) {
    KernelSpec k = gauss2d(1.5, {std::exp(hh[0]), std::exp(hh[1]), hh[2]});
    return realize_m(m_pr, build_L(g, k), zz);
  };

  KernelSpec base = gauss2d(1.5, {std::exp(hyper[0]), std::exp(hyper[1]), hyper[2]});
  Eigen::MatrixXd mx = assemble_Mx(build_L_with_derivatives(g, base), z);

  const double h = 1e-5;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd dz = rng.normal_vector(g.size());
    Eigen::Vector3d dh(rng.normal(), rng.normal(), rng.normal());
    Eigen::VectorXd dx(g.size() + 3);
    dx << dz, dh;
    Eigen::VectorXd fd =
        (m_of(z + h * dz, hyper + h * dh) - m_of(z - h * dz, hyper - h * dh)) / (2.0 * h);
    Eigen::VectorXd lin = mx * dx;
    CHECK((fd - lin).norm() / fd.norm() < 1e-5);
  }
}

TEST_CASE("realize_m basics and Monte Carlo variance") {
  GridSpec g{60, 1, 1.0 / 60.0, 1.0, 0.0, 0.0};
  double sigma = 1.4;
  CovOperator cov = build_L(g, gauss1d(sigma, 8.0 * g.dx));
  Eigen::VectorXd m_pr = Eigen::VectorXd::Constant(60, 2.5);

  CHECK(realize_m(m_pr, cov, Eigen::VectorXd::Zero(60)) == m_pr);

  RngStream rng(41, 3);
  Eigen::VectorXd z1 = rng.normal_vector(60), z2 = rng.normal_vector(60);
  Eigen::VectorXd lhs = realize_m(m_pr, cov, z1 + z2) - m_pr;
  Eigen::VectorXd rhs = (realize_m(m_pr, cov, z1) - m_pr) + (realize_m(m_pr, cov, z2) - m_pr);
  CHECK((lhs - rhs).norm() < 1e-12);

  int cell = 30;
  double acc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    double v = cov.L.row(cell) * rng.normal_vector(60);
    acc += v * v;
  }
  CHECK(acc / n == Catch::Approx(sigma * sigma).epsilon(0.05));
}

TEST_CASE("dense guard and validation errors") {
  GridSpec big{101, 101, 0.01, 0.01, 0.0, 0.0};
  CHECK_THROWS_AS(build_L(big, gauss2d(1.0, {0.3, 1.0, 0.0})), std::invalid_argument);
  GridSpec g2{4, 4, 0.1, 0.1, 0.0, 0.0};
  CHECK_THROWS_AS(build_L(g2, gauss1d(1.0, 0.1)), std::invalid_argument);  // 1D kernel, 2D grid
  KernelSpec bad = gauss1d(1.0, -0.1);
  CHECK_THROWS_AS(build_L(GridSpec{4, 1, 0.1, 1.0, 0.0, 0.0}, bad), std::invalid_argument);
}

TEST_CASE("cov_error_map is small for a well-resolved kernel") {
  GridSpec g{60, 1, 1.0 / 60.0, 1.0, 0.0, 0.0};
  CovOperator cov = build_L(g, gauss1d(1.0, 8.0 * g.dx));
  Field err = cov_error_map(cov);
  CHECK(err.values.cwiseAbs().maxCoeff() < 0.02);
}
