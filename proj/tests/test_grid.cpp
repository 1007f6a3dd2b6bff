/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "hies/grid.hpp"
#include "hies/rng.hpp"

using namespace hies;

namespace {
GridSpec bench_grid_1d() { return GridSpec{150, 1, 1.0 / 150.0, 1.0, 0.0, 0.0}; }
}  // namespace

TEST_CASE("cell coordinates are cell-centered") {
  GridSpec g = bench_grid_1d();
  // first cell center of a 150-cell grid on [0,1]
  CHECK(g.cell_coords(0)[0] == Catch::Approx(1.0 / 300.0).epsilon(1e-14));
  CHECK(g.cell_coords(149)[0] == Catch::Approx(1.0 - 1.0 / 300.0).epsilon(1e-14));

  GridSpec g2{30, 15, 0.5, 0.25, -1.0, 2.0};
  auto c00 = g2.cell_coords(g2.index(0, 0));
  CHECK(c00[0] == Catch::Approx(-1.0 + 0.25));
  CHECK(c00[1] == Catch::Approx(2.0 + 0.125));

  // adjacent cells differ by exactly one spacing
  for (int ix = 0; ix + 1 < g2.nx; ++ix) {
    auto a = g2.cell_coords(g2.index(ix, 3));
    auto b = g2.cell_coords(g2.index(ix + 1, 3));
    CHECK(b[0] - a[0] == Catch::Approx(g2.dx).epsilon(1e-14));
    CHECK(b[1] == a[1]);
  }
}

TEST_CASE("cell index range checks") {
  GridSpec g{4, 3, 1.0, 1.0, 0.0, 0.0};
  CHECK_THROWS_AS(g.cell_coords(12), std::out_of_range);
  CHECK_THROWS_AS(g.cell_coords(-1), std::out_of_range);
  CHECK_THROWS_AS(g.index(4, 0), std::out_of_range);
  CHECK_THROWS_AS((GridSpec{0, 1, 1.0, 1.0, 0.0, 0.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((GridSpec{2, 2, 0.0, 1.0, 0.0, 0.0}).validate(), std::invalid_argument);
}

TEST_CASE("state pack/unpack round-trips") {
  GridSpec g{4, 1, 0.25, 1.0, 0.0, 0.0};
  Field z(g);
  Eigen::VectorXd hyper = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd x = pack_state(z, hyper);
  REQUIRE(x.size() == 7);
  CHECK(x.isZero(0.0));

  RngStream rng(7, 1);
  Eigen::VectorXd zr = rng.normal_vector(g.size());
  Eigen::VectorXd hr = rng.normal_vector(3);
  Eigen::VectorXd packed = pack_state(g, zr, hr);
  Eigen::VectorXd z2, h2;
  unpack_state(packed, StateLayout{g.size(), 3}, z2, h2);
  CHECK(z2 == zr);
  CHECK(h2 == hr);
  CHECK(pack_state(g, z2, h2) == packed);  // bijective, bitwise
}

TEST_CASE("2D benchmark state dimension") {
  GridSpec g{30, 15, 1.0 / 15.0, 1.0 / 15.0, 0.0, 0.0};
  REQUIRE(g.size() == 450);
  Eigen::VectorXd x = pack_state(g, Eigen::VectorXd::Zero(450), Eigen::VectorXd::Zero(3));
  CHECK(x.size() == 453);
}

TEST_CASE("field serialization round-trips bitwise") {
  GridSpec g{6, 3, 0.5, 2.0, -1.0, 0.25};
  RngStream rng(11, 2);
  Field f(g, rng.normal_vector(g.size()));

  std::string csv = "/tmp/hies_test_field.csv";
  std::string bin = "/tmp/hies_test_field.bin";
  write_field_csv(f, csv);
  Field fc = read_field_csv(csv);
  CHECK(fc.grid.nx == g.nx);
  CHECK(fc.grid.ny == g.ny);
  CHECK(fc.values == f.values);

  write_field_binary(f, bin);
  Field fb = read_field_binary(bin);
  CHECK(fb.values == f.values);

  // identical inputs give identical bytes
  std::string csv2 = "/tmp/hies_test_field2.csv";
  write_field_csv(f, csv2);
  std::ifstream a(csv, std::ios::binary), b(csv2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  std::remove(csv.c_str());
  std::remove(csv2.c_str());
  std::remove(bin.c_str());
}

TEST_CASE("field validation") {
  GridSpec g{3, 1, 1.0, 1.0, 0.0, 0.0};
  Eigen::VectorXd bad(2);
  bad << 1.0, 2.0;
  CHECK_THROWS_AS(Field(g, bad), std::invalid_argument);
  Eigen::VectorXd nan3 = Eigen::VectorXd::Constant(3, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(Field(g, nan3), std::invalid_argument);
}
