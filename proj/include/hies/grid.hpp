/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "hies/util.hpp"

namespace hies {

/// Regular lattice. 1D grids are stored as ny = 1. Cell values are kept
/// row-major with x fastest: cell(ix, iy) -> iy * nx + ix. Coordinates are
/// cell-centered: center of cell (0,0) sits half a spacing from the origin.
struct GridSpec {
  int nx = 1;
  int ny = 1;
  double dx = 1.0;
  double dy = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  void validate() const {
    if (nx < 1 || ny < 1) throw std::invalid_argument("GridSpec: dims must be >= 1");
    if (!(dx > 0.0) || !(dy > 0.0)) throw std::invalid_argument("GridSpec: spacings must be > 0");
  }

  int size() const { return nx * ny; }
  bool is_1d() const { return ny == 1; }

  int index(int ix, int iy) const {
    if (ix < 0 || ix >= nx || iy < 0 || iy >= ny)
      throw std::out_of_range("GridSpec::index: cell (" + std::to_string(ix) + "," +
                              std::to_string(iy) + ") outside grid");
    return iy * nx + ix;
  }

  /// Coordinates of the cell center.
  std::array<double, 2> cell_coords(int cell) const {
    if (cell < 0 || cell >= size())
      throw std::out_of_range("GridSpec::cell_coords: index " + std::to_string(cell) +
                              " outside grid of size " + std::to_string(size()));
    int ix = cell % nx;
    int iy = cell / nx;
    return {origin_x + (ix + 0.5) * dx, origin_y + (iy + 0.5) * dy};
  }

  double cell_measure() const { return is_1d() ? dx : dx * dy; }

  bool operator==(const GridSpec& o) const {
    return nx == o.nx && ny == o.ny && dx == o.dx && dy == o.dy && origin_x == o.origin_x &&
           origin_y == o.origin_y;
  }
};

/// Scalar field on a regular lattice.
struct Field {
  GridSpec grid;
  Eigen::VectorXd values;

  Field() = default;
  Field(const GridSpec& g, const Eigen::VectorXd& v) : grid(g), values(v) { validate(); }
  explicit Field(const GridSpec& g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}

  void validate() const {
    grid.validate();
    if (values.size() != grid.size())
      throw std::invalid_argument("Field: values length " + std::to_string(values.size()) +
                                  " does not match grid size " + std::to_string(grid.size()));
    if (!values.allFinite()) throw std::invalid_argument("Field: values must be finite");
  }
};

/// Assimilation state vector x = (z, hyper) with fixed layout: the latent
/// field first, hyperparameters appended in declaration order.
struct StateLayout {
  int n_field = 0;
  int n_hyper = 0;
  int dim() const { return n_field + n_hyper; }
};

inline Eigen::VectorXd pack_state(const Field& z, const Eigen::VectorXd& hyper) {
  Eigen::VectorXd x(z.values.size() + hyper.size());
  x.head(z.values.size()) = z.values;
  x.tail(hyper.size()) = hyper;
  return x;
}

inline Eigen::VectorXd pack_state(const GridSpec& grid, const Eigen::VectorXd& z,
                                  const Eigen::VectorXd& hyper) {
  if (z.size() != grid.size())
    throw std::invalid_argument("pack_state: latent field length does not match grid");
  Eigen::VectorXd x(z.size() + hyper.size());
  x.head(z.size()) = z;
  x.tail(hyper.size()) = hyper;
  return x;
}

inline void unpack_state(const Eigen::VectorXd& x, const StateLayout& layout, Eigen::VectorXd& z,
                         Eigen::VectorXd& hyper) {
  if (x.size() != layout.dim())
    throw std::invalid_argument("unpack_state: state length " + std::to_string(x.size()) +
                                " does not match layout " + std::to_string(layout.dim()));
  z = x.head(layout.n_field);
  hyper = x.tail(layout.n_hyper);
}

// ---------------------------------------------------------------------------
// Field serialization. CSV: "nx,ny" header then one value per line, printed
// with enough digits to round-trip. Binary: two little-endian uint64 dims
// followed by the values as little-endian IEEE doubles.
// ---------------------------------------------------------------------------

inline void write_field_csv(const Field& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_field_csv: cannot open " + path);
  out << f.grid.nx << "," << f.grid.ny << "\n";
  for (Eigen::Index i = 0; i < f.values.size(); ++i) out << format_double(f.values[i]) << "\n";
  if (!out) throw std::runtime_error("write_field_csv: write failed for " + path);
}

inline Field read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_field_csv: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  char comma = 0;
  GridSpec grid;
  if (!(hs >> grid.nx >> comma >> grid.ny) || comma != ',')
    throw std::runtime_error("read_field_csv: bad header in " + path);
  Field f;
  f.grid = grid;
  f.values.resize(grid.nx * grid.ny);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) {
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("read_field_csv: truncated file " + path);
    f.values[i] = std::stod(line);
  }
  return f;
}

inline void write_matrix_binary(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_matrix_binary: cannot open " + path);
  std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  // Eigen default storage is column-major; write columns in order.
  out.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  if (!out) throw std::runtime_error("write_matrix_binary: write failed for " + path);
}

inline Eigen::MatrixXd read_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_matrix_binary: cannot open " + path);
  std::uint64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  in.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size());
  if (!in) throw std::runtime_error("read_matrix_binary: truncated file " + path);
  return m;
}

inline void write_field_binary(const Field& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_field_binary: cannot open " + path);
  std::uint64_t dims[2] = {static_cast<std::uint64_t>(f.grid.nx), static_cast<std::uint64_t>(f.grid.ny)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(f.values.data()), sizeof(double) * f.values.size());
  if (!out) throw std::runtime_error("write_field_binary: write failed for " + path);
}

inline Field read_field_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_field_binary: cannot open " + path);
  std::uint64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Field f;
  f.grid.nx = static_cast<int>(dims[0]);
  f.grid.ny = static_cast<int>(dims[1]);
  f.values.resize(f.grid.nx * f.grid.ny);
  in.read(reinterpret_cast<char*>(f.values.data()), sizeof(double) * f.values.size());
  if (!in) throw std::runtime_error("read_field_binary: truncated file " + path);
  return f;
}

}  // namespace hies
