/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hies/grid.hpp"
#include "hies/rng.hpp"

namespace hies {

/// Thrown when a forward run cannot produce a response (failed members are
/// frozen by the samplers rather than aborting the whole experiment).
struct ForwardFailure : std::runtime_error {
  explicit ForwardFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ObsMeta {
  std::string label;  // well name or observed-cell tag
  double time = 0.0;
  double x = 0.0;  // anchor coordinates for localization
  double y = 0.0;
};

struct ObsSet {
  Eigen::VectorXd values;
  Eigen::VectorXd noise_std;
  std::vector<ObsMeta> meta;

  int size() const { return static_cast<int>(values.size()); }

  void validate() const {
    if (values.size() == 0) throw std::invalid_argument("ObsSet: empty");
    if (noise_std.size() != values.size() || static_cast<Eigen::Index>(meta.size()) != values.size())
      throw std::invalid_argument("ObsSet: inconsistent lengths");
    if ((noise_std.array() <= 0.0).any())
      throw std::invalid_argument("ObsSet: noise stds must be > 0");
  }
};

/// Forward model g(m). Linear models expose their dense sensitivity G_m.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual int data_dim() const = 0;
  virtual Eigen::VectorXd run(const Field& m) const = 0;
  virtual bool linear() const { return false; }
  virtual Eigen::MatrixXd sensitivity() const {
    throw std::runtime_error("ForwardModel: analytic sensitivity not available");
  }
  /// One (x, y) anchor per datum, used by localization and diagnostics.
  virtual std::vector<ObsMeta> observation_meta() const = 0;
};

/// Point sampling of the field at fixed cells: d_i = m[idx_i]. G_m is a 0/1
/// selection matrix.
class PointObserver final : public ForwardModel {
 public:
  PointObserver(const GridSpec& grid, std::vector<int> indices) : grid_(grid), indices_(std::move(indices)) {
    grid_.validate();
    std::vector<bool> seen(grid_.size(), false);
    for (int idx : indices_) {
      if (idx < 0 || idx >= grid_.size())
        throw std::invalid_argument("PointObserver: index " + std::to_string(idx) + " outside grid");
      if (seen[idx]) throw std::invalid_argument("PointObserver: duplicate index " + std::to_string(idx));
      seen[idx] = true;
    }
  }

  /// Every stride-th cell starting at 0, the 1D benchmark pattern.
  static PointObserver every_nth(const GridSpec& grid, int stride) {
    if (stride < 1) throw std::invalid_argument("PointObserver: stride must be >= 1");
    std::vector<int> idx;
    for (int i = 0; i < grid.size(); i += stride) idx.push_back(i);
    return PointObserver(grid, std::move(idx));
  }

  int data_dim() const override { return static_cast<int>(indices_.size()); }

  Eigen::VectorXd run(const Field& m) const override {
    if (!(m.grid == grid_)) throw std::invalid_argument("PointObserver: field grid mismatch");
    Eigen::VectorXd d(indices_.size());
    for (size_t i = 0; i < indices_.size(); ++i) d[i] = m.values[indices_[i]];
    return d;
  }

  bool linear() const override { return true; }

  Eigen::MatrixXd sensitivity() const override {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<int>(indices_.size()), grid_.size());
    for (size_t i = 0; i < indices_.size(); ++i) g(static_cast<int>(i), indices_[i]) = 1.0;
    return g;
  }

  std::vector<ObsMeta> observation_meta() const override {
    std::vector<ObsMeta> meta(indices_.size());
    for (size_t i = 0; i < indices_.size(); ++i) {
      auto c = grid_.cell_coords(indices_[i]);
      meta[i] = {"cell_" + std::to_string(indices_[i]), 0.0, c[0], c[1]};
    }
    return meta;
  }

  const std::vector<int>& indices() const { return indices_; }

 private:
  GridSpec grid_;
  std::vector<int> indices_;
};

/// Observation-noise realization e' ~ N(0, C_d) with diagonal C_d.
inline Eigen::VectorXd perturb_observations(const Eigen::VectorXd& noise_std, RngStream& rng) {
  if ((noise_std.array() <= 0.0).any())
    throw std::invalid_argument("perturb_observations: noise stds must be > 0");
  Eigen::VectorXd e(noise_std.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = noise_std[i] * rng.normal();
  return e;
}

}  // namespace hies
