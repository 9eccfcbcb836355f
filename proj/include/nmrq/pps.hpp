// Copyright 2026 The nmrq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"

#include "nmrq/gates.hpp"
#include "nmrq/pulse.hpp"
#include "nmrq/pulse_library.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

struct PpsConfig {
  int cycles = 1;
  double delay_s = 0.1;
  bool use_ideal_permutation = true;

  void validate() const {
    if (cycles < 1) throw Error("PPS cycles must be at least 1");
    if (!(delay_s > 0)) throw Error("PPS delay must be positive");
  }
};

struct PpsFit {
  double eta = 0.0;
  /// Spread (max - min) of the seven minor populations relative to the
  /// |000> contrast rho_11 - mean(minor). Zero for an exact PPS.
  double uniformity = 0.0;
};

struct PpsReport {
  DensityMatrix state;
  double eta = 0.0;
  double uniformity = 0.0;
  int cycles = 0;
  double delay_s = 0.0;
  /// Total preparation time including permutation pulses.
  double duration_s = 0.0;
};

/// eta from the |000>-anchored least-squares fit of (1 - eta) I/8 + eta |000><000|.
/// With the minor populations free to differ the fit reduces to (8 rho_11 - 1) / 7.
inline PpsFit fit_eta(const DensityMatrix& rho) {
  const auto p = diagonal_probabilities(rho);
  PpsFit f;
  f.eta = (8.0 * p[0] - 1.0) / 7.0;
  double lo = p[1], hi = p[1], mean = 0.0;
  for (int i = 1; i < kDim; ++i) {
    lo = std::min(lo, p[i]);
    hi = std::max(hi, p[i]);
    mean += p[i] / 7.0;
  }
  const double spread = hi - lo;
  const double contrast = p[0] - mean;
  if (spread <= 1e-15 * std::max(1.0, std::abs(contrast))) {
    f.uniformity = 0.0;
  } else if (contrast > 0) {
    f.uniformity = spread / contrast;
  } else {
    f.uniformity = std::numeric_limits<double>::infinity();
  }
  return f;
}

/// Thermal state followed by `cycles` rounds of [permutation, relaxation delay].
/// The permutation is the exact matrix or the library's PERMUTE pulse.
inline PpsReport prepare_pps(const MoleculeSpec& spec, const PpsConfig& config, const NoiseConfig& noise,
                             const PulseLibrary* library = nullptr, double start_s = 0.0) {
  spec.validate();
  config.validate();
  noise.validate();
  if (!config.use_ideal_permutation && library == nullptr) {
    throw Error("a pulse library is required for the pulsed permutation");
  }
  const Mat8 perm = permutation_unitary();
  const DelayChannel wait(spec, noise, config.delay_s);
  const double pulse_t = config.use_ideal_permutation ? 0.0 : library->duration("PERMUTE");
  DensityMatrix rho = thermal_state(noise.thermal_polarization);
  double clock = start_s;
  for (int n = 0; n < config.cycles; ++n) {
    if (config.use_ideal_permutation) {
      rho = DensityMatrix::renormalized(perm * rho.matrix() * perm.adjoint());
    } else {
      rho = library->play(rho, "PERMUTE", {}, noise, clock);
    }
    clock += pulse_t;
    rho = wait.apply(rho, clock);
    clock += config.delay_s;
  }
  const auto fit = fit_eta(rho);
  return PpsReport{rho, fit.eta, fit.uniformity, config.cycles, config.delay_s, clock - start_s};
}

struct PpsTuning {
  PpsConfig config;
  double eta = 0.0;
  double uniformity = 0.0;
};

struct PpsGrid {
  double min_delay_s = 1e-3;
  double max_delay_s = 1.0;
  int delay_points = 61;
  int max_cycles = 4000;
  double max_uniformity = 0.01;
  /// Among near-optimal points the shortest preparation wins.
  double eta_slack = 0.005;
};

namespace detail {

/// Population transfer matrix of the relaxation channel over t (diagonal states).
inline Eigen::Matrix<double, 8, 8> population_relaxation(const MoleculeSpec& spec, double polarization, double t) {
  const double d = std::exp(-t / spec.t1_s);
  const double p0 = 0.5 * (1 + polarization);
  Eigen::Matrix2d m;
  m << p0 + (1 - p0) * d, p0 * (1 - d), (1 - p0) * (1 - d), (1 - p0) + p0 * d;
  Eigen::Matrix<double, 8, 8> out;
  for (int r = 0; r < kDim; ++r) {
    for (int c = 0; c < kDim; ++c) {
      double v = 1.0;
      for (int q = 1; q <= kQubits; ++q) v *= m(qubit_bit(r, q), qubit_bit(c, q));
      out(r, c) = v;
    }
  }
  return out;
}

}  // namespace detail

/// Grid search over (N, t) with the exact permutation, maximizing eta subject to
/// the uniformity bound. Diagonal states stay diagonal, so populations suffice.
inline PpsTuning tune_pps(const MoleculeSpec& spec, double polarization = kDefaultPolarization,
                          const PpsGrid& grid = {}) {
  struct Point {
    int n;
    double t;
    double eta;
    double u;
  };
  std::vector<Point> feasible;
  Eigen::Matrix<double, 8, 8> perm = permutation_unitary().real();
  Eigen::Matrix<double, 8, 1> thermal;
  const auto th = diagonal_probabilities(thermal_state(polarization));
  for (int i = 0; i < kDim; ++i) thermal(i) = th[i];
  for (int k = 0; k < grid.delay_points; ++k) {
    const double frac = grid.delay_points == 1 ? 0.0 : static_cast<double>(k) / (grid.delay_points - 1);
    const double t = grid.min_delay_s * std::pow(grid.max_delay_s / grid.min_delay_s, frac);
    const Eigen::Matrix<double, 8, 8> step = detail::population_relaxation(spec, polarization, t) * perm;
    Eigen::Matrix<double, 8, 1> p = thermal;
    for (int n = 1; n <= grid.max_cycles; ++n) {
      p = step * p;
      Mat8 m = Mat8::Zero();
      for (int i = 0; i < kDim; ++i) m(i, i) = p(i);
      const auto fit = fit_eta(DensityMatrix::renormalized(m));
      if (fit.uniformity <= grid.max_uniformity) feasible.push_back({n, t, fit.eta, fit.uniformity});
    }
  }
  if (feasible.empty()) throw Error("no (N, t) grid point meets the PPS uniformity bound");
  double best = -1.0;
  for (const auto& pt : feasible) best = std::max(best, pt.eta);
  const Point* pick = nullptr;
  for (const auto& pt : feasible) {
    if (pt.eta < best - grid.eta_slack * std::abs(best)) continue;
    if (!pick || pt.n * pt.t < pick->n * pick->t) pick = &pt;
  }
  return PpsTuning{PpsConfig{pick->n, pick->t, true}, pick->eta, pick->u};
}

/// tune_pps memoized per molecule and polarization.
inline PpsTuning default_pps(const MoleculeSpec& spec, double polarization = kDefaultPolarization) {
  static std::mutex mutex;
  static std::map<std::string, PpsTuning> cache;
  const std::string key = nlohmann::json(spec).dump() + "|" + std::to_string(polarization);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const auto tuned = tune_pps(spec, polarization);
  std::lock_guard lock(mutex);
  cache.emplace(key, tuned);
  return tuned;
}

inline void to_json(nlohmann::json& j, const PpsReport& r) {
  j = nlohmann::json{{"eta", r.eta},
                     {"uniformity", r.uniformity},
                     {"populations", diagonal_probabilities(r.state)},
                     {"cycles", r.cycles},
                     {"delay_s", r.delay_s}};
}

inline void to_json(nlohmann::json& j, const PpsConfig& c) {
  j = nlohmann::json{{"cycles", c.cycles}, {"delay_s", c.delay_s}, {"use_ideal_permutation", c.use_ideal_permutation}};
}

inline void from_json(const nlohmann::json& j, PpsConfig& c) {
  c.cycles = j.at("cycles").get<int>();
  c.delay_s = j.at("delay_s").get<double>();
  c.use_ideal_permutation = j.value("use_ideal_permutation", true);
  c.validate();
}

}  // namespace nmrq
