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
#include <array>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "nmrq/compiler.hpp"
#include "nmrq/pulse.hpp"
#include "nmrq/pulse_library.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

inline constexpr double kDefaultDwellS = 2.5e-4;
inline constexpr double kDefaultAcquisitionS = 1.0;
/// Line amplitude of one fully polarized product-operator term.
inline constexpr double kUnitCalibration = 0.25;

struct Fid {
  std::vector<cplx> samples;
  double dwell_s = kDefaultDwellS;
  /// Transverse decay rate (1/s) in effect during acquisition.
  double decay_rate = 0.0;

  double duration() const { return dwell_s * static_cast<double>(samples.size()); }
};

struct Spectrum {
  /// Ascending, uniform, covering [-1/(2 dwell), 1/(2 dwell)).
  std::vector<double> frequencies_hz;
  std::vector<cplx> amplitudes;
  double dwell_s = kDefaultDwellS;
  double decay_rate = 0.0;

  std::size_t size() const { return amplitudes.size(); }
  double resolution_hz() const { return 1.0 / (dwell_s * static_cast<double>(size())); }
};

/// <sigma_z^1>, <sigma_z^2>, <sigma_z^3>, <z1 z2>, <z1 z3>, <z2 z3>, <z1 z2 z3>.
struct ExpectationSet {
  std::array<double, 7> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// sigma_z product subsets (bit 0 = qubit 1) in ExpectationSet order.
inline constexpr std::array<unsigned, 7> kExpectationSubsets{0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111};

inline const char* expectation_name(std::size_t i) {
  static constexpr std::array<const char*, 7> names{"z1", "z2", "z3", "z1z2", "z1z3", "z2z3", "z1z2z3"};
  return names.at(i);
}

inline ExpectationSet exact_expectations(const DensityMatrix& rho) {
  ExpectationSet e;
  for (std::size_t i = 0; i < 7; ++i) e[i] = expectation(rho, sigma_z_product(kExpectationSubsets[i]));
  return e;
}

/// The two coupling partners of `qubit`, ascending.
inline std::array<int, 2> partners(int qubit) {
  require_qubit(qubit);
  std::array<int, 2> p{};
  int k = 0;
  for (int q = 1; q <= kQubits; ++q)
    if (q != qubit) p[k++] = q;
  return p;
}

/// Transition frequencies of `qubit` ordered by partner states (up up, up down,
/// down up, down down), up = |0>, partners ascending.
inline std::array<double, 4> line_positions(const MoleculeSpec& spec, int qubit) {
  const auto [a, b] = partners(qubit);
  const double ja = spec.coupling(qubit, a);
  const double jb = spec.coupling(qubit, b);
  std::array<double, 4> f{};
  for (int l = 0; l < 4; ++l) {
    const double ma = (l & 2) ? -0.5 : 0.5;
    const double mb = (l & 1) ? -0.5 : 0.5;
    f[l] = spec.shift(qubit) + ja * ma + jb * mb;
  }
  return f;
}

/// Line-to-combination table, frozen from a brute-force basis-state oracle.
/// Entry [q-1][line][k] is the coefficient of expectation k in the real part of
/// that line (times the calibration) after Ry(pi/2) on qubit q.
inline constexpr std::array<std::array<std::array<int, 7>, 4>, 3> kComboTable{{
    {{{1, 0, 0, 1, 1, 0, 1}, {1, 0, 0, 1, -1, 0, -1}, {1, 0, 0, -1, 1, 0, -1}, {1, 0, 0, -1, -1, 0, 1}}},
    {{{0, 1, 0, 1, 0, 1, 1}, {0, 1, 0, 1, 0, -1, -1}, {0, 1, 0, -1, 0, 1, -1}, {0, 1, 0, -1, 0, -1, 1}}},
    {{{0, 0, 1, 0, 1, 1, 1}, {0, 0, 1, 0, 1, -1, -1}, {0, 0, 1, 0, -1, 1, -1}, {0, 0, 1, 0, -1, -1, 1}}},
}};

inline Eigen::Matrix<double, 12, 7> combo_matrix() {
  Eigen::Matrix<double, 12, 7> m;
  for (int q = 0; q < 3; ++q)
    for (int l = 0; l < 4; ++l)
      for (int k = 0; k < 7; ++k) m(4 * q + l, k) = kComboTable[q][l][k];
  return m;
}

/// Complex FID s(t_k) = Tr[rho(t_k) sum_k (sigma_x + i sigma_y)] under H0 with
/// 1/T2 decay per transverse spin when relaxation is enabled.
inline Fid acquire_fid(const DensityMatrix& rho, const MoleculeSpec& spec, const NoiseConfig& noise,
                       double duration_s = kDefaultAcquisitionS, double dwell_s = kDefaultDwellS,
                       std::mt19937_64* rng = nullptr, double start_s = 0.0) {
  if (!(dwell_s > 0) || !(duration_s > 0)) throw Error("acquisition duration and dwell must be positive");
  const auto count = static_cast<std::size_t>(std::llround(duration_s / dwell_s));
  if (count < 1024) throw Error("acquisition needs at least 1024 samples");
  const auto e = drift_energies(spec);
  Fid fid;
  fid.dwell_s = dwell_s;
  fid.decay_rate = noise.relaxation_enabled ? 1.0 / spec.t2_s : 0.0;
  fid.samples.assign(count, cplx(0, 0));
  for (int q = 1; q <= kQubits; ++q) {
    const int mask = qubit_mask(q);
    for (int b = 0; b < kDim; ++b) {
      if (b & mask) continue;
      const int a = b | mask;
      const cplx c0 = 2.0 * rho(a, b);
      if (c0 == cplx(0, 0)) continue;
      const double omega = -(e[a] - e[b]);
      for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) * dwell_s;
        double phase = omega * t;
        if (noise.drift_hz_per_s > 0) phase += kTwoPi * noise.drift_hz_per_s * (start_s * t + 0.5 * t * t);
        fid.samples[k] += c0 * std::polar(std::exp(-fid.decay_rate * t), phase);
      }
    }
  }
  if (noise.fid_noise > 0) {
    if (rng == nullptr) throw Error("receiver noise needs a random generator");
    std::normal_distribution<double> g(0.0, noise.fid_noise / std::sqrt(2.0));
    for (auto& s : fid.samples) s += cplx(g(*rng), g(*rng));
  }
  return fid;
}

/// DFT with 1/count normalization, reordered to ascending frequency.
inline Spectrum spectrum(const Fid& fid) {
  const std::size_t n = fid.samples.size();
  Spectrum s;
  s.dwell_s = fid.dwell_s;
  s.decay_rate = fid.decay_rate;
  if (n == 0) return s;
  std::vector<cplx> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, fid.samples);
  s.frequencies_hz.resize(n);
  s.amplitudes.resize(n);
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (i + n - half) % n;
    const double idx = static_cast<double>(i) - static_cast<double>(half);
    s.frequencies_hz[i] = idx / (static_cast<double>(n) * fid.dwell_s);
    s.amplitudes[i] = out[k] / static_cast<double>(n);
  }
  return s;
}

namespace detail {

/// Normalized DFT of exp((2 pi i f0 - r) t) sampled like the spectrum, at bin i.
inline cplx line_shape(const Spectrum& s, double f0, std::size_t i) {
  const double n = static_cast<double>(s.size());
  const cplx z = std::exp(cplx(-s.decay_rate * s.dwell_s, kTwoPi * (f0 - s.frequencies_hz[i]) * s.dwell_s));
  const cplx one(1, 0);
  if (std::abs(one - z) < 1e-14) return one;
  return (one - std::pow(z, n)) / (n * (one - z));
}

inline double linewidth_hz(const Spectrum& s) { return std::max(s.decay_rate / kPi, s.resolution_hz()); }

}  // namespace detail

/// Complex amplitudes of all twelve lines by a joint linear least-squares fit
/// of their exact discrete line shapes; [q-1][line] in line_positions order.
inline std::array<std::array<cplx, 4>, 3> fit_lines(const Spectrum& s, const MoleculeSpec& spec) {
  if (s.size() == 0) throw Error("empty spectrum");
  const double width = detail::linewidth_hz(s);
  const double nyquist = 0.5 / s.dwell_s;
  std::array<double, 12> f{};
  for (int q = 1; q <= kQubits; ++q) {
    const auto lines = line_positions(spec, q);
    for (int l = 0; l < 4; ++l) {
      if (std::abs(lines[l]) >= nyquist) throw Error("line of qubit " + std::to_string(q) + " lies outside the spectral window");
      f[4 * (q - 1) + l] = lines[l];
    }
    for (int l = 0; l < 4; ++l)
      for (int m = l + 1; m < 4; ++m)
        if (std::abs(lines[l] - lines[m]) < 2 * width) {
          throw Error("peaks of qubit " + std::to_string(q) + " are unresolved");
        }
  }
  for (int l = 0; l < 12; ++l)
    for (int m = l + 1; m < 12; ++m)
      if (std::abs(f[l] - f[m]) < 2 * width) throw Error("lines of different qubits overlap");

  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXcd a(n, 12);
  Eigen::VectorXcd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = s.amplitudes[i];
    for (int l = 0; l < 12; ++l) a(i, l) = detail::line_shape(s, f[l], static_cast<std::size_t>(i));
  }
  const Eigen::VectorXcd c = a.colPivHouseholderQr().solve(y);
  std::array<std::array<cplx, 4>, 3> out{};
  for (int q = 0; q < 3; ++q)
    for (int l = 0; l < 4; ++l) out[q][l] = c(4 * q + l);
  return out;
}

/// Real parts of the four lines of `qubit`.
inline std::array<double, 4> fit_peaks(const Spectrum& s, int qubit, const MoleculeSpec& spec) {
  require_qubit(qubit);
  const auto lines = fit_lines(s, spec);
  std::array<double, 4> out{};
  for (int l = 0; l < 4; ++l) out[l] = lines[qubit - 1][l].real();
  return out;
}

using PeakSets = std::array<std::array<double, 4>, 3>;

/// Least-squares solve of the 12 x 7 line system for the seven expectations.
inline ExpectationSet peaks_to_expectations(const PeakSets& peaks, double calibration) {
  if (!(calibration > 0)) throw Error("calibration must be positive");
  for (int q = 0; q < 3; ++q)
    for (double v : peaks[q])
      if (!std::isfinite(v)) throw Error("peak set of qubit " + std::to_string(q + 1) + " is not finite");
  const auto m = combo_matrix();
  // Each single-spin term is seen only by its own experiment.
  for (int q = 0; q < 3; ++q) {
    if (m.block(4 * q, q, 4, 1).squaredNorm() == 0) {
      throw Error("peak system is rank deficient for qubit " + std::to_string(q + 1));
    }
  }
  if (Eigen::FullPivLU<Eigen::MatrixXd>(m).rank() < 7) throw Error("peak system is rank deficient");
  Eigen::Matrix<double, 12, 1> y;
  for (int q = 0; q < 3; ++q)
    for (int l = 0; l < 4; ++l) y(4 * q + l) = peaks[q][l] / calibration;
  const Eigen::Matrix<double, 7, 1> x = m.colPivHouseholderQr().solve(y);
  ExpectationSet e;
  for (int k = 0; k < 7; ++k) e[k] = std::clamp(x(k), -1.0, 1.0);
  return e;
}

/// rho_ii = (1/8)(1 + sum_P s_P(i) <P>) for the seven sigma_z products.
inline Real8 diagonal_from_expectations(const ExpectationSet& e) {
  Real8 p{};
  for (int i = 0; i < kDim; ++i) {
    double v = 1.0;
    for (std::size_t k = 0; k < 7; ++k) {
      double sign = 1.0;
      for (int q = 1; q <= kQubits; ++q)
        if ((kExpectationSubsets[k] >> (q - 1)) & 1u) sign *= qubit_bit(i, q) ? -1.0 : 1.0;
      v += sign * e[k];
    }
    p[i] = v / 8.0;
  }
  return p;
}

inline Real8 normalize_probabilities(Real8 p) {
  double sum = 0;
  for (auto& v : p) {
    v = std::clamp(v, 0.0, 1.0);
    sum += v;
  }
  if (!(sum > 0)) throw Error("reconstructed populations vanish");
  for (auto& v : p) v /= sum;
  return p;
}

/// Amplitude scale and per-qubit receiver phase mapping line amplitudes to
/// expectation units.
struct Calibration {
  double scale = kUnitCalibration;
  std::array<double, 3> phase{};
};

struct ReadoutConfig {
  double duration_s = kDefaultAcquisitionS;
  double dwell_s = kDefaultDwellS;
  /// |rho_22 - rho_66| below this is reported as an unreliable sign.
  double noise_floor = 0.01;
};

struct ReadoutExperiment {
  Spectrum spectrum;
  std::array<cplx, 4> lines{};
  std::array<double, 4> peaks{};
};

struct ReadoutResult {
  std::array<ReadoutExperiment, 3> experiments;
  ExpectationSet expectations;
  Real8 probabilities{};
};

/// Three experiments: Ry(pi/2) on qubit k (frame adjusted), FID, spectrum and
/// line fit; then the linear solve and the diagonal reconstruction.
class Readout {
 public:
  Readout(const PulseLibrary& library, ReadoutConfig config = {}, Calibration calibration = {})
      : library_(&library), config_(config), calibration_(calibration) {}

  const Calibration& calibration() const { return calibration_; }
  const PulseLibrary& library() const { return *library_; }
  void set_calibration(const Calibration& c) { calibration_ = c; }
  const ReadoutConfig& config() const { return config_; }

  ReadoutResult run(const DensityMatrix& rho, const NoiseConfig& noise, const FrameState& frame = {},
                    std::mt19937_64* rng = nullptr, double start_s = 0.0) const {
    const auto& spec = library_->spec();
    ReadoutResult r;
    PeakSets peaks{};
    for (int q = 1; q <= kQubits; ++q) {
      auto& ex = r.experiments[q - 1];
      const std::string key = "R90Y" + std::to_string(q);
      const DensityMatrix after = library_->play(rho, key, frame.reference_phase, noise, start_s);
      const double t0 = start_s + library_->duration(key);
      ex.spectrum = spectrum(acquire_fid(after, spec, noise, config_.duration_s, config_.dwell_s, rng, t0));
      const auto lines = fit_lines(ex.spectrum, spec);
      // Undo the frame and receiver phases on this qubit's lines.
      const cplx rot = std::polar(1.0, -(frame.reference_phase[q - 1] + calibration_.phase[q - 1]));
      for (int l = 0; l < 4; ++l) {
        ex.lines[l] = lines[q - 1][l] * rot;
        ex.peaks[l] = ex.lines[l].real();
      }
      peaks[q - 1] = ex.peaks;
    }
    r.expectations = peaks_to_expectations(peaks, calibration_.scale);
    r.probabilities = normalize_probabilities(diagonal_from_expectations(r.expectations));
    return r;
  }

  Real8 measure_diagonal(const DensityMatrix& rho, const NoiseConfig& noise, const FrameState& frame = {},
                         std::mt19937_64* rng = nullptr) const {
    return run(rho, noise, frame, rng).probabilities;
  }

  /// Reference experiment on a freshly prepared |000> pseudo-pure state: the
  /// receiver phases make its up-up lines absorptive and the scale is set so
  /// the mean of its seven expectations is one.
  Calibration calibrate(const DensityMatrix& pps, const NoiseConfig& noise, std::mt19937_64* rng = nullptr) {
    Readout unit(*library_, config_, Calibration{});
    const auto raw = unit.run(pps, noise, {}, rng);
    Calibration c;
    for (int q = 0; q < 3; ++q) c.phase[q] = std::arg(raw.experiments[q].lines[0]);
    PeakSets peaks{};
    for (int q = 0; q < 3; ++q)
      for (int l = 0; l < 4; ++l)
        peaks[q][l] = (raw.experiments[q].lines[l] * std::polar(1.0, -c.phase[q])).real();
    // Expectations at unit scale, before clamping.
    const auto m = combo_matrix();
    Eigen::Matrix<double, 12, 1> y;
    for (int q = 0; q < 3; ++q)
      for (int l = 0; l < 4; ++l) y(4 * q + l) = peaks[q][l] / kUnitCalibration;
    const Eigen::Matrix<double, 7, 1> x = m.colPivHouseholderQr().solve(y);
    const double eta = x.mean();
    if (!(eta > 0)) throw Error("reference state shows no |000> polarization");
    c.scale = kUnitCalibration * eta;
    calibration_ = c;
    return c;
  }

 private:
  const PulseLibrary* library_;
  ReadoutConfig config_;
  Calibration calibration_;
};

/// Diagonal readout with unit calibration and the given library's readout pulses.
inline Real8 measure_diagonal(const DensityMatrix& rho, const PulseLibrary& library, const NoiseConfig& noise,
                              const FrameState& frame = {}, const ReadoutConfig& config = {}) {
  return Readout(library, config).measure_diagonal(rho, noise, frame);
}

struct SignResult {
  int sign = 1;
  bool below_noise_floor = false;
  double rho22 = 0.0;
  double rho66 = 0.0;
};

/// Relative sign of the two solution amplitudes: R_-y(pi/2) on qubit 1, then
/// +1 if rho_22 > rho_66.
inline SignResult sign_experiment(const DensityMatrix& rho, const Readout& readout, const NoiseConfig& noise,
                                  const FrameState& frame = {}, std::mt19937_64* rng = nullptr) {
  const PulseLibrary& lib = readout.library();
  const DensityMatrix rotated = lib.play(rho, "RM90Y1", frame.reference_phase, noise);
  const auto p = readout.run(rotated, noise, frame, rng, lib.duration("RM90Y1")).probabilities;
  SignResult s;
  s.rho22 = p[1];
  s.rho66 = p[5];
  s.sign = s.rho22 > s.rho66 ? 1 : -1;
  s.below_noise_floor = std::abs(s.rho22 - s.rho66) < readout.config().noise_floor;
  return s;
}

/// Local maxima of |amplitude| above `relative_threshold` times the largest.
inline std::vector<double> find_peaks(const Spectrum& s, double relative_threshold = 0.2) {
  std::vector<double> mag(s.size());
  double top = 0;
  for (std::size_t i = 0; i < s.size(); ++i) top = std::max(top, mag[i] = std::abs(s.amplitudes[i]));
  std::vector<double> out;
  if (top == 0) return out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (mag[i] >= relative_threshold * top && mag[i] > mag[i - 1] && mag[i] >= mag[i + 1]) {
      out.push_back(s.frequencies_hz[i]);
    }
  }
  return out;
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
  os << "frequency_hz,real,imag\n";
  os.precision(12);
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << s.frequencies_hz[i] << ',' << s.amplitudes[i].real() << ',' << s.amplitudes[i].imag() << '\n';
  }
}

}  // namespace nmrq
