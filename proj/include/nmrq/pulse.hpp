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

#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "json.hpp"

#include "nmrq/linalg.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

/// Rabi frequency of the full-scale RF output: a 10 us square pulse is a 90 degree rotation.
inline constexpr double kDefaultFullScaleHz = 25000.0;
/// Amplitude and phase resolution of the arbitrary waveform generator.
inline constexpr int kWaveformSteps = 65536;
inline constexpr double kDefaultPolarization = 1e-5;
inline constexpr double kMaxRelaxationSubstep = 1e-3;

struct PulseSegment {
  double duration_s = 0.0;
  double amplitude_hz = 0.0;  // Rabi frequency
  double phase_rad = 0.0;

  bool is_delay() const { return amplitude_hz == 0.0; }
};

struct Waveform {
  std::vector<PulseSegment> segments;
  bool quantized = false;

  double duration() const {
    double t = 0;
    for (const auto& s : segments) t += s.duration_s;
    return t;
  }

  /// Same waveform played with every phase advanced by `offset`; equivalent to
  /// conjugating the propagator by a global z rotation.
  Waveform phase_shifted(double offset) const {
    Waveform w = *this;
    for (auto& s : w.segments) s.phase_rad = wrap_phase(s.phase_rad + offset);
    if (quantized) {
      const double step = kTwoPi / kWaveformSteps;
      for (auto& s : w.segments) s.phase_rad = wrap_phase(std::round(s.phase_rad / step) * step);
    }
    return w;
  }
};

inline Waveform square_pulse(double duration_s, double amplitude_hz, double phase_rad) {
  return Waveform{{PulseSegment{duration_s, amplitude_hz, wrap_phase(phase_rad)}}, false};
}

inline Waveform delay(double duration_s) { return Waveform{{PulseSegment{duration_s, 0.0, 0.0}}, false}; }

struct NoiseConfig {
  bool relaxation_enabled = true;
  double drift_hz_per_s = 0.0;
  bool relax_during_pulses = false;
  /// Equilibrium single-spin polarization that T1 relaxation restores.
  double thermal_polarization = kDefaultPolarization;
  /// Standard deviation of complex white receiver noise per FID sample, in
  /// units of the signal of a single fully polarized spin.
  double fid_noise = 0.0;

  void validate() const {
    if (drift_hz_per_s < 0) throw Error("drift_hz_per_s must be non-negative");
    if (!(thermal_polarization > 0) || thermal_polarization >= 0.5) {
      throw Error("thermal_polarization must lie in (0, 0.5)");
    }
    if (fid_noise < 0) throw Error("fid_noise must be non-negative");
  }

  static NoiseConfig noiseless() {
    NoiseConfig n;
    n.relaxation_enabled = false;
    return n;
  }
};

/// Per-spin phase offsets added to a shared waveform (frame tracking).
using PhaseOffsets = std::array<double, 3>;

/// Rounds amplitudes and phases onto the generator grid.
inline Waveform quantize(const Waveform& w, double full_scale_hz = kDefaultFullScaleHz) {
  if (!(full_scale_hz > 0)) throw Error("full scale must be positive");
  const double amp_step = full_scale_hz / kWaveformSteps;
  const double phase_step = kTwoPi / kWaveformSteps;
  Waveform out = w;
  for (auto& s : out.segments) {
    if (s.amplitude_hz < 0) throw Error("negative pulse amplitude");
    if (s.amplitude_hz > full_scale_hz * (1 + 1e-12)) throw Error("pulse amplitude exceeds full scale");
    s.amplitude_hz = std::round(s.amplitude_hz / amp_step) * amp_step;
    s.phase_rad = wrap_phase(std::round(wrap_phase(s.phase_rad) / phase_step) * phase_step);
  }
  out.quantized = true;
  return out;
}

/// Hc for one segment, with the single RF channel driving all three spins.
inline SpinOperator control_hamiltonian(const PulseSegment& seg, const PhaseOffsets& offsets = {}) {
  Mat8 h = Mat8::Zero();
  if (seg.amplitude_hz == 0.0) return h;
  for (int q = 1; q <= kQubits; ++q) {
    const double phi = seg.phase_rad + offsets[q - 1];
    h += kTwoPi * seg.amplitude_hz * (std::cos(phi) * spin(Axis::X, q) + std::sin(phi) * spin(Axis::Y, q));
  }
  return h;
}

/// Global Iz sum, the generator of a uniform carrier offset.
inline Mat8 total_iz() { return spin(Axis::Z, 1) + spin(Axis::Z, 2) + spin(Axis::Z, 3); }

/// U = prod_k exp(-i (H0 + Hc_k) t_k), later segments multiplied on the left.
inline SpinOperator propagator(const Waveform& w, const SpinOperator& h0, const PhaseOffsets& offsets = {}) {
  Mat8 u = Mat8::Identity();
  for (const auto& seg : w.segments) {
    u = expm_hermitian(h0 + control_hamiltonian(seg, offsets), seg.duration_s) * u;
  }
  return u;
}

namespace detail {

inline Mat8 conjugate(const Mat8& u, const Mat8& m) { return u * m * u.adjoint(); }

/// Row-major vectorization: vec(A X B) = (A kron B^T) vec(X).
inline Eigen::MatrixXcd kron(const Mat8& a, const Mat8& b) {
  Eigen::MatrixXcd out(64, 64);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) out.block(i * 8, j * 8, 8, 8) = a(i, j) * b;
  return out;
}

inline void add_dissipator(Eigen::MatrixXcd& l, const Mat8& op, double rate) {
  if (rate == 0.0) return;
  const Mat8 ldl = op.adjoint() * op;
  l += rate * (kron(op, op.conjugate()) - 0.5 * kron(ldl, Mat8::Identity()) -
               0.5 * kron(Mat8::Identity(), ldl.transpose()));
}

}  // namespace detail

/// Per-qubit relaxation rates: generalized amplitude damping toward the
/// equilibrium polarization plus pure dephasing for a net 1/T2 transverse decay.
struct RelaxationRates {
  double down;     // |1> -> |0>
  double up;       // |0> -> |1>
  double dephase;  // rate of the sigma_z dissipator

  static RelaxationRates from(const MoleculeSpec& spec, double polarization) {
    RelaxationRates r{};
    r.down = (1 + polarization) / (2 * spec.t1_s);
    r.up = (1 - polarization) / (2 * spec.t1_s);
    r.dephase = 0.5 * (1.0 / spec.t2_s - 1.0 / (2 * spec.t1_s));
    return r;
  }
};

/// Liouvillian of H0 plus per-qubit relaxation, acting on row-major vec(rho).
inline Eigen::MatrixXcd liouvillian(const MoleculeSpec& spec, double polarization, bool with_hamiltonian = true) {
  Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(64, 64);
  if (with_hamiltonian) {
    const Mat8 h = build_drift_hamiltonian(spec);
    l += cplx(0, -1) * (detail::kron(h, Mat8::Identity()) - detail::kron(Mat8::Identity(), h.transpose()));
  }
  const auto rates = RelaxationRates::from(spec, polarization);
  Mat2 lower = Mat2::Zero();
  lower(0, 1) = 1.0;
  Mat2 raise = Mat2::Zero();
  raise(1, 0) = 1.0;
  for (int q = 1; q <= kQubits; ++q) {
    detail::add_dissipator(l, embed(lower, q), rates.down);
    detail::add_dissipator(l, embed(raise, q), rates.up);
    detail::add_dissipator(l, sigma(Axis::Z, q), rates.dephase);
  }
  return l;
}

/// Exact channel for a free delay of fixed length under H0 with relaxation.
/// Built once, applied to many states (PPS cycles, parameter sweeps).
class DelayChannel {
 public:
  DelayChannel(const MoleculeSpec& spec, const NoiseConfig& noise, double t) : t_(t), drift_(noise.drift_hz_per_s) {
    if (t < 0) throw Error("negative evolution time");
    if (noise.relaxation_enabled) {
      superop_ = (liouvillian(spec, noise.thermal_polarization) * t).exp();
    } else {
      energies_ = drift_energies(spec);
    }
    relax_ = noise.relaxation_enabled;
  }

  /// Applies the delay starting at absolute time `start_s` (drift reference).
  DensityMatrix apply(const DensityMatrix& rho, double start_s = 0.0) const {
    Mat8 out;
    if (relax_) {
      Eigen::Matrix<cplx, 64, 1> v;
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) v(a * 8 + b) = rho(a, b);
      Eigen::Matrix<cplx, 64, 1> w = superop_ * v;
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) out(a, b) = w(a * 8 + b);
    } else {
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) out(a, b) = rho(a, b) * std::polar(1.0, -(energies_[a] - energies_[b]) * t_);
    }
    if (drift_ > 0) {
      // Linear carrier ramp: accumulated offset phase over [start, start + t].
      const double phase = kTwoPi * drift_ * (start_s * t_ + 0.5 * t_ * t_);
      out = detail::conjugate(expm_hermitian(total_iz(), phase), out);
    }
    return DensityMatrix::renormalized(out);
  }

  double duration() const { return t_; }

 private:
  double t_;
  double drift_;
  bool relax_ = false;
  Eigen::MatrixXcd superop_;
  std::array<double, 8> energies_{};
};

/// Delay of length t under H0 with per-qubit relaxation toward equilibrium.
inline DensityMatrix free_evolution(const DensityMatrix& rho, double t, const MoleculeSpec& spec,
                                    const NoiseConfig& noise, double start_s = 0.0) {
  if (t < 0) throw Error("negative evolution time");
  if (t == 0) return rho;
  return DelayChannel(spec, noise, t).apply(rho, start_s);
}

/// Relaxation channel alone (no Hamiltonian) over dt, computed per qubit in
/// closed form. The per-qubit dissipators commute, so the product is exact.
inline DensityMatrix relaxation_step(const DensityMatrix& rho, double dt, const MoleculeSpec& spec,
                                     double polarization) {
  Mat8 m = rho.matrix();
  const double pop_decay = std::exp(-dt / spec.t1_s);
  const double coh_decay = std::exp(-dt / spec.t2_s);
  const double p0 = 0.5 * (1 + polarization);
  for (int q = 1; q <= kQubits; ++q) {
    const int mask = qubit_mask(q);
    Mat8 next = m;
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) {
        const int ba = qubit_bit(a, q);
        const int bb = qubit_bit(b, q);
        if (ba != bb) {
          next(a, b) = m(a, b) * coh_decay;
        } else if (ba == 0) {
          const cplx x0 = m(a, b);
          const cplx x1 = m(a | mask, b | mask);
          const cplx s = x0 + x1;
          next(a, b) = p0 * s + (x0 - p0 * s) * pop_decay;
          next(a | mask, b | mask) = s - next(a, b);
        }
      }
    }
    m = next;
  }
  return DensityMatrix::renormalized(m);
}

/// Drift Hamiltonian with the carrier ramp offset at absolute time `at_s`.
inline Mat8 drifted_hamiltonian(const Mat8& h0, const NoiseConfig& noise, double at_s) {
  if (noise.drift_hz_per_s == 0.0) return h0;
  return h0 + kTwoPi * noise.drift_hz_per_s * at_s * total_iz();
}

/// Evolves rho through a waveform. Delay segments use the exact relaxation
/// channel; pulses are unitary unless relax_during_pulses, in which case each
/// pulse is split into sub-steps of at most 1 ms with relaxation after each.
inline DensityMatrix evolve(const DensityMatrix& rho, const Waveform& w, const MoleculeSpec& spec,
                            const NoiseConfig& noise, const PhaseOffsets& offsets = {}, double start_s = 0.0) {
  const Mat8 h0 = build_drift_hamiltonian(spec);
  DensityMatrix state = rho;
  double clock = start_s;
  for (const auto& seg : w.segments) {
    if (seg.is_delay() && noise.relaxation_enabled) {
      state = free_evolution(state, seg.duration_s, spec, noise, clock);
    } else if (noise.relaxation_enabled && noise.relax_during_pulses) {
      const int steps = std::max(1, static_cast<int>(std::ceil(seg.duration_s / kMaxRelaxationSubstep)));
      const double dt = seg.duration_s / steps;
      const Mat8 hc = control_hamiltonian(seg, offsets);
      for (int k = 0; k < steps; ++k) {
        const Mat8 u = expm_hermitian(drifted_hamiltonian(h0, noise, clock + (k + 0.5) * dt) + hc, dt);
        state = DensityMatrix::renormalized(detail::conjugate(u, state.matrix()));
        state = relaxation_step(state, dt, spec, noise.thermal_polarization);
      }
    } else {
      const Mat8 h = drifted_hamiltonian(h0, noise, clock + 0.5 * seg.duration_s);
      const Mat8 u = expm_hermitian(h + control_hamiltonian(seg, offsets), seg.duration_s);
      state = DensityMatrix::renormalized(detail::conjugate(u, state.matrix()));
    }
    clock += seg.duration_s;
  }
  return state;
}

inline void to_json(nlohmann::json& j, const Waveform& w) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : w.segments) {
    segs.push_back({{"duration_s", s.duration_s}, {"amplitude_hz", s.amplitude_hz}, {"phase_rad", s.phase_rad}});
  }
  j = nlohmann::json{{"quantized", w.quantized}, {"segments", segs}};
}

inline void from_json(const nlohmann::json& j, Waveform& w) {
  w.segments.clear();
  w.quantized = j.value("quantized", false);
  for (const auto& s : j.at("segments")) {
    PulseSegment seg{s.at("duration_s").get<double>(), s.at("amplitude_hz").get<double>(),
                     s.at("phase_rad").get<double>()};
    if (!(seg.duration_s > 0)) throw Error("segment duration must be positive");
    if (seg.amplitude_hz < 0) throw Error("negative pulse amplitude");
    seg.phase_rad = wrap_phase(seg.phase_rad);
    w.segments.push_back(seg);
  }
}

inline void to_json(nlohmann::json& j, const NoiseConfig& n) {
  j = nlohmann::json{{"relaxation_enabled", n.relaxation_enabled},
                     {"drift_hz_per_s", n.drift_hz_per_s},
                     {"relax_during_pulses", n.relax_during_pulses},
                     {"thermal_polarization", n.thermal_polarization},
                     {"fid_noise", n.fid_noise}};
}

inline void from_json(const nlohmann::json& j, NoiseConfig& n) {
  NoiseConfig d;
  n.relaxation_enabled = j.value("relaxation_enabled", d.relaxation_enabled);
  n.drift_hz_per_s = j.value("drift_hz_per_s", d.drift_hz_per_s);
  n.relax_during_pulses = j.value("relax_during_pulses", d.relax_during_pulses);
  n.thermal_polarization = j.value("thermal_polarization", d.thermal_polarization);
  n.fid_noise = j.value("fid_noise", d.fid_noise);
  n.validate();
}

}  // namespace nmrq
