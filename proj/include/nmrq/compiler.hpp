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

#include <string>
#include <vector>

#include "nmrq/gates.hpp"
#include "nmrq/pulse_library.hpp"

namespace nmrq {

/// Per-qubit reference phase of the rotating frame. z rotations are applied
/// by moving this frame instead of the spins.
struct FrameState {
  std::array<double, 3> reference_phase{};

  friend bool operator==(const FrameState&, const FrameState&) = default;
};

/// Rz(angle) on `qubit`: the frame turns by -angle, nothing is played.
inline FrameState virtual_z(const FrameState& frame, int qubit, double angle) {
  require_qubit(qubit);
  FrameState out = frame;
  out.reference_phase[qubit - 1] = wrap_phase(frame.reference_phase[qubit - 1] - angle);
  return out;
}

/// Phase to program into a pulse so that it acts along `nominal_phase` in the
/// shifted frame. With the frame stored as above (decremented by Rz angles)
/// the programmed phase is the nominal phase plus the stored reference.
inline double effective_phase(const FrameState& frame, int qubit, double nominal_phase) {
  require_qubit(qubit);
  return wrap_phase(nominal_phase + frame.reference_phase[qubit - 1]);
}

/// Map from the physical to the logical (frame) picture: rho_logical = F rho F^dagger.
inline Mat8 frame_unitary(const FrameState& frame) {
  Mat8 f = Mat8::Zero();
  for (int i = 0; i < kDim; ++i) {
    double ph = 0;
    for (int q = 1; q <= kQubits; ++q) ph += frame.reference_phase[q - 1] * (qubit_bit(i, q) ? -0.5 : 0.5);
    f(i, i) = std::polar(1.0, ph);
  }
  return f;
}

struct ScheduleAction {
  enum class Kind { PulsePlay, FrameShift, Delay };
  Kind kind = Kind::PulsePlay;
  /// Library key (PulsePlay), e.g. "R90Y2" or "CNOT12".
  std::string pulse;
  /// Gate this action came from, for reporting.
  std::string gate;
  /// Per-spin phase offsets folded into the played waveform.
  PhaseOffsets offsets{};
  int qubit = 0;         // FrameShift
  double angle = 0.0;    // FrameShift: the z rotation angle
  double duration_s = 0.0;

  static ScheduleAction play(std::string key, const FrameState& frame, std::string gate = {}) {
    ScheduleAction a;
    a.kind = Kind::PulsePlay;
    a.pulse = std::move(key);
    a.gate = std::move(gate);
    a.offsets = frame.reference_phase;
    return a;
  }

  static ScheduleAction frame_shift(int qubit, double angle, std::string gate = {}) {
    ScheduleAction a;
    a.kind = Kind::FrameShift;
    a.qubit = qubit;
    a.angle = angle;
    a.gate = std::move(gate);
    return a;
  }

  static ScheduleAction wait(double t) {
    if (!(t >= 0)) throw Error("delay must be non-negative");
    ScheduleAction a;
    a.kind = Kind::Delay;
    a.duration_s = t;
    return a;
  }
};

struct Schedule {
  std::vector<ScheduleAction> actions;
  FrameState initial_frame;
  FrameState final_frame;

  double duration() const {
    double t = 0;
    for (const auto& a : actions) t += a.duration_s;
    return t;
  }

  std::size_t pulse_count() const {
    std::size_t n = 0;
    for (const auto& a : actions) n += a.kind == ScheduleAction::Kind::PulsePlay;
    return n;
  }

  void append(const Schedule& other) {
    actions.insert(actions.end(), other.actions.begin(), other.actions.end());
    final_frame = other.final_frame;
  }
};

inline std::string describe_gate(const Gate& g) {
  std::string s = g.name() + "(";
  for (std::size_t i = 0; i < g.qubits.size(); ++i) s += (i ? "," : "") + std::to_string(g.qubits[i]);
  return s + ")";
}

namespace detail {

inline void emit_frame_shift(Schedule& s, FrameState& frame, int qubit, double angle, const std::string& gate) {
  s.actions.push_back(ScheduleAction::frame_shift(qubit, angle, gate));
  frame = virtual_z(frame, qubit, angle);
}

inline void emit_play(Schedule& s, const FrameState& frame, const std::string& key, const std::string& gate) {
  s.actions.push_back(ScheduleAction::play(key, frame, gate));
}

inline double near_angle(double a, double b) { return std::abs(a - b) < 1e-12; }

}  // namespace detail

/// Rx or Ry by an arbitrary angle: a 90-degree pulse taking the axis onto z,
/// a virtual z rotation, and the inverse 90-degree pulse.
inline Schedule compile_arbitrary_xy(int qubit, Axis axis, double angle, const FrameState& frame) {
  require_qubit(qubit);
  if (axis == Axis::Z) throw Error("compile_arbitrary_xy takes the x or y axis");
  if (!(std::abs(angle) < kTwoPi)) throw Error("rotation angle must lie in (-2pi, 2pi)");
  Schedule s;
  s.initial_frame = frame;
  FrameState f = frame;
  const std::string q = std::to_string(qubit);
  const std::string gate = (axis == Axis::X ? "Rx(" : "Ry(") + q + ")";
  detail::emit_play(s, f, (axis == Axis::X ? "RM90Y" : "R90X") + q, gate);
  detail::emit_frame_shift(s, f, qubit, angle, gate);
  detail::emit_play(s, f, (axis == Axis::X ? "R90Y" : "RM90X") + q, gate);
  s.final_frame = f;
  return s;
}

/// Library key for a non-virtual gate, or empty for z-family gates.
inline std::string pulse_key(const Gate& g) {
  const auto q = [&](std::size_t i) { return std::to_string(g.qubits[i]); };
  switch (g.kind) {
    case GateKind::X: return "X" + q(0);
    case GateKind::Y: return "Y" + q(0);
    case GateKind::H: return "H" + q(0);
    case GateKind::R90x: return (g.sign > 0 ? "R90X" : "RM90X") + q(0);
    case GateKind::R90y: return (g.sign > 0 ? "R90Y" : "RM90Y") + q(0);
    case GateKind::CNOT: return "CNOT" + q(0) + q(1);
    case GateKind::CZ: {
      const int a = std::min(g.qubits[0], g.qubits[1]);
      const int b = std::max(g.qubits[0], g.qubits[1]);
      return "CZ" + std::to_string(a) + std::to_string(b);
    }
    case GateKind::Toffoli: return "TOFFOLI" + q(2);
    case GateKind::CCZ: return "CCZ";
    default: return {};
  }
}

/// Compiles a gate list left to right, threading the frame. z-family gates
/// become frame shifts; everything else plays a library pulse.
inline Schedule compile_circuit(const Circuit& circuit, const PulseLibrary& library, const FrameState& frame = {}) {
  circuit.validate();
  Schedule s;
  s.initial_frame = frame;
  FrameState f = frame;
  for (const auto& g : circuit.gates) {
    const std::string label = describe_gate(g);
    if (is_z_family(g.kind)) {
      detail::emit_frame_shift(s, f, g.qubits[0], z_angle(g), label);
      continue;
    }
    if (g.kind == GateKind::Rx || g.kind == GateKind::Ry) {
      const double a = std::remainder(*g.angle, kTwoPi);
      const std::string q = std::to_string(g.qubits[0]);
      const bool x = g.kind == GateKind::Rx;
      if (a == 0.0) continue;
      if (detail::near_angle(a, kPi / 2)) {
        detail::emit_play(s, f, (x ? "R90X" : "R90Y") + q, label);
      } else if (detail::near_angle(a, -kPi / 2)) {
        detail::emit_play(s, f, (x ? "RM90X" : "RM90Y") + q, label);
      } else if (detail::near_angle(std::abs(a), kPi)) {
        detail::emit_play(s, f, (x ? "X" : "Y") + q, label);
      } else {
        auto sub = compile_arbitrary_xy(g.qubits[0], x ? Axis::X : Axis::Y, a, f);
        for (auto& act : sub.actions) act.gate = label;
        s.append(sub);
        f = sub.final_frame;
      }
      continue;
    }
    detail::emit_play(s, f, pulse_key(g), label);
  }
  for (auto& a : s.actions) {
    if (a.kind != ScheduleAction::Kind::PulsePlay) continue;
    if (!library.has(a.pulse)) {
      throw Error("pulse library has no waveform for gate " + a.gate + " (needs " + a.pulse + ")");
    }
    a.duration_s = library.duration(a.pulse);
  }
  s.final_frame = f;
  return s;
}

/// Noise-free physical propagator of a schedule.
inline Mat8 schedule_unitary(const Schedule& s, const PulseLibrary& library) {
  Mat8 u = Mat8::Identity();
  const Mat8 h0 = build_drift_hamiltonian(library.spec());
  for (const auto& a : s.actions) {
    if (a.kind == ScheduleAction::Kind::PulsePlay) {
      u = library.unitary(a.pulse, a.offsets) * u;
    } else if (a.kind == ScheduleAction::Kind::Delay) {
      u = expm_hermitian(h0, a.duration_s) * u;
    }
  }
  return u;
}

/// Unitary the schedule applies in the logical frame picture.
inline Mat8 logical_unitary(const Schedule& s, const PulseLibrary& library) {
  return frame_unitary(s.final_frame) * schedule_unitary(s, library) * frame_unitary(s.initial_frame).adjoint();
}

/// Runs a schedule on a physical state starting at absolute time `start_s`.
/// Returns the physical state; the logical state is F rho F^dagger with F from
/// the schedule's final frame.
inline DensityMatrix execute_schedule(const DensityMatrix& rho, const Schedule& s, const PulseLibrary& library,
                                      const NoiseConfig& noise, double start_s = 0.0) {
  DensityMatrix state = rho;
  double clock = start_s;
  for (const auto& a : s.actions) {
    switch (a.kind) {
      case ScheduleAction::Kind::PulsePlay:
        state = library.play(state, a.pulse, a.offsets, noise, clock);
        break;
      case ScheduleAction::Kind::Delay:
        state = free_evolution(state, a.duration_s, library.spec(), noise, clock);
        break;
      case ScheduleAction::Kind::FrameShift:
        break;
    }
    clock += a.duration_s;
  }
  return state;
}

inline DensityMatrix to_logical(const DensityMatrix& physical, const FrameState& frame) {
  const Mat8 f = frame_unitary(frame);
  return DensityMatrix::renormalized(f * physical.matrix() * f.adjoint());
}

}  // namespace nmrq
