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

#include <gtest/gtest.h>

#include <random>

#include "nmrq/compiler.hpp"
#include "test_support.hpp"

namespace nmrq {
namespace {

const PulseLibrary& ideal_library() {
  static const PulseLibrary lib = PulseLibrary::ideal();
  return lib;
}

Mat8 circuit_unitary(const Circuit& c) {
  Mat8 u = Mat8::Identity();
  for (const auto& g : c.gates) u = ideal_unitary(g) * u;
  return u;
}

FrameState random_frame(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-kPi, kPi);
  return FrameState{{d(rng), d(rng), d(rng)}};
}

Gate random_gate(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kGateTable.size() - 1);
  std::uniform_real_distribution<double> angle(-6.0, 6.0);
  const auto& info = kGateTable[pick(rng)];
  std::vector<int> q{1, 2, 3};
  std::shuffle(q.begin(), q.end(), rng);
  q.resize(info.arity);
  std::optional<double> a;
  if (info.has_angle) a = angle(rng);
  const int sign = info.has_sign && (rng() & 1) ? -1 : 1;
  return make_gate(info.kind, q, a, sign);
}

TEST(VirtualZ, DecrementsReferencePhase) {
  const FrameState f = virtual_z(FrameState{}, 2, 0.3);
  EXPECT_DOUBLE_EQ(f.reference_phase[0], 0.0);
  EXPECT_DOUBLE_EQ(f.reference_phase[1], kTwoPi - 0.3);
  EXPECT_DOUBLE_EQ(f.reference_phase[2], 0.0);
  EXPECT_NEAR(effective_phase(f, 2, kPi / 2), kPi / 2 - 0.3, 1e-15);
  EXPECT_NEAR(effective_phase(f, 1, kPi / 2), kPi / 2, 1e-15);
  EXPECT_THROW(virtual_z(f, 0, 1.0), Error);
  // Phases stay wrapped.
  const FrameState g = virtual_z(virtual_z(FrameState{}, 1, 3.0), 1, 3.0);
  EXPECT_NEAR(g.reference_phase[0], wrap_phase(-6.0), 1e-15);
}

TEST(VirtualZ, FrameUnitaryIsAccumulatedZRotation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  std::uniform_int_distribution<int> q(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    FrameState f = random_frame(rng);
    Mat8 expected = frame_unitary(f);
    for (int k = 0; k < 20; ++k) {
      const int qubit = q(rng);
      const double a = d(rng);
      f = virtual_z(f, qubit, a);
      expected = embed(rotation2(Axis::Z, a), qubit) * expected;
    }
    EXPECT_LT(phase_invariant_distance(frame_unitary(f), expected), 1e-12);
  }
}

TEST(VirtualZ, CompositionIsAssociativeOverRandomSequences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  std::uniform_int_distribution<int> q(1, 3), len(1, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    std::vector<std::pair<int, double>> seq(n);
    for (auto& s : seq) s = {q(rng), d(rng)};
    const std::size_t split = static_cast<std::size_t>(rng() % n);
    // Left to right in one pass.
    FrameState a;
    for (const auto& [qb, ang] : seq) a = virtual_z(a, qb, ang);
    // Two halves, the second applied to the result of the first.
    FrameState b;
    for (std::size_t i = 0; i < split; ++i) b = virtual_z(b, seq[i].first, seq[i].second);
    for (std::size_t i = split; i < seq.size(); ++i) b = virtual_z(b, seq[i].first, seq[i].second);
    // Per-qubit sums.
    std::array<double, 3> sum{};
    for (const auto& [qb, ang] : seq) sum[qb - 1] += ang;
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(std::remainder(a.reference_phase[k] - b.reference_phase[k], kTwoPi), 0.0, 1e-12);
      EXPECT_NEAR(std::remainder(a.reference_phase[k] + sum[k], kTwoPi), 0.0, 1e-12);
    }
  }
}

TEST(ArbitraryRotation, ReproducesFixedRotations) {
  const auto& lib = ideal_library();
  for (int q = 1; q <= 3; ++q) {
    auto rx = compile_arbitrary_xy(q, Axis::X, kPi, FrameState{});
    EXPECT_LT(phase_invariant_distance(logical_unitary(rx, lib), ideal_unitary(make_gate(GateKind::X, {q}))), 1e-9);
    auto ry = compile_arbitrary_xy(q, Axis::Y, kPi / 2, FrameState{});
    EXPECT_LT(phase_invariant_distance(logical_unitary(ry, lib), ideal_unitary(make_gate(GateKind::R90y, {q}))),
              1e-9);
    EXPECT_EQ(rx.pulse_count(), 2u);
  }
  EXPECT_THROW(compile_arbitrary_xy(1, Axis::Z, 0.5, FrameState{}), Error);
  EXPECT_THROW(compile_arbitrary_xy(1, Axis::X, 7.0, FrameState{}), Error);
}

TEST(ArbitraryRotation, MatchesExactRotationForRandomAnglesAndFrames) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-6.2, 6.2);
  for (int trial = 0; trial < 60; ++trial) {
    const int q = 1 + trial % 3;
    const Axis axis = trial % 2 ? Axis::X : Axis::Y;
    const double a = d(rng);
    const auto s = compile_arbitrary_xy(q, axis, a, random_frame(rng));
    EXPECT_LT(phase_invariant_distance(logical_unitary(s, ideal_library()), embed(rotation2(axis, a), q)), 1e-9);
  }
}

TEST(CompileCircuit, EveryGateMatchesItsUnitaryInAnyFrame) {
  std::mt19937_64 rng(21);
  for (const auto& info : kGateTable) {
    for (int trial = 0; trial < 10; ++trial) {
      Gate g;
      do g = random_gate(rng);
      while (g.kind != info.kind);
      Circuit c;
      c.gates.push_back(g);
      const auto s = compile_circuit(c, ideal_library(), random_frame(rng));
      EXPECT_LT(phase_invariant_distance(logical_unitary(s, ideal_library()), ideal_unitary(g)), 1e-9)
          << nlohmann::json(g).dump();
    }
  }
}

TEST(CompileCircuit, RandomCircuitsComposeInTheFrame) {
  std::mt19937_64 rng(34);
  std::uniform_int_distribution<int> len(0, 20);
  for (int trial = 0; trial < 60; ++trial) {
    Circuit c;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) c.gates.push_back(random_gate(rng));
    const auto s = compile_circuit(c, ideal_library());
    EXPECT_LT(phase_invariant_distance(logical_unitary(s, ideal_library()), circuit_unitary(c)), 1e-9);
    // Splitting a circuit and threading the frame gives the same schedule.
    const std::size_t split = n ? rng() % (n + 1) : 0;
    Circuit head, tail;
    head.gates.assign(c.gates.begin(), c.gates.begin() + static_cast<std::ptrdiff_t>(split));
    tail.gates.assign(c.gates.begin() + static_cast<std::ptrdiff_t>(split), c.gates.end());
    auto joined = compile_circuit(head, ideal_library());
    joined.append(compile_circuit(tail, ideal_library(), joined.final_frame));
    EXPECT_EQ(joined.final_frame, s.final_frame);
    EXPECT_LT(phase_invariant_distance(logical_unitary(joined, ideal_library()), logical_unitary(s, ideal_library())),
              1e-12);
  }
}

TEST(CompileCircuit, VirtualZGatesTakeNoTime) {
  Circuit c;
  c.add(GateKind::Z, {1}).add(GateKind::T, {2}).add(GateKind::Tdag, {3}).add(GateKind::Rz, {1}, 0.4);
  c.add(GateKind::R90z, {2}, std::nullopt, -1);
  const auto s = compile_circuit(c, ideal_library());
  EXPECT_EQ(s.duration(), 0.0);
  EXPECT_EQ(s.pulse_count(), 0u);
  EXPECT_EQ(s.actions.size(), 5u);
  EXPECT_NEAR(s.final_frame.reference_phase[0], wrap_phase(-kPi - 0.4), 1e-12);
}

TEST(CompileCircuit, ZBetweenXPulsesTurnsTheSecondIntoMinusY) {
  // Rx(a), Rz(pi/2), Rx(b) plays Rx(a) then a rotation about -y by b; the
  // z rotation survives only as the final frame.
  for (double a : {kPi / 2, kPi}) {
    for (double b : {kPi / 2, -kPi / 2, kPi}) {
      Circuit c;
      c.add(GateKind::Rx, {1}, a).add(GateKind::Rz, {1}, kPi / 2).add(GateKind::Rx, {1}, b);
      const auto s = compile_circuit(c, ideal_library());
      ASSERT_EQ(s.pulse_count(), 2u);
      const Mat8 played = embed(rotation2(Axis::Y, -b), 1) * embed(rotation2(Axis::X, a), 1);
      EXPECT_LT(phase_invariant_distance(schedule_unitary(s, ideal_library()), played), 1e-12) << a << " " << b;
      EXPECT_LT(phase_invariant_distance(frame_unitary(s.final_frame), embed(rotation2(Axis::Z, kPi / 2), 1)), 1e-12);
    }
  }
}

TEST(CompileCircuit, PeepholeAnglesUseSinglePulses) {
  Circuit c;
  c.add(GateKind::Rx, {1}, kPi / 2).add(GateKind::Ry, {2}, -kPi / 2).add(GateKind::Rx, {3}, -kPi);
  c.add(GateKind::Rx, {1}, kTwoPi).add(GateKind::Ry, {1}, 0.0);
  const auto s = compile_circuit(c, ideal_library());
  ASSERT_EQ(s.pulse_count(), 3u);
  EXPECT_EQ(s.actions[0].pulse, "R90X1");
  EXPECT_EQ(s.actions[1].pulse, "RM90Y2");
  EXPECT_EQ(s.actions[2].pulse, "X3");
  EXPECT_NEAR(s.duration(), ideal_library().duration("R90X1") + ideal_library().duration("R90X2") +
                                ideal_library().duration("X3"),
              1e-15);
}

TEST(CompileCircuit, GhzFromTheIdealLibrary) {
  Circuit c;
  c.add(GateKind::H, {1}).add(GateKind::CNOT, {1, 2}).add(GateKind::CNOT, {2, 3});
  const auto s = compile_circuit(c, ideal_library());
  const auto phys = execute_schedule(DensityMatrix::basis(0), s, ideal_library(), NoiseConfig::noiseless());
  const auto p = diagonal_probabilities(to_logical(phys, s.final_frame));
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[7], 0.5, 1e-12);
  const auto logical = to_logical(phys, s.final_frame);
  EXPECT_NEAR(std::abs(logical(0, 7)), 0.5, 1e-12);
}

TEST(CompileCircuit, MissingPulseNamesTheGate) {
  Circuit c;
  c.add(GateKind::Z, {2}).add(GateKind::X, {1});
  try {
    (void)compile_circuit(c, PulseLibrary{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "pulse library has no waveform for gate X(1) (needs X1)");
  }
}

TEST(PhaseModel, OffsetsOnSharedWaveformMatchTheDirectPropagator) {
  std::mt19937_64 rng(4);
  const auto spec = default_molecule();
  const Mat8 h0 = build_drift_hamiltonian(spec);
  PulseLibrary real;
  LibraryEntry e;
  e.key = "R90X2";
  e.waveform = testing::random_waveform(rng, 30, 2e-5, 10000.0);
  e.duration_s = e.waveform.duration();
  e.propagator = propagator(e.waveform, h0);
  real.insert(e);
  for (const std::string key : {"R90X2", "R90Y2", "RM90X2", "RM90Y2"}) {
    const PhaseOffsets o{0.3, -1.1, 2.0};
    const double shift = resolve_pulse(key).phase_shift;
    const PhaseOffsets total{o[0] + shift, o[1] + shift, o[2] + shift};
    EXPECT_LT((real.unitary(key, o) - propagator(e.waveform, h0, total)).cwiseAbs().maxCoeff(), 1e-10) << key;
  }
}

}  // namespace
}  // namespace nmrq
