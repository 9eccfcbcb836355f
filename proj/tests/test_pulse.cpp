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

#include "nmrq/grape.hpp"
#include "nmrq/pulse.hpp"
#include "test_support.hpp"

namespace nmrq {
namespace {

Mat8 global_rotation(double phase, double angle) {
  const Mat2 r = rotation2_phase(phase, angle);
  return embed(r, 1) * embed(r, 2) * embed(r, 3);
}

Mat8 zero_drift() { return Mat8::Zero(); }

TEST(Quantize, ZeroAmplitudeStaysZero) {
  const auto q = quantize(square_pulse(1e-3, 0.0, 0.3));
  EXPECT_EQ(q.segments[0].amplitude_hz, 0.0);
  EXPECT_TRUE(q.quantized);
}

TEST(Quantize, AmplitudeRoundsToNearestStep) {
  const double fs = kDefaultFullScaleHz;
  const auto q = quantize(square_pulse(1e-3, fs / 2 + fs / 200000, 0.0), fs);
  EXPECT_DOUBLE_EQ(q.segments[0].amplitude_hz, fs * 32768.0 / 65536.0);
}

TEST(Quantize, PhaseRoundsThenWraps) {
  Waveform w{{PulseSegment{1e-3, 100.0, kTwoPi - kPi / 200000}}, false};
  const auto q = quantize(w);
  EXPECT_DOUBLE_EQ(q.segments[0].phase_rad, 0.0);
}

TEST(Quantize, RejectsNegativeAmplitude) {
  Waveform w{{PulseSegment{1e-3, -1.0, 0.0}}, false};
  EXPECT_THROW(quantize(w), Error);
}

TEST(Quantize, GridPropertyHoldsForRandomWaveforms) {
  std::mt19937_64 rng(4);
  const double fs = kDefaultFullScaleHz;
  const auto q = quantize(testing::random_waveform(rng, 64, 1e-5, fs), fs);
  for (const auto& s : q.segments) {
    const double a = s.amplitude_hz / (fs / kWaveformSteps);
    const double p = s.phase_rad / (kTwoPi / kWaveformSteps);
    EXPECT_NEAR(a, std::round(a), 1e-6);
    EXPECT_NEAR(p, std::round(p), 1e-6);
    EXPECT_GE(s.phase_rad, 0.0);
    EXPECT_LT(s.phase_rad, kTwoPi);
  }
}

TEST(Quantize, NinetyDegreePulseFidelityBarelyChanges) {
  const auto w = square_pulse(10e-6, 25000.0 * (1 - 3.3e-6), 0.123456789);
  const Mat8 h0 = build_drift_hamiltonian(default_molecule());
  const double f = gate_fidelity(propagator(w, h0), propagator(quantize(w), h0));
  EXPECT_GT(f, 1 - 1e-6);
}

TEST(ControlHamiltonian, ZeroAmplitudeIsZero) {
  EXPECT_LT(control_hamiltonian(PulseSegment{1e-3, 0.0, 1.0}).norm(), 1e-300);
}

TEST(ControlHamiltonian, SharedChannelDrivesAllSpins) {
  const PulseSegment seg{1e-6, 1000.0, 0.0};
  const Mat8 expected = kTwoPi * 1000.0 * (spin(Axis::X, 1) + spin(Axis::X, 2) + spin(Axis::X, 3));
  EXPECT_LT((control_hamiltonian(seg) - expected).norm(), 1e-9);
}

TEST(Propagator, TenMicrosecondSquarePulseIsGlobalNinety) {
  const auto u = propagator(square_pulse(10e-6, 25000.0, 0.0), zero_drift());
  EXPECT_LT(phase_invariant_distance(u, global_rotation(0.0, kPi / 2)), 1e-12);
}

TEST(Propagator, YPhasedDriveCommutesWithGlobalYRotation) {
  const auto u = propagator(square_pulse(7e-6, 13000.0, kPi / 2), zero_drift());
  const Mat8 ry = global_rotation(kPi / 2, 0.37);
  EXPECT_LT((u * ry - ry * u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagator, EmptyWaveformIsIdentity) {
  EXPECT_LT((propagator(Waveform{}, build_drift_hamiltonian(default_molecule())) - Mat8::Identity()).norm(), 1e-300);
}

TEST(Propagator, GlobalPiPulseMatchesDirectExponentiation) {
  const auto u = propagator(square_pulse(20e-6, 25000.0, 0.0), zero_drift());
  const Mat8 xxx = sigma(Axis::X, 1) * sigma(Axis::X, 2) * sigma(Axis::X, 3);
  EXPECT_LT(phase_invariant_distance(u, cplx(0, -1) * xxx), 1e-12);
}

TEST(Propagator, SplittingSegmentLeavesUnitaryUnchanged) {
  const Mat8 h0 = build_drift_hamiltonian(default_molecule());
  const auto whole = propagator(square_pulse(2e-4, 3000.0, 0.9), h0);
  Waveform halves{{PulseSegment{1e-4, 3000.0, 0.9}, PulseSegment{1e-4, 3000.0, 0.9}}, false};
  EXPECT_LT((whole - propagator(halves, h0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagator, RandomWaveformsAreUnitary) {
  std::mt19937_64 rng(8);
  const Mat8 h0 = build_drift_hamiltonian(default_molecule());
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = propagator(testing::random_waveform(rng, 64, 2e-5, 20000.0), h0);
    EXPECT_LT((u.adjoint() * u - Mat8::Identity()).norm(), 1e-10);
  }
}

TEST(Propagator, PhaseOffsetsConjugateByZRotation) {
  std::mt19937_64 rng(12);
  const Mat8 h0 = build_drift_hamiltonian(default_molecule());
  const auto w = testing::random_waveform(rng, 16, 2e-5, 20000.0);
  const PhaseOffsets o{0.3, -1.1, 2.0};
  Mat8 z = Mat8::Zero();
  for (int i = 0; i < 8; ++i) {
    double ph = 0;
    for (int q = 1; q <= 3; ++q) ph += o[q - 1] * (qubit_bit(i, q) ? -0.5 : 0.5);
    z(i, i) = std::polar(1.0, -ph);
  }
  EXPECT_LT((propagator(w, h0, o) - z * propagator(w, h0) * z.adjoint()).cwiseAbs().maxCoeff(), 1e-11);
  // A uniform offset is the same as phase-shifting the waveform.
  const PhaseOffsets u{0.8, 0.8, 0.8};
  EXPECT_LT((propagator(w, h0, u) - propagator(w.phase_shifted(0.8), h0)).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Evolve, NoiseOffMatchesPropagatorConjugation) {
  std::mt19937_64 rng(2);
  const auto spec = default_molecule();
  const auto w = testing::random_waveform(rng, 20, 5e-5, 5000.0);
  const auto rho = testing::random_state(rng);
  const Mat8 u = propagator(w, build_drift_hamiltonian(spec));
  const auto out = evolve(rho, w, spec, NoiseConfig::noiseless());
  EXPECT_LT((out.matrix() - u * rho.matrix() * u.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evolve, DelayDecaysSingleQubitCoherenceByT2) {
  // Partner spins relax too and carry the coherence between their states, so
  // the oracle is the qubit-1 transverse magnetization summed over partner
  // states; couplings are switched off so those pieces precess together.
  auto spec = default_molecule();
  spec.j_couplings_hz = {0.0, 0.0, 0.0};
  // (|000> + |100>)/sqrt(2): a qubit-1 coherence.
  Vec8 psi = Vec8::Zero();
  psi(0) = psi(4) = 1 / std::sqrt(2.0);
  const auto rho = DensityMatrix::pure(psi);
  for (double t : {0.01, 0.1, 0.3}) {
    const auto out = evolve(rho, delay(t), spec, NoiseConfig{});
    cplx transverse = 0;
    for (int b = 0; b < 4; ++b) transverse += out(b, b | 4);
    EXPECT_NEAR(std::abs(transverse), 0.5 * std::exp(-t / spec.t2_s), 1e-10) << t;
    // The component that stays in the partner |00> state also loses the
    // partners' population: each partner remains |0> with (1 + e^{-t/T1})/2.
    const double stay = 0.5 * (1 + std::exp(-t / spec.t1_s));
    EXPECT_NEAR(std::abs(out(0, 4)), 0.5 * std::exp(-t / spec.t2_s) * stay * stay, 1e-6) << t;
  }
}

TEST(Evolve, LongDelayApproachesThermalState) {
  const auto spec = default_molecule();
  NoiseConfig noise;
  noise.thermal_polarization = 0.01;
  std::mt19937_64 rng(6);
  const auto out = evolve(testing::random_state(rng), delay(40 * spec.t1_s), spec, noise);
  EXPECT_LT((out.matrix() - thermal_state(0.01).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evolve, RelaxationDuringPulsesPreservesStateInvariants) {
  std::mt19937_64 rng(10);
  const auto spec = default_molecule();
  NoiseConfig noise;
  noise.relax_during_pulses = true;
  noise.drift_hz_per_s = 0.5;
  const auto out = evolve(testing::random_state(rng), testing::random_waveform(rng, 8, 1.5e-3, 2000.0), spec, noise);
  EXPECT_LT(hermiticity_error(out.matrix()), 1e-10);
  EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-10);
  Eigen::SelfAdjointEigenSolver<Mat8> es(out.matrix());
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(FreeEvolution, ZeroTimeIsIdentityAndNegativeRejected) {
  std::mt19937_64 rng(1);
  const auto rho = testing::random_state(rng);
  EXPECT_EQ(free_evolution(rho, 0.0, default_molecule(), NoiseConfig{}).matrix(), rho.matrix());
  EXPECT_THROW(free_evolution(rho, -1.0, default_molecule(), NoiseConfig{}), Error);
}

TEST(FreeEvolution, T1RecoveryFromAllExcited) {
  const auto spec = default_molecule();
  NoiseConfig noise;
  const double pol = noise.thermal_polarization;
  const auto out = free_evolution(DensityMatrix::basis(7), spec.t1_s, spec, noise);
  for (int q = 1; q <= 3; ++q) {
    const double expected = -1.0 + (pol + 1.0) * (1 - std::exp(-1.0));
    EXPECT_NEAR(expectation(out, sigma(Axis::Z, q)), expected, 1e-12);
  }
}

TEST(FreeEvolution, DiagonalStateStaysDiagonal) {
  std::mt19937_64 rng(7);
  const auto out = free_evolution(testing::diagonal_state(testing::random_distribution(rng)), 0.37, default_molecule(),
                                  NoiseConfig{});
  Mat8 off = out.matrix();
  off.diagonal().setZero();
  EXPECT_LT(off.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FreeEvolution, MultiQubitCoherenceDecaysWithSummedRates) {
  const auto spec = default_molecule();
  // |000><111| involves all three qubits.
  Vec8 psi = Vec8::Zero();
  psi(0) = psi(7) = 1 / std::sqrt(2.0);
  const double t = 0.05;
  const auto out = free_evolution(DensityMatrix::pure(psi), t, spec, NoiseConfig{});
  EXPECT_NEAR(std::abs(out(0, 7)), 0.5 * std::exp(-3 * t / spec.t2_s), 1e-10);
}

TEST(FreeEvolution, LiouvillianMatchesClosedFormRelaxation) {
  // Oracle: the Hamiltonian-free Liouvillian exponential against the per-qubit
  // closed-form channel.
  const auto spec = default_molecule();
  const double pol = 0.02, t = 0.8;
  const Eigen::MatrixXcd s = (liouvillian(spec, pol, false) * t).exp();
  std::mt19937_64 rng(13);
  const auto rho = testing::random_state(rng);
  Eigen::Matrix<cplx, 64, 1> v;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) v(a * 8 + b) = rho(a, b);
  const Eigen::Matrix<cplx, 64, 1> w = s * v;
  const auto closed = relaxation_step(rho, t, spec, pol);
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) EXPECT_NEAR(std::abs(w(a * 8 + b) - closed(a, b)), 0.0, 1e-12);
}

TEST(Drift, RamseyPhaseFollowsQuadraticRamp) {
  const auto spec = default_molecule();
  Vec8 psi = Vec8::Zero();
  psi(0) = psi(4) = 1 / std::sqrt(2.0);
  const auto rho = DensityMatrix::pure(psi);
  NoiseConfig ref = NoiseConfig::noiseless();
  NoiseConfig drift = ref;
  drift.drift_hz_per_s = 2.0;
  const double t = 0.3;
  const auto a = free_evolution(rho, t, spec, ref);
  const auto b = free_evolution(rho, t, spec, drift);
  // Coherence rho_04 rotates at -(E0 - E4); the ramp adds the offset integral.
  const double shift = std::arg(b(0, 4) / a(0, 4));
  EXPECT_NEAR(std::remainder(shift + kTwoPi * drift.drift_hz_per_s * t * t / 2, kTwoPi), 0.0, 1e-9);
}

TEST(Serialization, WaveformAndNoiseRoundTrip) {
  std::mt19937_64 rng(3);
  const auto w = quantize(testing::random_waveform(rng, 5, 1e-5, 1000.0));
  const nlohmann::json j = w;
  EXPECT_TRUE(j.at("quantized").get<bool>());
  EXPECT_EQ(j.at("segments").size(), 5u);
  for (const char* k : {"duration_s", "amplitude_hz", "phase_rad"}) EXPECT_TRUE(j["segments"][0].contains(k));
  const auto back = j.get<Waveform>();
  ASSERT_EQ(back.segments.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(back.segments[i].amplitude_hz, w.segments[i].amplitude_hz);
    EXPECT_DOUBLE_EQ(back.segments[i].phase_rad, w.segments[i].phase_rad);
  }
  NoiseConfig n;
  n.drift_hz_per_s = 0.25;
  n.relax_during_pulses = true;
  const auto nb = nlohmann::json(n).get<NoiseConfig>();
  EXPECT_EQ(nb.drift_hz_per_s, 0.25);
  EXPECT_TRUE(nb.relax_during_pulses);
  EXPECT_THROW((nlohmann::json{{"drift_hz_per_s", -1.0}}.get<NoiseConfig>()), Error);
}

}  // namespace
}  // namespace nmrq
