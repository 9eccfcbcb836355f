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

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nmrq {

inline constexpr int kQubits = 3;
inline constexpr int kDim = 8;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix<cplx, 2, 2>;
using Mat8 = Eigen::Matrix<cplx, 8, 8>;
using Vec8 = Eigen::Matrix<cplx, 8, 1>;
using Real8 = std::array<double, 8>;

/// 8x8 operator on the three-spin Hilbert space.
using SpinOperator = Mat8;

/// Raised for contract violations anywhere in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Axis { X, Y, Z };

inline void require_qubit(int qubit) {
  if (qubit < 1 || qubit > kQubits) {
    throw Error("qubit index " + std::to_string(qubit) + " outside 1..3");
  }
}

/// Bit of a basis index belonging to `qubit`; qubit 1 is the most significant.
inline int qubit_bit(int index, int qubit) { return (index >> (kQubits - qubit)) & 1; }

inline int qubit_mask(int qubit) { return 1 << (kQubits - qubit); }

inline Mat2 pauli2(Axis axis) {
  Mat2 m = Mat2::Zero();
  switch (axis) {
    case Axis::X:
      m(0, 1) = 1.0;
      m(1, 0) = 1.0;
      break;
    case Axis::Y:
      m(0, 1) = cplx(0, -1);
      m(1, 0) = cplx(0, 1);
      break;
    case Axis::Z:
      m(0, 0) = 1.0;
      m(1, 1) = -1.0;
      break;
  }
  return m;
}

/// Embeds a single-qubit operator acting on `qubit`.
inline Mat8 embed(const Mat2& op, int qubit) {
  require_qubit(qubit);
  const int mask = qubit_mask(qubit);
  Mat8 out = Mat8::Zero();
  for (int r = 0; r < kDim; ++r) {
    for (int c = 0; c < kDim; ++c) {
      if ((r & ~mask) != (c & ~mask)) continue;
      out(r, c) = op(qubit_bit(r, qubit), qubit_bit(c, qubit));
    }
  }
  return out;
}

/// Pauli matrix on one qubit, identity elsewhere.
inline Mat8 sigma(Axis axis, int qubit) { return embed(pauli2(axis), qubit); }

/// Spin-1/2 angular momentum I = sigma / 2.
inline Mat8 spin(Axis axis, int qubit) { return 0.5 * sigma(axis, qubit); }

inline Mat8 identity8() { return Mat8::Identity(); }

/// Product of sigma_z over the qubits whose bit is set in `subset` (bit 0 = qubit 1).
inline Mat8 sigma_z_product(unsigned subset) {
  Mat8 out = Mat8::Identity();
  for (int q = 1; q <= kQubits; ++q) {
    if (subset & (1u << (q - 1))) out = out * sigma(Axis::Z, q);
  }
  return out;
}

inline Mat2 rotation2(Axis axis, double angle) {
  return std::cos(angle / 2) * Mat2::Identity() - cplx(0, 1) * std::sin(angle / 2) * pauli2(axis);
}

/// Rotation by `angle` about an equatorial axis at azimuth `phase`.
inline Mat2 rotation2_phase(double phase, double angle) {
  Mat2 n = std::cos(phase) * pauli2(Axis::X) + std::sin(phase) * pauli2(Axis::Y);
  return std::cos(angle / 2) * Mat2::Identity() - cplx(0, 1) * std::sin(angle / 2) * n;
}

inline double hermiticity_error(const Mat8& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

inline double unitarity_error(const Mat8& u) {
  return (u.adjoint() * u - Mat8::Identity()).cwiseAbs().maxCoeff();
}

/// exp(-i h t) for Hermitian h by exact diagonalization.
inline Mat8 expm_hermitian(const Mat8& h, double t) {
  Eigen::SelfAdjointEigenSolver<Mat8> es(h);
  const auto& v = es.eigenvectors();
  Eigen::Matrix<cplx, 8, 1> phases;
  for (int i = 0; i < kDim; ++i) phases(i) = std::polar(1.0, -es.eigenvalues()(i) * t);
  return v * phases.asDiagonal() * v.adjoint();
}

/// Distance between two unitaries modulo a global phase (max-abs entrywise).
inline double phase_invariant_distance(const Mat8& a, const Mat8& b) {
  const cplx overlap = (a.adjoint() * b).trace();
  if (std::abs(overlap) < 1e-300) return (a - b).cwiseAbs().maxCoeff();
  const cplx phase = overlap / std::abs(overlap);
  return (a * phase - b).cwiseAbs().maxCoeff();
}

inline double wrap_phase(double phase) {
  double p = std::fmod(phase, kTwoPi);
  if (p < 0) p += kTwoPi;
  if (p >= kTwoPi) p -= kTwoPi;
  return p;
}

}  // namespace nmrq
