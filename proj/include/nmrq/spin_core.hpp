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
#include <string>

#include "json.hpp"

#include "nmrq/linalg.hpp"

namespace nmrq {

/// Physical parameters of the three-19F molecule (iodotrifluoroethylene).
///
/// Chemical shifts are rotating-frame offsets from the carrier. Couplings are
/// stored as [J12, J13, J23].
struct MoleculeSpec {
  std::array<double, 3> chemical_shifts_hz{};
  std::array<double, 3> j_couplings_hz{};
  double t1_s = 7.0;
  double t2_s = 0.2;
  double larmor_mhz = 40.0;

  double coupling(int a, int b) const {
    if (a > b) std::swap(a, b);
    if (a == 1 && b == 2) return j_couplings_hz[0];
    if (a == 1 && b == 3) return j_couplings_hz[1];
    if (a == 2 && b == 3) return j_couplings_hz[2];
    throw Error("no coupling between qubits " + std::to_string(a) + " and " + std::to_string(b));
  }

  double shift(int qubit) const {
    require_qubit(qubit);
    return chemical_shifts_hz[qubit - 1];
  }

  void validate() const {
    if (!(t1_s > 0) || !(t2_s > 0)) throw Error("T1 and T2 must be positive");
    if (t2_s > 2 * t1_s) throw Error("T2 must not exceed 2*T1");
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        if (chemical_shifts_hz[a] == chemical_shifts_hz[b]) {
          throw Error("chemical shifts must be pairwise distinct");
        }
      }
    }
  }

  friend bool operator==(const MoleculeSpec&, const MoleculeSpec&) = default;
};

/// Shipped profile. Couplings and relaxation times are the reported values for
/// C2F3I; the chemical shifts are a stand-in (three distinct offsets about
/// 1.2-1.3 kHz apart) and are not authoritative.
inline MoleculeSpec default_molecule() {
  MoleculeSpec spec;
  spec.chemical_shifts_hz = {1240.0, -80.0, -1320.0};
  spec.j_couplings_hz = {-128.0, 68.0, 49.0};
  spec.t1_s = 7.0;
  spec.t2_s = 0.2;
  spec.larmor_mhz = 40.0;
  return spec;
}

inline void to_json(nlohmann::json& j, const MoleculeSpec& s) {
  j = nlohmann::json{{"chemical_shifts_hz", s.chemical_shifts_hz},
                     {"j_couplings_hz", s.j_couplings_hz},
                     {"t1_s", s.t1_s},
                     {"t2_s", s.t2_s},
                     {"larmor_mhz", s.larmor_mhz}};
}

inline void from_json(const nlohmann::json& j, MoleculeSpec& s) {
  j.at("chemical_shifts_hz").get_to(s.chemical_shifts_hz);
  j.at("j_couplings_hz").get_to(s.j_couplings_hz);
  j.at("t1_s").get_to(s.t1_s);
  j.at("t2_s").get_to(s.t2_s);
  s.larmor_mhz = j.value("larmor_mhz", 40.0);
  s.validate();
}

inline constexpr double kStateTolerance = 1e-12;

/// 8x8 Hermitian, unit-trace, positive semidefinite state.
class DensityMatrix {
 public:
  DensityMatrix() : m_(Mat8::Identity() / kDim) {}

  /// Validates the invariants; throws Error on violation.
  explicit DensityMatrix(const Mat8& m, double tol = kStateTolerance) : m_(m) {
    if (hermiticity_error(m_) > tol) throw Error("density matrix is not Hermitian");
    if (std::abs(m_.trace() - 1.0) > tol) throw Error("density matrix trace differs from 1");
    Eigen::SelfAdjointEigenSolver<Mat8> es(m_);
    if (es.eigenvalues().minCoeff() < -1e-10) throw Error("density matrix has negative eigenvalue");
  }

  /// Symmetrizes and rescales to unit trace without validation; used after
  /// numerical evolution to bound round-off drift.
  static DensityMatrix renormalized(const Mat8& m) {
    DensityMatrix rho;
    Mat8 h = 0.5 * (m + m.adjoint());
    rho.m_ = h / h.trace().real();
    return rho;
  }

  static DensityMatrix pure(const Vec8& psi) {
    Vec8 n = psi / psi.norm();
    return renormalized(n * n.adjoint());
  }

  static DensityMatrix basis(int index) {
    Vec8 v = Vec8::Zero();
    v(index) = 1.0;
    return pure(v);
  }

  static DensityMatrix maximally_mixed() { return DensityMatrix(); }

  const Mat8& matrix() const { return m_; }
  cplx operator()(int r, int c) const { return m_(r, c); }

 private:
  Mat8 m_;
};

/// Rotating-frame drift Hamiltonian in rad/s; diagonal in the computational basis.
inline SpinOperator build_drift_hamiltonian(const MoleculeSpec& spec) {
  Mat8 h = Mat8::Zero();
  for (int q = 1; q <= kQubits; ++q) h += kTwoPi * spec.shift(q) * spin(Axis::Z, q);
  h += kTwoPi * spec.j_couplings_hz[0] * spin(Axis::Z, 1) * spin(Axis::Z, 2);
  h += kTwoPi * spec.j_couplings_hz[1] * spin(Axis::Z, 1) * spin(Axis::Z, 3);
  h += kTwoPi * spec.j_couplings_hz[2] * spin(Axis::Z, 2) * spin(Axis::Z, 3);
  return h;
}

/// Diagonal energies of H0 (rad/s), indexed by basis state.
inline std::array<double, 8> drift_energies(const MoleculeSpec& spec) {
  std::array<double, 8> e{};
  const Mat8 h = build_drift_hamiltonian(spec);
  for (int i = 0; i < kDim; ++i) e[i] = h(i, i).real();
  return e;
}

/// Equilibrium state with single-spin polarization <sigma_z^k> = polarization
/// for each of the three identical spins (product of per-spin Boltzmann states).
inline DensityMatrix thermal_state(double polarization) {
  if (!(polarization > 0.0) || polarization >= 0.5) {
    throw Error("thermal polarization must lie in (0, 0.5)");
  }
  Mat8 m = Mat8::Zero();
  for (int i = 0; i < kDim; ++i) {
    double p = 1.0;
    for (int q = 1; q <= kQubits; ++q) p *= 0.5 * (1.0 + (qubit_bit(i, q) ? -polarization : polarization));
    m(i, i) = p;
  }
  return DensityMatrix::renormalized(m);
}

/// The three spins share one nuclear species, so the molecule only enters
/// through validation.
inline DensityMatrix thermal_state(const MoleculeSpec& spec, double polarization) {
  spec.validate();
  return thermal_state(polarization);
}

inline double expectation(const DensityMatrix& rho, const SpinOperator& obs) {
  if (hermiticity_error(obs) > 1e-12) throw Error("observable is not Hermitian");
  return (rho.matrix() * obs).trace().real();
}

inline Real8 diagonal_probabilities(const DensityMatrix& rho) {
  Real8 p{};
  for (int i = 0; i < kDim; ++i) p[i] = rho(i, i).real();
  return p;
}

/// Basis label |q1 q2 q3> for an index.
inline std::string basis_label(int index) {
  std::string s = "|";
  for (int q = 1; q <= kQubits; ++q) s += qubit_bit(index, q) ? '1' : '0';
  return s + ">";
}

}  // namespace nmrq
