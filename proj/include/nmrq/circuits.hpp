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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmrq/gates.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

inline Mat8 circuit_unitary(const Circuit& c) {
  c.validate();
  Mat8 u = Mat8::Identity();
  for (const auto& g : c.gates) u = ideal_unitary(g) * u;
  return u;
}

/// Ideal-gate statevector from |000>.
inline Vec8 simulate_statevector(const Circuit& c) {
  Vec8 psi = Vec8::Zero();
  psi(0) = 1.0;
  for (const auto& g : c.gates) psi = ideal_unitary(g) * psi;
  return psi;
}

inline Real8 ideal_probabilities(const Circuit& c) {
  const Vec8 psi = simulate_statevector(c);
  Real8 p{};
  for (int i = 0; i < kDim; ++i) p[i] = std::norm(psi(i));
  return p;
}

// HHL ---------------------------------------------------------------------

struct HhlProblem {
  std::array<std::array<double, 2>, 2> a{};
  std::array<double, 2> b{};
  double c_const = 0.0;
  double t0 = kTwoPi;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double u_d_angle = 0.0;
  double theta = 0.0;
};

struct Diagonalization {
  double lambda1;
  double lambda2;
  double u_d_angle;
};

/// Real-rotation matrix of Ry(angle) on one qubit.
inline Eigen::Matrix2d ry_real(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle / 2), -std::sin(angle / 2), std::sin(angle / 2), std::cos(angle / 2);
  return r;
}

/// Eigenvalues (ascending) and the angle with U_d = R_-y(angle),
/// A = U_d^T diag(lambda1, lambda2) U_d.
inline Diagonalization diagonalize_2x2(const std::array<std::array<double, 2>, 2>& a) {
  if (std::abs(a[0][1] - a[1][0]) > 1e-9 * std::max(1.0, std::abs(a[0][1]))) throw Error("A must be symmetric");
  Eigen::Matrix2d m;
  m << a[0][0], a[0][1], a[1][0], a[1][1];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  Eigen::Vector2d u1 = es.eigenvectors().col(0);
  if (u1(0) < 0 || (u1(0) == 0 && u1(1) < 0)) u1 = -u1;
  const double angle = 2.0 * std::atan2(u1(1), u1(0));
  return Diagonalization{es.eigenvalues()(0), es.eigenvalues()(1), angle};
}

/// Checks the one-qubit phase-register condition: lambda_i t0 / 2pi are
/// integers that differ only in their lowest bit.
inline void require_one_bit_difference(double lambda1, double lambda2, double t0) {
  const double k1 = lambda1 * t0 / kTwoPi;
  const double k2 = lambda2 * t0 / kTwoPi;
  const double r1 = std::round(k1), r2 = std::round(k2);
  const bool integral = std::abs(k1 - r1) < 1e-9 && std::abs(k2 - r2) < 1e-9;
  const auto i1 = static_cast<long long>(r1), i2 = static_cast<long long>(r2);
  if (!integral || i1 < 0 || (i1 ^ i2) != 1) {
    throw Error("eigenvalues violate the one-bit difference requirement for a one-qubit register");
  }
}

inline HhlProblem make_hhl_problem(const std::array<std::array<double, 2>, 2>& a, std::array<double, 2> b,
                                   std::optional<double> c = std::nullopt, double t0 = kTwoPi) {
  HhlProblem p;
  p.a = a;
  const double nb = std::hypot(b[0], b[1]);
  if (!(nb > 0)) throw Error("b must be nonzero");
  p.b = {b[0] / nb, b[1] / nb};
  if (!(t0 > 0)) throw Error("t0 must be positive");
  p.t0 = t0;
  const auto d = diagonalize_2x2(a);
  p.lambda1 = d.lambda1;
  p.lambda2 = d.lambda2;
  p.u_d_angle = d.u_d_angle;
  if (!(p.lambda1 > 0) || !(p.lambda2 > p.lambda1)) {
    throw Error("A needs distinct positive eigenvalues");
  }
  require_one_bit_difference(p.lambda1, p.lambda2, t0);
  p.c_const = c.value_or(p.lambda1);
  if (!(p.c_const > 0) || p.c_const > p.lambda1 * (1 + 1e-12)) throw Error("C must lie in (0, lambda1]");
  // The compiled circuit fixes the lambda1 branch of the ancilla rotation at pi.
  if (std::abs(p.c_const - p.lambda1) > 1e-9 * p.lambda1) {
    throw Error("the three-qubit circuit realizes C = lambda1 only");
  }
  p.theta = -2.0 * std::acos(p.lambda1 / p.lambda2);
  return p;
}

/// The instance with eigenvalues 2 and 3, b = (1, 1)/sqrt(2), C = 2.
inline HhlProblem demo_hhl_problem() {
  const double r = 1.0 / std::sqrt(8.0);  // 0.35355
  return make_hhl_problem({{{2.5 - r, -r}, {-r, 2.5 + r}}}, {1.0, 1.0}, 2.0);
}

/// beta = U_d b, U_d = R_-y(u_d_angle).
inline std::array<double, 2> hhl_beta(const HhlProblem& p) {
  const Eigen::Vector2d beta = ry_real(-p.u_d_angle) * Eigen::Vector2d(p.b[0], p.b[1]);
  return {beta(0), beta(1)};
}

/// |1>-controlled Ry(theta) block on the ancilla: CZ, R_-x(pi/2), R_-z((pi-theta)/2),
/// CNOT, Rz((pi-theta)/2), Rx(pi/2).
inline void append_controlled_ry(Circuit& c, int control, int target, double theta) {
  const double half = (kPi - theta) / 2;
  c.add(GateKind::CZ, {control, target});
  c.add(GateKind::R90x, {target}, std::nullopt, -1);
  c.add(GateKind::Rz, {target}, -half);
  c.add(GateKind::CNOT, {control, target});
  c.add(GateKind::Rz, {target}, half);
  c.add(GateKind::R90x, {target}, std::nullopt, +1);
}

/// Qubit 1 holds the solution, qubit 2 the one-bit eigenvalue register and
/// qubit 3 the ancilla.
inline Circuit hhl_circuit(const HhlProblem& p) {
  Circuit c;
  c.add(GateKind::Rx, {3}, kPi);
  c.add(GateKind::Ry, {1}, 2.0 * std::atan2(p.b[1], p.b[0]) - p.u_d_angle);
  c.add(GateKind::CNOT, {1, 2});
  append_controlled_ry(c, 2, 3, p.theta);
  c.add(GateKind::CNOT, {1, 2});
  c.add(GateKind::Ry, {1}, p.u_d_angle);
  c.measure = {true, true, true};
  return c;
}

struct HhlReference {
  std::array<double, 2> x{};
  double success_probability = 0.0;
};

inline HhlReference hhl_reference(const HhlProblem& p) {
  Eigen::Matrix2d a;
  a << p.a[0][0], p.a[0][1], p.a[1][0], p.a[1][1];
  Eigen::FullPivLU<Eigen::Matrix2d> lu(a);
  if (!lu.isInvertible()) throw Error("A is singular");
  Eigen::Vector2d x = lu.solve(Eigen::Vector2d(p.b[0], p.b[1]));
  x.normalize();
  const auto beta = hhl_beta(p);
  HhlReference r;
  r.x = {x(0), x(1)};
  r.success_probability =
      std::pow(p.c_const * beta[0] / p.lambda1, 2) + std::pow(p.c_const * beta[1] / p.lambda2, 2);
  return r;
}

struct HhlSolution {
  std::array<double, 2> x_normalized{};
  double success_probability = 0.0;
  int sign = 1;
  double angle_error_deg = 0.0;
  double tangent_rel_error = 0.0;
};

/// x proportional to (sqrt(rho_22), s sqrt(rho_66)); success is the total
/// ancilla |1> population. Errors are filled in when a reference is given.
inline HhlSolution extract_solution(const Real8& probabilities, int sign,
                                    const std::optional<HhlReference>& reference = std::nullopt) {
  if (sign != 1 && sign != -1) throw Error("sign must be +1 or -1");
  double total = 0;
  for (double v : probabilities) {
    if (!(v >= 0)) throw Error("probabilities must be non-negative");
    total += v;
  }
  if (!(total > 0)) throw Error("probabilities must not all vanish");
  const double r22 = probabilities[1] / total, r66 = probabilities[5] / total;
  if (r22 + r66 <= 0) throw Error("postselection failed: rho_22 + rho_66 = 0");
  HhlSolution s;
  s.sign = sign;
  const double n = std::sqrt(r22 + r66);
  s.x_normalized = {std::sqrt(r22) / n, sign * std::sqrt(r66) / n};
  s.success_probability = (probabilities[1] + probabilities[3] + probabilities[5] + probabilities[7]) / total;
  if (reference) {
    const auto& x = reference->x;
    const double dot = std::clamp(s.x_normalized[0] * x[0] + s.x_normalized[1] * x[1], -1.0, 1.0);
    s.angle_error_deg = std::acos(dot) * 180.0 / kPi;
    const double t_ref = x[1] / x[0];
    const double t = s.x_normalized[1] / s.x_normalized[0];
    s.tangent_rel_error = std::abs(t - t_ref) / std::abs(t_ref);
  }
  return s;
}

inline void to_json(nlohmann::json& j, const HhlProblem& p) {
  j = nlohmann::json{{"a", p.a},
                     {"b", p.b},
                     {"c", p.c_const},
                     {"t0", p.t0},
                     {"lambda1", p.lambda1},
                     {"lambda2", p.lambda2},
                     {"u_d_angle", p.u_d_angle},
                     {"theta", p.theta}};
}

inline void from_json(const nlohmann::json& j, HhlProblem& p) {
  if (!j.is_object()) throw Error("HHL problem must be a JSON object");
  std::array<std::array<double, 2>, 2> a{};
  std::array<double, 2> b{};
  try {
    j.at("a").get_to(a);
    j.at("b").get_to(b);
  } catch (const nlohmann::json::exception&) {
    throw Error("HHL problem needs a: 2x2 array and b: 2-array");
  }
  std::optional<double> c;
  if (j.contains("c") && !j["c"].is_null()) c = j["c"].get<double>();
  p = make_hhl_problem(a, b, c, j.value("t0", kTwoPi));
}

inline void to_json(nlohmann::json& j, const HhlSolution& s) {
  j = nlohmann::json{{"x_normalized", s.x_normalized},
                     {"success_probability", s.success_probability},
                     {"sign", s.sign},
                     {"angle_error_deg", s.angle_error_deg},
                     {"tangent_rel_error", s.tangent_rel_error}};
}

// Built-in circuits ---------------------------------------------------------

struct BuiltinCircuit {
  std::string name;
  std::string description;
  Circuit circuit;
  Real8 expected{};
};

inline std::vector<BuiltinCircuit> builtin_circuits() {
  std::vector<BuiltinCircuit> out;
  {
    Circuit c;
    c.add(GateKind::H, {1}).add(GateKind::CNOT, {1, 2});
    out.push_back({"bell", "Bell pair on qubits 1 and 2; qubit 3 idle", c, {0.5, 0, 0, 0, 0, 0, 0.5, 0}});
  }
  {
    Circuit c;
    c.add(GateKind::H, {1}).add(GateKind::CNOT, {1, 2}).add(GateKind::CNOT, {2, 3});
    out.push_back({"ghz", "Three-qubit GHZ state", c, {0.5, 0, 0, 0, 0, 0, 0, 0.5}});
  }
  {
    Circuit c;
    c.add(GateKind::X, {2}).add(GateKind::H, {1}).add(GateKind::H, {2});
    c.add(GateKind::CNOT, {1, 2}).add(GateKind::H, {1});
    out.push_back({"deutsch", "Deutsch algorithm on qubits 1 and 2 with the balanced oracle f(x) = x; qubit 1 reads 1",
                   c, {0, 0, 0, 0, 0.5, 0, 0.5, 0}});
  }
  {
    Circuit c;
    for (int q = 1; q <= 3; ++q) c.add(GateKind::H, {q});
    c.add(GateKind::CCZ, {1, 2, 3});
    for (int q = 1; q <= 3; ++q) c.add(GateKind::H, {q});
    for (int q = 1; q <= 3; ++q) c.add(GateKind::X, {q});
    c.add(GateKind::CCZ, {1, 2, 3});
    for (int q = 1; q <= 3; ++q) c.add(GateKind::X, {q});
    for (int q = 1; q <= 3; ++q) c.add(GateKind::H, {q});
    const double rest = (1.0 - 25.0 / 32.0) / 7.0;
    out.push_back({"grover", "One Grover iteration marking |111>", c, {rest, rest, rest, rest, rest, rest, rest, 25.0 / 32.0}});
  }
  {
    const auto p = demo_hhl_problem();
    const Circuit c = hhl_circuit(p);
    out.push_back({"hhl", "HHL for A with eigenvalues 2 and 3, b = (1,1)/sqrt(2), C = 2", c, ideal_probabilities(c)});
  }
  return out;
}

inline const BuiltinCircuit& find_builtin(const std::vector<BuiltinCircuit>& all, const std::string& name) {
  for (const auto& b : all)
    if (b.name == name) return b;
  throw Error("unknown built-in circuit '" + name + "'");
}

}  // namespace nmrq
