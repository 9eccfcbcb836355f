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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "nmrq/linalg.hpp"

namespace nmrq {

enum class GateKind { X, Y, Z, H, T, Tdag, Rx, Ry, Rz, R90x, R90y, R90z, CNOT, CZ, Toffoli, CCZ };

struct GateInfo {
  GateKind kind;
  std::string_view name;
  int arity;
  bool has_angle;
  bool has_sign;
};

inline constexpr std::array<GateInfo, 16> kGateTable{{
    {GateKind::X, "X", 1, false, false},
    {GateKind::Y, "Y", 1, false, false},
    {GateKind::Z, "Z", 1, false, false},
    {GateKind::H, "H", 1, false, false},
    {GateKind::T, "T", 1, false, false},
    {GateKind::Tdag, "Tdag", 1, false, false},
    {GateKind::Rx, "Rx", 1, true, false},
    {GateKind::Ry, "Ry", 1, true, false},
    {GateKind::Rz, "Rz", 1, true, false},
    {GateKind::R90x, "R90x", 1, false, true},
    {GateKind::R90y, "R90y", 1, false, true},
    {GateKind::R90z, "R90z", 1, false, true},
    {GateKind::CNOT, "CNOT", 2, false, false},
    {GateKind::CZ, "CZ", 2, false, false},
    {GateKind::Toffoli, "Toffoli", 3, false, false},
    {GateKind::CCZ, "CCZ", 3, false, false},
}};

inline const GateInfo& gate_info(GateKind kind) {
  for (const auto& g : kGateTable)
    if (g.kind == kind) return g;
  throw Error("unknown gate kind");
}

inline GateKind parse_gate_kind(std::string_view name) {
  for (const auto& g : kGateTable)
    if (g.name == name) return g.kind;
  throw Error("unknown gate kind '" + std::string(name) + "'");
}

/// One gate of a circuit. Qubits are 1-based; for CNOT and Toffoli the last
/// listed qubit is the target. R90 gates carry a sign (+1 or -1) selecting the
/// rotation direction.
struct Gate {
  GateKind kind = GateKind::X;
  std::vector<int> qubits;
  std::optional<double> angle;
  int sign = 1;

  void validate() const {
    const auto& info = gate_info(kind);
    if (static_cast<int>(qubits.size()) != info.arity) {
      throw Error(std::string(info.name) + " expects " + std::to_string(info.arity) + " qubit(s)");
    }
    for (std::size_t i = 0; i < qubits.size(); ++i) {
      require_qubit(qubits[i]);
      for (std::size_t j = i + 1; j < qubits.size(); ++j) {
        if (qubits[i] == qubits[j]) throw Error(std::string(info.name) + " qubit indices must be distinct");
      }
    }
    if (info.has_angle != angle.has_value()) {
      throw Error(std::string(info.name) + (info.has_angle ? " requires an angle" : " takes no angle"));
    }
    if (angle && !std::isfinite(*angle)) throw Error("gate angle must be finite");
    if (sign != 1 && sign != -1) throw Error("gate sign must be +1 or -1");
  }

  std::string name() const { return std::string(gate_info(kind).name); }

  friend bool operator==(const Gate&, const Gate&) = default;
};

inline Gate make_gate(GateKind kind, std::vector<int> qubits, std::optional<double> angle = std::nullopt,
                      int sign = 1) {
  Gate g{kind, std::move(qubits), angle, sign};
  g.validate();
  return g;
}

namespace detail {

inline Mat8 controlled(const std::vector<int>& controls, const Mat2& op, int target) {
  Mat8 u = Mat8::Identity();
  const int tmask = qubit_mask(target);
  for (int col = 0; col < kDim; ++col) {
    bool on = true;
    for (int c : controls) on = on && qubit_bit(col, c);
    if (!on) continue;
    const int b = qubit_bit(col, target);
    const int base = col & ~tmask;
    u(base, col) = op(0, b);
    u(base | tmask, col) = op(1, b);
  }
  return u;
}

}  // namespace detail

inline Mat2 single_qubit_matrix(const Gate& g) {
  const double s = g.sign;
  switch (g.kind) {
    case GateKind::X: return pauli2(Axis::X);
    case GateKind::Y: return pauli2(Axis::Y);
    case GateKind::Z: return pauli2(Axis::Z);
    case GateKind::H: return (pauli2(Axis::X) + pauli2(Axis::Z)) / std::sqrt(2.0);
    case GateKind::T: {
      Mat2 m = Mat2::Identity();
      m(1, 1) = std::polar(1.0, kPi / 4);
      return m;
    }
    case GateKind::Tdag: {
      Mat2 m = Mat2::Identity();
      m(1, 1) = std::polar(1.0, -kPi / 4);
      return m;
    }
    case GateKind::Rx: return rotation2(Axis::X, *g.angle);
    case GateKind::Ry: return rotation2(Axis::Y, *g.angle);
    case GateKind::Rz: return rotation2(Axis::Z, *g.angle);
    case GateKind::R90x: return rotation2(Axis::X, s * kPi / 2);
    case GateKind::R90y: return rotation2(Axis::Y, s * kPi / 2);
    case GateKind::R90z: return rotation2(Axis::Z, s * kPi / 2);
    default: throw Error(g.name() + " is not a single-qubit gate");
  }
}

/// Textbook unitary of a gate on the three-qubit register.
inline Mat8 ideal_unitary(const Gate& g) {
  g.validate();
  switch (g.kind) {
    case GateKind::CNOT: return detail::controlled({g.qubits[0]}, pauli2(Axis::X), g.qubits[1]);
    case GateKind::CZ: return detail::controlled({g.qubits[0]}, pauli2(Axis::Z), g.qubits[1]);
    case GateKind::Toffoli: return detail::controlled({g.qubits[0], g.qubits[1]}, pauli2(Axis::X), g.qubits[2]);
    case GateKind::CCZ: return detail::controlled({g.qubits[0], g.qubits[1]}, pauli2(Axis::Z), g.qubits[2]);
    default: return embed(single_qubit_matrix(g), g.qubits[0]);
  }
}

/// Population permutation used for pseudo-pure preparation: |000> fixed and the
/// cycle |001> -> |010> -> ... -> |111> -> |001> on the other seven states.
inline Mat8 permutation_unitary() {
  Mat8 u = Mat8::Zero();
  u(0, 0) = 1.0;
  for (int i = 1; i < kDim; ++i) u(i == kDim - 1 ? 1 : i + 1, i) = 1.0;
  return u;
}

inline bool is_z_family(GateKind k) {
  return k == GateKind::Z || k == GateKind::T || k == GateKind::Tdag || k == GateKind::Rz || k == GateKind::R90z;
}

/// Rotation angle of a z-family gate (equal to the gate up to global phase).
inline double z_angle(const Gate& g) {
  switch (g.kind) {
    case GateKind::Z: return kPi;
    case GateKind::T: return kPi / 4;
    case GateKind::Tdag: return -kPi / 4;
    case GateKind::Rz: return *g.angle;
    case GateKind::R90z: return g.sign * kPi / 2;
    default: throw Error(g.name() + " is not a z rotation");
  }
}

inline void to_json(nlohmann::json& j, const Gate& g) {
  j = nlohmann::json{{"kind", g.name()}, {"qubits", g.qubits}};
  if (g.angle) j["angle"] = *g.angle;
  if (gate_info(g.kind).has_sign) j["sign"] = g.sign;
}

inline void from_json(const nlohmann::json& j, Gate& g) {
  if (!j.is_object()) throw Error("gate must be a JSON object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw Error("gate.kind: missing or not a string");
  try {
    g.kind = parse_gate_kind(j["kind"].get<std::string>());
  } catch (const Error& e) {
    throw Error(std::string("gate.kind: ") + e.what());
  }
  if (!j.contains("qubits") || !j["qubits"].is_array()) throw Error("gate.qubits: missing or not an array");
  g.qubits.clear();
  for (const auto& q : j["qubits"]) {
    if (!q.is_number_integer()) throw Error("gate.qubits: entries must be integers");
    g.qubits.push_back(q.get<int>());
  }
  g.angle.reset();
  if (j.contains("angle")) {
    if (!j["angle"].is_number()) throw Error("gate.angle: must be a number");
    g.angle = j["angle"].get<double>();
  }
  g.sign = 1;
  if (j.contains("sign")) {
    if (!j["sign"].is_number_integer()) throw Error("gate.sign: must be +1 or -1");
    g.sign = j["sign"].get<int>();
  }
  g.validate();
}

/// Ordered gate list plus per-qubit measurement flags.
struct Circuit {
  std::vector<Gate> gates;
  std::array<bool, 3> measure{true, true, true};

  void validate(bool runnable = false) const {
    for (const auto& g : gates) g.validate();
    if (runnable && !measure[0] && !measure[1] && !measure[2]) {
      throw Error("circuit.measure: at least one qubit must be measured");
    }
  }

  Circuit& add(GateKind kind, std::vector<int> qubits, std::optional<double> angle = std::nullopt, int sign = 1) {
    gates.push_back(make_gate(kind, std::move(qubits), angle, sign));
    return *this;
  }

  friend bool operator==(const Circuit&, const Circuit&) = default;
};

inline void to_json(nlohmann::json& j, const Circuit& c) {
  j = nlohmann::json{{"qubits", kQubits}, {"gates", c.gates}, {"measure", c.measure}};
}

inline void from_json(const nlohmann::json& j, Circuit& c) {
  if (!j.is_object()) throw Error("circuit must be a JSON object");
  if (j.contains("qubits") && (!j["qubits"].is_number_integer() || j["qubits"].get<int>() != kQubits)) {
    throw Error("circuit.qubits: must be 3");
  }
  c.gates.clear();
  if (j.contains("gates")) {
    if (!j["gates"].is_array()) throw Error("circuit.gates: must be an array");
    for (std::size_t i = 0; i < j["gates"].size(); ++i) {
      try {
        c.gates.push_back(j["gates"][i].get<Gate>());
      } catch (const std::exception& e) {
        throw Error("circuit.gates[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  c.measure = {true, true, true};
  if (j.contains("measure")) {
    const auto& m = j["measure"];
    if (!m.is_array() || m.size() != 3) throw Error("circuit.measure: must be an array of 3 booleans");
    for (int i = 0; i < 3; ++i) {
      if (!m[i].is_boolean()) throw Error("circuit.measure: must be an array of 3 booleans");
      c.measure[i] = m[i].get<bool>();
    }
  }
}

}  // namespace nmrq
