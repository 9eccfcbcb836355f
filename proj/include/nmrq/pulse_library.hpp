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
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "nmrq/gates.hpp"
#include "nmrq/grape.hpp"
#include "nmrq/pulse.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

/// A playable pulse: a synthesized base waveform and a global phase advance.
/// Y-type and negative 90-degree pulses reuse the X-type waveforms this way.
struct PulseRef {
  std::string base;
  double phase_shift = 0.0;
};

namespace detail {

inline bool parse_suffix_qubit(const std::string& key, const std::string& prefix, int& q) {
  if (key.size() != prefix.size() + 1 || key.compare(0, prefix.size(), prefix) != 0) return false;
  q = key.back() - '0';
  return q >= 1 && q <= kQubits;
}

inline bool parse_pair(const std::string& key, const std::string& prefix, int& a, int& b) {
  if (key.size() != prefix.size() + 2 || key.compare(0, prefix.size(), prefix) != 0) return false;
  a = key[prefix.size()] - '0';
  b = key[prefix.size() + 1] - '0';
  return a >= 1 && a <= kQubits && b >= 1 && b <= kQubits && a != b;
}

}  // namespace detail

inline PulseRef resolve_pulse(const std::string& key) {
  int q = 0;
  if (detail::parse_suffix_qubit(key, "Y", q)) return {"X" + std::to_string(q), kPi / 2};
  if (detail::parse_suffix_qubit(key, "R90Y", q)) return {"R90X" + std::to_string(q), kPi / 2};
  if (detail::parse_suffix_qubit(key, "RM90X", q)) return {"R90X" + std::to_string(q), kPi};
  if (detail::parse_suffix_qubit(key, "RM90Y", q)) return {"R90X" + std::to_string(q), 3 * kPi / 2};
  return {key, 0.0};
}

/// Exact unitary a base library key stands for.
inline Mat8 library_target(const std::string& key) {
  int q = 0, a = 0, b = 0;
  if (detail::parse_suffix_qubit(key, "X", q)) return ideal_unitary(make_gate(GateKind::X, {q}));
  if (detail::parse_suffix_qubit(key, "H", q)) return ideal_unitary(make_gate(GateKind::H, {q}));
  if (detail::parse_suffix_qubit(key, "R90X", q)) return ideal_unitary(make_gate(GateKind::R90x, {q}));
  if (detail::parse_pair(key, "CNOT", a, b)) return ideal_unitary(make_gate(GateKind::CNOT, {a, b}));
  if (detail::parse_pair(key, "CZ", a, b) && a < b) return ideal_unitary(make_gate(GateKind::CZ, {a, b}));
  if (detail::parse_suffix_qubit(key, "TOFFOLI", q)) {
    std::vector<int> qs;
    for (int c = 1; c <= kQubits; ++c)
      if (c != q) qs.push_back(c);
    qs.push_back(q);
    return ideal_unitary(make_gate(GateKind::Toffoli, qs));
  }
  if (key == "CCZ") return ideal_unitary(make_gate(GateKind::CCZ, {1, 2, 3}));
  if (key == "PERMUTE") return permutation_unitary();
  throw Error("unknown library pulse '" + key + "'");
}

/// Every base waveform of the native set, in synthesis order.
inline std::vector<std::string> library_base_keys() {
  std::vector<std::string> keys;
  for (const char* p : {"X", "R90X", "H"})
    for (int q = 1; q <= kQubits; ++q) keys.push_back(p + std::to_string(q));
  for (int a = 1; a <= kQubits; ++a)
    for (int b = 1; b <= kQubits; ++b)
      if (a != b) keys.push_back("CNOT" + std::to_string(a) + std::to_string(b));
  keys.insert(keys.end(), {"CZ12", "CZ13", "CZ23", "TOFFOLI1", "TOFFOLI2", "TOFFOLI3", "CCZ", "PERMUTE"});
  return keys;
}

inline bool is_single_qubit_key(const std::string& key) {
  int q = 0;
  return detail::parse_suffix_qubit(key, "X", q) || detail::parse_suffix_qubit(key, "H", q) ||
         detail::parse_suffix_qubit(key, "R90X", q);
}

struct LibraryOptions {
  int single_segments = 100;
  double single_duration_s = 3e-3;
  int multi_segments = 500;
  /// Multi-qubit pulse length in units of 1/|J_min|.
  double multi_duration_j = 3.0;
  double single_target = 0.99995;
  double multi_target = 0.99999;
  int max_iterations = 2000;
  std::uint64_t seed = 1;
};

inline GrapeConfig grape_config_for(const std::string& key, const MoleculeSpec& spec, const LibraryOptions& opt,
                                    std::size_t index) {
  GrapeConfig c;
  c.max_iterations = opt.max_iterations;
  c.seed = opt.seed + index;
  if (is_single_qubit_key(key)) {
    c.segment_count = opt.single_segments;
    c.segment_duration_s = opt.single_duration_s / opt.single_segments;
    c.target_fidelity = opt.single_target;
  } else {
    double jmin = std::abs(spec.j_couplings_hz[0]);
    for (double j : spec.j_couplings_hz) jmin = std::min(jmin, std::abs(j));
    if (!(jmin > 0)) throw Error("multi-qubit pulses need nonzero J couplings");
    c.segment_count = opt.multi_segments;
    c.segment_duration_s = opt.multi_duration_j / jmin / opt.multi_segments;
    c.target_fidelity = opt.multi_target;
  }
  return c;
}

struct LibraryEntry {
  std::string key;
  Waveform waveform;
  double duration_s = 0.0;
  double fidelity = 1.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  bool converged = true;
  /// Noise-free propagator of the waveform with zero phase offsets.
  Mat8 propagator = Mat8::Identity();
};

/// Gate name to pulse map. Either ideal (exact unitaries, nominal durations)
/// or backed by GRAPE waveforms. Reads may run concurrently with inserts.
class PulseLibrary {
 public:
  PulseLibrary() : mutex_(std::make_unique<std::shared_mutex>()) {}
  PulseLibrary(PulseLibrary&&) noexcept = default;
  PulseLibrary& operator=(PulseLibrary&&) noexcept = default;

  static PulseLibrary ideal(const MoleculeSpec& spec = default_molecule(), const LibraryOptions& opt = {}) {
    PulseLibrary lib;
    lib.ideal_ = true;
    lib.spec_ = spec;
    std::size_t i = 0;
    for (const auto& key : library_base_keys()) {
      LibraryEntry e;
      e.key = key;
      const auto c = grape_config_for(key, spec, opt, i++);
      e.duration_s = c.segment_count * c.segment_duration_s;
      e.propagator = library_target(key);
      lib.entries_[key] = std::move(e);
    }
    return lib;
  }

  /// Synthesizes the requested base keys (all by default) in parallel.
  static PulseLibrary synthesize(const MoleculeSpec& spec, const LibraryOptions& opt = {},
                                 std::vector<std::string> keys = {}, unsigned threads = 0) {
    spec.validate();
    if (keys.empty()) keys = library_base_keys();
    const auto all = library_base_keys();
    PulseLibrary lib;
    lib.spec_ = spec;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<LibraryEntry> out(keys.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < keys.size();) {
        const auto pos = std::find(all.begin(), all.end(), keys[i]);
        if (pos == all.end()) throw Error("unknown library pulse '" + keys[i] + "'");
        out[i] = synthesize_entry(keys[i], spec, opt, static_cast<std::size_t>(pos - all.begin()));
      }
    };
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < std::min<std::size_t>(threads, keys.size()); ++t) {
      jobs.push_back(std::async(std::launch::async, worker));
    }
    for (auto& j : jobs) j.get();
    for (auto& e : out) lib.entries_[e.key] = std::move(e);
    return lib;
  }

  static LibraryEntry synthesize_entry(const std::string& key, const MoleculeSpec& spec, const LibraryOptions& opt,
                                       std::size_t index) {
    const auto config = grape_config_for(key, spec, opt, index);
    const auto r = nmrq::synthesize(library_target(key), spec, config);
    LibraryEntry e;
    e.key = key;
    e.waveform = r.waveform;
    e.duration_s = r.waveform.duration();
    e.fidelity = r.fidelity;
    e.iterations = r.iterations;
    e.seed = config.seed;
    e.converged = r.converged;
    e.propagator = propagator(r.waveform, build_drift_hamiltonian(spec));
    return e;
  }

  bool is_ideal() const { return ideal_; }
  const MoleculeSpec& spec() const { return spec_; }

  /// True when `key` (base or derived) can be played.
  bool has(const std::string& key) const {
    std::shared_lock lock(*mutex_);
    return entries_.count(resolve_pulse(key).base) > 0;
  }

  LibraryEntry entry(const std::string& key) const {
    std::shared_lock lock(*mutex_);
    const auto it = entries_.find(resolve_pulse(key).base);
    if (it == entries_.end()) throw Error("pulse library has no entry for '" + key + "'");
    return it->second;
  }

  void insert(LibraryEntry e) {
    std::unique_lock lock(*mutex_);
    entries_[e.key] = std::move(e);
  }

  std::vector<std::string> keys() const {
    std::shared_lock lock(*mutex_);
    std::vector<std::string> k;
    for (const auto& [key, _] : entries_) k.push_back(key);
    return k;
  }

  /// Gate to fidelity map.
  std::map<std::string, double> manifest() const {
    std::shared_lock lock(*mutex_);
    std::map<std::string, double> m;
    for (const auto& [key, e] : entries_) m[key] = e.fidelity;
    return m;
  }

  double duration(const std::string& key) const { return entry(key).duration_s; }

  /// Noise-free propagator of a pulse played with per-spin phase offsets.
  Mat8 unitary(const std::string& key, const PhaseOffsets& offsets = {}) const {
    const auto ref = resolve_pulse(key);
    const auto e = entry(ref.base);
    Vec8 z;
    for (int i = 0; i < kDim; ++i) {
      double ph = 0;
      for (int q = 1; q <= kQubits; ++q) ph += (offsets[q - 1] + ref.phase_shift) * (qubit_bit(i, q) ? -0.5 : 0.5);
      z(i) = std::polar(1.0, -ph);
    }
    return z.asDiagonal() * e.propagator * z.conjugate().asDiagonal();
  }

  /// Plays a pulse on rho. Unitary shortcut unless the noise model acts during
  /// the pulse; ideal entries are always applied as exact unitaries.
  DensityMatrix play(const DensityMatrix& rho, const std::string& key, const PhaseOffsets& offsets,
                     const NoiseConfig& noise, double start_s = 0.0) const {
    const bool pulse_noise = noise.drift_hz_per_s > 0 || (noise.relaxation_enabled && noise.relax_during_pulses);
    if (ideal_ || !pulse_noise) {
      const Mat8 u = unitary(key, offsets);
      return DensityMatrix::renormalized(u * rho.matrix() * u.adjoint());
    }
    const auto ref = resolve_pulse(key);
    const auto e = entry(ref.base);
    PhaseOffsets o = offsets;
    for (auto& x : o) x += ref.phase_shift;
    return evolve(rho, e.waveform, spec_, noise, o, start_s);
  }

  void save(const std::filesystem::path& dir) const {
    if (ideal_) throw Error("the ideal library has no waveforms to save");
    std::filesystem::create_directories(dir);
    std::shared_lock lock(*mutex_);
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [key, e] : entries_) {
      write_json(dir / (key + ".json"), nlohmann::json(e.waveform));
      write_json(dir / (key + ".meta.json"),
                 {{"gate", key}, {"fidelity", e.fidelity}, {"iterations", e.iterations}, {"seed", e.seed}});
      entries[key] = {{"fidelity", e.fidelity},
                      {"iterations", e.iterations},
                      {"seed", e.seed},
                      {"converged", e.converged},
                      {"file", key + ".json"}};
    }
    write_json(dir / "manifest.json", {{"spec", spec_}, {"entries", entries}});
  }

  /// Loads a saved library; fails if it was built for a different molecule.
  static PulseLibrary load(const std::filesystem::path& dir, const MoleculeSpec& spec) {
    const auto manifest = read_json(dir / "manifest.json");
    if (manifest.at("spec").get<MoleculeSpec>() != spec) throw Error("pulse library was built for another molecule");
    PulseLibrary lib;
    lib.spec_ = spec;
    const Mat8 h0 = build_drift_hamiltonian(spec);
    for (const auto& [key, meta] : manifest.at("entries").items()) {
      LibraryEntry e;
      e.key = key;
      e.waveform = read_json(dir / meta.at("file").get<std::string>()).get<Waveform>();
      e.duration_s = e.waveform.duration();
      e.fidelity = meta.at("fidelity").get<double>();
      e.iterations = meta.at("iterations").get<int>();
      e.seed = meta.at("seed").get<std::uint64_t>();
      e.converged = meta.value("converged", true);
      e.propagator = propagator(e.waveform, h0);
      lib.entries_[key] = std::move(e);
    }
    return lib;
  }

  /// Loads from `dir` when a matching library is there; otherwise synthesizes
  /// the full set and saves it.
  static PulseLibrary load_or_synthesize(const std::filesystem::path& dir, const MoleculeSpec& spec,
                                         const LibraryOptions& opt = {}) {
    if (std::filesystem::exists(dir / "manifest.json")) {
      try {
        auto lib = load(dir, spec);
        bool complete = true;
        for (const auto& k : library_base_keys()) complete = complete && lib.has(k);
        if (complete) return lib;
      } catch (const std::exception&) {
      }
    }
    auto lib = synthesize(spec, opt);
    lib.save(dir);
    return lib;
  }

 private:
  static void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    const auto tmp = p.string() + ".tmp";
    {
      std::ofstream f(tmp);
      if (!f) throw Error("cannot write " + p.string());
      f << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, p);
  }

  static nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw Error("cannot read " + p.string());
    return nlohmann::json::parse(f);
  }

  std::unique_ptr<std::shared_mutex> mutex_;
  std::map<std::string, LibraryEntry> entries_;
  MoleculeSpec spec_ = default_molecule();
  bool ideal_ = false;
};

}  // namespace nmrq
