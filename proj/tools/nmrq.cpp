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

// Command-line front end: run, simulate, grape-synth, pps, hhl, spectra, serve.
// Exit codes: 0 success, 1 usage error, 2 execution failure.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "nmrq/circuits.hpp"
#include "nmrq/engine.hpp"
#include "nmrq/grape.hpp"
#include "nmrq/pps.hpp"
#include "nmrq/pulse_library.hpp"
#include "nmrq/readout.hpp"
#include "nmrq/service.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

struct Globals {
  std::string profile;
  std::uint64_t seed = 1;
  std::string out;
  std::string data_dir;
  bool ideal_pulses = false;
  std::string noise_file;
};

/// Error raised for bad user input discovered after parsing (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

template <class T>
T parse_file(const std::string& path, const char* what) {
  const auto j = read_json_file(path);
  try {
    return j.get<T>();
  } catch (const std::exception& e) {
    throw UsageError(std::string(what) + " " + path + ": " + e.what());
  }
}

nmrq::MoleculeSpec load_spec(const Globals& g) {
  if (g.profile.empty()) return nmrq::default_molecule();
  auto spec = parse_file<nmrq::MoleculeSpec>(g.profile, "profile");
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw UsageError("profile " + g.profile + ": " + e.what());
  }
  return spec;
}

nmrq::NoiseConfig load_noise(const Globals& g) {
  if (g.noise_file.empty()) return {};
  return parse_file<nmrq::NoiseConfig>(g.noise_file, "noise");
}

nmrq::EngineConfig engine_config(const Globals& g) {
  nmrq::EngineConfig c;
  c.spec = load_spec(g);
  if (!g.data_dir.empty()) c.data_dir = g.data_dir;
  c.ideal_pulses = g.ideal_pulses;
  c.library.seed = g.seed;
  return c;
}

nmrq::Circuit load_circuit(const std::string& path, const std::string& builtin) {
  if (!builtin.empty()) {
    try {
      return nmrq::find_builtin(nmrq::builtin_circuits(), builtin).circuit;
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (path.empty()) throw UsageError("a circuit file or --builtin is required");
  auto c = parse_file<nmrq::Circuit>(path, "circuit");
  try {
    c.validate(true);
  } catch (const std::exception& e) {
    throw UsageError("circuit " + path + ": " + e.what());
  }
  return c;
}

/// Writes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(g.out);
  if (!f) throw std::runtime_error("cannot write " + g.out);
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

int run_circuit(const Globals& g, const std::string& path, const std::string& builtin, nmrq::JobMode mode) {
  nmrq::Job job;
  job.id = "cli";
  job.circuit = load_circuit(path, builtin);
  job.mode = mode;
  job.noise = load_noise(g);
  job.seed = g.seed;
  job.created_at = nmrq::now_iso8601();
  const nmrq::Engine engine(engine_config(g));
  job = engine.run_job(job);
  emit(g, nlohmann::json(job).dump(2));
  if (job.status != nmrq::JobStatus::Done) {
    std::cerr << "error: " << job.error << '\n';
    return kExitFailure;
  }
  return 0;
}

int grape_synth(const Globals& g, const std::string& gate) {
  const auto spec = load_spec(g);
  const auto ref = nmrq::resolve_pulse(gate);
  const auto keys = nmrq::library_base_keys();
  const auto pos = std::find(keys.begin(), keys.end(), ref.base);
  if (pos == keys.end()) throw UsageError("unknown library gate '" + gate + "'");
  nmrq::LibraryOptions opt;
  opt.seed = g.seed;
  auto e = nmrq::PulseLibrary::synthesize_entry(ref.base, spec, opt, static_cast<std::size_t>(pos - keys.begin()));
  const auto waveform = ref.phase_shift == 0 ? e.waveform : e.waveform.phase_shifted(ref.phase_shift);
  std::filesystem::path out = g.out.empty() ? std::filesystem::path(gate + ".json") : std::filesystem::path(g.out);
  auto meta = out;
  meta.replace_extension(".meta.json");
  {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out.string());
    f << nlohmann::json(waveform).dump(2) << '\n';
  }
  {
    std::ofstream f(meta);
    if (!f) throw std::runtime_error("cannot write " + meta.string());
    f << nlohmann::json{{"gate", gate}, {"fidelity", e.fidelity}, {"iterations", e.iterations}, {"seed", e.seed}}.dump(2)
      << '\n';
  }
  std::cerr << gate << ": fidelity " << e.fidelity << " after " << e.iterations << " iterations -> " << out.string()
            << '\n';
  return 0;
}

int pps(const Globals& g, std::optional<int> cycles, std::optional<double> delay, bool pulsed) {
  const auto spec = load_spec(g);
  const auto noise = load_noise(g);
  nmrq::PpsConfig config = nmrq::default_pps(spec, noise.thermal_polarization).config;
  if (cycles) config.cycles = *cycles;
  if (delay) config.delay_s = *delay;
  config.use_ideal_permutation = !pulsed;
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  std::shared_ptr<const nmrq::PulseLibrary> lib;
  if (pulsed) lib = nmrq::Engine(engine_config(g)).library();
  const auto report = nmrq::prepare_pps(spec, config, noise, lib.get());
  emit(g, nlohmann::json(report).dump(2));
  return 0;
}

int hhl(const Globals& g, const std::string& mode, int repetitions, const std::string& problem_file) {
  nmrq::HhlProblem p = nmrq::demo_hhl_problem();
  if (!problem_file.empty()) p = parse_file<nmrq::HhlProblem>(problem_file, "problem");
  if (repetitions < 1) throw UsageError("--repetitions must be at least 1");
  const auto ref = nmrq::hhl_reference(p);
  nlohmann::json out{{"problem", p}, {"reference", {{"x", ref.x}, {"success_probability", ref.success_probability}}}};
  const auto m = nmrq::parse_mode(mode);
  if (m == nmrq::JobMode::Simulate) {
    out["mode"] = "simulate";
    out["solution"] = nmrq::simulate_hhl(p);
  } else {
    const nmrq::Engine engine(engine_config(g));
    const auto s = nmrq::emulate_hhl_repeated(engine, p, load_noise(g), repetitions, g.seed);
    out["mode"] = "emulate";
    out["runs"] = s.runs;
    out["mean"] = s.mean;
  }
  emit(g, out.dump(2));
  return 0;
}

int spectra(const Globals& g, const std::string& path, const std::string& builtin, int qubit) {
  if (qubit < 1 || qubit > 3) throw UsageError("--qubit must be 1, 2 or 3");
  const nmrq::Engine engine(engine_config(g));
  const auto outcome = engine.emulate(load_circuit(path, builtin), load_noise(g), g.seed);
  std::ostringstream os;
  nmrq::write_spectrum_csv(os, outcome.spectra[qubit - 1]);
  emit(g, os.str());
  return 0;
}

nmrq::HttpService* g_service = nullptr;

int serve(const Globals& g, const std::string& host, int port, unsigned workers) {
  auto config = engine_config(g);
  config.workers = workers;
  nmrq::ServiceConfig sc;
  sc.host = host;
  sc.port = port;
  nmrq::HttpService service(config, sc);
  try {
    service.bind();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "listening on http://" << host << ':' << service.port() << '\n';
  service.listen();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-qubit NMR emulator: simulation, GRAPE pulses, pseudo-pure states and spectral readout"};
  app.require_subcommand(1);
  // Global flags may follow the subcommand.
  app.fallthrough();
  app.set_config("--config", "", "Optional TOML/INI defaults; command-line flags take precedence");

  Globals g;
  app.add_option("--profile", g.profile, "MoleculeSpec JSON file (default: built-in molecule)");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output file (default: stdout)");
  app.add_option("--data-dir", g.data_dir, std::string("Data directory (default: $") + nmrq::kDataDirEnv + " or ./nmrq-data)");
  app.add_flag("--ideal-pulses", g.ideal_pulses, "Use exact gate unitaries instead of GRAPE waveforms");
  app.add_option("--noise", g.noise_file, "NoiseConfig JSON file");

  std::string circuit_path, builtin;
  auto* run = app.add_subcommand("run", "Emulate a circuit through the full pulse-level pipeline");
  run->add_option("circuit", circuit_path, "Circuit JSON file");
  run->add_option("--builtin", builtin, "Built-in circuit name instead of a file");

  auto* sim = app.add_subcommand("simulate", "Ideal statevector simulation of a circuit");
  sim->add_option("circuit", circuit_path, "Circuit JSON file");
  sim->add_option("--builtin", builtin, "Built-in circuit name instead of a file");

  std::string gate;
  auto* synth = app.add_subcommand("grape-synth", "Synthesize one library gate; writes the waveform and a .meta.json sidecar");
  synth->add_option("gate", gate, "Library gate name, e.g. X1, R90Y2, CNOT12, PERMUTE")->required();

  std::optional<int> cycles;
  std::optional<double> delay;
  bool pulsed = false;
  auto* pps_cmd = app.add_subcommand("pps", "Prepare a pseudo-pure state and print its report");
  pps_cmd->add_option("--cycles", cycles, "Permutation cycles N (default: tuned)");
  pps_cmd->add_option("--delay", delay, "Relaxation delay t in seconds (default: tuned)");
  pps_cmd->add_flag("--pulsed", pulsed, "Use the GRAPE permutation pulse instead of the exact matrix");

  std::string hhl_mode = "emulate", problem_file;
  int repetitions = 5;
  auto* hhl_cmd = app.add_subcommand("hhl", "Solve the 2x2 linear system with HHL");
  hhl_cmd->add_option("--mode", hhl_mode, "simulate or emulate")->check(CLI::IsMember({"simulate", "emulate", "run"}));
  hhl_cmd->add_option("--repetitions", repetitions, "Emulated repetitions");
  hhl_cmd->add_option("--problem", problem_file, "HhlProblem JSON file (default: built-in instance)");

  int qubit = 1;
  auto* spec_cmd = app.add_subcommand("spectra", "Emulate a circuit and write one qubit's readout spectrum as CSV");
  spec_cmd->add_option("circuit", circuit_path, "Circuit JSON file");
  spec_cmd->add_option("--builtin", builtin, "Built-in circuit name instead of a file");
  spec_cmd->add_option("--qubit", qubit, "Observed qubit (1-3)");

  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned workers = 0;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP job service");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
  serve_cmd->add_option("--workers", workers, "Worker threads (default: hardware parallelism)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return run_circuit(g, circuit_path, builtin, nmrq::JobMode::Emulate);
    if (*sim) return run_circuit(g, circuit_path, builtin, nmrq::JobMode::Simulate);
    if (*synth) return grape_synth(g, gate);
    if (*pps_cmd) return pps(g, cycles, delay, pulsed);
    if (*hhl_cmd) return hhl(g, hhl_mode, repetitions, problem_file);
    if (*spec_cmd) return spectra(g, circuit_path, builtin, qubit);
    if (*serve_cmd) return serve(g, host, port, workers);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
