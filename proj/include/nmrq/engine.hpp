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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "nmrq/circuits.hpp"
#include "nmrq/compiler.hpp"
#include "nmrq/pps.hpp"
#include "nmrq/pulse_library.hpp"
#include "nmrq/readout.hpp"

namespace nmrq {

inline constexpr const char* kDataDirEnv = "NMRQ_DATA_DIR";

inline std::filesystem::path default_data_dir() {
  if (const char* d = std::getenv(kDataDirEnv); d && *d) return d;
  return "nmrq-data";
}

/// Sums over unmeasured qubits. Output index bits follow the measured qubits in
/// ascending order, the lowest-numbered being most significant.
inline std::vector<double> marginalize(const Real8& p, const std::array<bool, 3>& measure) {
  std::vector<int> kept;
  for (int q = 1; q <= kQubits; ++q)
    if (measure[q - 1]) kept.push_back(q);
  if (kept.empty()) throw Error("at least one qubit must be measured");
  std::vector<double> out(std::size_t{1} << kept.size(), 0.0);
  for (int i = 0; i < kDim; ++i) {
    std::size_t j = 0;
    for (int q : kept) j = (j << 1) | static_cast<std::size_t>(qubit_bit(i, q));
    out[j] += p[i];
  }
  return out;
}

enum class JobMode { Simulate, Emulate };
enum class JobStatus { Queued, Running, Done, Failed };

inline std::string to_string(JobMode m) { return m == JobMode::Simulate ? "simulate" : "emulate"; }

inline JobMode parse_mode(const std::string& s) {
  if (s == "simulate") return JobMode::Simulate;
  if (s == "emulate" || s == "run") return JobMode::Emulate;
  throw Error("mode must be 'simulate' or 'emulate'");
}

inline std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "failed";
}

inline JobStatus parse_status(const std::string& s) {
  if (s == "queued") return JobStatus::Queued;
  if (s == "running") return JobStatus::Running;
  if (s == "done") return JobStatus::Done;
  if (s == "failed") return JobStatus::Failed;
  throw Error("unknown job status '" + s + "'");
}

struct JobResult {
  /// Marginal distribution over the measured qubits.
  std::vector<double> probabilities;
  /// Full reconstructed distribution over |000>..|111>.
  Real8 full_probabilities{};
  JobMode mode = JobMode::Simulate;
  double duration_s = 0.0;           // wall clock
  double schedule_duration_s = 0.0;  // emulated pulse time
  std::map<std::string, double> pulse_fidelities;
  std::optional<double> pps_eta;
};

struct Job {
  std::string id;
  Circuit circuit;
  JobMode mode = JobMode::Simulate;
  NoiseConfig noise;
  JobStatus status = JobStatus::Queued;
  std::optional<JobResult> result;
  std::string error;
  std::string created_at;
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const JobResult& r) {
  j = nlohmann::json{{"probabilities", r.probabilities},
                     {"full_probabilities", r.full_probabilities},
                     {"mode", to_string(r.mode)},
                     {"duration_s", r.duration_s},
                     {"schedule_duration_s", r.schedule_duration_s},
                     {"pulse_fidelities", r.pulse_fidelities}};
  if (r.pps_eta) j["pps_eta"] = *r.pps_eta;
}

inline void from_json(const nlohmann::json& j, JobResult& r) {
  r.probabilities = j.at("probabilities").get<std::vector<double>>();
  r.full_probabilities = j.at("full_probabilities").get<Real8>();
  r.mode = parse_mode(j.at("mode").get<std::string>());
  r.duration_s = j.value("duration_s", 0.0);
  r.schedule_duration_s = j.value("schedule_duration_s", 0.0);
  r.pulse_fidelities = j.value("pulse_fidelities", std::map<std::string, double>{});
  if (j.contains("pps_eta")) r.pps_eta = j["pps_eta"].get<double>();
}

inline void to_json(nlohmann::json& j, const Job& job) {
  j = nlohmann::json{{"id", job.id},
                     {"circuit", job.circuit},
                     {"mode", to_string(job.mode)},
                     {"noise", job.noise},
                     {"status", to_string(job.status)},
                     {"created_at", job.created_at},
                     {"seed", job.seed}};
  if (job.result) j["result"] = *job.result;
  if (!job.error.empty()) j["error"] = job.error;
}

inline void from_json(const nlohmann::json& j, Job& job) {
  job.id = j.at("id").get<std::string>();
  job.circuit = j.at("circuit").get<Circuit>();
  job.mode = parse_mode(j.at("mode").get<std::string>());
  job.noise = j.value("noise", nlohmann::json::object()).get<NoiseConfig>();
  job.status = parse_status(j.at("status").get<std::string>());
  job.created_at = j.value("created_at", "");
  job.seed = j.value("seed", std::uint64_t{1});
  job.error = j.value("error", "");
  job.result.reset();
  if (j.contains("result")) job.result = j["result"].get<JobResult>();
}

/// Append-only job log: one JSON-lines file per UTC day plus an in-memory
/// index. The last record of an id wins when the log is replayed.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir_))
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          Job job = nlohmann::json::parse(line).get<Job>();
          const auto id = job.id;
          if (!index_.count(id)) order_.push_back(id);
          index_[id] = Entry{std::move(job), line};
        } catch (const std::exception&) {
          // A torn final line from a crash is skipped.
        }
      }
    }
    for (auto& [id, e] : index_) {
      if (e.job.status == JobStatus::Queued || e.job.status == JobStatus::Running) {
        e.job.status = JobStatus::Failed;
        e.job.error = "interrupted by service restart";
        e.json = nlohmann::json(e.job).dump();
        append_line(e.json);
      }
    }
  }

  /// Records a job state; done and failed jobs are final.
  void put(const Job& job) {
    std::unique_lock lock(mutex_);
    auto it = index_.find(job.id);
    if (it != index_.end() && (it->second.job.status == JobStatus::Done || it->second.job.status == JobStatus::Failed)) {
      throw Error("job " + job.id + " is already final");
    }
    const auto line = nlohmann::json(job).dump();
    append_line(line);
    if (it == index_.end()) order_.push_back(job.id);
    index_[job.id] = Entry{job, line};
  }

  std::optional<Job> get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second.job;
  }

  /// Serialized record, byte-identical across fetches once final.
  std::optional<std::string> get_json(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second.json;
  }

  std::vector<Job> list() const {
    std::shared_lock lock(mutex_);
    std::vector<Job> out;
    for (const auto& id : order_) out.push_back(index_.at(id).job);
    return out;
  }

  bool contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return index_.count(id) > 0;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Entry {
    Job job;
    std::string json;
  };

  void append_line(const std::string& line) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char name[32];
    std::strftime(name, sizeof name, "%Y-%m-%d.jsonl", &tm);
    std::ofstream out(dir_ / name, std::ios::app);
    if (!out) throw Error("cannot append to job store in " + dir_.string());
    out << line << '\n';
    out.flush();
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> index_;
  std::vector<std::string> order_;
};

struct EngineConfig {
  MoleculeSpec spec = default_molecule();
  std::filesystem::path data_dir = default_data_dir();
  LibraryOptions library;
  /// Use exact gate unitaries for the pulse-level run instead of GRAPE waveforms.
  bool ideal_pulses = false;
  ReadoutConfig readout;
  unsigned workers = 0;
};

struct EmulationOutcome {
  Real8 probabilities{};
  DensityMatrix final_state;  // logical frame
  DensityMatrix physical_state;
  FrameState frame;
  PpsReport pps;
  Calibration calibration;
  std::array<Spectrum, 3> spectra;
  double schedule_duration_s = 0.0;
  std::map<std::string, double> pulse_fidelities;
};

/// Runs circuits in either mode. The GRAPE library is loaded (or synthesized
/// and cached under the data directory) on first use.
class Engine {
 public:
  explicit Engine(EngineConfig config) : config_(std::move(config)) { config_.spec.validate(); }

  const EngineConfig& config() const { return config_; }
  const MoleculeSpec& spec() const { return config_.spec; }

  std::filesystem::path library_dir() const {
    const auto& o = config_.library;
    std::ostringstream key;
    key.precision(17);
    key << nlohmann::json(config_.spec).dump() << '|' << o.single_segments << '|' << o.single_duration_s << '|'
        << o.multi_segments << '|' << o.multi_duration_j << '|' << o.single_target << '|' << o.multi_target << '|'
        << o.max_iterations << '|' << o.seed;
    const auto h = std::hash<std::string>{}(key.str());
    std::ostringstream os;
    os << "library-" << std::hex << h;
    return config_.data_dir / os.str();
  }

  bool library_ready() const { return library_ready_.load(); }

  std::shared_ptr<const PulseLibrary> library() const {
    std::lock_guard lock(library_mutex_);
    if (!library_) {
      if (config_.ideal_pulses) {
        library_ = std::make_shared<PulseLibrary>(PulseLibrary::ideal(config_.spec, config_.library));
      } else {
        library_ = std::make_shared<PulseLibrary>(
            PulseLibrary::load_or_synthesize(library_dir(), config_.spec, config_.library));
      }
      library_ready_ = true;
    }
    return library_;
  }

  void set_library(std::shared_ptr<const PulseLibrary> lib) {
    std::lock_guard lock(library_mutex_);
    library_ = std::move(lib);
    library_ready_ = library_ != nullptr;
  }

  /// Pseudo-pure preparation with tuned (N, t) and the pulsed permutation.
  PpsReport prepare(const NoiseConfig& noise) const {
    auto tuned = default_pps(config_.spec, noise.thermal_polarization).config;
    tuned.use_ideal_permutation = false;
    const auto lib = library();
    return prepare_pps(config_.spec, tuned, noise, lib.get());
  }

  /// PPS, reference calibration, compiled pulse-level run and spectral readout.
  EmulationOutcome emulate(const Circuit& circuit, const NoiseConfig& noise, std::uint64_t seed = 1) const {
    noise.validate();
    const auto lib = library();
    std::mt19937_64 rng(seed);
    EmulationOutcome out;
    out.pps = prepare(noise);
    Readout readout(*lib, config_.readout);
    out.calibration = readout.calibrate(out.pps.state, noise, &rng);
    const Schedule schedule = compile_circuit(circuit, *lib);
    out.physical_state = execute_schedule(out.pps.state, schedule, *lib, noise);
    out.frame = schedule.final_frame;
    out.final_state = to_logical(out.physical_state, out.frame);
    const auto r = readout.run(out.physical_state, noise, out.frame, &rng, schedule.duration());
    out.probabilities = r.probabilities;
    for (int q = 0; q < 3; ++q) out.spectra[q] = r.experiments[q].spectrum;
    out.schedule_duration_s = schedule.duration();
    for (const auto& a : schedule.actions)
      if (a.kind == ScheduleAction::Kind::PulsePlay) out.pulse_fidelities[a.pulse] = lib->entry(a.pulse).fidelity;
    return out;
  }

  /// Executes a job to completion; errors mark it failed.
  Job run_job(Job job, std::array<Spectrum, 3>* spectra = nullptr) const {
    const auto start = std::chrono::steady_clock::now();
    try {
      job.circuit.validate(true);
      JobResult r;
      r.mode = job.mode;
      if (job.mode == JobMode::Simulate) {
        r.full_probabilities = ideal_probabilities(job.circuit);
      } else {
        const auto e = emulate(job.circuit, job.noise, job.seed);
        r.full_probabilities = e.probabilities;
        r.schedule_duration_s = e.schedule_duration_s;
        r.pulse_fidelities = e.pulse_fidelities;
        r.pps_eta = e.pps.eta;
        if (spectra) *spectra = e.spectra;
      }
      r.probabilities = marginalize(r.full_probabilities, job.circuit.measure);
      r.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      job.result = r;
      job.status = JobStatus::Done;
      job.error.clear();
    } catch (const std::exception& e) {
      job.status = JobStatus::Failed;
      job.result.reset();
      job.error = e.what();
    }
    return job;
  }

 private:
  EngineConfig config_;
  mutable std::mutex library_mutex_;
  mutable std::shared_ptr<const PulseLibrary> library_;
  mutable std::atomic<bool> library_ready_{false};
};

// HHL end to end ------------------------------------------------------------

struct HhlRun {
  Real8 probabilities{};
  SignResult sign;
  HhlSolution solution;
};

inline HhlSolution simulate_hhl(const HhlProblem& p) {
  const Circuit c = hhl_circuit(p);
  const Vec8 psi = simulate_statevector(c);
  Real8 prob{};
  for (int i = 0; i < kDim; ++i) prob[i] = std::norm(psi(i));
  const int sign = (psi(1) * std::conj(psi(5))).real() >= 0 ? 1 : -1;
  return extract_solution(prob, sign, hhl_reference(p));
}

/// Emulated HHL: the circuit run with spectral readout, then the sign
/// experiment on the same output state.
inline HhlRun emulate_hhl(const Engine& engine, const HhlProblem& p, const NoiseConfig& noise, std::uint64_t seed) {
  const auto main = engine.emulate(hhl_circuit(p), noise, seed);
  const auto lib = engine.library();
  const Readout readout(*lib, engine.config().readout, main.calibration);
  std::mt19937_64 rng(seed + 7919);
  HhlRun run;
  run.probabilities = main.probabilities;
  run.sign = sign_experiment(main.physical_state, readout, noise, main.frame, &rng);
  run.solution = extract_solution(run.probabilities, run.sign.sign, hhl_reference(p));
  return run;
}

struct HhlSummary {
  std::vector<HhlRun> runs;
  HhlSolution mean;
};

/// Repeated emulation; the mean vector is the normalized average of the runs.
inline HhlSummary emulate_hhl_repeated(const Engine& engine, const HhlProblem& p, const NoiseConfig& noise, int repetitions,
                                       std::uint64_t seed) {
  if (repetitions < 1) throw Error("repetitions must be at least 1");
  HhlSummary s;
  std::vector<std::future<HhlRun>> futures;
  for (int r = 0; r < repetitions; ++r) {
    futures.push_back(std::async(std::launch::async, [&, r] { return emulate_hhl(engine, p, noise, seed + 101 * r); }));
  }
  double x0 = 0, x1 = 0, succ = 0;
  for (auto& f : futures) {
    s.runs.push_back(f.get());
    x0 += s.runs.back().solution.x_normalized[0];
    x1 += s.runs.back().solution.x_normalized[1];
    succ += s.runs.back().solution.success_probability;
  }
  const double n = std::hypot(x0, x1);
  const auto ref = hhl_reference(p);
  HhlSolution m;
  m.x_normalized = {x0 / n, x1 / n};
  m.sign = m.x_normalized[0] * m.x_normalized[1] >= 0 ? 1 : -1;
  m.success_probability = succ / repetitions;
  const double dot = std::clamp(m.x_normalized[0] * ref.x[0] + m.x_normalized[1] * ref.x[1], -1.0, 1.0);
  m.angle_error_deg = std::acos(dot) * 180.0 / kPi;
  const double t_ref = ref.x[1] / ref.x[0];
  m.tangent_rel_error = std::abs(m.x_normalized[1] / m.x_normalized[0] - t_ref) / std::abs(t_ref);
  s.mean = m;
  return s;
}

inline void to_json(nlohmann::json& j, const HhlRun& r) {
  j = nlohmann::json{{"probabilities", r.probabilities},
                     {"sign", r.sign.sign},
                     {"sign_below_noise_floor", r.sign.below_noise_floor},
                     {"solution", r.solution}};
}

// Worker pool ---------------------------------------------------------------

/// Fixed-size FIFO thread pool.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned workers) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    for (unsigned i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(std::function<void()> task) {
    {
      std::lock_guard lock(mutex_);
      tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  std::size_t size() const { return threads_.size(); }

 private:
  void loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
        if (stop_ && tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      task();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  std::vector<std::thread> threads_;
  bool stop_ = false;
};

inline std::string now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Store, engine and pool together: submit returns at once, jobs run on the pool.
class JobService {
 public:
  explicit JobService(EngineConfig config)
      : engine_(std::move(config)),
        store_(engine_.config().data_dir / "jobs"),
        spectra_dir_(engine_.config().data_dir / "spectra"),
        pool_(engine_.config().workers) {
    std::filesystem::create_directories(spectra_dir_);
  }

  Engine& engine() { return engine_; }
  const JobStore& store() const { return store_; }

  Job submit(Circuit circuit, JobMode mode, NoiseConfig noise, std::uint64_t seed = 1) {
    circuit.validate(true);
    noise.validate();
    Job job;
    job.id = new_id();
    job.circuit = std::move(circuit);
    job.mode = mode;
    job.noise = noise;
    job.seed = seed;
    job.created_at = now_iso8601();
    store_.put(job);
    pool_.submit([this, job]() mutable {
      job.status = JobStatus::Running;
      store_.put(job);
      std::array<Spectrum, 3> spectra;
      Job done = engine_.run_job(job, &spectra);
      if (done.status == JobStatus::Done && done.mode == JobMode::Emulate) save_spectra(done.id, spectra);
      store_.put(done);
    });
    return job;
  }

  /// Blocks until the job is final or the timeout passes.
  std::optional<Job> wait(const std::string& id, std::chrono::milliseconds timeout) const {
    const auto until = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto j = store_.get(id);
      if (!j) return std::nullopt;
      if (j->status == JobStatus::Done || j->status == JobStatus::Failed) return j;
      if (std::chrono::steady_clock::now() > until) return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }

  std::optional<nlohmann::json> spectra(const std::string& id) const {
    std::ifstream in(spectra_dir_ / (id + ".json"));
    if (!in) return std::nullopt;
    return nlohmann::json::parse(in);
  }

 private:
  std::string new_id() {
    static std::atomic<std::uint64_t> counter{0};
    std::random_device rd;
    std::ostringstream os;
    os << "j" << std::hex << std::chrono::system_clock::now().time_since_epoch().count() << '-' << counter++ << '-'
       << (rd() & 0xffff);
    return os.str();
  }

  void save_spectra(const std::string& id, const std::array<Spectrum, 3>& spectra) {
    nlohmann::json out{{"id", id}, {"spectra", nlohmann::json::array()}};
    for (int q = 0; q < 3; ++q) {
      const auto& s = spectra[q];
      std::vector<double> re(s.size()), im(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        re[i] = s.amplitudes[i].real();
        im[i] = s.amplitudes[i].imag();
      }
      out["spectra"].push_back({{"qubit", q + 1},
                                {"frequencies_hz", s.frequencies_hz},
                                {"real", re},
                                {"imag", im},
                                {"lines_hz", line_positions(engine_.spec(), q + 1)}});
    }
    const auto path = spectra_dir_ / (id + ".json");
    std::ofstream(path.string() + ".tmp") << out.dump();
    std::filesystem::rename(path.string() + ".tmp", path);
  }

  Engine engine_;
  JobStore store_;
  std::filesystem::path spectra_dir_;
  WorkerPool pool_;
};

}  // namespace nmrq
