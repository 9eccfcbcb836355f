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

#include <memory>
#include <string>
#include <thread>

// Eigen must be parsed before httplib: <resolv.h> defines a `_res` macro
// that collides with Eigen parameter names.
#include "nmrq/circuits.hpp"
#include "nmrq/engine.hpp"
#include "nmrq/pps.hpp"

#include "httplib.h"
#include "json.hpp"

namespace nmrq {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Start loading the GRAPE library in the background at startup.
  bool preload_library = true;
};

/// HTTP front end of a JobService. All bodies are JSON.
class HttpService {
 public:
  HttpService(EngineConfig engine, ServiceConfig config)
      : jobs_(std::make_unique<JobService>(std::move(engine))), config_(std::move(config)) {
    // SO_REUSEADDR only: with SO_REUSEPORT a second server could silently
    // share a port that is already in use.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    routes();
  }

  ~HttpService() { stop(); }

  /// Binds the port (0 picks a free one); throws if binding fails.
  int bind() {
    if (config_.port == 0) {
      port_ = server_.bind_to_any_port(config_.host);
    } else {
      port_ = server_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (port_ < 0) throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    if (config_.preload_library) {
      preload_ = std::thread([this] {
        try {
          jobs_->engine().library();
        } catch (const std::exception&) {
        }
      });
    }
    return port_;
  }

  /// Serves until stop(); call after bind().
  void listen() { server_.listen_after_bind(); }

  /// bind() and serve on a background thread.
  int start() {
    const int p = bind();
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
    return p;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
    if (preload_.joinable()) preload_.join();
  }

  int port() const { return port_; }
  JobService& jobs() { return *jobs_; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    nlohmann::json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
  }

  void routes() {
    server_.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const std::exception& e) {
        return send_error(res, 400, std::string("request body is not valid JSON: ") + e.what());
      }
      if (!body.is_object()) return send_error(res, 400, "request body must be a JSON object");
      if (!body.contains("circuit")) return send_error(res, 400, "missing circuit", "circuit");
      Circuit circuit;
      try {
        circuit = body["circuit"].get<Circuit>();
        circuit.validate(true);
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::string field = "circuit";
        if (msg.rfind("circuit.", 0) == 0) {
          // "circuit.gates[2]: gate.kind: ..." names the field circuit.gates[2].kind.
          const auto colon = msg.find(':');
          field = msg.substr(0, colon);
          const std::string inner = ": gate.";
          if (msg.compare(colon, inner.size(), inner) == 0) {
            const auto start = colon + inner.size();
            field += "." + msg.substr(start, msg.find(':', start) - start);
          }
        }
        return send_error(res, 400, msg, field);
      }
      JobMode mode = JobMode::Simulate;
      try {
        mode = parse_mode(body.value("mode", std::string("simulate")));
      } catch (const std::exception& e) {
        return send_error(res, 400, e.what(), "mode");
      }
      NoiseConfig noise;
      try {
        if (body.contains("noise") && !body["noise"].is_null()) noise = body["noise"].get<NoiseConfig>();
      } catch (const std::exception& e) {
        return send_error(res, 400, e.what(), "noise");
      }
      std::uint64_t seed = 1;
      if (body.contains("seed")) {
        if (!body["seed"].is_number_unsigned()) return send_error(res, 400, "seed must be a non-negative integer", "seed");
        seed = body["seed"].get<std::uint64_t>();
      }
      const Job job = jobs_->submit(std::move(circuit), mode, noise, seed);
      res.set_header("Location", "/api/jobs/" + job.id);
      send_json(res, 202, {{"id", job.id}, {"status", to_string(job.status)}});
    });

    server_.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto json = jobs_->store().get_json(req.matches[1]);
      if (!json) return send_error(res, 404, "no job with id " + std::string(req.matches[1]));
      res.status = 200;
      res.set_content(*json, "application/json; charset=utf-8");
    });

    server_.Get("/api/jobs", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& j : jobs_->store().list()) {
        list.push_back({{"id", j.id}, {"mode", to_string(j.mode)}, {"status", to_string(j.status)}, {"created_at", j.created_at}});
      }
      send_json(res, 200, list);
    });

    server_.Get("/api/system", [this](const httplib::Request&, httplib::Response& res) {
      const auto& engine = jobs_->engine();
      nlohmann::json body = engine.spec();
      body["library"] = library_json();
      try {
        const auto tuned = default_pps(engine.spec());
        body["pps_defaults"] = {{"cycles", tuned.config.cycles},
                                {"delay_s", tuned.config.delay_s},
                                {"eta", tuned.eta},
                                {"uniformity", tuned.uniformity}};
      } catch (const std::exception& e) {
        body["pps_defaults"] = {{"error", e.what()}};
      }
      send_json(res, 200, body);
    });

    server_.Get("/api/library", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, library_json());
    });

    server_.Get("/api/builtins", [](const httplib::Request&, httplib::Response& res) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& b : builtin_circuits()) {
        list.push_back({{"name", b.name}, {"description", b.description}, {"circuit", b.circuit}, {"expected", b.expected}});
      }
      send_json(res, 200, list);
    });

    server_.Get(R"(/api/spectra/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto job = jobs_->store().get(id);
      if (!job) return send_error(res, 404, "no job with id " + id);
      if (job->mode != JobMode::Emulate) return send_error(res, 404, "job " + id + " is not an emulate job");
      if (job->status != JobStatus::Done) return send_error(res, 409, "job " + id + " is " + to_string(job->status));
      const auto spectra = jobs_->spectra(id);
      if (!spectra) return send_error(res, 404, "no spectra stored for job " + id);
      send_json(res, 200, *spectra);
    });
  }

  nlohmann::json library_json() const {
    const auto& engine = jobs_->engine();
    if (!engine.library_ready()) return {{"status", "loading"}, {"ideal", engine.config().ideal_pulses}, {"gates", nlohmann::json::object()}};
    const auto lib = engine.library();
    return {{"status", "ready"}, {"ideal", lib->is_ideal()}, {"gates", lib->manifest()}};
  }

  std::unique_ptr<JobService> jobs_;
  ServiceConfig config_;
  httplib::Server server_;
  std::thread thread_;
  std::thread preload_;
  int port_ = -1;
};

}  // namespace nmrq
