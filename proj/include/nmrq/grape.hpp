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
#include <cstdint>
#include <random>
#include <vector>

#include "nmrq/linalg.hpp"
#include "nmrq/pulse.hpp"
#include "nmrq/spin_core.hpp"

namespace nmrq {

struct GrapeConfig {
  int segment_count = 100;
  double segment_duration_s = 1e-6;
  int max_iterations = 1000;
  double target_fidelity = 0.999;
  double step_size = 0.1;
  double amplitude_bound_hz = kDefaultFullScaleHz;
  double full_scale_hz = kDefaultFullScaleHz;
  std::uint64_t seed = 1;

  void validate() const {
    if (segment_count < 1) throw Error("segment_count must be at least 1");
    if (!(segment_duration_s > 0)) throw Error("segment_duration_s must be positive");
    if (!(target_fidelity > 0) || target_fidelity > 1) throw Error("target_fidelity must lie in (0, 1]");
    if (!(amplitude_bound_hz > 0) || amplitude_bound_hz > full_scale_hz) {
      throw Error("amplitude_bound_hz must lie in (0, full_scale_hz]");
    }
    if (max_iterations < 0) throw Error("max_iterations must be non-negative");
    if (!(step_size > 0)) throw Error("step_size must be positive");
  }
};

struct SynthesisResult {
  Waveform waveform;
  double fidelity = 0.0;
  /// Fidelity of the best waveform before it was put on the generator grid.
  double unquantized_fidelity = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct SegmentGradient {
  double d_amplitude = 0.0;  // per Hz
  double d_phase = 0.0;      // per rad
};

inline void require_unitary(const Mat8& u, const char* what) {
  if (unitarity_error(u) > 1e-8) throw Error(std::string(what) + " is not unitary");
}

/// |Tr(u^dagger v)|^2 / 64: one iff u and v agree up to a global phase.
inline double gate_fidelity(const Mat8& u, const Mat8& v) {
  require_unitary(u, "first operand");
  require_unitary(v, "second operand");
  return std::norm((u.adjoint() * v).trace()) / (kDim * kDim);
}

namespace detail {

/// Forward/backward sweep over a piecewise-constant control sequence.
/// Produces the overlap g = Tr(T^dagger U) and, when requested, the exact
/// derivative of |g|^2/64 with respect to every segment's amplitude and phase.
class GrapeEvaluator {
 public:
  GrapeEvaluator(const Mat8& target, const MoleculeSpec& spec)
      : target_dag_(target.adjoint()), h0_(build_drift_hamiltonian(spec)) {
    sx_ = Mat8::Zero();
    sy_ = Mat8::Zero();
    for (int q = 1; q <= kQubits; ++q) {
      sx_ += kTwoPi * spin(Axis::X, q);
      sy_ += kTwoPi * spin(Axis::Y, q);
    }
  }

  double fidelity(const Waveform& w) const {
    Mat8 u = Mat8::Identity();
    for (const auto& seg : w.segments) u = expm_hermitian(hamiltonian(seg), seg.duration_s) * u;
    return std::norm((target_dag_ * u).trace()) / (kDim * kDim);
  }

  double gradient(const Waveform& w, std::vector<SegmentGradient>& grad) const {
    const std::size_t n = w.segments.size();
    grad.assign(n, SegmentGradient{});
    if (n == 0) return std::norm(target_dag_.trace()) / (kDim * kDim);

    std::vector<Mat8> vecs(n), props(n);
    std::vector<Eigen::Matrix<double, 8, 1>> vals(n);
    Eigen::SelfAdjointEigenSolver<Mat8> es;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& seg = w.segments[j];
      es.compute(hamiltonian(seg));
      vecs[j] = es.eigenvectors();
      vals[j] = es.eigenvalues();
      Eigen::Matrix<cplx, 8, 1> ph;
      for (int i = 0; i < kDim; ++i) ph(i) = std::polar(1.0, -vals[j](i) * seg.duration_s);
      props[j] = vecs[j] * ph.asDiagonal() * vecs[j].adjoint();
    }
    // forward[j] = U_{j-1} ... U_1 (identity for j = 0).
    std::vector<Mat8> forward(n);
    forward[0] = Mat8::Identity();
    for (std::size_t j = 1; j < n; ++j) forward[j] = props[j - 1] * forward[j - 1];
    const Mat8 total = props[n - 1] * forward[n - 1];
    const cplx g = (target_dag_ * total).trace();

    Mat8 back = target_dag_;  // T^dagger U_N ... U_{j+1}
    for (std::size_t jj = n; jj-- > 0;) {
      const auto& seg = w.segments[jj];
      const Mat8& v = vecs[jj];
      const double dt = seg.duration_s;
      const Mat8 c = v.adjoint() * (forward[jj] * back) * v;
      const Mat8 kx = v.adjoint() * sx_ * v;
      const Mat8 ky = v.adjoint() * sy_ * v;
      const double cphi = std::cos(seg.phase_rad);
      const double sphi = std::sin(seg.phase_rad);
      cplx t_amp = 0.0;
      cplx t_phase = 0.0;
      for (int a = 0; a < kDim; ++a) {
        const double la = vals[jj](a);
        const cplx ea = std::polar(1.0, -la * dt);
        for (int b = 0; b < kDim; ++b) {
          const double lb = vals[jj](b);
          cplx gab;
          const double diff = la - lb;
          if (std::abs(diff * dt) < 1e-8) {
            gab = cplx(0, -dt) * ea;
          } else {
            gab = (ea - std::polar(1.0, -lb * dt)) / diff;
          }
          const cplx w_ab = c(b, a) * gab;
          t_amp += w_ab * (cphi * kx(a, b) + sphi * ky(a, b));
          t_phase += w_ab * (-sphi * kx(a, b) + cphi * ky(a, b));
        }
      }
      const double scale = 2.0 / (kDim * kDim);
      grad[jj].d_amplitude = scale * (std::conj(g) * t_amp).real();
      grad[jj].d_phase = scale * (std::conj(g) * t_phase).real() * seg.amplitude_hz;
      back = back * props[jj];
    }
    return std::norm(g) / (kDim * kDim);
  }

  /// Greedy search on the generator grid: each sweep visits the segments
  /// last to first and keeps a one-step amplitude or phase move whenever it
  /// raises the fidelity. Returns the final fidelity; `w` stays quantized.
  double grid_polish(Waveform& w, double amp_step, double bound, int sweeps) const {
    const std::size_t n = w.segments.size();
    const double phase_step = kTwoPi / kWaveformSteps;
    std::vector<Mat8> props(n), forward(n);
    for (std::size_t j = 0; j < n; ++j) props[j] = expm_hermitian(hamiltonian(w.segments[j]), w.segments[j].duration_s);
    double fid = 0.0;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      if (n == 0) break;
      forward[0] = Mat8::Identity();
      for (std::size_t j = 1; j < n; ++j) forward[j] = props[j - 1] * forward[j - 1];
      const double start = std::norm((target_dag_ * props[n - 1] * forward[n - 1]).trace()) / (kDim * kDim);
      fid = start;
      Mat8 back = target_dag_;
      for (std::size_t jj = n; jj-- > 0;) {
        PulseSegment& seg = w.segments[jj];
        const Mat8 m = forward[jj] * back;
        const PulseSegment original = seg;
        PulseSegment best = seg;
        Mat8 best_prop = props[jj];
        const std::array<std::pair<double, double>, 4> moves{
            {{amp_step, 0.0}, {-amp_step, 0.0}, {0.0, phase_step}, {0.0, -phase_step}}};
        for (const auto& [da, dp] : moves) {
          PulseSegment cand = original;
          cand.amplitude_hz = std::round((original.amplitude_hz + da) / amp_step) * amp_step;
          if (cand.amplitude_hz < 0 || cand.amplitude_hz > bound * (1 + 1e-12)) continue;
          if (dp != 0.0) {
            if (original.amplitude_hz == 0.0) continue;
            cand.phase_rad = wrap_phase(std::round((original.phase_rad + dp) / phase_step) * phase_step);
          }
          const Mat8 u = expm_hermitian(hamiltonian(cand), cand.duration_s);
          const double f = std::norm((m * u).trace()) / (kDim * kDim);
          if (f > fid) {
            fid = f;
            best = cand;
            best_prop = u;
          }
        }
        seg = best;
        props[jj] = best_prop;
        back = back * props[jj];
      }
      if (fid <= start * (1 + 1e-12)) break;
    }
    return fidelity(w);
  }

 private:
  Mat8 hamiltonian(const PulseSegment& seg) const {
    if (seg.amplitude_hz == 0.0) return h0_;
    const double c = seg.amplitude_hz * std::cos(seg.phase_rad);
    const double s = seg.amplitude_hz * std::sin(seg.phase_rad);
    return h0_ + c * sx_ + s * sy_;
  }

  Mat8 target_dag_;
  Mat8 h0_;
  Mat8 sx_;
  Mat8 sy_;
};

}  // namespace detail

/// Exact gradient of gate_fidelity(target, propagator(w)) per segment.
inline std::vector<SegmentGradient> fidelity_gradient(const Waveform& w, const Mat8& target,
                                                      const MoleculeSpec& spec) {
  std::vector<SegmentGradient> grad;
  detail::GrapeEvaluator(target, spec).gradient(w, grad);
  return grad;
}

/// Gradient-ascent pulse engineering over per-segment (amplitude, phase).
///
/// Each segment's amplitude is bound * sin(u), which keeps |amplitude| within
/// the bound without clipping; a negative value is the same drive with the
/// phase advanced by pi. Search directions come from a limited-memory BFGS
/// history of past gradients and every step passes an Armijo backtracking
/// test, so the fidelity never decreases between accepted iterates.
inline SynthesisResult synthesize(const Mat8& target, const MoleculeSpec& spec, const GrapeConfig& config) {
  config.validate();
  require_unitary(target, "target");
  const detail::GrapeEvaluator eval(target, spec);
  const int n = config.segment_count;
  const int dim = 2 * n;
  const double bound = config.amplitude_bound_hz;

  auto make_waveform = [&](const Eigen::VectorXd& x) {
    Waveform w;
    w.segments.reserve(n);
    for (int j = 0; j < n; ++j) {
      const double a = std::sin(x(2 * j));
      const double phi = a < 0 ? x(2 * j + 1) + kPi : x(2 * j + 1);
      w.segments.push_back({config.segment_duration_s, std::abs(a) * bound, wrap_phase(phi)});
    }
    return w;
  };

  SynthesisResult result;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  // A zero waveform already at target (e.g. identity with no drift) wins outright.
  const double zero_fid = eval.fidelity(make_waveform(x));
  if (zero_fid >= config.target_fidelity) {
    result.waveform = quantize(make_waveform(x), config.full_scale_hz);
    result.unquantized_fidelity = zero_fid;
    result.fidelity = eval.fidelity(result.waveform);
    result.converged = result.fidelity >= config.target_fidelity;
    return result;
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> amp(0.0, 0.05);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  auto random_start = [&](Eigen::VectorXd& p) {
    for (int j = 0; j < n; ++j) {
      p(2 * j) = std::asin(amp(rng));
      p(2 * j + 1) = phase(rng);
    }
  };

  std::vector<SegmentGradient> sg;
  auto gradient_at = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
    const Waveform w = make_waveform(p);
    const double f = eval.gradient(w, sg);
    g.resize(dim);
    for (int j = 0; j < n; ++j) {
      const double a = std::sin(p(2 * j));
      const double sign = a < 0 ? -1.0 : 1.0;
      g(2 * j) = sign * sg[j].d_amplitude * bound * std::cos(p(2 * j));
      g(2 * j + 1) = sg[j].d_phase;
    }
    return f;
  };

  // One ascent from x. Stops at the target, when no step is accepted, or when
  // it stalls far from the target (a trap worth abandoning for a new start).
  constexpr int kMemory = 20;
  constexpr int kStallWindow = 200;
  constexpr double kStallFidelity = 0.99;
  auto ascend = [&](Eigen::VectorXd& x, int budget, double& fid) {
    std::vector<Eigen::VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;
    Eigen::VectorXd grad, next_grad, dir, trial;
    fid = gradient_at(x, grad);
    double window_start = fid;
    int it = 0;
    for (; it < budget && fid < config.target_fidelity; ++it) {
      if (it > 0 && it % kStallWindow == 0) {
        if (fid < kStallFidelity && fid - window_start < 0.05 * (1 - window_start)) {
          break;
        }
        window_start = fid;
      }
      // Two-loop recursion on the ascent problem (minimizing -F).
      dir = grad;
      std::vector<double> alpha(s_hist.size());
      for (std::size_t k = s_hist.size(); k-- > 0;) {
        alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
        dir -= alpha[k] * y_hist[k];
      }
      if (!s_hist.empty()) {
        dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      } else {
        dir *= config.step_size / std::max(grad.cwiseAbs().maxCoeff(), 1e-12);
      }
      for (std::size_t k = 0; k < s_hist.size(); ++k) {
        const double b = rho_hist[k] * y_hist[k].dot(dir);
        dir += (alpha[k] - b) * s_hist[k];
      }
      double slope = dir.dot(grad);
      if (!(slope > 0)) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        dir = grad * (config.step_size / std::max(grad.cwiseAbs().maxCoeff(), 1e-12));
        slope = dir.dot(grad);
      }
      if (slope < 1e-300) break;

      double step = 1.0;
      bool accepted = false;
      double f_trial = fid;
      for (int tries = 0; tries < 30; ++tries) {
        trial = x + step * dir;
        f_trial = eval.fidelity(make_waveform(trial));
        if (f_trial > fid && f_trial >= fid + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        if (s_hist.empty()) break;
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      const double f_new = gradient_at(trial, next_grad);
      // Curvature pair for the minimization of -F: y = grad(-F)_new - grad(-F)_old.
      Eigen::VectorXd s_k = trial - x;
      Eigen::VectorXd y_k = grad - next_grad;
      const double sy = s_k.dot(y_k);
      if (sy > 1e-12 * s_k.norm() * y_k.norm()) {
        if (static_cast<int>(s_hist.size()) == kMemory) {
          s_hist.erase(s_hist.begin());
          y_hist.erase(y_hist.begin());
          rho_hist.erase(rho_hist.begin());
        }
        s_hist.push_back(std::move(s_k));
        y_hist.push_back(std::move(y_k));
        rho_hist.push_back(1.0 / sy);
      }
      x = trial;
      grad = next_grad;
      fid = f_new;
    }
    return it;
  };

  // Restarts from fresh random guesses share the iteration budget; the best
  // point found wins.
  double fid = -1.0;
  int it = 0;
  while (true) {
    Eigen::VectorXd start(dim);
    random_start(start);
    double f = 0.0;
    const int used = ascend(start, config.max_iterations - it, f);
    it += used;
    if (f > fid) {
      fid = f;
      x = start;
    }
    if (fid >= config.target_fidelity || it >= config.max_iterations || used == 0) break;
  }

  result.iterations = it;
  result.unquantized_fidelity = fid;
  result.waveform = quantize(make_waveform(x), config.full_scale_hz);
  result.fidelity = eval.fidelity(result.waveform);
  if (result.fidelity < result.unquantized_fidelity) {
    // Rounding onto the generator grid costs the most on long pulses; recover
    // it with one-step moves that stay on the grid.
    Waveform polished = result.waveform;
    const double f = eval.grid_polish(polished, config.full_scale_hz / kWaveformSteps, bound, 20);
    if (f > result.fidelity) {
      result.waveform = std::move(polished);
      result.fidelity = f;
    }
  }
  result.converged = result.fidelity >= config.target_fidelity;
  return result;
}

}  // namespace nmrq
