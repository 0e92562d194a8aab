/*
   Copyright 2026 The qpulse Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Pulse envelopes u(t) and the virtual-cavity out-coupling
//
//   g(t) = u*(t) / sqrt(1 - int_0^t |u(t')|^2 dt')
//
// that makes a one-sided cavity emit exactly the pulse u(t). All quadrature
// is the trapezoid rule on the integrator grid.

#include "qpulse/core.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace qpulse {

/// Uniform grid t_k = k * dt, k = 0..steps.
struct TimeGrid {
  double dt = 1e-3;
  int steps = 0;

  TimeGrid() = default;
  TimeGrid(double step, double t_final) : dt(step) {
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(t_final > 0.0)) throw ConfigError("t_final must be > 0");
    const double ratio = t_final / dt;
    steps = static_cast<int>(std::llround(ratio));
    if (steps < 1 || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
      throw ConfigError("t_final must be an integer multiple of dt");
  }

  double time(int k) const { return k * dt; }
  double t_final() const { return steps * dt; }
};

struct GaussianPulse {
  double t0 = 5.0;
  double width = 1.0;  // standard deviation of |u|^2
};

/// Constant amplitude on [start, stop].
struct FlatTopPulse {
  double start = 0.0;
  double stop = 10.0;
};

/// Piecewise-linear interpolation of complex samples.
struct SampledPulse {
  std::vector<double> times;
  std::vector<cplx> amplitudes;
};

using PulseKind = std::variant<GaussianPulse, FlatTopPulse, SampledPulse>;

inline double pulse_support_end(const PulseKind& kind) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPulse>) return p.t0 + 5.0 * p.width;
        else if constexpr (std::is_same_v<T, FlatTopPulse>) return p.stop;
        else return p.times.empty() ? 0.0 : p.times.back();
      },
      kind);
}

namespace detail {

inline cplx raw_envelope(const PulseKind& kind, double t) {
  return std::visit(
      [t](const auto& p) -> cplx {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPulse>) {
          const double x = t - p.t0;
          return std::pow(2.0 * std::numbers::pi * p.width * p.width, -0.25) *
                 std::exp(-x * x / (4.0 * p.width * p.width));
        } else if constexpr (std::is_same_v<T, FlatTopPulse>) {
          const double len = p.stop - p.start;
          const double v = 1.0 / std::sqrt(len);
          const double tol = 1e-12 * std::max(1.0, std::abs(len));
          return (t >= p.start - tol && t <= p.stop + tol) ? v : 0.0;
        } else {
          const auto& ts = p.times;
          if (ts.empty() || t < ts.front() || t > ts.back()) return 0.0;
          auto it = std::upper_bound(ts.begin(), ts.end(), t);
          if (it == ts.end()) return p.amplitudes.back();
          const auto hi = static_cast<std::size_t>(it - ts.begin());
          const std::size_t lo = hi - 1;
          const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
          return (1.0 - w) * p.amplitudes[lo] + w * p.amplitudes[hi];
        }
      },
      kind);
}

}  // namespace detail

/// A pulse envelope normalized on the simulation window [0, t_final].
class PulseShape {
 public:
  PulseShape(PulseKind kind, const TimeGrid& grid) : kind_(std::move(kind)), grid_(grid) {
    validate();
    cumulative_.assign(grid_.steps + 1, 0.0);
    double acc = 0.0;
    double prev = std::norm(detail::raw_envelope(kind_, 0.0));
    for (int k = 1; k <= grid_.steps; ++k) {
      const double cur = std::norm(detail::raw_envelope(kind_, grid_.time(k)));
      acc += 0.5 * grid_.dt * (prev + cur);
      cumulative_[k] = acc;
      prev = cur;
    }
    if (!(acc > 0.0)) throw ConfigError("pulse has zero norm on the simulation window");
    scale_ = 1.0 / std::sqrt(acc);
    for (double& c : cumulative_) c /= acc;
    cumulative_.back() = 1.0;
  }

  const PulseKind& kind() const { return kind_; }
  const TimeGrid& grid() const { return grid_; }

  /// u(t); zero outside the window.
  cplx amplitude(double t) const {
    if (t < 0.0 || t > grid_.t_final() * (1.0 + 1e-12)) return 0.0;
    return scale_ * detail::raw_envelope(kind_, t);
  }

  /// int_0^t |u|^2 by trapezoid on the grid, with a partial panel for off-grid t.
  double cumulative_norm(double t) const {
    if (t <= 0.0) return 0.0;
    const double pos = t / grid_.dt;
    if (pos >= grid_.steps) return 1.0;
    int k = static_cast<int>(std::floor(pos));
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) return cumulative_[static_cast<int>(nearest)];
    const double tk = grid_.time(k);
    const double partial = 0.5 * (t - tk) * (std::norm(amplitude(tk)) + std::norm(amplitude(t)));
    return std::min(1.0, cumulative_[k] + partial);
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, GaussianPulse>) {
            if (!(p.width > 0.0)) throw ConfigError("Gaussian pulse width must be > 0");
          } else if constexpr (std::is_same_v<T, FlatTopPulse>) {
            if (!(p.stop > p.start) || p.start < 0.0) throw ConfigError("flat-top pulse needs 0 <= start < stop");
          } else {
            if (p.times.size() < 2 || p.times.size() != p.amplitudes.size())
              throw ConfigError("sampled pulse needs >= 2 (time, amplitude) samples");
            for (std::size_t i = 1; i < p.times.size(); ++i)
              if (!(p.times[i] > p.times[i - 1])) throw ConfigError("sampled pulse times must increase");
          }
        },
        kind_);
  }

  PulseKind kind_;
  TimeGrid grid_;
  double scale_ = 1.0;
  std::vector<double> cumulative_;
};

/// 1 - int_0^t |u|^2, clamped to [0, 1].
inline double remaining_norm(const PulseShape& u, double t) {
  return std::clamp(1.0 - u.cumulative_norm(t), 0.0, 1.0);
}

inline constexpr double kDefaultCutoffEpsilon = 1e-8;

/// Virtual cavity out-coupling; exactly zero once the remaining norm drops to
/// cutoff_epsilon or below.
inline cplx coupling_g(const PulseShape& u, double t, double cutoff_epsilon = kDefaultCutoffEpsilon) {
  if (!(cutoff_epsilon > 0.0)) throw ConfigError("cutoff_epsilon must be > 0");
  const double rem = remaining_norm(u, t);
  if (rem <= cutoff_epsilon) return 0.0;
  return std::conj(u.amplitude(t)) / std::sqrt(rem);
}

/// g(t) tabulated at half steps, which is what RK4 needs.
class CouplingSchedule {
 public:
  CouplingSchedule(const PulseShape& u, double cutoff_epsilon) : grid_(u.grid()), cutoff_(cutoff_epsilon) {
    if (!(cutoff_epsilon > 0.0)) throw ConfigError("cutoff_epsilon must be > 0");
    samples_.resize(2 * grid_.steps + 1);
    bool cut = false;
    for (int j = 0; j <= 2 * grid_.steps; ++j) {
      const double t = 0.5 * j * grid_.dt;
      if (!cut && remaining_norm(u, t) <= cutoff_) {
        cut = true;
        cutoff_time_ = t;
      }
      samples_[j] = cut ? cplx{0.0} : coupling_g(u, t, cutoff_);
    }
  }

  const TimeGrid& grid() const { return grid_; }
  double cutoff_epsilon() const { return cutoff_; }
  /// First tabulated time at which g is cut off (t_final-or-later if never).
  double cutoff_time() const { return cutoff_time_; }

  /// g at t_k + half * dt/2, half in {0, 1, 2}.
  cplx at(int step, int half = 0) const { return samples_.at(2 * step + half); }

  /// g at an arbitrary tabulated time (must be a half-step multiple).
  cplx at_time(double t) const {
    const long j = std::lround(2.0 * t / grid_.dt);
    if (j < 0) return samples_.front();
    if (j >= static_cast<long>(samples_.size())) return 0.0;
    return samples_[static_cast<std::size_t>(j)];
  }

 private:
  TimeGrid grid_;
  double cutoff_;
  double cutoff_time_ = std::numeric_limits<double>::infinity();
  std::vector<cplx> samples_;
};

/// Reads "time real [imag]" lines; '#' starts a comment. Renormalizes, with a
/// warning on stderr if the file norm is off by more than 1e-3.
inline SampledPulse load_sampled_pulse(std::istream& in, std::ostream* warn = &std::cerr) {
  SampledPulse p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::vector<double> cols;
    double v;
    while (ls >> v) cols.push_back(v);
    if (!ls.eof()) throw ConfigError("pulse file line " + std::to_string(lineno) + ": not numeric");
    if (cols.empty()) continue;
    if (cols.size() != 2 && cols.size() != 3)
      throw ConfigError("pulse file line " + std::to_string(lineno) + ": expected 2 or 3 columns");
    p.times.push_back(cols[0]);
    p.amplitudes.emplace_back(cols[1], cols.size() == 3 ? cols[2] : 0.0);
  }
  if (p.times.size() < 2) throw ConfigError("pulse file needs at least two samples");
  double norm = 0.0;
  for (std::size_t i = 1; i < p.times.size(); ++i)
    norm += 0.5 * (p.times[i] - p.times[i - 1]) * (std::norm(p.amplitudes[i]) + std::norm(p.amplitudes[i - 1]));
  if (!(norm > 0.0)) throw ConfigError("pulse file has zero norm");
  if (std::abs(norm - 1.0) > 1e-3 && warn)
    *warn << "warning: sampled pulse norm " << norm << " renormalized to 1\n";
  for (auto& a : p.amplitudes) a /= std::sqrt(norm);
  return p;
}

inline SampledPulse load_sampled_pulse(const std::string& path, std::ostream* warn = &std::cerr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open pulse file '" + path + "'");
  return load_sampled_pulse(in, warn);
}

}  // namespace qpulse
