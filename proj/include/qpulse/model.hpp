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

// Physical model of the cascaded (virtual cavity -> atom) system and its
// time-dependent generators:
//
//   H(t)  = detuning |e><e| + (i sqrt(gamma)/2) (g a^+ c - g* a c^+)
//   L0(t) = g* a + sqrt(gamma) c,          c = |1><e|
//   L1    = sqrt(kappa) |1><e|             (unobserved side loss, kappa > 0)

#include "qpulse/core.hpp"
#include "qpulse/field.hpp"
#include "qpulse/pulse.hpp"

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace qpulse {

enum class DetectionScheme { kCounting, kHomodyne };

inline std::string_view scheme_name(DetectionScheme s) {
  return s == DetectionScheme::kCounting ? "counting" : "homodyne";
}

inline DetectionScheme parse_scheme(std::string_view s) {
  if (s == "counting") return DetectionScheme::kCounting;
  if (s == "homodyne") return DetectionScheme::kHomodyne;
  throw ConfigError("unknown detection scheme '" + std::string(s) + "'");
}

struct Detection {
  DetectionScheme scheme = DetectionScheme::kCounting;
  double phase = 0.0;  // homodyne local-oscillator phase, radians
};

struct ModelConfig {
  double gamma = 1.0;
  double kappa = 0.0;
  double detuning = 0.0;
  PulseKind pulse = GaussianPulse{};
  FieldSpec field = FockField{1};
  AtomLevel atom_init = AtomLevel::kGround1;
  int cavity_dim = 0;  // 0: smallest dimension that holds the field
  double t_final = 10.0;
  double dt = 1e-3;
  Detection detection;
  double cutoff_epsilon = kDefaultCutoffEpsilon;
};

inline int resolved_cavity_dim(const ModelConfig& c) {
  return c.cavity_dim > 0 ? c.cavity_dim : minimal_cavity_dim(c.field);
}

inline void validate(const ModelConfig& c) {
  if (!(c.gamma > 0.0)) throw ConfigError("gamma must be > 0");
  if (!(c.kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(c.cutoff_epsilon > 0.0)) throw ConfigError("cutoff_epsilon must be > 0");
  if (!std::isfinite(c.detuning)) throw ConfigError("detuning must be finite");
  const double end = pulse_support_end(c.pulse);
  if (c.t_final < end - 1e-9 * std::max(1.0, end))
    throw ConfigError("t_final (" + std::to_string(c.t_final) + ") ends before the pulse support (" +
                      std::to_string(end) + ")");
  (void)TimeGrid(c.dt, c.t_final);
  (void)HilbertLayout(resolved_cavity_dim(c));
  (void)field_amplitudes(c.field, resolved_cavity_dim(c));
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Stable key = value description of the resolved model; the config hash is
/// computed over this text.
inline std::string canonical_text(const ModelConfig& c) {
  using detail::fmt17;
  std::string s;
  auto kv = [&s](std::string_view k, const std::string& v) {
    s.append(k).append(" = ").append(v).push_back('\n');
  };
  kv("gamma", fmt17(c.gamma));
  kv("kappa", fmt17(c.kappa));
  kv("detuning", fmt17(c.detuning));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPulse>) {
          kv("pulse.kind", "gaussian");
          kv("pulse.t0", fmt17(p.t0));
          kv("pulse.width", fmt17(p.width));
        } else if constexpr (std::is_same_v<T, FlatTopPulse>) {
          kv("pulse.kind", "flattop");
          kv("pulse.start", fmt17(p.start));
          kv("pulse.stop", fmt17(p.stop));
        } else {
          kv("pulse.kind", "sampled");
          kv("pulse.samples", std::to_string(p.times.size()));
          std::string body;
          for (std::size_t i = 0; i < p.times.size(); ++i)
            body += fmt17(p.times[i]) + ' ' + fmt17(p.amplitudes[i].real()) + ' ' + fmt17(p.amplitudes[i].imag()) + ';';
          kv("pulse.data", body);
        }
      },
      c.pulse);
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FockField>) {
          kv("field.kind", "fock");
          kv("field.n", std::to_string(f.n));
        } else if constexpr (std::is_same_v<T, CoherentField>) {
          kv("field.kind", "coherent");
          kv("field.alpha", fmt17(f.alpha.real()));
          kv("field.alpha_imag", fmt17(f.alpha.imag()));
        } else {
          kv("field.kind", "amplitudes");
          std::string body;
          for (const auto& a : f.amplitudes) body += fmt17(a.real()) + ' ' + fmt17(a.imag()) + ';';
          kv("field.amplitudes", body);
        }
      },
      c.field);
  kv("atom_init", std::string(atom_level_name(c.atom_init)));
  kv("cavity_dim", std::to_string(resolved_cavity_dim(c)));
  kv("dt", fmt17(c.dt));
  kv("t_final", fmt17(c.t_final));
  kv("detection.scheme", std::string(scheme_name(c.detection.scheme)));
  kv("detection.phase", fmt17(c.detection.phase));
  kv("cutoff_epsilon", fmt17(c.cutoff_epsilon));
  return s;
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::string config_hash(const ModelConfig& c) { return hash_hex(fnv1a64(canonical_text(c))); }

struct Generators {
  cplx g = 0.0;
  SparseOperator H;
  SparseOperator L0;
  std::vector<SparseOperator> extra;  // unmonitored channels
};

/// A validated configuration with its pulse, coupling table and joint-space
/// operators resolved. Immutable and shareable between threads.
class Model {
 public:
  explicit Model(ModelConfig config)
      : config_(std::move(config)),
        layout_((validate(config_), resolved_cavity_dim(config_))),
        grid_(config_.dt, config_.t_final),
        pulse_(config_.pulse, grid_),
        schedule_(pulse_, config_.cutoff_epsilon) {
    const auto sparse = [](const Operator& m) -> SparseOperator { return m.sparseView(); };
    const Operator a = embed(annihilation_operator(layout_.cavity_dim), Subsystem::kCavity, layout_);
    const Operator c = embed(atomic_transition(AtomLevel::kExcited, AtomLevel::kGround1), Subsystem::kAtom, layout_);
    a_ = sparse(a);
    c_ = sparse(c);
    ad_c_ = sparse(a.adjoint() * c);
    a_cd_ = sparse(a * c.adjoint());
    number_ = sparse(a.adjoint() * a);
    excited_ = sparse(c.adjoint() * c);
    sqrt_gamma_ = std::sqrt(config_.gamma);
  }

  const ModelConfig& config() const { return config_; }
  const HilbertLayout& layout() const { return layout_; }
  const TimeGrid& grid() const { return grid_; }
  const PulseShape& pulse() const { return pulse_; }
  const CouplingSchedule& schedule() const { return schedule_; }

  const SparseOperator& a() const { return a_; }
  const SparseOperator& c() const { return c_; }
  const SparseOperator& number_operator() const { return number_; }
  const SparseOperator& excited_projector() const { return excited_; }

  Generators generators(cplx g) const {
    Generators out;
    out.g = g;
    out.L0 = std::conj(g) * a_ + sqrt_gamma_ * c_;
    out.H = config_.detuning * excited_ + (kI * sqrt_gamma_ * 0.5) * (g * ad_c_ - std::conj(g) * a_cd_);
    out.H.prune(cplx{0.0});
    out.L0.prune(cplx{0.0});
    if (config_.kappa > 0.0) out.extra.push_back(std::sqrt(config_.kappa) * c_);
    return out;
  }

  /// Generators at step k, half in {0, 1, 2} selects t_k + half*dt/2.
  Generators generators_at(int step, int half = 0) const { return generators(schedule_.at(step, half)); }

  DensityMatrix initial_state() const { return qpulse::initial_state(config_.field, config_.atom_init, layout_); }

 private:
  ModelConfig config_;
  HilbertLayout layout_;
  TimeGrid grid_;
  PulseShape pulse_;
  CouplingSchedule schedule_;
  SparseOperator a_, c_, ad_c_, a_cd_, number_, excited_;
  double sqrt_gamma_ = 1.0;
};

/// Generators at an arbitrary time t (g from the tabulated schedule when t is a
/// half-step point, otherwise evaluated directly).
inline Generators build_generators(const Model& model, double t) {
  const double pos = 2.0 * t / model.grid().dt;
  if (std::abs(pos - std::round(pos)) < 1e-9) return model.generators(model.schedule().at_time(t));
  return model.generators(coupling_g(model.pulse(), t, model.config().cutoff_epsilon));
}

/// Upper estimate of <L0^+ L0> over the run: (|u| sqrt(n_max) + sqrt(gamma))^2,
/// using that the cavity holds n * remaining_norm photons.
inline double detection_rate_bound(const Model& model) {
  const double n = max_photon_number(model.config().field);
  const double sg = std::sqrt(model.config().gamma);
  const auto& grid = model.grid();
  double best = 0.0;
  for (int k = 0; k <= 2 * grid.steps; ++k) {
    const double u = std::abs(model.pulse().amplitude(0.5 * k * grid.dt));
    best = std::max(best, std::pow(u * std::sqrt(n) + sg, 2));
  }
  return best;
}

inline constexpr double kJumpProbabilityWarn = 0.1;
inline constexpr double kJumpProbabilityFail = 0.5;

/// Largest "round" dt (1, 2, 5 x 10^k) keeping the estimated jump probability
/// per step at or below the warning threshold.
inline double suggested_dt(double rate_bound) {
  if (!(rate_bound > 0.0)) return 1.0;
  const double target = kJumpProbabilityWarn / rate_bound;
  const double decade = std::pow(10.0, std::floor(std::log10(target)));
  for (double m : {5.0, 2.0, 1.0})
    if (m * decade <= target) return m * decade;
  return decade;
}

}  // namespace qpulse
