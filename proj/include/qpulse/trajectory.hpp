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

// Master-equation integration and measurement-record generation by photon
// counting or homodyne unraveling. The simulated "true" state is renormalized
// after every step.

#include "qpulse/blocks.hpp"
#include "qpulse/propagate.hpp"
#include "qpulse/random.hpp"
#include "qpulse/record.hpp"

#include <algorithm>
#include <iostream>
#include <limits>
#include <utility>
#include <vector>

namespace qpulse {

/// Worst-case numbers seen while propagating.
struct Diagnostics {
  double max_trace_drift = 0.0;       // per deterministic step
  double max_hermiticity = 0.0;       // relative to the trace
  double min_eigenvalue = std::numeric_limits<double>::infinity();  // relative to the trace
  double max_jump_probability = 0.0;
  int validations = 0;

  void merge(const Diagnostics& o) {
    max_trace_drift = std::max(max_trace_drift, o.max_trace_drift);
    max_hermiticity = std::max(max_hermiticity, o.max_hermiticity);
    min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
    max_jump_probability = std::max(max_jump_probability, o.max_jump_probability);
    validations += o.validations;
  }
};

struct TrajectoryOptions {
  CountingEngine engine = CountingEngine::kAuto;
  std::vector<int> state_steps;  // capture the normalized dense state at these grid indices
  int validate_every = 0;        // positivity check cadence in steps, 0 = never
  std::ostream* warnings = &std::cerr;
};

/// Observables on the grid t_0..t_steps, plus the record that produced them.
struct TrajectoryResult {
  MeasurementRecord record;
  std::vector<double> excited;          // P_e
  std::vector<double> photons;          // <a^+ a>
  std::vector<double> integrated_rate;  // int_0^t <L0^+ L0> dt'
  std::vector<std::pair<int, DensityMatrix>> states;
  Diagnostics diagnostics;

  int clicks() const { return record.clicks(); }
};

namespace detail {

template <class Prop>
void check_state(const Prop& prop, const typename Prop::State& s, Diagnostics& d, bool full) {
  const double tr = prop.trace(s);
  d.max_hermiticity = std::max(d.max_hermiticity, prop.hermiticity(s) / tr);
  if (full) {
    d.min_eigenvalue = std::min(d.min_eigenvalue, prop.min_eigenvalue(s) / tr);
    ++d.validations;
  }
}

inline bool wants_state(const std::vector<int>& steps, int k) {
  return std::binary_search(steps.begin(), steps.end(), k);
}

inline void warn_jump_probability(double p, Diagnostics& d, std::ostream* warn, double dt, double rate_bound) {
  if (p > kJumpProbabilityWarn && d.max_jump_probability <= kJumpProbabilityWarn && warn)
    *warn << "warning: jump probability per step reached " << p << " (> " << kJumpProbabilityWarn
          << "); suggested dt <= " << suggested_dt(rate_bound) << " (current " << dt << ")\n";
  d.max_jump_probability = std::max(d.max_jump_probability, p);
}

template <class Prop>
TrajectoryResult counting_trajectory(const Prop& prop, RandomStream rng, std::uint64_t seed,
                                     const TrajectoryOptions& opt) {
  const Model& model = prop.model();
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt;
  TrajectoryResult res;
  res.record.scheme = DetectionScheme::kCounting;
  res.record.dt = dt;
  res.record.steps = grid.steps;
  res.record.seed = seed;
  res.record.config_hash = config_hash(model.config());
  res.excited.reserve(grid.steps + 1);
  res.photons.reserve(grid.steps + 1);
  res.integrated_rate.reserve(grid.steps + 1);
  std::vector<int> wanted = opt.state_steps;
  std::sort(wanted.begin(), wanted.end());

  auto s = prop.initial();
  s.scale(1.0 / prop.trace(s));
  double rate = prop.emission(s, 0);
  double bound = -1.0;
  auto observe = [&](int k) {
    res.excited.push_back(prop.excited(s));
    res.photons.push_back(prop.photons(s));
    if (wanted.size() && wants_state(wanted, k)) {
      DensityMatrix rho = prop.to_dense(s);
      rho.normalized = true;
      res.states.emplace_back(k, std::move(rho));
    }
    const bool full = opt.validate_every > 0 && k % opt.validate_every == 0;
    check_state(prop, s, res.diagnostics, full);
  };
  res.integrated_rate.push_back(0.0);
  observe(0);
  for (int k = 0; k < grid.steps; ++k) {
    const double p = rate * dt;
    if (p > kJumpProbabilityFail)
      throw NumericalError("jump probability per step " + std::to_string(p) + " at t = " +
                           std::to_string(grid.time(k)) + " exceeds " + std::to_string(kJumpProbabilityFail) +
                           "; reduce dt");
    if (p > kJumpProbabilityWarn && bound < 0.0) bound = detection_rate_bound(model);
    warn_jump_probability(p, res.diagnostics, opt.warnings, dt, bound);
    if (rng.uniform() < p) {
      prop.jump(s, k);
      res.record.click_steps.push_back(k);
    } else {
      prop.nojump(s, k);
    }
    const double tr = prop.trace(s);
    if (!(tr > 0.0)) throw NumericalError("state collapsed to zero trace at step " + std::to_string(k));
    s.scale(1.0 / tr);
    const double next = prop.emission(s, k + 1);
    res.integrated_rate.push_back(res.integrated_rate.back() + 0.5 * dt * (rate + next));
    rate = next;
    observe(k + 1);
  }
  return res;
}

}  // namespace detail

/// Photon-counting trajectory: per step a click with probability
/// <L0^+ L0> dt (then rho -> L0 rho L0^+), otherwise one no-jump step; the
/// state is renormalized after each step.
inline TrajectoryResult simulate_counting_trajectory(const Model& model, RandomStream rng, std::uint64_t seed,
                                                     const TrajectoryOptions& opt = {}) {
  if (model.config().detection.scheme != DetectionScheme::kCounting)
    throw ConfigError("simulate_counting_trajectory: detection scheme is not counting");
  CountingEngine engine = opt.engine;
  if (engine == CountingEngine::kAuto)
    engine = (opt.state_steps.empty() || is_excitation_diagonal(model.initial_state())) ? CountingEngine::kBlocks
                                                                                        : CountingEngine::kDense;
  if (engine == CountingEngine::kDense) return detail::counting_trajectory(DensePropagator(model), rng, seed, opt);
  return with_block_propagator(model, [&](const auto& prop) {
    return detail::counting_trajectory(prop, rng, seed, opt);
  });
}

inline TrajectoryResult simulate_counting_trajectory(const Model& model, std::uint64_t seed,
                                                     const TrajectoryOptions& opt = {}) {
  return simulate_counting_trajectory(model, RandomStream(seed), seed, opt);
}

/// Homodyne trajectory: dY from the current normalized state, then the
/// linear stochastic step and renormalization.
inline TrajectoryResult simulate_homodyne_trajectory(const Model& model, RandomStream rng, std::uint64_t seed,
                                                     const TrajectoryOptions& opt = {}) {
  if (model.config().detection.scheme != DetectionScheme::kHomodyne)
    throw ConfigError("simulate_homodyne_trajectory: detection scheme is not homodyne");
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt;
  const double phase = model.config().detection.phase;
  TrajectoryResult res;
  res.record.scheme = DetectionScheme::kHomodyne;
  res.record.dt = dt;
  res.record.steps = grid.steps;
  res.record.phase = phase;
  res.record.seed = seed;
  res.record.config_hash = config_hash(model.config());
  res.record.increments.reserve(grid.steps);
  std::vector<int> wanted = opt.state_steps;
  std::sort(wanted.begin(), wanted.end());

  DensityMatrix rho = model.initial_state();
  const SparseOperator& num = model.number_operator();
  const SparseOperator& exc = model.excited_projector();
  auto rate_at = [&](int k) {
    const SparseOperator L0 = model.generators_at(k).L0;
    return expectation(SparseOperator(L0.adjoint() * L0), rho).real();
  };
  double rate = rate_at(0);
  res.integrated_rate.push_back(0.0);
  auto observe = [&](int k) {
    res.excited.push_back(expectation(exc, rho).real());
    res.photons.push_back(expectation(num, rho).real());
    if (wanted.size() && detail::wants_state(wanted, k)) res.states.emplace_back(k, rho);
    const bool full = opt.validate_every > 0 && k % opt.validate_every == 0;
    DensePropagator prop(model);
    detail::check_state(prop, rho, res.diagnostics, full);
  };
  observe(0);
  for (int k = 0; k < grid.steps; ++k) {
    const double dY = homodyne_increment(rho, model.generators_at(k), dt, rng, phase);
    homodyne_step(rho, model, k, dY);
    rho.normalize();
    res.record.increments.push_back(dY);
    const double next = rate_at(k + 1);
    res.integrated_rate.push_back(res.integrated_rate.back() + 0.5 * dt * (rate + next));
    rate = next;
    observe(k + 1);
  }
  return res;
}

inline TrajectoryResult simulate_homodyne_trajectory(const Model& model, std::uint64_t seed,
                                                     const TrajectoryOptions& opt = {}) {
  return simulate_homodyne_trajectory(model, RandomStream(seed), seed, opt);
}

/// Deterministic master-equation solution sampled on the grid.
struct MasterEquationResult {
  std::vector<double> excited;
  std::vector<double> photons;
  std::vector<double> integrated_rate;
  std::vector<double> side_loss;  // int_0^t kappa P_e dt'
  std::vector<std::pair<int, DensityMatrix>> states;
  Diagnostics diagnostics;
};

namespace detail {

template <class Prop>
MasterEquationResult master_equation(const Prop& prop, const std::vector<int>& state_steps, int validate_every) {
  const Model& model = prop.model();
  const TimeGrid& grid = model.grid();
  const double dt = grid.dt;
  const double kappa = model.config().kappa;
  MasterEquationResult res;
  std::vector<int> wanted = state_steps;
  std::sort(wanted.begin(), wanted.end());
  auto s = prop.initial();
  double rate = prop.emission(s, 0);
  double pe = prop.excited(s);
  res.integrated_rate.push_back(0.0);
  res.side_loss.push_back(0.0);
  auto observe = [&](int k) {
    res.excited.push_back(prop.excited(s));
    res.photons.push_back(prop.photons(s));
    if (wanted.size() && wants_state(wanted, k)) {
      DensityMatrix rho = prop.to_dense(s);
      rho.normalized = true;
      res.states.emplace_back(k, std::move(rho));
    }
    check_state(prop, s, res.diagnostics, validate_every > 0 && k % validate_every == 0);
  };
  observe(0);
  for (int k = 0; k < grid.steps; ++k) {
    const double before = prop.trace(s);
    prop.master(s, k);
    const double drift = std::abs(prop.trace(s) - before);
    if (drift > kTraceDriftLimit)
      throw NumericalError("master equation step " + std::to_string(k) + " changed the trace by " +
                           std::to_string(drift));
    res.diagnostics.max_trace_drift = std::max(res.diagnostics.max_trace_drift, drift);
    const double next = prop.emission(s, k + 1);
    const double pe_next = prop.excited(s);
    res.integrated_rate.push_back(res.integrated_rate.back() + 0.5 * dt * (rate + next));
    res.side_loss.push_back(res.side_loss.back() + 0.5 * dt * kappa * (pe + pe_next));
    rate = next;
    pe = pe_next;
    observe(k + 1);
  }
  return res;
}

}  // namespace detail

/// Integrates the cascaded master equation over the whole grid. The block
/// engine is used when the initial state has no coherence between excitation
/// numbers (then it is exact for the full state) or when no states are
/// requested (the observables only see the diagonal blocks).
inline MasterEquationResult integrate_master_equation(const Model& model, const std::vector<int>& state_steps = {},
                                                      int validate_every = 0,
                                                      CountingEngine engine = CountingEngine::kAuto) {
  if (engine == CountingEngine::kAuto)
    engine = (state_steps.empty() || is_excitation_diagonal(model.initial_state())) ? CountingEngine::kBlocks
                                                                                    : CountingEngine::kDense;
  if (engine == CountingEngine::kDense)
    return detail::master_equation(DensePropagator(model), state_steps, validate_every);
  return with_block_propagator(model, [&](const auto& prop) {
    return detail::master_equation(prop, state_steps, validate_every);
  });
}

}  // namespace qpulse
