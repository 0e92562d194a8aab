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

// Bayesian filter bank. One unnormalized state per hypothesis is driven by a
// shared measurement record; the likelihood of the record lives in
// exp(log_weight) * Tr(rho~).
//
// Counting filters keep the bookkeeping exact for the discrete scheme used to
// generate records: a click multiplies the trace by dp = <L0^+L0> dt, a step
// without a click by (1 - dp), with dp clamped to [0, 1]. Tr(rho~) is then
// the probability that the simulator produces the record under the hypothesis.

#include "qpulse/blocks.hpp"
#include "qpulse/propagate.hpp"
#include "qpulse/record.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace qpulse {

struct Hypothesis {
  std::string label;
  AtomLevel atom_init = AtomLevel::kGround1;
  std::optional<double> gamma;
  std::optional<double> kappa;
  std::optional<double> detuning;
  std::optional<FieldSpec> field;
  double prior = 0.5;
};

/// Every filter of the bank is dead: the record is impossible under all hypotheses.
class AllFiltersDead : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline constexpr double kRescaleLow = 1e-6;
inline constexpr double kRescaleHigh = 1e6;
inline constexpr double kPriorSumTolerance = 1e-12;

/// base with the hypothesis overrides applied (cavity_dim untouched).
inline ModelConfig apply_hypothesis(const ModelConfig& base, const Hypothesis& h) {
  ModelConfig c = base;
  c.atom_init = h.atom_init;
  if (h.gamma) c.gamma = *h.gamma;
  if (h.kappa) c.kappa = *h.kappa;
  if (h.detuning) c.detuning = *h.detuning;
  if (h.field) c.field = *h.field;
  return c;
}

inline void validate_hypotheses(const std::vector<Hypothesis>& hyps) {
  if (hyps.empty()) throw ConfigError("at least one hypothesis is required");
  double sum = 0.0;
  for (const auto& h : hyps) {
    if (h.label.empty() || h.label.find_first_of(" \t\r\n,#") != std::string::npos)
      throw ConfigError("hypothesis label '" + h.label + "' must be non-empty without whitespace, ',' or '#'");
    if (!(h.prior > 0.0 && h.prior <= 1.0))
      throw ConfigError("prior of hypothesis '" + h.label + "' must lie in (0, 1]");
    sum += h.prior;
  }
  if (std::abs(sum - 1.0) > kPriorSumTolerance)
    throw ConfigError("hypothesis priors sum to " + detail::fmt17(sum) + ", not 1");
  for (std::size_t i = 0; i < hyps.size(); ++i)
    for (std::size_t j = i + 1; j < hyps.size(); ++j)
      if (hyps[i].label == hyps[j].label) throw ConfigError("duplicate hypothesis label '" + hyps[i].label + "'");
}

/// Per-hypothesis configurations sharing one cavity truncation: the base's
/// cavity_dim if set, otherwise the largest one any hypothesis needs.
inline std::vector<ModelConfig> hypothesis_configs(const ModelConfig& base, const std::vector<Hypothesis>& hyps) {
  validate_hypotheses(hyps);
  std::vector<ModelConfig> out;
  int dim = base.cavity_dim;
  for (const auto& h : hyps) {
    out.push_back(apply_hypothesis(base, h));
    if (base.cavity_dim <= 0) dim = std::max(dim, resolved_cavity_dim(out.back()));
  }
  for (auto& c : out) c.cavity_dim = dim;
  return out;
}

/// Normalized posteriors from log weights; -inf marks a dead filter.
inline std::vector<double> posteriors_from_log(const std::vector<double>& log_weights) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : log_weights) top = std::max(top, l);
  if (!std::isfinite(top)) throw AllFiltersDead("record is impossible under every hypothesis");
  std::vector<double> p(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::isfinite(log_weights[i]) ? std::exp(log_weights[i] - top) : 0.0;
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Q_e = 1 - max_i p_i
inline double error_probability(const std::vector<double>& posteriors) {
  if (posteriors.empty()) throw ConfigError("error_probability: empty posterior vector");
  double top = 0.0;
  for (double p : posteriors) top = std::max(top, p);
  return 1.0 - top;
}

namespace detail {

struct FilterCore {
  virtual ~FilterCore() = default;
  virtual double trace() const = 0;
  virtual void scale(double s) = 0;
  virtual double emission(int step) const = 0;  // Tr(L0 rho~ L0^+)
  virtual void nojump(int step) = 0;
  virtual void jump(int step) = 0;
  virtual void homodyne(int step, double dY) = 0;
  virtual DensityMatrix dense() const = 0;
  virtual double hermiticity() const = 0;
  virtual double min_eigenvalue() const = 0;
};

template <class Prop>
class FilterCoreT final : public FilterCore {
 public:
  explicit FilterCoreT(const Model& model) : prop_(model), s_(prop_.initial()) {}

  double trace() const override { return prop_.trace(s_); }
  void scale(double s) override { s_.scale(s); }
  double emission(int step) const override { return prop_.emission(s_, step); }
  void nojump(int step) override { prop_.nojump(s_, step); }
  void jump(int step) override { prop_.jump(s_, step); }
  void homodyne(int step, double dY) override {
    if constexpr (std::is_same_v<Prop, DensePropagator>) homodyne_step(s_, prop_.model(), step, dY);
    else throw ConfigError("homodyne filtering needs the dense engine");
  }
  DensityMatrix dense() const override { return prop_.to_dense(s_); }
  double hermiticity() const override { return prop_.hermiticity(s_); }
  double min_eigenvalue() const override { return prop_.min_eigenvalue(s_); }

 private:
  Prop prop_;
  typename Prop::State s_;
};

// Counting likelihoods only see the excitation-diagonal blocks, so the block
// engine is exact for them even when the field carries number coherences
// (the filter state is then the projected one).
inline std::unique_ptr<FilterCore> make_filter_core(const Model& model, CountingEngine engine) {
  const bool blocks = model.config().detection.scheme == DetectionScheme::kCounting && engine != CountingEngine::kDense;
  if (!blocks) return std::make_unique<FilterCoreT<DensePropagator>>(model);
  switch (block_size_for(model.initial_state())) {
    case 1: return std::make_unique<FilterCoreT<BlockPropagator<1>>>(model);
    case 2: return std::make_unique<FilterCoreT<BlockPropagator<2>>>(model);
    default: return std::make_unique<FilterCoreT<BlockPropagator<3>>>(model);
  }
}

}  // namespace detail

/// Worst-case state checks over a filtering run.
struct FilterDiagnostics {
  double max_hermiticity = 0.0;  // relative to the trace
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  int validations = 0;
};

class FilterBank {
 public:
  FilterBank(const ModelConfig& base, const std::vector<Hypothesis>& hypotheses,
             CountingEngine engine = CountingEngine::kAuto)
      : FilterBank(build_models(base, hypotheses), hypotheses, engine) {}

  /// Filters over prebuilt models, one per hypothesis (see build_models).
  FilterBank(std::vector<std::shared_ptr<const Model>> models, std::vector<Hypothesis> hypotheses,
             CountingEngine engine = CountingEngine::kAuto)
      : hyps_(std::move(hypotheses)) {
    validate_hypotheses(hyps_);
    if (models.size() != hyps_.size()) throw ConfigError("one model per hypothesis is required");
    for (std::size_t i = 0; i < hyps_.size(); ++i) {
      Filter f;
      f.model = std::move(models[i]);
      f.core = detail::make_filter_core(*f.model, engine);
      f.log_weight = std::log(hyps_[i].prior);
      f.reference = f.core->trace();
      if (!(f.reference > 0.0)) throw ConfigError("hypothesis '" + hyps_[i].label + "' has a zero initial state");
      filters_.push_back(std::move(f));
    }
    const auto& g0 = filters_.front().model->grid();
    const auto& l0 = filters_.front().model->layout();
    for (const auto& f : filters_) {
      const auto& g = f.model->grid();
      if (g.steps != g0.steps || g.dt != g0.dt) throw ConfigError("hypotheses must share one time grid");
      if (!(f.model->layout() == l0)) throw ConfigError("hypotheses must share one cavity truncation");
    }
  }

  static std::vector<std::shared_ptr<const Model>> build_models(const ModelConfig& base,
                                                                const std::vector<Hypothesis>& hyps) {
    std::vector<std::shared_ptr<const Model>> out;
    for (auto& c : hypothesis_configs(base, hyps)) out.push_back(std::make_shared<const Model>(std::move(c)));
    return out;
  }

  std::size_t size() const { return filters_.size(); }
  const std::vector<Hypothesis>& hypotheses() const { return hyps_; }
  const Model& model(std::size_t i) const { return *filters_.at(i).model; }
  const TimeGrid& grid() const { return filters_.front().model->grid(); }
  DetectionScheme scheme() const { return model(0).config().detection.scheme; }
  int position() const { return step_; }
  double time() const { return grid().time(step_); }
  bool alive(std::size_t i) const { return !filters_.at(i).dead; }
  const FilterDiagnostics& diagnostics() const { return diag_; }

  /// ln p(D | h_i) for the record consumed so far (-inf for a dead filter).
  double log_likelihood(std::size_t i) const { return log_weight(i) - std::log(hyps_.at(i).prior); }

  /// ln(prior_i) + ln p(D | h_i).
  double log_weight(std::size_t i) const {
    const auto& f = filters_.at(i);
    if (f.dead) return -std::numeric_limits<double>::infinity();
    return f.log_weight + std::log(f.core->trace() / f.reference);
  }

  std::vector<double> posteriors() const {
    std::vector<double> lw(size());
    for (std::size_t i = 0; i < size(); ++i) lw[i] = log_weight(i);
    return posteriors_from_log(lw);
  }

  /// Normalized conditional state of filter i.
  DensityMatrix state(std::size_t i) const {
    DensityMatrix rho = filters_.at(i).core->dense();
    rho.normalize();
    return rho;
  }

  /// rho~_i -> s rho~_i with the accumulator compensating; posteriors are unchanged.
  void rescale(std::size_t i, double s) {
    if (!(s > 0.0)) throw ConfigError("rescale factor must be > 0");
    auto& f = filters_.at(i);
    f.core->scale(s);
    f.log_weight -= std::log(s);
  }

  void step_counting(bool clicked) {
    require(DetectionScheme::kCounting);
    const double dt = grid().dt;
    for (std::size_t i = 0; i < size(); ++i) {
      auto& f = filters_[i];
      if (f.dead) continue;
      const double tr = f.core->trace();
      const double emitted = f.core->emission(step_);
      // Clamped: a hypothesis that would need dp > 1 finds the record (nearly)
      // impossible, which is information rather than a step-size problem.
      const double dp = std::clamp(emitted * dt / tr, 0.0, 1.0);
      if (clicked) {
        if (!(emitted > 0.0)) {
          f.dead = true;
          continue;
        }
        f.core->jump(step_);
        f.core->scale(dp * tr / f.core->trace());
      } else {
        if (!(dp < 1.0)) {
          f.dead = true;
          continue;
        }
        f.core->nojump(step_);
        const double after = f.core->trace();
        if (!(after > 0.0))
          throw NumericalError("hypothesis '" + hyps_[i].label + "': no-jump step " + std::to_string(step_) +
                               " produced non-positive trace; reduce dt");
        f.core->scale((1.0 - dp) * tr / after);
      }
      renormalize(f);
    }
    ++step_;
  }

  void step_homodyne(double dY) {
    require(DetectionScheme::kHomodyne);
    for (std::size_t i = 0; i < size(); ++i) {
      auto& f = filters_[i];
      if (f.dead) continue;
      f.core->homodyne(step_, dY);
      const double tr = f.core->trace();
      if (tr == 0.0) {
        f.dead = true;
        continue;
      }
      renormalize(f);
    }
    ++step_;
  }

  /// Hermiticity always, positivity as well when full is set.
  void validate(bool full) {
    for (const auto& f : filters_) {
      if (f.dead) continue;
      const double tr = f.core->trace();
      diag_.max_hermiticity = std::max(diag_.max_hermiticity, f.core->hermiticity() / tr);
      if (full) diag_.min_eigenvalue = std::min(diag_.min_eigenvalue, f.core->min_eigenvalue() / tr);
    }
    if (full) ++diag_.validations;
  }

 private:
  struct Filter {
    std::shared_ptr<const Model> model;  // propagators point into it
    std::unique_ptr<detail::FilterCore> core;
    double log_weight = 0.0;
    double reference = 1.0;  // initial trace; the likelihood is Tr / reference
    bool dead = false;
  };

  void require(DetectionScheme s) const {
    if (scheme() != s) throw ConfigError("filter bank was built for " + std::string(scheme_name(scheme())) + " records");
    if (step_ >= grid().steps) throw ConfigError("filter bank is already at the end of the grid");
  }

  static void renormalize(Filter& f) {
    const double ratio = f.core->trace() / f.reference;
    if (ratio < kRescaleLow || ratio > kRescaleHigh) {
      f.core->scale(1.0 / ratio);
      f.log_weight += std::log(ratio);
    }
  }

  std::vector<Hypothesis> hyps_;
  std::vector<Filter> filters_;
  int step_ = 0;
  FilterDiagnostics diag_;
};

inline FilterBank filter_init(const ModelConfig& base, const std::vector<Hypothesis>& hypotheses,
                              CountingEngine engine = CountingEngine::kAuto) {
  return FilterBank(base, hypotheses, engine);
}

inline void filter_step_counting(FilterBank& bank, int step, bool clicked) {
  if (step != bank.position()) throw ConfigError("filter bank is at step " + std::to_string(bank.position()));
  bank.step_counting(clicked);
}

inline void filter_step_homodyne(FilterBank& bank, int step, double dY) {
  if (step != bank.position()) throw ConfigError("filter bank is at step " + std::to_string(bank.position()));
  bank.step_homodyne(dY);
}

inline std::vector<double> posteriors(const FilterBank& bank) { return bank.posteriors(); }

/// Posterior probabilities and Q_e on the grid t_0..t_steps.
struct PosteriorSeries {
  std::vector<std::string> labels;
  std::vector<double> times;
  std::vector<std::vector<double>> posteriors;  // [step][hypothesis]
  std::vector<double> error;                    // Q_e

  void push(double t, std::vector<double> p) {
    times.push_back(t);
    error.push_back(error_probability(p));
    posteriors.push_back(std::move(p));
  }
};

/// Feeds a whole record through the bank.
inline PosteriorSeries filter_record(FilterBank& bank, const MeasurementRecord& record, int validate_every = 0) {
  if (bank.position() != 0) throw ConfigError("filter_record needs a fresh filter bank");
  if (record.scheme != bank.scheme()) throw ConfigError("record scheme does not match the filter bank");
  if (record.steps != bank.grid().steps || std::abs(record.dt - bank.grid().dt) > 1e-15 * bank.grid().dt)
    throw ConfigError("record grid (dt " + detail::fmt17(record.dt) + ", " + std::to_string(record.steps) +
                      " steps) does not match the configuration");
  if (record.scheme == DetectionScheme::kHomodyne && record.phase != bank.model(0).config().detection.phase)
    throw ConfigError("record phase does not match the configured detection phase");
  PosteriorSeries out;
  for (const auto& h : bank.hypotheses()) out.labels.push_back(h.label);
  const int steps = record.steps;
  out.times.reserve(steps + 1);
  out.posteriors.reserve(steps + 1);
  out.error.reserve(steps + 1);
  auto check = [&](int k) {
    if (validate_every > 0) bank.validate(k % validate_every == 0);
  };
  out.push(0.0, bank.posteriors());
  check(0);
  if (record.scheme == DetectionScheme::kCounting) {
    const auto mask = record.click_mask();
    for (int k = 0; k < steps; ++k) {
      bank.step_counting(mask[static_cast<std::size_t>(k)]);
      out.push(bank.time(), bank.posteriors());
      check(k + 1);
    }
  } else {
    for (int k = 0; k < steps; ++k) {
      bank.step_homodyne(record.increments[static_cast<std::size_t>(k)]);
      out.push(bank.time(), bank.posteriors());
      check(k + 1);
    }
  }
  return out;
}

/// CSV with columns t, p_<label>..., Q_e; `header` lines are written as
/// '#' comments first. every > 1 thins the rows (the last row is kept).
inline void write_posterior_csv(std::ostream& out, const PosteriorSeries& s,
                                const std::vector<std::string>& header = {}, int every = 1) {
  using detail::fmt17;
  for (const auto& line : header) out << "# " << line << '\n';
  out << 't';
  for (const auto& l : s.labels) out << ",p_" << l;
  out << ",Q_e\n";
  const std::size_t n = s.times.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (every > 1 && k % static_cast<std::size_t>(every) != 0 && k + 1 != n) continue;
    out << fmt17(s.times[k]);
    for (double p : s.posteriors[k]) out << ',' << fmt17(p);
    out << ',' << fmt17(s.error[k]) << '\n';
  }
}

}  // namespace qpulse
