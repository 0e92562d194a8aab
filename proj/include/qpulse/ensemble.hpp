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

// Monte Carlo ensembles: for each trajectory pick the true hypothesis,
// generate a record under it, filter the record with the whole bank, and
// average Q_e(t). Trajectory i draws only from the stream (master_seed, i) and
// the reduction runs in index order, so results do not depend on the thread
// count.

#include "qpulse/inference.hpp"
#include "qpulse/trajectory.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace qpulse {

inline constexpr std::string_view kVersion = "0.1.0";

enum class TruthPolicy { kFixed, kSampledFromPriors };

struct EnsembleOutputs {
  bool qe_curve = true;
  bool posterior_samples = false;  // final posteriors per trajectory
  bool records = false;
  bool state_series = false;  // conditioned P_e, <a^+a> of the truth per trajectory
};

struct EnsembleSpec {
  ModelConfig base;
  std::vector<Hypothesis> hypotheses;
  TruthPolicy truth = TruthPolicy::kSampledFromPriors;
  std::string fixed_truth;  // hypothesis label when truth is kFixed
  int n_trajectories = 1;
  std::uint64_t master_seed = 0;
  EnsembleOutputs outputs;
  int validate_every = 0;
  CountingEngine engine = CountingEngine::kAuto;
};

/// Two equiprobable hypotheses: atom in |0> or in |1>.
inline std::vector<Hypothesis> default_hypotheses() {
  Hypothesis h0, h1;
  h0.label = "0";
  h0.atom_init = AtomLevel::kGround0;
  h1.label = "1";
  h1.atom_init = AtomLevel::kGround1;
  return {h0, h1};
}

inline std::size_t hypothesis_index(const std::vector<Hypothesis>& hyps, const std::string& label) {
  for (std::size_t i = 0; i < hyps.size(); ++i)
    if (hyps[i].label == label) return i;
  throw ConfigError("no hypothesis labelled '" + label + "'");
}

inline void validate(const EnsembleSpec& s) {
  validate(s.base);
  validate_hypotheses(s.hypotheses);
  if (s.n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1");
  if (s.validate_every < 0) throw ConfigError("validate_every must be >= 0");
  if (s.truth == TruthPolicy::kFixed) (void)hypothesis_index(s.hypotheses, s.fixed_truth);
}

inline std::string hypothesis_text(const Hypothesis& h) {
  using detail::fmt17;
  std::string s = "label=" + h.label + " atom_init=" + std::string(atom_level_name(h.atom_init)) +
                  " prior=" + fmt17(h.prior);
  if (h.gamma) s += " gamma=" + fmt17(*h.gamma);
  if (h.kappa) s += " kappa=" + fmt17(*h.kappa);
  if (h.detuning) s += " detuning=" + fmt17(*h.detuning);
  if (h.field) {
    ModelConfig probe;
    probe.field = *h.field;
    const std::string text = canonical_text(probe);
    for (std::string_view key : {"field.kind", "field.n", "field.alpha", "field.alpha_imag", "field.amplitudes"}) {
      const auto pos = text.find(std::string(key) + " = ");
      if (pos == std::string::npos) continue;
      const auto start = pos + key.size() + 3;
      s += " " + std::string(key) + "=" + text.substr(start, text.find('\n', start) - start);
    }
  }
  return s;
}

/// Configuration and hypotheses; what a posterior CSV depends on.
inline std::string bank_text(const ModelConfig& base, const std::vector<Hypothesis>& hyps) {
  std::string s = canonical_text(base);
  for (std::size_t i = 0; i < hyps.size(); ++i)
    s += "hypotheses[" + std::to_string(i) + "] = " + hypothesis_text(hyps[i]) + "\n";
  return s;
}

inline std::string bank_hash(const ModelConfig& base, const std::vector<Hypothesis>& hyps) {
  return hash_hex(fnv1a64(bank_text(base, hyps)));
}

inline std::string spec_text(const EnsembleSpec& s) {
  std::string t = bank_text(s.base, s.hypotheses);
  t += "truth = " + (s.truth == TruthPolicy::kFixed ? s.fixed_truth : std::string("sampled")) + "\n";
  t += "n_trajectories = " + std::to_string(s.n_trajectories) + "\n";
  t += "master_seed = " + std::to_string(s.master_seed) + "\n";
  return t;
}

inline std::string spec_hash(const EnsembleSpec& s) { return hash_hex(fnv1a64(spec_text(s))); }

/// Immutable per-ensemble data shared by all trajectories.
class EnsembleContext {
 public:
  explicit EnsembleContext(EnsembleSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    models_ = FilterBank::build_models(spec_.base, spec_.hypotheses);
  }

  const EnsembleSpec& spec() const { return spec_; }
  const std::vector<std::shared_ptr<const Model>>& models() const { return models_; }
  const TimeGrid& grid() const { return models_.front()->grid(); }

 private:
  EnsembleSpec spec_;
  std::vector<std::shared_ptr<const Model>> models_;
};

struct TrajectoryOutcome {
  std::uint64_t index = 0;
  std::size_t truth = 0;
  TrajectoryResult truth_run;  // record and conditioned observables of the truth
  PosteriorSeries posterior;
  FilterDiagnostics filter_diagnostics;

  const MeasurementRecord& record() const { return truth_run.record; }
};

namespace detail {

inline std::size_t pick_truth(const EnsembleSpec& spec, RandomStream& rng) {
  const double u = rng.uniform();  // always drawn, so both policies share streams
  if (spec.truth == TruthPolicy::kFixed) return hypothesis_index(spec.hypotheses, spec.fixed_truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.hypotheses.size(); ++i) {
    acc += spec.hypotheses[i].prior;
    if (u < acc) return i;
  }
  return spec.hypotheses.size() - 1;
}

}  // namespace detail

/// One trajectory of the ensemble.
inline TrajectoryOutcome run_trajectory(const EnsembleContext& ctx, std::uint64_t index,
                                        std::ostream* warnings = &std::cerr) {
  const EnsembleSpec& spec = ctx.spec();
  RandomStream rng = RandomStream::for_trajectory(spec.master_seed, index);
  TrajectoryOutcome out;
  out.index = index;
  out.truth = detail::pick_truth(spec, rng);
  const Model& truth = *ctx.models()[out.truth];
  TrajectoryOptions opt;
  opt.engine = spec.engine;
  opt.validate_every = spec.validate_every;
  opt.warnings = warnings;
  out.truth_run = truth.config().detection.scheme == DetectionScheme::kCounting
                      ? simulate_counting_trajectory(truth, rng, spec.master_seed, opt)
                      : simulate_homodyne_trajectory(truth, rng, spec.master_seed, opt);
  auto& rec = out.truth_run.record;
  rec.trajectory = index;
  rec.truth = spec.hypotheses[out.truth].label;
  FilterBank bank(ctx.models(), spec.hypotheses, spec.engine);
  out.posterior = filter_record(bank, rec, spec.validate_every);
  out.filter_diagnostics = bank.diagnostics();
  return out;
}

inline TrajectoryOutcome run_trajectory(const EnsembleSpec& spec, std::uint64_t index) {
  return run_trajectory(EnsembleContext(spec), index);
}

/// A trajectory of the ensemble failed.
class EnsembleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct EnsembleResult {
  std::vector<std::string> labels;
  std::vector<double> times;
  std::vector<double> mean_error;      // mean Q_e(t)
  std::vector<double> standard_error;  // of the mean
  std::vector<std::size_t> truths;
  std::vector<int> clicks;
  std::vector<std::vector<double>> final_posteriors;  // filled when requested
  Diagnostics dynamics;
  FilterDiagnostics filters;
  int threads = 1;
  double wall_seconds = 0.0;
};

struct EnsembleOptions {
  int threads = 0;  // 0: hardware concurrency
  int chunk = 64;   // trajectories per join barrier
  std::ostream* progress = nullptr;
  std::ostream* warnings = &std::cerr;
  /// Called in index order after each trajectory is reduced.
  std::function<void(const TrajectoryOutcome&)> on_trajectory;
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline EnsembleResult run_ensemble(const EnsembleSpec& spec, const EnsembleOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const EnsembleContext ctx(spec);
  const int n = spec.n_trajectories;
  const int threads = std::min(resolve_threads(opt.threads), n);
  const int chunk = std::max(1, opt.chunk);
  const std::size_t points = static_cast<std::size_t>(ctx.grid().steps) + 1;

  EnsembleResult res;
  res.threads = threads;
  for (const auto& h : spec.hypotheses) res.labels.push_back(h.label);
  for (int k = 0; k < static_cast<int>(points); ++k) res.times.push_back(ctx.grid().time(k));
  std::vector<double> mean(points, 0.0), m2(points, 0.0);  // Welford, index order
  res.filters.min_eigenvalue = std::numeric_limits<double>::infinity();

  for (int first = 0; first < n; first += chunk) {
    const int count = std::min(chunk, n - first);
    std::vector<std::optional<TrajectoryOutcome>> slots(count);
    std::vector<std::string> errors(count);
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int j = next++; j < count; j = next++) {
        try {
          slots[j] = run_trajectory(ctx, static_cast<std::uint64_t>(first + j), nullptr);
        } catch (const std::exception& e) {
          errors[j] = e.what();
        }
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    std::string failed;
    for (int j = 0; j < count; ++j)
      if (!errors[j].empty()) failed += (failed.empty() ? "" : "; ") + ("trajectory " + std::to_string(first + j) + ": " + errors[j]);
    if (!failed.empty()) throw EnsembleError(failed);

    for (int j = 0; j < count; ++j) {
      const TrajectoryOutcome& o = *slots[j];
      const double seen = first + j + 1;
      for (std::size_t k = 0; k < points; ++k) {
        const double x = o.posterior.error[k];
        const double delta = x - mean[k];
        mean[k] += delta / seen;
        m2[k] += delta * (x - mean[k]);
      }
      res.truths.push_back(o.truth);
      res.clicks.push_back(o.record().clicks());
      if (spec.outputs.posterior_samples) res.final_posteriors.push_back(o.posterior.posteriors.back());
      res.dynamics.merge(o.truth_run.diagnostics);
      res.filters.max_hermiticity = std::max(res.filters.max_hermiticity, o.filter_diagnostics.max_hermiticity);
      res.filters.min_eigenvalue = std::min(res.filters.min_eigenvalue, o.filter_diagnostics.min_eigenvalue);
      res.filters.validations += o.filter_diagnostics.validations;
      if (opt.on_trajectory) opt.on_trajectory(o);
    }
    if (opt.progress) *opt.progress << "ensemble: " << first + count << "/" << n << " trajectories\n";
  }
  if (opt.warnings && res.dynamics.max_jump_probability > kJumpProbabilityWarn)
    *opt.warnings << "warning: jump probability per step reached " << res.dynamics.max_jump_probability << " (> "
                  << kJumpProbabilityWarn << "); suggested dt <= "
                  << suggested_dt(res.dynamics.max_jump_probability / ctx.grid().dt) << " (current " << ctx.grid().dt
                  << ")\n";
  res.mean_error = mean;
  res.standard_error.assign(points, 0.0);
  if (n > 1)
    for (std::size_t k = 0; k < points; ++k) res.standard_error[k] = std::sqrt(std::max(0.0, m2[k]) / (n - 1.0) / n);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Header lines shared by the ensemble CSVs. Nothing run-dependent (threads,
/// wall time) goes here, so the CSV is a pure function of the spec.
inline std::vector<std::string> ensemble_header(const EnsembleSpec& spec) {
  std::vector<std::string> h;
  h.push_back("qpulse " + std::string(kVersion) + " ensemble");
  h.push_back("spec_hash " + spec_hash(spec));
  h.push_back("rng " + std::string(kRngName) + ", normals " + std::string(kNormalSamplerName));
  std::string text = spec_text(spec);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    h.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return h;
}

/// t, mean_Q_e, se_Q_e
inline void write_ensemble_csv(std::ostream& out, const EnsembleSpec& spec, const EnsembleResult& r, int every = 1) {
  using detail::fmt17;
  for (const auto& line : ensemble_header(spec)) out << "# " << line << '\n';
  out << "t,mean_Q_e,se_Q_e\n";
  const std::size_t n = r.times.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (every > 1 && k % static_cast<std::size_t>(every) != 0 && k + 1 != n) continue;
    out << fmt17(r.times[k]) << ',' << fmt17(r.mean_error[k]) << ',' << fmt17(r.standard_error[k]) << '\n';
  }
}

/// index, truth, clicks, p_<label>..., Q_e at t_final
inline void write_final_posteriors_csv(std::ostream& out, const EnsembleSpec& spec, const EnsembleResult& r) {
  using detail::fmt17;
  for (const auto& line : ensemble_header(spec)) out << "# " << line << '\n';
  out << "index,truth,clicks";
  for (const auto& l : r.labels) out << ",p_" << l;
  out << ",Q_e\n";
  for (std::size_t i = 0; i < r.final_posteriors.size(); ++i) {
    out << i << ',' << r.labels[r.truths[i]] << ',' << r.clicks[i];
    for (double p : r.final_posteriors[i]) out << ',' << fmt17(p);
    out << ',' << fmt17(error_probability(r.final_posteriors[i])) << '\n';
  }
}

/// Header of a posterior CSV: depends only on the bank and the record, so a
/// replay reproduces it.
inline std::vector<std::string> posterior_header(const ModelConfig& base, const std::vector<Hypothesis>& hyps,
                                                 const MeasurementRecord& rec) {
  std::vector<std::string> h;
  h.push_back("qpulse " + std::string(kVersion) + " posterior");
  h.push_back("bank_hash " + bank_hash(base, hyps));
  h.push_back("record scheme=" + std::string(scheme_name(rec.scheme)) + " seed=" + std::to_string(rec.seed) +
              " trajectory=" + std::to_string(rec.trajectory) + " clicks=" + std::to_string(rec.clicks()) +
              (rec.truth.empty() ? "" : " truth=" + rec.truth));
  const std::string text = bank_text(base, hyps);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    h.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return h;
}

/// t, P_e, photons, integrated rate of a conditioned trajectory.
inline void write_state_series_csv(std::ostream& out, const TrajectoryResult& r, double dt) {
  using detail::fmt17;
  out << "t,P_e,photons,integrated_rate\n";
  for (std::size_t k = 0; k < r.excited.size(); ++k)
    out << fmt17(k * dt) << ',' << fmt17(r.excited[k]) << ',' << fmt17(r.photons[k]) << ','
        << fmt17(r.integrated_rate[k]) << '\n';
}

}  // namespace qpulse
