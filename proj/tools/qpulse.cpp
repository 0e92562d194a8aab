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

// qpulse command-line tool.
//
//   qpulse trajectory      --config F [--seed N] [--out CSV] [--record PATH] [--index I] [--validate-every K]
//   qpulse ensemble        --config F [--seed N] [--trajectories N] [--out CSV] [--threads N] [--validate-every K]
//   qpulse master-equation --config F [--out CSV] [--validate-every K]
//   qpulse replay          --config F --record PATH [--out CSV]
//   qpulse validate-config --config F
//
// Exit status: 0 success, 1 configuration or usage error, 2 runtime failure.

#include "qpulse/config_file.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

namespace {

using namespace qpulse;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  int trajectories = 0;
  std::string out;
  std::string record;
  int threads = 0;
  int validate_every = -1;
  std::uint64_t index = 0;
};

/// stdout unless a path is given.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw ConfigError("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  body(out);
}

bool given(const CLI::App& sub, const std::string& name) {
  const CLI::Option* o = sub.get_option_no_throw(name);
  return o != nullptr && o->count() > 0;
}

AppConfig load(const Flags& f, const CLI::App& sub) {
  AppConfig app = load_config(f.config);
  if (given(sub, "--seed")) app.spec.master_seed = f.seed;
  if (given(sub, "--trajectories")) app.spec.n_trajectories = f.trajectories;
  if (given(sub, "--validate-every")) app.spec.validate_every = f.validate_every;
  validate(app.spec);
  return app;
}

int cmd_trajectory(const Flags& f, const CLI::App& sub) {
  const AppConfig app = load(f, sub);
  const EnsembleContext ctx(app.spec);
  const TrajectoryOutcome o = run_trajectory(ctx, f.index);
  const MeasurementRecord& rec = o.record();
  std::string record_path = f.record;
  if (record_path.empty() && !f.out.empty() && f.out != "-") record_path = f.out + ".record";
  if (!record_path.empty()) save_record(record_path, rec);
  Output out(f.out);
  write_posterior_csv(out.stream(), o.posterior, posterior_header(app.spec.base, app.spec.hypotheses, rec));
  if (app.spec.outputs.state_series) {
    if (f.out.empty() || f.out == "-") throw ConfigError("outputs = state_series needs --out");
    write_file(f.out + ".states.csv", [&](std::ostream& s) { write_state_series_csv(s, o.truth_run, rec.dt); });
  }
  std::cerr << "trajectory " << f.index << ": truth " << rec.truth << ", " << rec.clicks() << " clicks, final Q_e "
            << o.posterior.error.back() << '\n';
  if (!record_path.empty()) std::cerr << "record written to " << record_path << '\n';
  return 0;
}

int cmd_ensemble(const Flags& f, const CLI::App& sub) {
  const AppConfig app = load(f, sub);
  const EnsembleSpec& spec = app.spec;
  const bool to_file = !f.out.empty() && f.out != "-";
  if (!to_file && (spec.outputs.posterior_samples || spec.outputs.records || spec.outputs.state_series))
    throw ConfigError("outputs beyond qe_curve need --out");
  if (spec.outputs.records) std::filesystem::create_directories(f.out + ".records");
  if (spec.outputs.state_series) std::filesystem::create_directories(f.out + ".states");
  EnsembleOptions opt;
  opt.threads = f.threads;
  opt.progress = &std::cerr;
  opt.on_trajectory = [&](const TrajectoryOutcome& o) {
    const std::string name = "trajectory_" + std::to_string(o.index);
    if (spec.outputs.records) save_record(f.out + ".records/" + name + ".record", o.record());
    if (spec.outputs.state_series)
      write_file(f.out + ".states/" + name + ".csv",
                 [&](std::ostream& s) { write_state_series_csv(s, o.truth_run, o.record().dt); });
  };
  const EnsembleResult r = run_ensemble(spec, opt);
  Output out(f.out);
  write_ensemble_csv(out.stream(), spec, r);
  if (spec.outputs.posterior_samples)
    write_file(f.out + ".final.csv", [&](std::ostream& s) { write_final_posteriors_csv(s, spec, r); });
  if (to_file)
    write_file(f.out + ".meta", [&](std::ostream& s) {
      s << "version " << kVersion << "\nspec_hash " << spec_hash(spec) << "\nthreads " << r.threads
        << "\nwall_seconds " << r.wall_seconds << "\n";
    });
  std::cerr << "ensemble: final mean Q_e " << r.mean_error.back() << " +- " << r.standard_error.back() << " ("
            << r.threads << " threads, " << r.wall_seconds << " s)\n";
  return 0;
}

int cmd_master_equation(const Flags& f, const CLI::App& sub) {
  const AppConfig app = load(f, sub);
  const Model model(app.spec.base);
  const MasterEquationResult r = integrate_master_equation(model, {}, app.spec.validate_every, app.spec.engine);
  Output out(f.out);
  std::ostream& s = out.stream();
  s << "# qpulse " << kVersion << " master-equation\n";
  s << "# config_hash " << config_hash(model.config()) << '\n';
  const std::string text = canonical_text(model.config());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    s << "# " << text.substr(pos, end - pos) << '\n';
    pos = end + 1;
  }
  s << "t,photons,P_e,integrated_flux,side_loss\n";
  using detail::fmt17;
  for (std::size_t k = 0; k < r.excited.size(); ++k)
    s << fmt17(model.grid().time(static_cast<int>(k))) << ',' << fmt17(r.photons[k]) << ',' << fmt17(r.excited[k])
      << ',' << fmt17(r.integrated_rate[k]) << ',' << fmt17(r.side_loss[k]) << '\n';
  std::cerr << "master-equation: integrated flux " << r.integrated_rate.back() << ", max trace drift per step "
            << r.diagnostics.max_trace_drift << '\n';
  return 0;
}

int cmd_replay(const Flags& f, const CLI::App& sub) {
  const AppConfig app = load(f, sub);
  const MeasurementRecord rec = load_record(f.record);
  FilterBank bank(app.spec.base, app.spec.hypotheses, app.spec.engine);
  const PosteriorSeries s = filter_record(bank, rec, app.spec.validate_every);
  Output out(f.out);
  write_posterior_csv(out.stream(), s, posterior_header(app.spec.base, app.spec.hypotheses, rec));
  std::cerr << "replay: final Q_e " << s.error.back() << '\n';
  return 0;
}

int cmd_validate(const Flags& f, const CLI::App& sub) {
  const AppConfig app = load(f, sub);
  const auto models = FilterBank::build_models(app.spec.base, app.spec.hypotheses);
  bool ok = true;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const double rate = detection_rate_bound(*models[i]);
    const double dp = rate * models[i]->grid().dt;
    if (dp > kJumpProbabilityWarn) {
      std::cerr << "error: hypothesis '" << app.spec.hypotheses[i].label << "': estimated jump probability per step "
                << dp << " exceeds " << kJumpProbabilityWarn << "; suggested dt <= " << suggested_dt(rate) << '\n';
      ok = false;
    }
  }
  if (!ok) return kExitConfig;
  write_resolved_config(std::cout, app);
  std::cerr << "config OK\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpulse: quantum pulse scattering, photodetection and Bayesian readout"};
  app.require_subcommand(1);
  Flags f;

  auto config = [&](CLI::App* s) { s->add_option("--config", f.config, "configuration file")->required(); };
  auto out = [&](CLI::App* s) { s->add_option("--out", f.out, "output CSV (default: stdout)"); };
  auto seed = [&](CLI::App* s) { s->add_option("--seed", f.seed, "master seed (overrides the file)"); };
  auto validate_every = [&](CLI::App* s) {
    s->add_option("--validate-every", f.validate_every, "positivity check cadence in steps (0: off)")
        ->check(CLI::NonNegativeNumber);
  };

  auto* traj = app.add_subcommand("trajectory", "one record and its posterior series");
  config(traj);
  seed(traj);
  out(traj);
  validate_every(traj);
  traj->add_option("--record", f.record, "record output path (default: <out>.record)");
  traj->add_option("--index", f.index, "trajectory index within the seeded ensemble");

  auto* ens = app.add_subcommand("ensemble", "mean Q_e(t) over many trajectories");
  config(ens);
  seed(ens);
  out(ens);
  validate_every(ens);
  ens->add_option("--trajectories", f.trajectories, "number of trajectories")->check(CLI::PositiveNumber);
  ens->add_option("--threads", f.threads, "worker threads (default: all processors)")->check(CLI::PositiveNumber);

  auto* me = app.add_subcommand("master-equation", "deterministic photon number, P_e and flux");
  config(me);
  out(me);
  validate_every(me);

  auto* rep = app.add_subcommand("replay", "re-filter a stored record");
  config(rep);
  out(rep);
  rep->add_option("--record", f.record, "record file")->required();

  auto* val = app.add_subcommand("validate-config", "check a configuration and print resolved defaults");
  config(val);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*traj) return cmd_trajectory(f, *traj);
    if (*ens) return cmd_ensemble(f, *ens);
    if (*me) return cmd_master_equation(f, *me);
    if (*rep) return cmd_replay(f, *rep);
    return cmd_validate(f, *val);
  } catch (const std::invalid_argument& e) {  // ConfigError and malformed numbers
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
