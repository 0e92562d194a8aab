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

// Flat "key = value" configuration files. '#' starts a comment; unknown or
// repeated keys are errors. Keys:
//
//   gamma kappa detuning atom_init cavity_dim dt t_final cutoff_epsilon
//   pulse.kind (gaussian|flattop|sampled) pulse.t0 pulse.width
//   pulse.start pulse.stop pulse.file
//   field.kind (fock|coherent) field.n field.alpha field.alpha_imag
//   detection.scheme (counting|homodyne) detection.phase
//   hypotheses[i].label .atom_init .prior .gamma .kappa .detuning
//                 .field.kind .field.n .field.alpha .field.alpha_imag
//   truth (sampled|<label>) n_trajectories master_seed validate_every
//   outputs (comma list of qe_curve, posterior_samples, records, state_series)
//   engine (auto|dense|blocks)

#include "qpulse/ensemble.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

namespace qpulse {

struct AppConfig {
  EnsembleSpec spec;
  std::string pulse_file;  // source of a sampled pulse, as written in the file
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out))
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return out;
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return out;
}

/// Collects the field.* keys under `prefix` into a FieldSpec.
inline std::optional<FieldSpec> parse_field(const std::map<std::string, std::string>& kv, const std::string& prefix) {
  const auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.find(prefix + k);
    return it == kv.end() ? nullptr : &it->second;
  };
  const std::string* kind = get("field.kind");
  const std::string* n = get("field.n");
  const std::string* re = get("field.alpha");
  const std::string* im = get("field.alpha_imag");
  if (!kind) {
    if (n || re || im) throw ConfigError("'" + prefix + "field.kind' is required with other field keys");
    return std::nullopt;
  }
  if (*kind == "fock") {
    if (re || im) throw ConfigError("'" + prefix + "field.alpha' does not apply to a Fock field");
    const int photons = n ? parse_integer<int>(prefix + "field.n", *n) : 1;
    if (photons < 0) throw ConfigError("'" + prefix + "field.n' must be >= 0");
    return FieldSpec{FockField{photons}};
  }
  if (*kind == "coherent") {
    if (n) throw ConfigError("'" + prefix + "field.n' does not apply to a coherent field");
    const double a = re ? parse_double(prefix + "field.alpha", *re) : 1.0;
    const double b = im ? parse_double(prefix + "field.alpha_imag", *im) : 0.0;
    return FieldSpec{CoherentField{cplx{a, b}}};
  }
  throw ConfigError("'" + prefix + "field.kind': expected fock or coherent, got '" + *kind + "'");
}

}  // namespace detail

inline AppConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, value).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }

  static const std::set<std::string> scalar_keys = {
      "gamma", "kappa", "detuning", "atom_init", "cavity_dim", "dt", "t_final", "cutoff_epsilon",
      "pulse.kind", "pulse.t0", "pulse.width", "pulse.start", "pulse.stop", "pulse.file",
      "field.kind", "field.n", "field.alpha", "field.alpha_imag", "detection.scheme", "detection.phase",
      "truth", "n_trajectories", "master_seed", "validate_every", "outputs", "engine"};
  static const std::set<std::string> hypothesis_keys = {
      "label", "atom_init", "prior", "gamma", "kappa", "detuning",
      "field.kind", "field.n", "field.alpha", "field.alpha_imag"};
  static const std::regex hyp_re(R"(hypotheses\[(\d+)\]\.(.+))");

  std::map<int, std::map<std::string, std::string>> hyp_kv;
  for (const auto& [key, value] : kv) {
    std::smatch m;
    if (std::regex_match(key, m, hyp_re)) {
      if (!hypothesis_keys.count(m[2].str())) throw ConfigError("unknown hypothesis key '" + key + "'");
      hyp_kv[std::stoi(m[1].str())][m[2].str()] = value;
    } else if (!scalar_keys.count(key)) {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  AppConfig app;
  EnsembleSpec& spec = app.spec;
  ModelConfig& c = spec.base;
  const auto has = [&](const std::string& k) { return kv.count(k) > 0; };
  const auto num = [&](const std::string& k, double& dst) {
    if (has(k)) dst = parse_double(k, kv.at(k));
  };
  num("gamma", c.gamma);
  num("kappa", c.kappa);
  num("detuning", c.detuning);
  num("dt", c.dt);
  num("t_final", c.t_final);
  num("cutoff_epsilon", c.cutoff_epsilon);
  num("detection.phase", c.detection.phase);
  if (has("atom_init")) c.atom_init = parse_atom_level(kv.at("atom_init"));
  if (has("cavity_dim")) c.cavity_dim = parse_integer<int>("cavity_dim", kv.at("cavity_dim"));
  if (c.cavity_dim < 0) throw ConfigError("cavity_dim must be >= 0 (0 selects the minimal truncation)");
  if (has("detection.scheme")) c.detection.scheme = parse_scheme(kv.at("detection.scheme"));
  if (auto f = parse_field(kv, "")) c.field = *f;

  const std::string kind = has("pulse.kind") ? kv.at("pulse.kind") : "gaussian";
  const auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (has(k)) throw ConfigError("'" + std::string(k) + "' does not apply to pulse.kind = " + kind);
  };
  if (kind == "gaussian") {
    reject({"pulse.start", "pulse.stop", "pulse.file"});
    GaussianPulse p;
    num("pulse.t0", p.t0);
    num("pulse.width", p.width);
    c.pulse = p;
  } else if (kind == "flattop") {
    reject({"pulse.t0", "pulse.width", "pulse.file"});
    FlatTopPulse p;
    num("pulse.start", p.start);
    num("pulse.stop", p.stop);
    c.pulse = p;
  } else if (kind == "sampled") {
    reject({"pulse.t0", "pulse.width", "pulse.start", "pulse.stop"});
    if (!has("pulse.file")) throw ConfigError("pulse.kind = sampled needs pulse.file");
    app.pulse_file = kv.at("pulse.file");
    std::filesystem::path path(app.pulse_file);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    c.pulse = load_sampled_pulse(path.string());
  } else {
    throw ConfigError("'pulse.kind': expected gaussian, flattop or sampled, got '" + kind + "'");
  }

  if (hyp_kv.empty()) {
    spec.hypotheses = default_hypotheses();
  } else {
    int expect = 0;
    int with_prior = 0;
    for (const auto& [i, h] : hyp_kv) {
      if (i != expect++) throw ConfigError("hypotheses must be numbered 0, 1, 2, ... without gaps");
      with_prior += h.count("prior") ? 1 : 0;
    }
    if (with_prior != 0 && with_prior != static_cast<int>(hyp_kv.size()))
      throw ConfigError("give a prior for every hypothesis or for none");
    for (const auto& [i, h] : hyp_kv) {
      const std::string prefix = "hypotheses[" + std::to_string(i) + "].";
      Hypothesis hyp;
      hyp.label = h.count("label") ? h.at("label") : std::to_string(i);
      if (!h.count("atom_init")) throw ConfigError("'" + prefix + "atom_init' is required");
      hyp.atom_init = parse_atom_level(h.at("atom_init"));
      hyp.prior = with_prior ? parse_double(prefix + "prior", h.at("prior")) : 1.0 / static_cast<double>(hyp_kv.size());
      if (h.count("gamma")) hyp.gamma = parse_double(prefix + "gamma", h.at("gamma"));
      if (h.count("kappa")) hyp.kappa = parse_double(prefix + "kappa", h.at("kappa"));
      if (h.count("detuning")) hyp.detuning = parse_double(prefix + "detuning", h.at("detuning"));
      std::map<std::string, std::string> fkv;
      for (const auto& [k, v] : h)
        if (k.rfind("field.", 0) == 0) fkv[k] = v;
      hyp.field = parse_field(fkv, "");
      spec.hypotheses.push_back(std::move(hyp));
    }
  }

  if (has("truth") && kv.at("truth") != "sampled") {
    spec.truth = TruthPolicy::kFixed;
    spec.fixed_truth = kv.at("truth");
  }
  if (has("n_trajectories")) spec.n_trajectories = parse_integer<int>("n_trajectories", kv.at("n_trajectories"));
  if (has("master_seed")) spec.master_seed = parse_integer<std::uint64_t>("master_seed", kv.at("master_seed"));
  if (has("validate_every")) spec.validate_every = parse_integer<int>("validate_every", kv.at("validate_every"));
  if (has("engine")) {
    const std::string& e = kv.at("engine");
    if (e == "auto") spec.engine = CountingEngine::kAuto;
    else if (e == "dense") spec.engine = CountingEngine::kDense;
    else if (e == "blocks") spec.engine = CountingEngine::kBlocks;
    else throw ConfigError("'engine': expected auto, dense or blocks, got '" + e + "'");
  }
  if (has("outputs")) {
    spec.outputs = EnsembleOutputs{false, false, false, false};
    std::stringstream ss(kv.at("outputs"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item == "qe_curve") spec.outputs.qe_curve = true;
      else if (item == "posterior_samples") spec.outputs.posterior_samples = true;
      else if (item == "records") spec.outputs.records = true;
      else if (item == "state_series") spec.outputs.state_series = true;
      else throw ConfigError("'outputs': unknown item '" + item + "'");
    }
  }
  return app;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::filesystem::path(path).parent_path());
}

/// Every key with its resolved value, in a form parse_config accepts.
inline void write_resolved_config(std::ostream& out, const AppConfig& app) {
  using detail::fmt17;
  const EnsembleSpec& s = app.spec;
  const ModelConfig& c = s.base;
  auto kv = [&out](std::string_view k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto field = [&](const std::string& prefix, const FieldSpec& f) {
    if (const auto* fock = std::get_if<FockField>(&f)) {
      kv(prefix + "field.kind", "fock");
      kv(prefix + "field.n", std::to_string(fock->n));
    } else if (const auto* coh = std::get_if<CoherentField>(&f)) {
      kv(prefix + "field.kind", "coherent");
      kv(prefix + "field.alpha", fmt17(coh->alpha.real()));
      kv(prefix + "field.alpha_imag", fmt17(coh->alpha.imag()));
    } else {
      throw ConfigError("explicit field amplitudes cannot be written to a config file");
    }
  };
  kv("gamma", fmt17(c.gamma));
  kv("kappa", fmt17(c.kappa));
  kv("detuning", fmt17(c.detuning));
  if (const auto* g = std::get_if<GaussianPulse>(&c.pulse)) {
    kv("pulse.kind", "gaussian");
    kv("pulse.t0", fmt17(g->t0));
    kv("pulse.width", fmt17(g->width));
  } else if (const auto* f = std::get_if<FlatTopPulse>(&c.pulse)) {
    kv("pulse.kind", "flattop");
    kv("pulse.start", fmt17(f->start));
    kv("pulse.stop", fmt17(f->stop));
  } else {
    kv("pulse.kind", "sampled");
    kv("pulse.file", app.pulse_file);
  }
  field("", c.field);
  kv("atom_init", std::string(atom_level_name(c.atom_init)));
  out << "# 0 selects the minimal truncation; resolved: " << resolved_cavity_dim(c) << '\n';
  kv("cavity_dim", std::to_string(c.cavity_dim));
  kv("dt", fmt17(c.dt));
  kv("t_final", fmt17(c.t_final));
  kv("detection.scheme", std::string(scheme_name(c.detection.scheme)));
  kv("detection.phase", fmt17(c.detection.phase));
  kv("cutoff_epsilon", fmt17(c.cutoff_epsilon));
  for (std::size_t i = 0; i < s.hypotheses.size(); ++i) {
    const Hypothesis& h = s.hypotheses[i];
    const std::string p = "hypotheses[" + std::to_string(i) + "].";
    kv(p + "label", h.label);
    kv(p + "atom_init", std::string(atom_level_name(h.atom_init)));
    kv(p + "prior", fmt17(h.prior));
    if (h.gamma) kv(p + "gamma", fmt17(*h.gamma));
    if (h.kappa) kv(p + "kappa", fmt17(*h.kappa));
    if (h.detuning) kv(p + "detuning", fmt17(*h.detuning));
    if (h.field) field(p, *h.field);
  }
  kv("truth", s.truth == TruthPolicy::kFixed ? s.fixed_truth : "sampled");
  kv("n_trajectories", std::to_string(s.n_trajectories));
  kv("master_seed", std::to_string(s.master_seed));
  kv("validate_every", std::to_string(s.validate_every));
  std::string outs;
  auto add = [&outs](bool on, const char* name) {
    if (on) outs += (outs.empty() ? "" : ",") + std::string(name);
  };
  add(s.outputs.qe_curve, "qe_curve");
  add(s.outputs.posterior_samples, "posterior_samples");
  add(s.outputs.records, "records");
  add(s.outputs.state_series, "state_series");
  kv("outputs", outs.empty() ? "qe_curve" : outs);
  kv("engine", s.engine == CountingEngine::kAuto ? "auto" : s.engine == CountingEngine::kDense ? "dense" : "blocks");
}

}  // namespace qpulse
