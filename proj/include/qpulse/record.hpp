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

// Measurement records and their text format.
//
//   # qpulse-record 1
//   # scheme counting|homodyne
//   # dt <double>
//   # steps <int>
//   # t_final <double>
//   # phase <double>
//   # seed <uint64>
//   # trajectory <uint64>
//   # truth <label>        (optional)
//   # config_hash <hex>
//   <step> <time>        one line per click (counting)
//   <dY>                 one line per step  (homodyne)
//
// Doubles are written with 17 significant digits, so a write/read round trip
// is exact.

#include "qpulse/model.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace qpulse {

struct MeasurementRecord {
  DetectionScheme scheme = DetectionScheme::kCounting;
  double dt = 0.0;
  int steps = 0;
  double phase = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t trajectory = 0;  // index within the ensemble seeded by `seed`
  std::string truth;             // label of the generating hypothesis, if known
  std::string config_hash;
  std::vector<int> click_steps;    // counting: sorted step indices of clicks
  std::vector<double> increments;  // homodyne: dY per step

  double t_final() const { return steps * dt; }
  int clicks() const { return static_cast<int>(click_steps.size()); }

  std::vector<double> click_times() const {
    std::vector<double> t;
    t.reserve(click_steps.size());
    for (int k : click_steps) t.push_back(k * dt);
    return t;
  }

  /// Per-step click flags.
  std::vector<bool> click_mask() const {
    std::vector<bool> mask(static_cast<std::size_t>(steps), false);
    for (int k : click_steps) mask.at(static_cast<std::size_t>(k)) = true;
    return mask;
  }

  bool operator==(const MeasurementRecord&) const = default;
};

inline void write_record(std::ostream& out, const MeasurementRecord& r) {
  using detail::fmt17;
  out << "# qpulse-record 1\n";
  out << "# scheme " << scheme_name(r.scheme) << '\n';
  out << "# dt " << fmt17(r.dt) << '\n';
  out << "# steps " << r.steps << '\n';
  out << "# t_final " << fmt17(r.t_final()) << '\n';
  out << "# phase " << fmt17(r.phase) << '\n';
  out << "# seed " << r.seed << '\n';
  out << "# trajectory " << r.trajectory << '\n';
  if (!r.truth.empty()) out << "# truth " << r.truth << '\n';
  out << "# config_hash " << r.config_hash << '\n';
  if (r.scheme == DetectionScheme::kCounting) {
    for (int k : r.click_steps) out << k << ' ' << fmt17(k * r.dt) << '\n';
  } else {
    for (double dy : r.increments) out << fmt17(dy) << '\n';
  }
}

inline MeasurementRecord read_record(std::istream& in) {
  MeasurementRecord r;
  std::map<std::string, std::string> header;
  std::string line;
  int lineno = 0;
  bool data = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (data) throw ConfigError("record line " + std::to_string(lineno) + ": header after data");
      std::istringstream ls(line.substr(1));
      std::string key, value;
      ls >> key >> value;
      header[key] = value;
      continue;
    }
    if (!data) {
      data = true;
      if (!header.count("scheme") || !header.count("dt") || !header.count("steps"))
        throw ConfigError("record header lacks scheme/dt/steps");
      r.scheme = parse_scheme(header["scheme"]);
    }
    std::istringstream ls(line);
    if (r.scheme == DetectionScheme::kCounting) {
      int k;
      if (!(ls >> k)) throw ConfigError("record line " + std::to_string(lineno) + ": expected click step");
      r.click_steps.push_back(k);
    } else {
      std::string tok;
      ls >> tok;
      r.increments.push_back(std::stod(tok));
    }
  }
  if (!header.count("scheme") || !header.count("dt") || !header.count("steps"))
    throw ConfigError("record header lacks scheme/dt/steps");
  r.scheme = parse_scheme(header["scheme"]);
  r.dt = std::stod(header["dt"]);
  r.steps = std::stoi(header["steps"]);
  if (header.count("phase")) r.phase = std::stod(header["phase"]);
  if (header.count("seed")) r.seed = std::stoull(header["seed"]);
  if (header.count("trajectory")) r.trajectory = std::stoull(header["trajectory"]);
  if (header.count("truth")) r.truth = header["truth"];
  if (header.count("config_hash")) r.config_hash = header["config_hash"];
  if (r.scheme == DetectionScheme::kHomodyne && static_cast<int>(r.increments.size()) != r.steps)
    throw ConfigError("homodyne record has " + std::to_string(r.increments.size()) + " increments for " +
                      std::to_string(r.steps) + " steps");
  for (std::size_t i = 0; i < r.click_steps.size(); ++i) {
    if (r.click_steps[i] < 0 || r.click_steps[i] >= r.steps) throw ConfigError("click step outside the grid");
    if (i > 0 && r.click_steps[i] <= r.click_steps[i - 1]) throw ConfigError("click steps must increase");
  }
  return r;
}

inline void save_record(const std::string& path, const MeasurementRecord& r) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write record file '" + path + "'");
  write_record(out, r);
}

inline MeasurementRecord load_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open record file '" + path + "'");
  return read_record(in);
}

}  // namespace qpulse
