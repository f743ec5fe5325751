// SPDX-License-Identifier: Apache-2.0
#include "sae/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <vector>

namespace sae {

SaeConfig RunConfig::sae_config() const {
  SaeConfig cfg;
  cfg.d_model = d_model;
  cfg.n_features = resolved_n_features();
  cfg.k = k;
  cfg.variant = variant;
  cfg.position_kind = position_kind;
  cfg.l1_coeff = l1_coeff;
  return cfg;
}

TrainSchedule RunConfig::train_schedule() const {
  TrainSchedule s;
  s.total_steps = tokens ? *tokens / batch_size : total_steps;
  s.batch_size = batch_size;
  s.base_lr = base_lr;
  s.warmup_steps = warmup_steps;
  s.decay_fraction = decay_fraction;
  s.k_anneal_fraction = k_anneal_fraction;
  return s;
}

MagnitudeDist RunConfig::magnitude() const {
  MagnitudeDist m;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= synth_mag.size()) {
    const std::size_t colon = synth_mag.find(':', pos);
    parts.push_back(synth_mag.substr(pos, colon - pos));
    if (colon == std::string::npos) break;
    pos = colon + 1;
  }
  if (parts.size() == 3 && parts[0] == "uniform") {
    m.kind = MagnitudeDist::Kind::UniformOnInterval;
    m.a = std::stod(parts[1]);
    m.b = std::stod(parts[2]);
  } else if (parts.size() == 2 && parts[0] == "exp") {
    m.kind = MagnitudeDist::Kind::Exponential;
    m.a = std::stod(parts[1]);
  } else {
    throw ConfigError("bad synth_mag '" + synth_mag +
                      "' (expected uniform:lo:hi or exp:rate)");
  }
  return m;
}

RunConfig run_config_from_map(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  std::vector<std::string> problems;

  const auto set = [&](const std::string& key,
                       const std::function<void(const std::string&)>& apply) {
    const auto it = kv.find(key);
    if (it == kv.end()) return false;
    try {
      apply(it->second);
    } catch (const std::exception& e) {
      problems.push_back(key + "=" + it->second + " (" + e.what() + ")");
    }
    return true;
  };

  std::vector<std::string> known;
  const auto field = [&](const std::string& key,
                         const std::function<void(const std::string&)>& apply) {
    known.push_back(key);
    set(key, apply);
  };

  field("d_model", [&](const std::string& v) { rc.d_model = std::stoi(v); });
  field("n_features", [&](const std::string& v) { rc.n_features = std::stoi(v); });
  field("expansion", [&](const std::string& v) { rc.expansion = std::stod(v); });
  field("k", [&](const std::string& v) { rc.k = std::stoi(v); });
  field("variant", [&](const std::string& v) { rc.variant = variant_from_string(v); });
  field("position_kind",
        [&](const std::string& v) { rc.position_kind = position_kind_from_string(v); });
  field("l1_coeff", [&](const std::string& v) { rc.l1_coeff = std::stof(v); });
  field("total_steps", [&](const std::string& v) { rc.total_steps = std::stoll(v); });
  field("batch_size", [&](const std::string& v) { rc.batch_size = std::stoll(v); });
  field("base_lr", [&](const std::string& v) { rc.base_lr = std::stod(v); });
  field("warmup_steps", [&](const std::string& v) { rc.warmup_steps = std::stoll(v); });
  field("decay_fraction",
        [&](const std::string& v) { rc.decay_fraction = std::stod(v); });
  field("k_anneal_fraction",
        [&](const std::string& v) { rc.k_anneal_fraction = std::stod(v); });
  field("log_every", [&](const std::string& v) { rc.log_every = std::stoll(v); });
  field("source", [&](const std::string& v) { rc.source = v; });
  field("target_source", [&](const std::string& v) { rc.target_source = v; });
  field("buffer_capacity",
        [&](const std::string& v) { rc.buffer_capacity = std::stoll(v); });
  field("norm_samples", [&](const std::string& v) { rc.norm_samples = std::stoll(v); });
  field("tokens", [&](const std::string& v) { rc.tokens = std::stoll(v); });
  field("synth_g", [&](const std::string& v) { rc.synth_g = std::stoi(v); });
  field("synth_fire_prob",
        [&](const std::string& v) { rc.synth_fire_prob = std::stof(v); });
  field("synth_noise_sigma",
        [&](const std::string& v) { rc.synth_noise_sigma = std::stof(v); });
  field("synth_mag", [&](const std::string& v) { rc.synth_mag = v; });
  field("seed", [&](const std::string& v) { rc.seed = std::stoull(v); });
  field("out", [&](const std::string& v) { rc.out = v; });
  field("label", [&](const std::string& v) { rc.label = v; });

  for (const auto& [key, value] : kv) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      problems.push_back("unknown key '" + key + "'");
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw ConfigError(msg, problems);
  }
  return rc;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::vector<std::string> problems;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": no '='");
      continue;
    }
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t'))
      value.pop_back();
    kv[key] = value;
  }
  if (!problems.empty()) {
    std::string msg = "malformed config " + path + ":";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw ConfigError(msg, problems);
  }
  return run_config_from_map(kv);
}

}  // namespace sae
