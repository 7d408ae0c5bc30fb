/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "brainood/cli/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"

namespace brainood::cli {
namespace {

using Setter = std::function<void(RunConfig&, std::string_view)>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw Error(ErrorCode::kInvalidArgument,
              "config: " + std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

std::string unquote(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  if (v.find('"') != std::string_view::npos) bad_value(key, v, "a string");
  return std::string(v);
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    bad_value(key, trim(v), "a number");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> parse_list(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad_value(key, v, "a [..] list");
  v = trim(v.substr(1, v.size() - 2));
  std::vector<std::string> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    const std::string item = unquote(key, v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (item.empty()) bad_value(key, v, "non-empty list items");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
void assign(T& field, std::string_view key, std::string_view v) {
  if constexpr (std::is_same_v<T, bool>) {
    field = parse_bool(key, v);
  } else if constexpr (std::is_same_v<T, double>) {
    field = parse_real(key, v);
  } else {
    field = static_cast<T>(parse_unsigned(key, v));
  }
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["seed"] = [](RunConfig& c, std::string_view v) { c.seed = parse_unsigned("seed", v); };
    t["jobs"] = [](RunConfig& c, std::string_view v) { c.jobs = parse_unsigned("jobs", v); };
    t["mode"] = [](RunConfig& c, std::string_view v) { c.eval_mode = parse_eval_mode(unquote("mode", v)); };

    t["paths.manifest"] = [](RunConfig& c, std::string_view v) { c.paths.manifest = unquote("paths.manifest", v); };
    t["paths.splits"] = [](RunConfig& c, std::string_view v) { c.paths.splits = unquote("paths.splits", v); };
    t["paths.output_dir"] = [](RunConfig& c, std::string_view v) {
      c.paths.output_dir = unquote("paths.output_dir", v);
    };
    t["paths.checkpoint"] = [](RunConfig& c, std::string_view v) {
      c.paths.checkpoint = unquote("paths.checkpoint", v);
    };

    auto synthetic = [&t](const char* name, auto member) {
      const std::string key = std::string("synthetic.") + name;
      t[key] = [key, member](RunConfig& c, std::string_view v) { assign(c.synthetic.*member, key, v); };
    };
    synthetic("n", &data::SyntheticConfig::n);
    synthetic("sites", &data::SyntheticConfig::sites);
    synthetic("subjects_per_site", &data::SyntheticConfig::subjects_per_site);
    synthetic("classes", &data::SyntheticConfig::classes);
    synthetic("causal_edge_fraction", &data::SyntheticConfig::causal_edge_fraction);
    synthetic("site_edge_fraction", &data::SyntheticConfig::site_edge_fraction);
    synthetic("causal_strength", &data::SyntheticConfig::causal_strength);
    synthetic("site_bias_strength", &data::SyntheticConfig::site_bias_strength);
    synthetic("noise_level", &data::SyntheticConfig::noise_level);
    synthetic("baseline_level", &data::SyntheticConfig::baseline_level);

    // The training seed comes from the root seed, so it has no key of its own.
    TrainConfig probe;
    for_each_field(probe, [&t](const char* name, auto&) {
      const std::string field(name);
      if (field == "seed") return;
      const std::string key = "train." + field;
      t[key] = [key, field](RunConfig& c, std::string_view v) {
        for_each_field(c.train, [&](const char* n, auto& target) {
          if (field == n) assign(target, key, v);
        });
      };
    });

    t["split.ood_sites"] = [](RunConfig& c, std::string_view v) { c.ood_sites = parse_list("split.ood_sites", v); };
    t["split.ratio"] = [](RunConfig& c, std::string_view v) {
      const auto parts = parse_list("split.ratio", v);
      if (parts.size() != 3) bad_value("split.ratio", v, "three integers [train, val, test]");
      c.ratio = {parse_unsigned("split.ratio", parts[0]), parse_unsigned("split.ratio", parts[1]),
                 parse_unsigned("split.ratio", parts[2])};
    };
    t["split.folds"] = [](RunConfig& c, std::string_view v) { c.folds = parse_unsigned("split.folds", v); };
    t["split.fold"] = [](RunConfig& c, std::string_view v) { c.fold = parse_unsigned("split.fold", v); };

    t["interpret.top_k"] = [](RunConfig& c, std::string_view v) { c.top_k = parse_unsigned("interpret.top_k", v); };
    t["interpret.subjects"] = [](RunConfig& c, std::string_view v) {
      const std::string s = unquote("interpret.subjects", v);
      if (s != "all" && s != "test") bad_value("interpret.subjects", v, "\"all\" or \"test\"");
      c.interpret_subjects = s;
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::propagate_seed() {
  synthetic.seed = seed;
  train.seed = seed;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorCode::kInvalidArgument, "config: unknown key '" + std::string(key) + "'");
  it->second(cfg, value);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;

    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw Error(ErrorCode::kInvalidArgument, where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::kInvalidArgument, where + "expected key = value");
    const std::string_view name = trim(line.substr(0, eq));
    const std::string key = section.empty() ? std::string(name) : section + "." + std::string(name);
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const Error& e) {
      std::string_view message = e.what();
      if (message.starts_with("config: ")) message.remove_prefix(8);
      throw Error(e.code(), where + std::string(message));
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text_file(path)); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

std::vector<std::string> ablation_names() {
  return {"no-mask", "no-sampler", "no-entropy", "no-recon", "no-align", "use-raw-X", "use-raw-A"};
}

void apply_ablation(TrainConfig& cfg, std::string_view name) {
  if (name == "no-mask") cfg.use_mask = false;
  else if (name == "no-sampler") cfg.use_sampler = false;
  else if (name == "no-entropy") cfg.use_entropy = false;
  else if (name == "no-recon") cfg.use_recon = false;
  else if (name == "no-align") cfg.use_align = false;
  else if (name == "use-raw-X") cfg.use_raw_x = true;
  else if (name == "use-raw-A") cfg.use_raw_a = true;
  else throw Error(ErrorCode::kInvalidArgument, "unknown ablation '" + std::string(name) + "'");
}

model::SampleMode parse_eval_mode(std::string_view name) {
  if (name == "soft") return model::SampleMode::kNoiseFree;
  if (name == "hard") return model::SampleMode::kHard;
  throw Error(ErrorCode::kInvalidArgument, "mode: expected soft or hard, got '" + std::string(name) + "'");
}

}  // namespace brainood::cli
