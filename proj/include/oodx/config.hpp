/*
 * Copyright 2026 The oodx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oodx/binary_io.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/explain.hpp"
#include "oodx/learn.hpp"
#include "oodx/model.hpp"
#include "oodx/tensorio.hpp"

namespace oodx {

// Flat "key = value" text with "[section]" headers. Blank lines and lines
// starting with '#' or ';' are ignored. Keys are stored as "section.key".
class IniFile {
 public:
  static IniFile parse(const std::string& text, const std::string& source = "<config>") {
    IniFile ini;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError(source + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (ini.values_.count(full)) throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key " + full);
      ini.values_[full] = trim(s.substr(eq + 1));
    }
    return ini;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

enum class ShapleyMode { kExact, kMonteCarlo };

struct ExplainOptions {
  ShapleyMode mode = ShapleyMode::kExact;
  std::size_t samples = 2000;
  std::size_t top = 5;  // concepts per class in the pattern summary
  double patchThreshold = 0.8;
  CharacteristicConfig characteristic;
};

// Everything a CLI run needs. Inputs come either from a directory of
// .cft/.labels files or from a synthetic spec, never both.
struct RunConfig {
  std::optional<std::filesystem::path> dataDir;
  std::optional<SyntheticSpec> synthetic;
  DetectorKind detector = DetectorKind::kEnergy;
  std::optional<double> temperature;
  double mahalanobisRidge = -1.0;  // negative selects the trace-scaled default
  std::string preset;
  LearnConfig learn;
  HeadTrainConfig head;
  ExplainOptions explain;
  std::vector<std::size_t> ks;  // empty: 0..m'
  InterventionEdit edit = InterventionEdit::kRescale;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;

  DetectorSpec detectorSpec() const {
    DetectorSpec spec = DetectorSpec::withDefaults(detector);
    if (temperature) spec.temperature = *temperature;
    return spec;
  }

  // Propagates the run seed into every seeded component.
  void applySeed(std::uint64_t s) {
    seed = s;
    if (synthetic) synthetic->seed = s;
    learn.seed = s;
    head.seed = s;
    explain.characteristic.seed = s;
  }

  SyntheticSpec syntheticOrDefault() const {
    SyntheticSpec spec = synthetic.value_or(SyntheticSpec{});
    spec.seed = seed;
    return spec;
  }

  void validate() const {
    if (dataDir && synthetic) throw ConfigError("give either [data] dir or a [synthetic] section, not both");
    if (synthetic) synthetic->validate();
    learn.validate();
    if (temperature && !(*temperature > 0.0)) throw ConfigError("detector temperature must be positive");
    if (explain.samples < 1) throw ConfigError("explain samples must be positive");
    if (explain.characteristic.budget < 0) throw ConfigError("fine-tuning budget must be non-negative");
  }
};

namespace detail {

template <typename T>
T parseNumber(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return value;
}

inline std::vector<std::size_t> parseList(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    out.push_back(parseNumber<std::size_t>(key, item.substr(b, e - b + 1)));
  }
  return out;
}

}  // namespace detail

inline RunConfig parseRunConfig(const std::string& text, const std::string& source = "<config>") {
  const IniFile ini = IniFile::parse(text, source);
  const auto& kv = ini.values();
  RunConfig cfg;
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  using detail::parseNumber;

  bool has_synthetic = false;
  for (const auto& [k, v] : kv) has_synthetic = has_synthetic || k.rfind("synthetic.", 0) == 0;
  if (has_synthetic) cfg.synthetic = SyntheticSpec{};

  std::optional<DetectorKind> preset_detector;
  std::optional<Preset> preset;
  if (const auto* v = get("learn.preset")) {
    const PresetSelection sel = parsePreset(*v);
    preset = sel.preset;
    preset_detector = sel.detector;
    cfg.preset = *v;
  }
  if (const auto* v = get("detector.kind")) {
    cfg.detector = parseDetectorKind(*v);
    if (preset_detector && *preset_detector != cfg.detector) {
      throw ConfigError("preset '" + cfg.preset + "' does not match detector kind '" + *v + "'");
    }
  } else if (preset_detector) {
    cfg.detector = *preset_detector;
  }
  if (preset) applyPreset(cfg.learn, *preset, cfg.detector);

  for (const auto& [k, v] : kv) {
    if (k == "learn.preset" || k == "detector.kind") continue;
    if (k == "seed") cfg.seed = parseNumber<std::uint64_t>(k, v);
    else if (k == "out") cfg.out = v;
    else if (k == "data.dir") cfg.dataDir = v;
    else if (k == "synthetic.classes") cfg.synthetic->numClasses = parseNumber<std::uint32_t>(k, v);
    else if (k == "synthetic.channels") cfg.synthetic->channels = parseNumber<std::uint32_t>(k, v);
    else if (k == "synthetic.patches") cfg.synthetic->patches = parseNumber<std::uint32_t>(k, v);
    else if (k == "synthetic.perClassN") cfg.synthetic->perClassN = parseNumber<std::uint32_t>(k, v);
    else if (k == "synthetic.idSpread") cfg.synthetic->idSpread = parseNumber<double>(k, v);
    else if (k == "synthetic.oodShift") cfg.synthetic->oodShift = parseNumber<double>(k, v);
    else if (k == "detector.temperature") cfg.temperature = parseNumber<double>(k, v);
    else if (k == "detector.ridge") cfg.mahalanobisRidge = parseNumber<double>(k, v);
    else if (k == "head.epochs") cfg.head.epochs = parseNumber<int>(k, v);
    else if (k == "head.batchSize") cfg.head.batchSize = parseNumber<int>(k, v);
    else if (k == "head.learningRate") cfg.head.learningRate = parseNumber<double>(k, v);
    else if (k == "learn.m") cfg.learn.concepts = parseNumber<Index>(k, v);
    else if (k == "learn.lambdaExpl") cfg.learn.lambdaExpl = parseNumber<double>(k, v);
    else if (k == "learn.lambdaMse") cfg.learn.lambdaMse = parseNumber<double>(k, v);
    else if (k == "learn.lambdaNorm") cfg.learn.lambdaNorm = parseNumber<double>(k, v);
    else if (k == "learn.lambdaSep") cfg.learn.lambdaSep = parseNumber<double>(k, v);
    else if (k == "learn.K") cfg.learn.neighbors = parseNumber<Index>(k, v);
    else if (k == "learn.alpha") cfg.learn.alpha = parseNumber<double>(k, v);
    else if (k == "learn.epochs") cfg.learn.epochs = parseNumber<int>(k, v);
    else if (k == "learn.batchSize") cfg.learn.batchSize = parseNumber<Index>(k, v);
    else if (k == "learn.learningRate") cfg.learn.learningRate = parseNumber<double>(k, v);
    else if (k == "learn.hidden") cfg.learn.hidden = parseNumber<Index>(k, v);
    else if (k == "learn.separability") {
      if (v == "global") cfg.learn.separabilityMode = SeparabilityMode::kGlobal;
      else if (v == "perClass") cfg.learn.separabilityMode = SeparabilityMode::kPerClass;
      else throw ConfigError("learn.separability must be 'global' or 'perClass'");
    } else if (k == "explain.mode") {
      if (v == "exact") cfg.explain.mode = ShapleyMode::kExact;
      else if (v == "mc") cfg.explain.mode = ShapleyMode::kMonteCarlo;
      else throw ConfigError("explain.mode must be 'exact' or 'mc'");
    } else if (k == "explain.samples") cfg.explain.samples = parseNumber<std::size_t>(k, v);
    else if (k == "explain.top") cfg.explain.top = parseNumber<std::size_t>(k, v);
    else if (k == "explain.patchThreshold") cfg.explain.patchThreshold = parseNumber<double>(k, v);
    else if (k == "explain.budget") cfg.explain.characteristic.budget = parseNumber<int>(k, v);
    else if (k == "explain.subsample") cfg.explain.characteristic.subsample = parseNumber<std::size_t>(k, v);
    else if (k == "explain.learningRate") cfg.explain.characteristic.learningRate = parseNumber<double>(k, v);
    else if (k == "intervene.ks") cfg.ks = detail::parseList(k, v);
    else if (k == "intervene.edit") cfg.edit = parseInterventionEdit(v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  cfg.applySeed(cfg.seed);
  cfg.validate();
  return cfg;
}

inline RunConfig loadRunConfig(const std::filesystem::path& path) {
  const std::vector<char> bytes = io::readFile(path);
  return parseRunConfig(std::string(bytes.begin(), bytes.end()), path.string());
}

}  // namespace oodx
