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

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodx/explain.hpp"
#include "oodx/metrics.hpp"

namespace oodx {

using Json = nlohmann::ordered_json;

inline Json realOrNull(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json realOrNull(const std::optional<double>& v) { return v ? realOrNull(*v) : Json(nullptr); }

inline Json realArray(const std::vector<std::optional<double>>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back(realOrNull(x));
  return out;
}

inline Json realArray(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(realOrNull(x));
  return out;
}

// The metrics report: completeness and separability, plus relative
// separability when a baseline was evaluated.
inline Json metricsJson(const CompletenessResult& c, const SeparabilityResult& s, std::optional<double> relative) {
  Json j;
  j["etaClf"] = realOrNull(c.etaClf);
  j["etaDet"] = realOrNull(c.etaDet);
  j["perClassDet"] = realArray(c.perClassDet);
  j["jSepGlobal"] = realOrNull(s.global);
  j["jSepPerClass"] = realArray(s.perClass);
  j["jSepRelative"] = realOrNull(relative);
  return j;
}

inline Json conceptSetJson(ConceptSet s, std::size_t m) {
  Json out = Json::array();
  for (std::size_t i = 0; i < m; ++i) {
    if (s & (ConceptSet{1} << i)) out.push_back(i);
  }
  return out;
}

inline Json shapleyJson(const ShapleyResult& r, std::optional<std::uint32_t> cls) {
  Json j;
  j["class"] = cls ? Json(*cls) : Json("global");
  j["mode"] = r.exact ? "exact" : "monteCarlo";
  if (!r.exact) {
    j["samples"] = r.samples;
    j["seed"] = r.seed;
  }
  j["shap"] = realArray(r.values);
  if (!r.exact) j["standardErrors"] = realArray(r.standardErrors);
  double sum = 0.0;
  for (double v : r.values) sum += v;
  j["sum"] = realOrNull(sum);
  j["nuFull"] = realOrNull(r.full);
  j["nuEmpty"] = realOrNull(r.empty);
  return j;
}

inline std::string dumpJson(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace oodx
