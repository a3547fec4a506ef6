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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oodx/binary_io.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

// .cft: "CFT1", u32 N, u32 P, u32 d, then N*P*d f32 (sample, patch, channel).
inline constexpr std::string_view kCftMagic = "CFT1";
// .labels: "LBL1", u32 N, u32 L, then N u32 labels.
inline constexpr std::string_view kLabelsMagic = "LBL1";

inline std::vector<char> encodeCft(const FeatureTensor& t) {
  io::ByteWriter w;
  w.raw(kCftMagic);
  w.u32(static_cast<std::uint32_t>(t.samples()));
  w.u32(static_cast<std::uint32_t>(t.patches()));
  w.u32(static_cast<std::uint32_t>(t.channels()));
  for (float v : t.data()) w.f32(v);
  return w.bytes();
}

inline FeatureTensor decodeCft(std::vector<char> bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  if (r.size() < 16) throw FormatError(source + ": file too short for a .cft header");
  if (r.raw(4) != kCftMagic) throw FormatError(source + ": bad magic, expected CFT1");
  const std::uint64_t n = r.u32();
  const std::uint64_t p = r.u32();
  const std::uint64_t d = r.u32();
  const std::uint64_t expected = n * p * d * 4;
  if (r.remaining() != expected) {
    throw FormatError(source + ": payload length mismatch, expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(r.remaining()));
  }
  std::vector<float> data(static_cast<std::size_t>(n * p * d));
  for (auto& v : data) {
    v = r.f32();
    if (!std::isfinite(v)) throw DataError(source + ": non-finite value in payload");
  }
  return FeatureTensor(n, p, d, std::move(data));
}

inline void writeCft(const FeatureTensor& t, const std::filesystem::path& path) {
  io::writeFileAtomic(path, encodeCft(t));
}

inline FeatureTensor readCft(const std::filesystem::path& path) {
  return decodeCft(io::readFile(path), path.string());
}

inline void writeLabels(const LabelVector& labels, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.raw(kLabelsMagic);
  w.u32(static_cast<std::uint32_t>(labels.size()));
  w.u32(labels.numClasses());
  for (auto y : labels.values()) w.u32(y);
  io::writeFileAtomic(path, w.bytes());
}

inline LabelVector readLabels(const std::filesystem::path& path) {
  io::ByteReader r(io::readFile(path), path.string());
  if (r.size() < 12) throw FormatError(path.string() + ": file too short for a .labels header");
  if (r.raw(4) != kLabelsMagic) throw FormatError(path.string() + ": bad magic, expected LBL1");
  const std::uint64_t n = r.u32();
  const std::uint32_t num_classes = r.u32();
  if (r.remaining() != n * 4) {
    throw FormatError(path.string() + ": payload length mismatch, expected " +
                      std::to_string(n * 4) + " bytes, found " + std::to_string(r.remaining()));
  }
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
  for (auto& y : labels) y = r.u32();
  return LabelVector(std::move(labels), num_classes);
}

// Parameters of the desk-scale Gaussian ID/OOD feature generator.
struct SyntheticSpec {
  std::uint32_t numClasses = 5;
  std::uint32_t channels = 16;
  std::uint32_t patches = 4;
  std::uint32_t perClassN = 200;
  double idSpread = 1.0;
  double oodShift = 4.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (numClasses < 2) throw ConfigError("synthetic spec needs at least 2 classes");
    if (channels == 0 || patches == 0 || perClassN == 0) {
      throw ConfigError("synthetic spec counts must be positive");
    }
    if (!(idSpread >= 0.0) || !std::isfinite(idSpread)) {
      throw ConfigError("synthetic idSpread must be finite and non-negative");
    }
    if (!(oodShift >= 0.0) || !std::isfinite(oodShift)) {
      throw ConfigError("synthetic oodShift must be finite and non-negative");
    }
  }
};

// Distance of every class mean from the origin, in units of idSpread.
inline constexpr double kClassSeparation = 3.0;

namespace detail {

inline Vec randomUnit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

// Draws `count` samples around `means[assign(i)]`, clipped at zero.
template <typename AssignFn>
FeatureTensor drawSamples(std::mt19937_64& rng, const std::vector<Vec>& means, std::size_t count,
                          std::size_t patches, double spread, AssignFn assign) {
  const std::size_t d = static_cast<std::size_t>(means.front().size());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> data;
  data.reserve(count * patches * d);
  for (std::size_t n = 0; n < count; ++n) {
    const Vec& mu = means[assign(n)];
    for (std::size_t p = 0; p < patches; ++p) {
      for (std::size_t c = 0; c < d; ++c) {
        const double x = mu(static_cast<Eigen::Index>(c)) + spread * normal(rng);
        data.push_back(static_cast<float>(std::max(0.0, x)));
      }
    }
  }
  return FeatureTensor(count, patches, d, std::move(data));
}

}  // namespace detail

// ID classes are isotropic Gaussians around kClassSeparation*idSpread*u_c for
// random unit u_c; OOD clusters sit at oodShift*w_k where w_k is orthogonal to
// every class direction whenever d > L. Features are clipped at zero.
inline DatasetBundle generateSynthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t L = spec.numClasses;
  const std::size_t d = spec.channels;

  std::vector<Vec> class_dirs;
  std::vector<Vec> class_means;
  for (std::size_t c = 0; c < L; ++c) {
    class_dirs.push_back(detail::randomUnit(rng, d));
    class_means.push_back(kClassSeparation * spec.idSpread * class_dirs.back());
  }

  // Orthonormal basis of the class directions, for projecting them out.
  Mat basis(static_cast<Eigen::Index>(d), 0);
  if (d > L) {
    Mat dirs(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(L));
    for (std::size_t c = 0; c < L; ++c) dirs.col(static_cast<Eigen::Index>(c)) = class_dirs[c];
    Eigen::HouseholderQR<Mat> qr(dirs);
    basis = qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(L));
  }
  std::vector<Vec> ood_means;
  for (std::size_t k = 0; k < L; ++k) {
    Vec w;
    do {
      w = detail::randomUnit(rng, d);
      if (basis.cols() > 0) w -= basis * (basis.transpose() * w);
    } while (w.norm() < 1e-6);
    ood_means.push_back(spec.oodShift * w / w.norm());
  }

  const std::size_t n_train = spec.perClassN;
  const std::size_t n_eval = std::max<std::size_t>(2, (spec.perClassN + 1) / 2);
  auto labeled = [&](std::size_t per_class) {
    const std::size_t total = per_class * L;
    std::vector<std::uint32_t> labels(total);
    for (std::size_t i = 0; i < total; ++i) labels[i] = static_cast<std::uint32_t>(i % L);
    FeatureTensor t = detail::drawSamples(rng, class_means, total, spec.patches, spec.idSpread,
                                          [&](std::size_t i) { return labels[i]; });
    return LabeledSplit{std::move(t), LabelVector(std::move(labels), spec.numClasses)};
  };
  auto unlabeled = [&](std::size_t count) {
    std::uniform_int_distribution<std::size_t> pick(0, ood_means.size() - 1);
    std::vector<std::size_t> assign(count);
    for (auto& a : assign) a = pick(rng);
    return detail::drawSamples(rng, ood_means, count, spec.patches, spec.idSpread,
                               [&](std::size_t i) { return assign[i]; });
  };

  DatasetBundle bundle;
  bundle.idTrain = labeled(n_train);
  bundle.idVal = labeled(n_eval);
  bundle.idTest = labeled(n_eval);
  bundle.oodTrain = unlabeled(n_train * L);
  bundle.oodVal = unlabeled(n_eval * L);
  bundle.oodTest = unlabeled(n_eval * L);
  return bundle;
}

// On-disk bundle layout: <dir>/{id_train,id_val,id_test}.{cft,labels} and
// <dir>/{ood_train,ood_val,ood_test}.cft.
inline void writeBundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const std::pair<const char*, const LabeledSplit*> labeled[] = {
      {"id_train", &b.idTrain}, {"id_val", &b.idVal}, {"id_test", &b.idTest}};
  for (const auto& [name, split] : labeled) {
    writeCft(split->features, dir / (std::string(name) + ".cft"));
    writeLabels(split->labels, dir / (std::string(name) + ".labels"));
  }
  writeCft(b.oodTrain, dir / "ood_train.cft");
  writeCft(b.oodVal, dir / "ood_val.cft");
  writeCft(b.oodTest, dir / "ood_test.cft");
}

inline DatasetBundle readBundle(const std::filesystem::path& dir) {
  auto split = [&](const char* name) {
    return LabeledSplit{readCft(dir / (std::string(name) + ".cft")),
                        readLabels(dir / (std::string(name) + ".labels"))};
  };
  DatasetBundle b{split("id_train"), split("id_val"), split("id_test"),
                  readCft(dir / "ood_train.cft"), readCft(dir / "ood_val.cft"),
                  readCft(dir / "ood_test.cft")};
  b.validate();
  return b;
}

}  // namespace oodx
