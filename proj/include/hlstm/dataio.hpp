// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

// FSEQ layout, little-endian:
//
//   "FSEQ1"               5 bytes
//   T, D, label           u32 each
//   T*D frame values      f32, row-major (frame by frame)
//
// Manifest: UTF-8 text, one directive or record per line. Blank lines and
// lines starting with '#' are ignored. Fields split on whitespace or commas.
//
//   classes <N>
//   <relative/path.fseq> <label> [fold]

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlstm/binary.hpp"
#include "hlstm/numerics.hpp"
#include "hlstm/random.hpp"

namespace hlstm {

struct FeatureSequence {
  std::vector<Vec> frames;
  std::size_t label = 0;
  std::string id;

  std::size_t length() const noexcept { return frames.size(); }
  std::size_t dim() const noexcept { return frames.empty() ? 0 : frames.front().size(); }

  friend bool operator==(const FeatureSequence&, const FeatureSequence&) = default;
};

struct Dataset {
  std::vector<FeatureSequence> sequences;
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<std::optional<std::size_t>> folds;  // parallel to sequences; may be empty

  std::size_t size() const noexcept { return sequences.size(); }
  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    for (const auto& s : sequences) out.push_back(s.label);
    return out;
  }
  /// Subset in the order of idx.
  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d{{}, classes, dim, {}};
    for (std::size_t i : idx) {
      d.sequences.push_back(sequences[i]);
      if (!folds.empty()) d.folds.push_back(folds[i]);
    }
    return d;
  }
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kFseqMagic = "FSEQ1";

// ---------------------------------------------------------------------------
// FSEQ

inline std::vector<char> encode_fseq(const FeatureSequence& seq) {
  if (seq.frames.empty()) throw DataError("fseq: sequence has no frames");
  const std::size_t d = seq.dim();
  const auto limit = std::numeric_limits<std::uint32_t>::max();
  if (seq.length() > limit || d > limit || seq.label > limit) {
    throw DataError("fseq: T, D or label exceeds 32 bits");
  }
  ByteWriter w;
  w.bytes(kFseqMagic);
  w.u32(static_cast<std::uint32_t>(seq.length()));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(seq.label));
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const Vec& x = seq.frames[t];
    if (x.size() != d) {
      throw DataError("fseq: frame " + std::to_string(t) + " has dim " + std::to_string(x.size()) +
                      ", expected " + std::to_string(d));
    }
    for (double v : x) {
      if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
        throw DataError("fseq: value " + std::to_string(v) + " in frame " + std::to_string(t) +
                        " is not a finite 32-bit real");
      }
      w.f32(static_cast<float>(v));
    }
  }
  return w.data();
}

inline FeatureSequence decode_fseq(ByteReader r, std::string id = {}) {
  r.expect(kFseqMagic, "FSEQ1");
  const std::size_t at_t = r.offset();
  const std::uint32_t t_len = r.u32("T");
  const std::uint32_t d = r.u32("D");
  const std::uint32_t label = r.u32("label");
  if (t_len == 0 || d == 0) throw ParseError("T and D must be >= 1", at_t);
  const std::uint64_t values = static_cast<std::uint64_t>(t_len) * d;
  if (values > r.remaining() / 4) {
    throw ParseError("T*D = " + std::to_string(values) + " values exceed the " +
                         std::to_string(r.remaining()) + " remaining bytes",
                     at_t);
  }
  FeatureSequence seq;
  seq.label = label;
  seq.id = std::move(id);
  seq.frames.assign(t_len, Vec(d));
  for (Vec& x : seq.frames) {
    for (double& v : x) v = static_cast<double>(r.f32("frame values"));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after frame values", r.offset());
  return seq;
}

inline void write_fseq(const std::string& path, const FeatureSequence& seq) {
  const auto bytes = encode_fseq(seq);
  ByteWriter w;
  w.bytes(std::string_view(bytes.data(), bytes.size()));
  w.save(path);
}

inline FeatureSequence read_fseq(const std::string& path) {
  try {
    return decode_fseq(ByteReader::load(path), std::filesystem::path(path).stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.reason(), e.offset());
  }
}

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

inline std::vector<std::string> manifest_fields(std::string line) {
  for (char& c : line) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

inline std::size_t parse_count(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
  }
  if (pos != s.size()) throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Reads a manifest and every sequence it lists, resolving paths relative to
/// the manifest's directory.
inline Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  Dataset ds;
  std::optional<std::size_t> classes;
  std::size_t dim_line = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = path + ":" + std::to_string(lineno);
    const auto f = detail::manifest_fields(line);
    if (f.empty() || f[0][0] == '#') continue;
    if (f[0] == "classes") {
      if (f.size() != 2) throw DataError(where + ": expected 'classes <N>'");
      if (classes) throw DataError(where + ": class count declared twice");
      classes = detail::parse_count(f[1], where);
      if (*classes < 2) throw DataError(where + ": class count must be >= 2");
      continue;
    }
    if (!classes) throw DataError(where + ": record before the 'classes <N>' line");
    if (f.size() < 2 || f.size() > 3) {
      throw DataError(where + ": expected '<path> <label> [fold]', got " +
                      std::to_string(f.size()) + " fields");
    }
    const std::size_t label = detail::parse_count(f[1], where);
    if (label >= *classes) {
      throw DataError(where + ": label " + std::to_string(label) + " out of range for " +
                      std::to_string(*classes) + " classes");
    }
    std::optional<std::size_t> fold;
    if (f.size() == 3) fold = detail::parse_count(f[2], where);

    const std::filesystem::path file = base / f[0];
    if (!std::filesystem::exists(file)) throw DataError(where + ": missing file " + file.string());
    FeatureSequence seq;
    try {
      seq = read_fseq(file.string());
    } catch (const std::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (seq.label != label) {
      throw DataError(where + ": manifest label " + std::to_string(label) + " but " +
                      file.string() + " carries label " + std::to_string(seq.label));
    }
    if (ds.sequences.empty()) {
      ds.dim = seq.dim();
      dim_line = lineno;
    } else if (seq.dim() != ds.dim) {
      throw DataError(where + ": feature dim " + std::to_string(seq.dim()) + " differs from dim " +
                      std::to_string(ds.dim) + " at line " + std::to_string(dim_line));
    }
    seq.id = f[0];
    ds.sequences.push_back(std::move(seq));
    ds.folds.push_back(fold);
  }
  if (!classes) throw DataError(path + ": missing 'classes <N>' line");
  if (ds.sequences.empty()) throw DataError(path + ": no records");
  ds.classes = *classes;
  return ds;
}

/// Writes each sequence as <dir>/<id>.fseq plus <dir>/manifest.txt.
inline std::string write_dataset(const std::string& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  const std::string manifest = (std::filesystem::path(dir) / "manifest.txt").string();
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot open " + manifest + " for writing");
  out << "classes " << ds.classes << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const FeatureSequence& s = ds.sequences[i];
    const std::string name = s.id + ".fseq";
    write_fseq((std::filesystem::path(dir) / name).string(), s);
    out << name << " " << s.label;
    if (i < ds.folds.size() && ds.folds[i]) out << " " << *ds.folds[i];
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// Synthetic key-frame data

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t length = 30;
  std::size_t signal_start = 10;  // first signal frame, 0-based
  std::size_t signal_end = 15;    // one past the last signal frame
  double noise_sigma = 1.0;
  bool distractor = true;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDistractorFrames = 3;

/// Unit class directions drawn from seed; orthonormal when dim >= classes.
inline std::vector<Vec> class_directions(const SynthConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, 0x5d1));
  std::vector<Vec> dirs;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Vec v(cfg.dim);
    for (double& x : v) x = rng.normal();
    if (cfg.dim >= cfg.classes) {
      for (const Vec& u : dirs) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cfg.dim; ++j) dot += v[j] * u[j];
        for (std::size_t j = 0; j < cfg.dim; ++j) v[j] -= dot * u[j];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

/// Noise everywhere, the class direction added inside the signal window and,
/// with distractor on, a wrong-class direction over the last three frames.
/// Labels cycle through the classes so counts differ by at most one.
inline Dataset synth_keyframe_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth: classes must be >= 2");
  if (cfg.dim == 0 || cfg.length == 0) throw std::invalid_argument("synth: dim and length must be >= 1");
  if (!(cfg.signal_start < cfg.signal_end && cfg.signal_end <= cfg.length)) {
    throw std::invalid_argument("synth: need 0 <= signal_start < signal_end <= length");
  }
  if (!(cfg.noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise_sigma must be >= 0");

  const std::vector<Vec> dirs = class_directions(cfg);
  Dataset ds{{}, cfg.classes, cfg.dim, {}};
  const std::size_t tail = std::min(kDistractorFrames, cfg.length);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng(mix_seed(cfg.seed, 0x10000 + i));
    FeatureSequence s;
    s.label = i % cfg.classes;
    s.id = "seq" + std::to_string(i);
    s.frames.assign(cfg.length, Vec(cfg.dim));
    for (Vec& x : s.frames) {
      for (double& v : x) v = cfg.noise_sigma * rng.normal();
    }
    for (std::size_t t = cfg.signal_start; t < cfg.signal_end; ++t) {
      for (std::size_t j = 0; j < cfg.dim; ++j) s.frames[t][j] += dirs[s.label][j];
    }
    if (cfg.distractor) {
      const std::size_t wrong = (s.label + 1 + rng.below(cfg.classes - 1)) % cfg.classes;
      for (std::size_t t = cfg.length - tail; t < cfg.length; ++t) {
        for (std::size_t j = 0; j < cfg.dim; ++j) s.frames[t][j] += dirs[wrong][j];
      }
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

}  // namespace hlstm
