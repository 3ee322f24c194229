// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "hlstm/dataio.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace hlstm {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hlstm_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

FeatureSequence tiny(std::size_t label, std::size_t d = 2) {
  FeatureSequence s;
  s.label = label;
  s.frames = {Vec(d, 0.5), Vec(d, -1.25)};
  return s;
}

// ---------------------------------------------------------------------------
// FSEQ

TEST(Fseq, SingleFrameSingleFeatureIs21Bytes) {
  FeatureSequence s;
  s.label = 7;
  s.frames = {Vec{1.5}};
  const auto bytes = encode_fseq(s);
  ASSERT_EQ(bytes.size(), 21u);
  EXPECT_EQ(std::string(bytes.data(), 5), "FSEQ1");
  const unsigned char expect_tail[] = {1, 0, 0, 0, 1, 0, 0, 0, 7, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 5, expect_tail, 12), 0);
  float f = 0;
  std::memcpy(&f, bytes.data() + 17, 4);
  EXPECT_EQ(f, 1.5f);
  EXPECT_EQ(decode_fseq(ByteReader(bytes)), s);
}

TEST(Fseq, BadMagicAtOffsetZero) {
  auto bytes = encode_fseq(tiny(0));
  bytes[0] = 'X';
  try {
    decode_fseq(ByteReader(bytes));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Fseq, TruncationAndTrailingBytesReportOffsets) {
  const auto good = encode_fseq(tiny(1));
  auto cut = good;
  cut.resize(good.size() - 2);
  EXPECT_THROW(decode_fseq(ByteReader(cut)), ParseError);
  auto hdr = good;
  hdr.resize(9);
  try {
    decode_fseq(ByteReader(hdr));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
  auto extra = good;
  extra.push_back(0);
  try {
    decode_fseq(ByteReader(extra));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), good.size());
  }
}

TEST(Fseq, ZeroLengthHeaderRejected) {
  ByteWriter w;
  w.bytes("FSEQ1");
  w.u32(0);
  w.u32(3);
  w.u32(0);
  try {
    decode_fseq(ByteReader(w.data()));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
}

TEST(Fseq, HugeHeaderDoesNotAllocate) {
  ByteWriter w;
  w.bytes("FSEQ1");
  w.u32(0xffffffffu);
  w.u32(0xffffffffu);
  w.u32(0);
  EXPECT_THROW(decode_fseq(ByteReader(w.data())), ParseError);
}

TEST(Fseq, EncodeRejectsBadInput) {
  EXPECT_THROW(encode_fseq(FeatureSequence{}), DataError);
  FeatureSequence ragged = tiny(0);
  ragged.frames[1] = Vec(3);
  EXPECT_THROW(encode_fseq(ragged), DataError);
  FeatureSequence big = tiny(0);
  big.frames[0][0] = 1e300;
  EXPECT_THROW(encode_fseq(big), DataError);
  FeatureSequence nan = tiny(0);
  nan.frames[0][1] = std::nan("");
  EXPECT_THROW(encode_fseq(nan), DataError);
}

TEST(Fseq, RandomRoundTripIsLossless) {
  Rng rng(2024);
  const double extremes[] = {0.0, -0.0, 1e30, -1e30, 1e-30, 3.4e38, -3.4e38, 1e-45};
  for (int n = 0; n < 1000; ++n) {
    FeatureSequence s;
    s.label = rng.below(50);
    const std::size_t t_len = 1 + rng.below(8), d = 1 + rng.below(6);
    s.frames.assign(t_len, Vec(d));
    for (Vec& x : s.frames) {
      for (double& v : x) {
        const double raw = rng.below(5) == 0 ? extremes[rng.below(8)] : 100.0 * rng.normal();
        v = static_cast<double>(static_cast<float>(raw));
      }
    }
    const auto bytes = encode_fseq(s);
    ASSERT_EQ(bytes.size(), 17 + 4 * t_len * d);
    const FeatureSequence back = decode_fseq(ByteReader(bytes));
    ASSERT_EQ(back, s) << n;
    ASSERT_EQ(encode_fseq(back), bytes) << n;
  }
}

TEST(Fseq, FileRoundTripAndPathInErrors) {
  const fs::path dir = scratch("file");
  const FeatureSequence s = tiny(3, 4);
  write_fseq((dir / "a.fseq").string(), s);
  FeatureSequence back = read_fseq((dir / "a.fseq").string());
  EXPECT_EQ(back.id, "a");
  back.id.clear();
  EXPECT_EQ(back, s);

  write_text(dir / "bad.fseq", "FSEQ2garbage");
  try {
    read_fseq((dir / "bad.fseq").string());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.fseq"), std::string::npos);
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(read_fseq((dir / "missing.fseq").string()), IoError);
}

// ---------------------------------------------------------------------------
// Manifest

TEST(Manifest, LoadsRecordsWithFoldsAndComments) {
  const fs::path dir = scratch("manifest");
  write_fseq((dir / "a.fseq").string(), tiny(0));
  write_fseq((dir / "b.fseq").string(), tiny(2));
  write_fseq((dir / "c.fseq").string(), tiny(1));
  write_text(dir / "m.txt",
             "# demo\nclasses 3\n\na.fseq 0 1\nb.fseq,2,0\n  c.fseq   1\n");
  const Dataset ds = load_manifest((dir / "m.txt").string());
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.classes, 3u);
  EXPECT_EQ(ds.dim, 2u);
  EXPECT_EQ(ds.labels(), (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(ds.folds[0], std::optional<std::size_t>(1));
  EXPECT_EQ(ds.folds[1], std::optional<std::size_t>(0));
  EXPECT_FALSE(ds.folds[2].has_value());
  EXPECT_EQ(ds.sequences[1].id, "b.fseq");
}

struct BadManifest {
  std::string text;
  std::string line;    // expected ":N" location
  std::string phrase;  // expected fragment of the message
};

TEST(Manifest, ErrorsNameTheLine) {
  const fs::path dir = scratch("bad");
  write_fseq((dir / "a.fseq").string(), tiny(0));
  write_fseq((dir / "w.fseq").string(), tiny(1, 5));
  write_text(dir / "corrupt.fseq", "FSEQ1\x01");
  const BadManifest cases[] = {
      {"classes 2\na.fseq 0\nnope.fseq 1\n", ":3", "missing file"},
      {"classes 2\na.fseq 5\n", ":2", "out of range"},
      {"classes 2\na.fseq x\n", ":2", "non-negative integer"},
      {"classes 2\na.fseq 0\nw.fseq 1\n", ":3", "feature dim"},
      {"classes 2\na.fseq\n", ":2", "fields"},
      {"classes 2\na.fseq 1\n", ":2", "carries label 0"},
      {"a.fseq 0\n", ":1", "classes"},
      {"classes 2\nclasses 2\n", ":2", "twice"},
      {"classes 2\ncorrupt.fseq 0\n", ":2", "byte offset"},
      {"classes 1\n", ":1", ">= 2"},
  };
  for (const auto& c : cases) {
    write_text(dir / "m.txt", c.text);
    try {
      load_manifest((dir / "m.txt").string());
      ADD_FAILURE() << c.text;
    } catch (const DataError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("m.txt" + c.line + ":"), std::string::npos) << msg;
      EXPECT_NE(msg.find(c.phrase), std::string::npos) << msg;
    }
  }
  write_text(dir / "empty.txt", "classes 3\n");
  EXPECT_THROW(load_manifest((dir / "empty.txt").string()), DataError);
  EXPECT_THROW(load_manifest((dir / "absent.txt").string()), IoError);
}

TEST(Manifest, WriteDatasetRoundTrip) {
  SynthConfig sc;
  sc.count = 12;
  sc.length = 6;
  sc.dim = 3;
  sc.signal_start = 2;
  sc.signal_end = 4;
  Dataset ds = synth_keyframe_dataset(sc);
  for (auto& s : ds.sequences) {
    for (Vec& x : s.frames) {
      for (double& v : x) v = static_cast<double>(static_cast<float>(v));
    }
  }
  for (std::size_t i = 0; i < ds.size(); ++i) ds.folds.push_back(i % 3);
  const fs::path dir = scratch("roundtrip");
  const Dataset back = load_manifest(write_dataset(dir.string(), ds));
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.classes, ds.classes);
  EXPECT_EQ(back.folds, ds.folds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.sequences[i].frames, ds.sequences[i].frames);
    EXPECT_EQ(back.sequences[i].label, ds.sequences[i].label);
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

TEST(Synth, ShapesLabelsAndDeterminism) {
  SynthConfig sc;
  sc.count = 10;
  const Dataset a = synth_keyframe_dataset(sc), b = synth_keyframe_dataset(sc);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a.classes, 4u);
  EXPECT_EQ(a.dim, 16u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.sequences[i].label, i % 4);
    EXPECT_EQ(a.sequences[i].length(), 30u);
    EXPECT_EQ(a.sequences[i], b.sequences[i]);
  }
  sc.seed = 1;
  EXPECT_NE(synth_keyframe_dataset(sc).sequences[0], a.sequences[0]);
}

TEST(Synth, DirectionsAreOrthonormal) {
  const SynthConfig sc;
  const auto dirs = class_directions(sc);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < sc.dim; ++k) dot += dirs[i][k] * dirs[j][k];
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Synth, NoiselessFramesCarrySignalAndDistractor) {
  SynthConfig sc;
  sc.noise_sigma = 0.0;
  sc.count = 8;
  const Dataset ds = synth_keyframe_dataset(sc);
  const auto dirs = class_directions(sc);
  auto dot = [&](const Vec& x, std::size_t c) {
    double s = 0.0;
    for (std::size_t k = 0; k < sc.dim; ++k) s += x[k] * dirs[c][k];
    return s;
  };
  for (const auto& s : ds.sequences) {
    for (std::size_t t = 0; t < sc.length; ++t) {
      const bool signal = t >= sc.signal_start && t < sc.signal_end;
      const bool tail = t + kDistractorFrames >= sc.length;
      EXPECT_NEAR(dot(s.frames[t], s.label), signal ? 1.0 : 0.0, 1e-12) << t;
      double other = 0.0;
      for (std::size_t c = 0; c < sc.classes; ++c) {
        if (c != s.label) other += dot(s.frames[t], c);
      }
      EXPECT_NEAR(other, tail ? 1.0 : 0.0, 1e-12) << t;
    }
  }
}

TEST(Synth, RejectsBadWindow) {
  SynthConfig sc;
  sc.signal_end = 31;
  EXPECT_THROW(synth_keyframe_dataset(sc), std::invalid_argument);
  sc.signal_end = sc.signal_start;
  EXPECT_THROW(synth_keyframe_dataset(sc), std::invalid_argument);
}

}  // namespace
}  // namespace hlstm
