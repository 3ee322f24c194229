// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

// HLSTM1 checkpoint layout, all integers u32 and reals f64, little-endian:
//
//   "HLSTM1"
//   input_dim, classes, layer_count, hidden[layer_count]
//   peephole, placement, window_mode, alpha_policy, inference_policy, tau
//   dropout_p (f64)
//   parameter_count (u64)
//   parameters in for_each_block order

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlstm/binary.hpp"
#include "hlstm/network.hpp"

namespace hlstm {

inline constexpr std::string_view kCheckpointMagic = "HLSTM1";

inline std::vector<char> encode_checkpoint(const StackedNetwork& net) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  const NetworkSpec s = net.spec();
  w.u32(static_cast<std::uint32_t>(s.input_dim));
  w.u32(static_cast<std::uint32_t>(s.classes));
  w.u32(static_cast<std::uint32_t>(s.hidden.size()));
  for (std::size_t h : s.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(s.peephole));
  w.u32(static_cast<std::uint32_t>(s.placement));
  w.u32(static_cast<std::uint32_t>(s.hist.window_mode));
  w.u32(static_cast<std::uint32_t>(s.hist.alpha_policy));
  w.u32(static_cast<std::uint32_t>(s.hist.inference_policy));
  w.u32(static_cast<std::uint32_t>(s.hist.tau));
  w.f64(s.dropout_p);
  w.u64(parameter_count(net));
  for (auto block : param_spans(net)) {
    for (double v : block) w.f64(v);
  }
  return w.data();
}

namespace detail {

template <class E>
E read_tag(ByteReader& r, const char* field, std::uint32_t count) {
  const std::size_t at = r.offset();
  const std::uint32_t v = r.u32(field);
  if (v >= count) throw ParseError(std::string("invalid ") + field + " " + std::to_string(v), at);
  return static_cast<E>(v);
}

}  // namespace detail

inline StackedNetwork decode_checkpoint(ByteReader r) {
  r.expect(kCheckpointMagic, "HLSTM1");
  NetworkSpec s;
  s.input_dim = r.u32("input_dim");
  s.classes = r.u32("classes");
  const std::size_t at_layers = r.offset();
  const std::uint32_t n = r.u32("layer_count");
  if (n == 0 || n > r.remaining() / 4) throw ParseError("invalid layer_count", at_layers);
  s.hidden.clear();
  for (std::uint32_t i = 0; i < n; ++i) s.hidden.push_back(r.u32("hidden size"));
  s.peephole = detail::read_tag<PeepholeKind>(r, "peephole", 2);
  s.placement = detail::read_tag<HistPlacement>(r, "placement", 3);
  s.hist.window_mode = detail::read_tag<WindowMode>(r, "window_mode", 2);
  s.hist.alpha_policy = detail::read_tag<AlphaPolicy>(r, "alpha_policy", 3);
  s.hist.inference_policy = detail::read_tag<InferencePolicy>(r, "inference_policy", 2);
  s.hist.tau = r.u32("tau");
  s.dropout_p = r.f64("dropout_p");

  const std::size_t at_spec = r.offset();
  // Reject shapes the file cannot possibly hold before allocating them.
  std::uint64_t need = 0;
  std::uint64_t in = s.input_dim;
  const std::uint64_t room = r.remaining();
  if (s.input_dim > room || s.classes > room) {
    throw ParseError("network header exceeds file size", at_spec);
  }
  for (std::size_t h : s.hidden) {
    if (h > room) throw ParseError("network header exceeds file size", at_spec);
    need += 4 * static_cast<std::uint64_t>(h) * (in + h);
    in = h;
    if (need > room / 8) throw ParseError("network header exceeds file size", at_spec);
  }
  StackedNetwork net;
  try {
    net = make_zero_network<double>(s);
  } catch (const std::exception& e) {
    throw ParseError(std::string("invalid network header: ") + e.what(), at_spec);
  }
  const std::size_t at_count = r.offset();
  const std::uint64_t count = r.u64("parameter_count");
  if (count != parameter_count(net)) {
    throw ParseError("parameter_count " + std::to_string(count) + " does not match header (" +
                         std::to_string(parameter_count(net)) + ")",
                     at_count);
  }
  for (auto block : param_spans(net)) {
    for (double& v : block) v = r.f64("parameters");
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after parameters", r.offset());
  return net;
}

inline void save_checkpoint(const std::string& path, const StackedNetwork& net) {
  ByteWriter w;
  const auto bytes = encode_checkpoint(net);
  w.bytes(std::string_view(bytes.data(), bytes.size()));
  w.save(path);
}

inline StackedNetwork load_checkpoint(const std::string& path) {
  return decode_checkpoint(ByteReader::load(path));
}

}  // namespace hlstm
