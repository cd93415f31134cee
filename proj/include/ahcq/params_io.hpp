#pragma once

#include <string>

#include "ahcq/kv.hpp"
#include "ahcq/quantize_tensor.hpp"

namespace ahcq::params_io {

// Every parameter block carries the full key set
// (scheme, k, s, z, bias, s1, s2_step, b_hat, offset); keys that do not apply
// to the scheme are written as 0 and ignored on read.

inline void write_params(kv::Section& sec, const QuantParams& p) {
  const HluqConfig h = p.hluq.value_or(HluqConfig{0.0, 0.0, 0, p.k, 0.0});
  sec.set("scheme", std::string(to_string(p.scheme)))
      .set("k", p.k)
      .set("s", p.scheme == Scheme::hluq ? 0.0 : p.s)
      .set("z", p.z)
      .set("bias", p.bias)
      .set("s1", h.s1)
      .set("s2_step", h.s2_step)
      .set("b_hat", h.b_hat)
      .set("offset", h.offset);
}

inline QuantParams read_params(const kv::Section& sec) {
  QuantParams p;
  p.scheme = parse_scheme(sec.at("scheme"));
  p.k = static_cast<int>(sec.integer("k"));
  if (p.scheme == Scheme::hluq) {
    HluqConfig h;
    h.k = p.k;
    h.s1 = sec.number("s1");
    h.s2_step = sec.number("s2_step");
    h.b_hat = static_cast<int>(sec.integer("b_hat"));
    h.offset = sec.number("offset");
    p.hluq = h;
  } else {
    p.s = sec.number("s");
    p.z = static_cast<int>(sec.integer("z"));
    p.bias = sec.number("bias");
  }
  p.validate();
  return p;
}

inline void write_param_set(kv::Document& doc, const ParamSet& ps, const std::string& name = "params") {
  auto& head = doc.add(name);
  head.set("granularity", std::string(to_string(ps.granularity))).set("count", ps.params.size());
  std::string map;
  for (std::size_t i = 0; i < ps.group_map.size(); ++i) {
    if (i) map += ' ';
    map += std::to_string(ps.group_map[i]);
  }
  head.set("group_map", map);
  for (std::size_t i = 0; i < ps.params.size(); ++i)
    write_params(doc.add(name + "." + std::to_string(i)), ps.params[i]);
}

inline ParamSet read_param_set(const kv::Document& doc, const std::string& name = "params") {
  const auto& head = doc.at(name);
  ParamSet ps;
  ps.granularity = parse_granularity(head.at("granularity"));
  const auto count = head.integer("count");
  if (count <= 0) throw FormatError("parameter count must be positive");
  for (auto tok : kv::split_ws(head.at("group_map")))
    ps.group_map.push_back(static_cast<int>(kv::parse_int(tok, "group_map")));
  for (std::int64_t i = 0; i < count; ++i)
    ps.params.push_back(read_params(doc.at(name + "." + std::to_string(i))));
  return ps;
}

inline std::string to_text(const ParamSet& ps) {
  kv::Document doc;
  write_param_set(doc, ps);
  return doc.str();
}

inline ParamSet from_text(std::string_view text) { return read_param_set(kv::parse(text)); }

}  // namespace ahcq::params_io
