#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ahcq/error.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq {

enum class Granularity { per_tensor, per_group, per_channel };

inline std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::per_tensor: return "per_tensor";
    case Granularity::per_group: return "per_group";
    case Granularity::per_channel: return "per_channel";
  }
  return "?";
}

inline Granularity parse_granularity(std::string_view s) {
  if (s == "per_tensor") return Granularity::per_tensor;
  if (s == "per_group") return Granularity::per_group;
  if (s == "per_channel") return Granularity::per_channel;
  throw ParameterError("unknown granularity '" + std::string(s) + "'");
}

/// Quantization parameters for one tensor at a given granularity.
/// per_tensor: one entry; per_channel: one per channel; per_group: one per
/// group plus group_map (channel -> group).
struct ParamSet {
  Granularity granularity = Granularity::per_tensor;
  std::vector<QuantParams> params;
  std::vector<int> group_map;

  static ParamSet per_tensor(QuantParams p) { return {Granularity::per_tensor, {std::move(p)}, {}}; }
  static ParamSet per_channel(std::vector<QuantParams> p) {
    return {Granularity::per_channel, std::move(p), {}};
  }
  static ParamSet per_group(std::vector<QuantParams> p, std::vector<int> map) {
    return {Granularity::per_group, std::move(p), std::move(map)};
  }

  /// Parameter index used for channel ch.
  std::size_t index_for(std::size_t ch) const {
    switch (granularity) {
      case Granularity::per_tensor: return 0;
      case Granularity::per_channel: return ch;
      case Granularity::per_group: return static_cast<std::size_t>(group_map[ch]);
    }
    return 0;
  }

  const QuantParams& for_channel(std::size_t ch) const { return params[index_for(ch)]; }

  void check_against(std::size_t channels) const {
    if (params.empty()) throw ShapeError("empty parameter set");
    switch (granularity) {
      case Granularity::per_tensor:
        if (params.size() != 1) throw ShapeError("per-tensor set must hold exactly one entry");
        break;
      case Granularity::per_channel:
        if (params.size() != channels)
          throw ShapeError("per-channel parameter count " + std::to_string(params.size()) +
                           " != channel count " + std::to_string(channels));
        break;
      case Granularity::per_group:
        if (group_map.size() != channels)
          throw ShapeError("group map length " + std::to_string(group_map.size()) +
                           " != channel count " + std::to_string(channels));
        for (int g : group_map)
          if (g < 0 || static_cast<std::size_t>(g) >= params.size())
            throw ShapeError("group map refers to missing group " + std::to_string(g));
        break;
    }
    for (const auto& p : params) p.validate();
  }

  bool operator==(const ParamSet&) const = default;
};

/// Integer codes laid out like the source tensor.
struct CodeTensor {
  std::vector<std::size_t> dims;
  std::vector<std::int32_t> codes;
  std::size_t channel_axis = 0;

  std::size_t size() const noexcept { return codes.size(); }
  bool operator==(const CodeTensor&) const = default;
};

inline CodeTensor quantize_tensor(const Tensor& t, const ParamSet& ps) {
  ps.check_against(t.channels());
  CodeTensor out{t.dims(), std::vector<std::int32_t>(t.size()), t.channel_axis()};
  for (std::size_t i = 0; i < t.size(); ++i)
    out.codes[i] = quantize(static_cast<double>(t[i]), ps.for_channel(t.channel_of(i)));
  return out;
}

inline Tensor dequantize_tensor(const CodeTensor& c, const ParamSet& ps) {
  const std::size_t channels = c.dims.at(c.channel_axis);
  ps.check_against(channels);
  std::size_t stride = 1;
  for (std::size_t a = c.channel_axis + 1; a < c.dims.size(); ++a) stride *= c.dims[a];
  std::vector<float> data(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    data[i] = static_cast<float>(dequantize(c.codes[i], ps.for_channel((i / stride) % channels)));
  return Tensor(c.dims, std::move(data), c.channel_axis);
}

inline Tensor fake_quant_tensor(const Tensor& t, const ParamSet& ps) {
  return dequantize_tensor(quantize_tensor(t, ps), ps);
}

/// Mean squared error between a tensor and its quantize-dequantize image,
/// summed in ascending element order.
inline double quantization_mse(const Tensor& t, const ParamSet& ps) {
  ps.check_against(t.channels());
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = t[i];
    const double e = x - fake_quant(x, ps.for_channel(t.channel_of(i)));
    acc += e * e;
  }
  return acc / static_cast<double>(t.size());
}

}  // namespace ahcq
