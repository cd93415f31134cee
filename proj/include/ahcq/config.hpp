#pragma once

// Experiment configuration: a kv text file with a fixed key set. Missing
// keys keep their defaults; unknown sections or keys are errors.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ahcq/cag.hpp"
#include "ahcq/calibration.hpp"
#include "ahcq/datagen.hpp"
#include "ahcq/error.hpp"
#include "ahcq/hwsim.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/reconstruction.hpp"

namespace ahcq::config {

struct ExperimentConfig {
  std::uint64_t seed = 7;

  // [fixture] toy block
  std::size_t tokens = 32;
  std::size_t channels = 96;
  std::size_t hidden = 256;
  std::size_t batches = 32;
  double scale_lo = 0.1;
  double scale_hi = 50.0;
  double input_gain = 0.25;
  double hidden_bias = 0.0;
  double mean_shift = 0.0;
  // tensor fixtures
  std::size_t post_gelu_samples = 100000;
  std::size_t varied_rows = 1024;
  std::size_t varied_channels = 256;

  // [bits]
  int k_a = 4;
  int k_w = 4;

  // [quantizers]
  Granularity input_granularity = Granularity::per_channel;
  recon::MidScheme mid = recon::MidScheme::hluq;
  std::string init = "minmax";  // or mse_scan

  // [cag]
  int groups = 4;
  std::string schedule = "500:64 1000:16 1500:4";
  int weight_groups = 0;
  std::vector<int> sweep{2, 4, 8, 16, 32};

  // [hluq]
  calibration::HluqSearchSpace hluq{{0.1, 0.3, 0.5}, {0.5, 0.25, 0.125}, {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4}};

  // [reconstruction]
  int iters = 2000;
  double lr = 0.3;
  double lr_scale = 1.0;
  double lr_zero = 1.0;
  double lr_delta = 100.0;

  // [simulator]
  hwsim::PeConfig pe;
  std::array<int, 3> compare_lanes{8, 32, 64};

  void validate() const {
    if (k_a < 2 || k_a > 8) throw ConfigError("bits.k_a must be in 2..8");
    if (k_w < 2 || k_w > 8) throw ConfigError("bits.k_w must be in 2..8");
    if (tokens == 0 || channels == 0 || hidden == 0 || batches == 0) throw ConfigError("fixture dims must be positive");
    if (post_gelu_samples == 0 || varied_rows == 0 || varied_channels == 0)
      throw ConfigError("fixture sizes must be positive");
    if (!(scale_lo > 0.0) || scale_hi < scale_lo) throw ConfigError("fixture.scale_lo/scale_hi: bad range");
    if (groups < 1) throw ConfigError("cag.groups must be positive");
    if (weight_groups < 0) throw ConfigError("cag.weight_groups must be nonnegative");
    for (int g : sweep)
      if (g < 1) throw ConfigError("cag.sweep entries must be positive");
    if (init != "minmax" && init != "mse_scan") throw ConfigError("quantizers.init must be minmax or mse_scan");
    if (iters < 0) throw ConfigError("reconstruction.iters must be nonnegative");
    if (input_granularity == Granularity::per_group) throw ConfigError("quantizers.input must be per_channel or per_tensor");
    try {
      hluq.validate();
      const auto sch = recon_schedule();
      if (!sch.milestones.empty() && sch.final_groups() != groups)
        throw ConfigError("cag.schedule must end at cag.groups");
      pe.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  datagen::FixtureSpec toy_spec() const {
    datagen::FixtureSpec s;
    s.kind = datagen::FixtureKind::toy_block;
    s.dims = {tokens, channels, hidden};
    s.batches = batches;
    s.seed = seed;
    s.scale_lo = scale_lo;
    s.scale_hi = scale_hi;
    s.input_gain = input_gain;
    s.hidden_bias = hidden_bias;
    s.mean_shift = mean_shift;
    return s;
  }

  datagen::FixtureSpec post_gelu_spec() const {
    datagen::FixtureSpec s;
    s.kind = datagen::FixtureKind::post_gelu;
    s.dims = {post_gelu_samples, 1};
    s.seed = seed;
    return s;
  }

  datagen::FixtureSpec varied_spec() const {
    datagen::FixtureSpec s;
    s.kind = datagen::FixtureKind::channel_varied;
    s.dims = {varied_rows, varied_channels};
    s.seed = seed;
    s.scale_lo = scale_lo;
    s.scale_hi = scale_hi;
    s.mean_shift = mean_shift;
    return s;
  }

  cag::MilestoneSchedule recon_schedule() const {
    if (schedule.empty() || schedule == "none") return cag::MilestoneSchedule{iters, {}};
    try {
      return cag::MilestoneSchedule::parse(iters, schedule);
    } catch (const Error& e) {
      throw ConfigError(std::string("cag.schedule: ") + e.what());
    }
  }

  recon::InitOptions init_options() const {
    recon::InitOptions io;
    io.setup.k_a = k_a;
    io.setup.k_w = k_w;
    io.setup.mid = mid;
    io.input_granularity = input_granularity;
    io.weight_groups = weight_groups;
    io.mse_scan = init == "mse_scan";
    io.hluq_space = hluq;
    io.seed = seed;
    return io;
  }

  recon::ReconOptions recon_options() const {
    recon::ReconOptions ro;
    ro.iters = iters;
    ro.lr = lr;
    ro.lr_scale = lr_scale;
    ro.lr_zero = lr_zero;
    ro.lr_delta = lr_delta;
    ro.seed = seed;
    ro.schedule = recon_schedule();
    return ro;
  }
};

namespace detail {

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + kv::format_double(v[i]);
  return s;
}

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<double> doubles(std::string_view s, std::string_view key) {
  std::vector<double> out;
  for (auto t : kv::split_ws(s)) out.push_back(kv::parse_double(t, key));
  if (out.empty()) throw ConfigError(std::string(key) + ": empty list");
  return out;
}

inline std::vector<int> ints(std::string_view s, std::string_view key) {
  std::vector<int> out;
  for (auto t : kv::split_ws(s)) out.push_back(static_cast<int>(kv::parse_int(t, key)));
  return out;
}

}  // namespace detail

/// Full key set with current values, in documented order.
inline kv::Document to_document(const ExperimentConfig& c) {
  using detail::join;
  kv::Document d;
  d.add("experiment").set("seed", std::to_string(c.seed));
  d.add("fixture")
      .set("tokens", c.tokens)
      .set("channels", c.channels)
      .set("hidden", c.hidden)
      .set("batches", c.batches)
      .set("scale_lo", c.scale_lo)
      .set("scale_hi", c.scale_hi)
      .set("input_gain", c.input_gain)
      .set("hidden_bias", c.hidden_bias)
      .set("mean_shift", c.mean_shift)
      .set("post_gelu_samples", c.post_gelu_samples)
      .set("varied_rows", c.varied_rows)
      .set("varied_channels", c.varied_channels);
  d.add("bits").set("k_a", c.k_a).set("k_w", c.k_w);
  d.add("quantizers")
      .set("input", std::string(to_string(c.input_granularity)))
      .set("mid", std::string(recon::to_string(c.mid)))
      .set("weights", "uniform")
      .set("init", c.init);
  d.add("cag")
      .set("groups", c.groups)
      .set("schedule", c.schedule)
      .set("weight_groups", c.weight_groups)
      .set("sweep", join(c.sweep));
  d.add("hluq")
      .set("alphas", join(c.hluq.alphas))
      .set("betas", join(c.hluq.betas))
      .set("range_fractions", join(c.hluq.range_fractions));
  d.add("reconstruction")
      .set("iters", c.iters)
      .set("lr", c.lr)
      .set("lr_scale", c.lr_scale)
      .set("lr_zero", c.lr_zero)
      .set("lr_delta", c.lr_delta);
  d.add("simulator")
      .set("lanes", c.pe.lanes)
      .set("pe_width", c.pe.pe_width)
      .set("pipeline_stages", c.pe.pipeline_stages)
      .set("frac_bits", c.pe.frac_bits)
      .set("param_bits", c.pe.param_bits)
      .set("compare_lanes", join(std::vector<int>(c.compare_lanes.begin(), c.compare_lanes.end())));
  return d;
}

inline ExperimentConfig from_document(const kv::Document& doc) {
  ExperimentConfig c;
  const auto known = to_document(c);
  for (const auto& sec : doc.sections) {
    const auto* ref = known.find(sec.name);
    if (!ref) throw ConfigError("unknown config section [" + sec.name + "]");
    for (const auto& [key, value] : sec.entries)
      if (!ref->find(key)) throw ConfigError("unknown config key " + sec.name + "." + key);
  }
  auto get = [&](const char* section, const char* key) -> const std::string* {
    const auto* s = doc.find(section);
    return s ? s->find(key) : nullptr;
  };
  try {
    auto num = [&](const char* s, const char* k, double& out) {
      if (auto* v = get(s, k)) out = kv::parse_double(*v, std::string(s) + "." + k);
    };
    auto size = [&](const char* s, const char* k, std::size_t& out) {
      if (auto* v = get(s, k)) {
        const auto x = kv::parse_int(*v, std::string(s) + "." + k);
        if (x < 0) throw ConfigError(std::string(s) + "." + k + " must be nonnegative");
        out = static_cast<std::size_t>(x);
      }
    };
    auto integer = [&](const char* s, const char* k, int& out) {
      if (auto* v = get(s, k)) out = static_cast<int>(kv::parse_int(*v, std::string(s) + "." + k));
    };
    if (auto* v = get("experiment", "seed")) c.seed = kv::parse_u64(*v, "experiment.seed");
    size("fixture", "tokens", c.tokens);
    size("fixture", "channels", c.channels);
    size("fixture", "hidden", c.hidden);
    size("fixture", "batches", c.batches);
    num("fixture", "scale_lo", c.scale_lo);
    num("fixture", "scale_hi", c.scale_hi);
    num("fixture", "input_gain", c.input_gain);
    num("fixture", "hidden_bias", c.hidden_bias);
    num("fixture", "mean_shift", c.mean_shift);
    size("fixture", "post_gelu_samples", c.post_gelu_samples);
    size("fixture", "varied_rows", c.varied_rows);
    size("fixture", "varied_channels", c.varied_channels);
    integer("bits", "k_a", c.k_a);
    integer("bits", "k_w", c.k_w);
    if (auto* v = get("quantizers", "input")) c.input_granularity = parse_granularity(*v);
    if (auto* v = get("quantizers", "mid")) c.mid = recon::parse_mid_scheme(*v);
    if (auto* v = get("quantizers", "weights"); v && *v != "uniform")
      throw ConfigError("quantizers.weights supports only uniform");
    if (auto* v = get("quantizers", "init")) c.init = *v;
    integer("cag", "groups", c.groups);
    if (auto* v = get("cag", "schedule")) c.schedule = *v;
    integer("cag", "weight_groups", c.weight_groups);
    if (auto* v = get("cag", "sweep")) c.sweep = detail::ints(*v, "cag.sweep");
    if (auto* v = get("hluq", "alphas")) c.hluq.alphas = detail::doubles(*v, "hluq.alphas");
    if (auto* v = get("hluq", "betas")) c.hluq.betas = detail::doubles(*v, "hluq.betas");
    if (auto* v = get("hluq", "range_fractions")) c.hluq.range_fractions = detail::doubles(*v, "hluq.range_fractions");
    integer("reconstruction", "iters", c.iters);
    num("reconstruction", "lr", c.lr);
    num("reconstruction", "lr_scale", c.lr_scale);
    num("reconstruction", "lr_zero", c.lr_zero);
    num("reconstruction", "lr_delta", c.lr_delta);
    integer("simulator", "lanes", c.pe.lanes);
    integer("simulator", "pe_width", c.pe.pe_width);
    integer("simulator", "pipeline_stages", c.pe.pipeline_stages);
    integer("simulator", "frac_bits", c.pe.frac_bits);
    integer("simulator", "param_bits", c.pe.param_bits);
    if (auto* v = get("simulator", "compare_lanes")) {
      const auto l = detail::ints(*v, "simulator.compare_lanes");
      if (l.size() != 3) throw ConfigError("simulator.compare_lanes needs three entries");
      c.compare_lanes = {l[0], l[1], l[2]};
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse(std::string_view text) {
  try {
    return from_document(kv::parse(text));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

inline ExperimentConfig load(const std::string& path) { return parse(kv::read_file(path)); }

}  // namespace ahcq::config
