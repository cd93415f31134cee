#pragma once

// Functional model of the dual-PE HLUQ datapath.
//
// Activation codes are routed by their top bits: codes >= b_hat go to the
// integer multiplier lane, the rest to the shift lane. With weight
// w = s_w * (q - z) and wi = q - z, one output is
//
//   s_w * sum_g [ s1_g * S_g + s2_g * U_g + (s1_g + off_g) * A_g + off_g * B_g ]
//
// where over the channels of group g
//   U_g = sum_uniform wi * (c - b_hat + 1)   integer MACs
//   S_g = sum_log     wi * 2^-c              shifts into a fixed-point accumulator
//   A_g = sum_uniform wi,  B_g = sum_log wi   integer adds
//
// All per-group sums are exact integers, so the result does not depend on
// channel order. Groups are merged in ascending id.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ahcq/cag.hpp"
#include "ahcq/error.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::hwsim {

enum class Lane { log2, uniform };

inline std::string_view to_string(Lane l) { return l == Lane::log2 ? "log2" : "uniform"; }

/// log2(b_hat); b_hat must be a power of two in [1, 2^k - 1].
inline int threshold_shift(int b_hat, int k) {
  check_bits(k);
  if (b_hat < 1 || b_hat > max_code(k) || !std::has_single_bit(static_cast<unsigned>(b_hat)))
    throw ConfigError("routing threshold " + std::to_string(b_hat) + " is not a power of two below 2^" +
                      std::to_string(k));
  return std::countr_zero(static_cast<unsigned>(b_hat));
}

/// Lane from the top k - log2(b_hat) bits of the code.
inline Lane route(int code, int b_hat, int k) {
  const int shift = threshold_shift(b_hat, k);
  if (code < 0 || code > max_code(k)) throw SimulationError("code " + std::to_string(code) + " out of range");
  return (static_cast<unsigned>(code) >> shift) != 0u ? Lane::uniform : Lane::log2;
}

// ---------------------------------------------------------------------------
// Cost model.

enum class Op { fp32_mac, int_mul, bit_shift, int_add, dec_add, dequant_fp_op, dram_bit };
inline constexpr std::size_t op_count = 7;
inline constexpr std::array<std::string_view, op_count> op_names{
    "fp32_mac", "int_mul", "bit_shift", "int_add", "dec_add", "dequant_fp_op", "dram_bit"};

using OpCounts = std::array<std::int64_t, op_count>;

inline std::int64_t& at(OpCounts& c, Op op) { return c[static_cast<std::size_t>(op)]; }
inline std::int64_t at(const OpCounts& c, Op op) { return c[static_cast<std::size_t>(op)]; }

/// Placeholder weights. Only the ordering means anything:
/// fp32 > int > shift, and DRAM far above compute.
struct CostTable {
  double fp32_mac = 4.0;
  double int8_mul = 1.0;       // int_mul energy scales with (bits / 8)^2
  double bit_shift = 0.05;
  double add_per_bit = 0.004;  // int_add and dec_add scale with operand width
  double dequant_fp_op = 2.0;
  double dram_bit = 100.0;
  std::array<double, op_count> cycles{1, 1, 1, 1, 1, 1, 1};  // cycle weight per op class

  double cycle(Op op) const { return cycles[static_cast<std::size_t>(op)]; }

  void validate() const {
    for (double v : {fp32_mac, int8_mul, bit_shift, add_per_bit, dequant_fp_op, dram_bit})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cost table weights must be finite and nonnegative");
    for (double v : cycles)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("cycle weights must be positive");
  }
};

struct PeConfig {
  int lanes = 8;           // per PE type
  int pe_width = 8;        // inputs per PE
  int pipeline_stages = 4; // dequant / activation / quant pipeline, added once per tile
  int frac_bits = 24;      // shift-lane fixed point
  int acc_bits = 32;       // integer accumulator width
  int param_bits = 18;     // register width per quantization parameter
  CostTable costs;

  void validate() const {
    if (lanes < 1) throw ConfigError("lane count must be positive");
    if (pe_width < 1) throw ConfigError("pe_width must be at least 1");
    if (pipeline_stages < 0) throw ConfigError("pipeline stages must be nonnegative");
    if (frac_bits < 0 || frac_bits > 40) throw ConfigError("shift-lane fractional bits must be in 0..40");
    if (acc_bits < 1 || param_bits < 1) throw ConfigError("register widths must be positive");
    costs.validate();
  }
};

struct SimReport {
  OpCounts ops{};
  std::int64_t log2_elements = 0;     // activation elements routed to the shift lane
  std::int64_t uniform_elements = 0;  // ... to the multiplier lane
  std::int64_t cycles = 0;
  double energy = 0.0;
  std::int64_t param_storage_bits = 0;
  std::int64_t dram_bits = 0;

  std::int64_t macs() const { return at(ops, Op::int_mul) + at(ops, Op::bit_shift); }

  void write(kv::Document& doc, const std::string& name = "sim") const {
    auto& s = doc.add(name);
    for (std::size_t i = 0; i < op_count; ++i) s.set(std::string(op_names[i]), ops[i]);
    s.set("log2_elements", log2_elements)
        .set("uniform_elements", uniform_elements)
        .set("cycles", cycles)
        .set("energy", energy)
        .set("param_storage_bits", param_storage_bits)
        .set("dram_bits", dram_bits);
  }

  static std::string csv_header() {
    std::string h;
    for (auto n : op_names) h += std::string(n) + ",";
    return h + "log2_elements,uniform_elements,cycles,energy,param_storage_bits,dram_bits\n";
  }

  std::string csv_row() const {
    std::string r;
    for (auto v : ops) r += std::to_string(v) + ",";
    return r + std::to_string(log2_elements) + "," + std::to_string(uniform_elements) + "," +
           std::to_string(cycles) + "," + kv::format_double(energy) + "," + std::to_string(param_storage_bits) +
           "," + std::to_string(dram_bits) + "\n";
  }

  bool operator==(const SimReport&) const = default;
};

// ---------------------------------------------------------------------------
// Workloads.

/// HLUQ activation codes [N, K] with one config per channel group.
struct ActivationCodes {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> codes;
  std::vector<HluqConfig> configs;
  std::vector<int> group_of;  // per column; empty = all in group 0

  int group(std::size_t c) const { return group_of.empty() ? 0 : group_of[c]; }

  void validate() const {
    if (codes.size() != rows * cols) throw SimulationError("activation code count does not match dims");
    if (configs.empty()) throw SimulationError("activation codes need at least one config");
    if (!group_of.empty() && group_of.size() != cols) throw SimulationError("group map does not match K");
    for (const auto& c : configs) {
      c.validate();
      threshold_shift(c.b_hat, c.k);
      if (c.k != configs.front().k) throw SimulationError("activation groups must share a bit-width");
    }
    for (int g : group_of)
      if (g < 0 || static_cast<std::size_t>(g) >= configs.size())
        throw SimulationError("group id " + std::to_string(g) + " has no config");
    const int top = max_code(configs.front().k);
    for (int c : codes)
      if (c < 0 || c > top) throw SimulationError("activation code " + std::to_string(c) + " out of range");
  }
};

/// Uniform weight codes [K, M], parameters per output column.
struct WeightCodes {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int k = 4;
  std::vector<int> codes;
  std::vector<double> s;
  std::vector<int> z;

  void validate() const {
    check_bits(k);
    if (codes.size() != rows * cols) throw SimulationError("weight code count does not match dims");
    if (s.size() != cols || z.size() != cols) throw SimulationError("weight parameters must be per output column");
    for (double v : s)
      if (!(v > 0.0)) throw SimulationError("weight scales must be positive");
    for (int c : codes)
      if (c < 0 || c > max_code(k)) throw SimulationError("weight code " + std::to_string(c) + " out of range");
  }
};

inline ActivationCodes encode_activations(const Tensor& x, std::vector<HluqConfig> configs,
                                          std::vector<int> group_of = {}) {
  if (x.rank() != 2) throw ShapeError("activations must be a matrix");
  ActivationCodes a{x.rows(), x.cols(), {}, std::move(configs), std::move(group_of)};
  if (a.configs.empty()) throw SimulationError("activation codes need at least one config");
  if (!a.group_of.empty() && a.group_of.size() != a.cols) throw SimulationError("group map does not match K");
  a.codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    a.codes[i] = hluq_quant(x[i], a.configs[static_cast<std::size_t>(a.group(i % a.cols))]);
  a.validate();
  return a;
}

inline WeightCodes encode_weights(const Tensor& w, std::vector<double> s, std::vector<int> z, int k) {
  if (w.rank() != 2) throw ShapeError("weights must be a matrix");
  WeightCodes q{w.rows(), w.cols(), k, {}, std::move(s), std::move(z)};
  if (q.s.size() != q.cols || q.z.size() != q.cols) throw SimulationError("weight parameters must be per output column");
  q.codes.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::size_t m = i % q.cols;
    q.codes[i] = uniform_quant(w[i], QuantParams::uniform(q.s[m], q.z[m], k));
  }
  q.validate();
  return q;
}

/// Dequantize-then-matmul reference in fp32.
inline Tensor reference_matmul(const ActivationCodes& x, const WeightCodes& w) {
  x.validate();
  w.validate();
  if (x.cols != w.rows) throw SimulationError("inner dimensions differ");
  std::vector<float> xf(x.codes.size()), wf(w.codes.size());
  for (std::size_t i = 0; i < xf.size(); ++i)
    xf[i] = static_cast<float>(hluq_dequant(x.codes[i], x.configs[static_cast<std::size_t>(x.group(i % x.cols))]));
  for (std::size_t i = 0; i < wf.size(); ++i) {
    const std::size_t m = i % w.cols;
    wf[i] = static_cast<float>(w.s[m] * (w.codes[i] - w.z[m]));
  }
  return matmul(Tensor({x.rows, x.cols}, std::move(xf), 1), Tensor({w.rows, w.cols}, std::move(wf), 1));
}

struct SimResult {
  Tensor y;
  SimReport report;
};

inline SimResult simulate_matmul(const ActivationCodes& x, const WeightCodes& w, const PeConfig& pe) {
  x.validate();
  w.validate();
  pe.validate();
  if (x.cols != w.rows) throw SimulationError("inner dimensions differ: " + std::to_string(x.cols) + " vs " +
                                              std::to_string(w.rows));
  const std::size_t N = x.rows, K = x.cols, M = w.cols, G = x.configs.size();
  const int ka = x.configs.front().k;
  SimReport rep;

  std::vector<int> shift(G);
  for (std::size_t g = 0; g < G; ++g) shift[g] = threshold_shift(x.configs[g].b_hat, ka);

  // routing histogram over the activation tensor
  std::vector<Lane> lane(x.codes.size());
  for (std::size_t i = 0; i < x.codes.size(); ++i) {
    const auto g = static_cast<std::size_t>(x.group(i % K));
    lane[i] = (static_cast<unsigned>(x.codes[i]) >> shift[g]) != 0u ? Lane::uniform : Lane::log2;
    ++(lane[i] == Lane::uniform ? rep.uniform_elements : rep.log2_elements);
  }

  const std::int64_t one = std::int64_t{1} << pe.frac_bits;
  std::vector<float> y(N * M);
  std::vector<std::int64_t> U(G), S(G), A(G), B(G);
  std::vector<char> used(G);
  for (std::size_t k = 0; k < K; ++k) used[static_cast<std::size_t>(x.group(k))] = 1;
  const auto groups_used = static_cast<std::int64_t>(std::count(used.begin(), used.end(), 1));

  std::int64_t int_mul = 0, bit_shift = 0, int_add = 0, dec_add = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m) {
      std::fill(U.begin(), U.end(), 0);
      std::fill(S.begin(), S.end(), 0);
      std::fill(A.begin(), A.end(), 0);
      std::fill(B.begin(), B.end(), 0);
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i = n * K + k;
        const auto g = static_cast<std::size_t>(x.group(k));
        const std::int64_t wi = w.codes[k * M + m] - w.z[m];
        const int c = x.codes[i];
        if (lane[i] == Lane::uniform) {
          U[g] += wi * (c - x.configs[g].b_hat + 1);
          A[g] += wi;
          ++int_mul;
          int_add += 2;
        } else {
          // arithmetic shift; exact while c <= frac_bits
          S[g] += c < 63 ? (wi * one) >> c : (wi < 0 ? -1 : 0);
          B[g] += wi;
          ++bit_shift;
          ++dec_add;
          ++int_add;
        }
      }
      double acc = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        if (!used[g]) continue;
        const auto& cf = x.configs[g];
        acc += cf.s1 * (static_cast<double>(S[g]) / static_cast<double>(one)) +
               cf.s2_step * static_cast<double>(U[g]) + (cf.s1 + cf.offset) * static_cast<double>(A[g]) +
               cf.offset * static_cast<double>(B[g]);
      }
      y[n * M + m] = static_cast<float>(w.s[m] * acc);
    }

  auto& ops = rep.ops;
  at(ops, Op::int_mul) = int_mul;
  at(ops, Op::bit_shift) = bit_shift;
  at(ops, Op::int_add) = int_add;
  at(ops, Op::dec_add) = dec_add;
  // per output and group: 3 multiplies + 4 adds, then the weight-scale multiply
  at(ops, Op::dequant_fp_op) = static_cast<std::int64_t>(N * M) * (7 * groups_used + 1);

  const auto params = static_cast<std::int64_t>(G) * 4 + static_cast<std::int64_t>(M) * 2;
  rep.param_storage_bits = params * pe.param_bits;
  rep.dram_bits = static_cast<std::int64_t>(N * K) * ka + static_cast<std::int64_t>(K * M) * w.k +
                  static_cast<std::int64_t>(N * M) * 32 + rep.param_storage_bits;
  at(ops, Op::dram_bit) = rep.dram_bits;

  const double per_cycle = static_cast<double>(pe.lanes) * pe.pe_width;
  const auto lane_cycles = [&](std::int64_t n_ops, Op op) {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(n_ops) * pe.costs.cycle(op) / per_cycle));
  };
  // the two PE types run side by side
  rep.cycles = std::max(lane_cycles(int_mul, Op::int_mul), lane_cycles(bit_shift, Op::bit_shift)) +
               pe.pipeline_stages;

  const auto& ct = pe.costs;
  const double mul = ct.int8_mul * (w.k * ka) / 64.0;
  rep.energy = mul * int_mul + ct.bit_shift * bit_shift + ct.add_per_bit * pe.acc_bits * int_add +
               ct.add_per_bit * (pe.frac_bits + 8) * dec_add + ct.dequant_fp_op * at(ops, Op::dequant_fp_op) +
               ct.dram_bit * rep.dram_bits;
  return {Tensor({N, M}, std::move(y), 1), rep};
}

// ---------------------------------------------------------------------------
// Channel reordering.

inline void check_grouping(const cag::GroupAssignment& g, std::size_t channels) {
  g.validate();
  if (g.channels() != channels)
    throw ShapeError("grouping covers " + std::to_string(g.channels()) + " channels, tensor has " +
                     std::to_string(channels));
}

/// Channel j of the result is channel reorder[j] of t, along t's channel axis.
inline Tensor reorder_channels(const Tensor& t, const cag::GroupAssignment& g) {
  check_grouping(g, t.channels());
  std::vector<std::size_t> pos(g.reorder.size());
  for (std::size_t j = 0; j < g.reorder.size(); ++j) pos[static_cast<std::size_t>(g.reorder[j])] = j;
  const std::size_t stride = t.channel_stride();
  std::vector<float> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t c = t.channel_of(i);
    out[i + pos[c] * stride - c * stride] = t[i];
  }
  return Tensor(t.dims(), std::move(out), t.channel_axis());
}

inline Tensor inverse_reorder(const Tensor& t, const cag::GroupAssignment& g) {
  check_grouping(g, t.channels());
  const std::size_t stride = t.channel_stride();
  std::vector<float> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t j = t.channel_of(i);
    const auto c = static_cast<std::size_t>(g.reorder[j]);
    out[i + c * stride - j * stride] = t[i];
  }
  return Tensor(t.dims(), std::move(out), t.channel_axis());
}

/// Grouped-contiguous layout of a workload: activation columns and weight
/// rows permuted together, group map carried along.
inline std::pair<ActivationCodes, WeightCodes> reorder_workload(const ActivationCodes& x, const WeightCodes& w,
                                                                const cag::GroupAssignment& g) {
  check_grouping(g, x.cols);
  if (w.rows != x.cols) throw ShapeError("weight rows do not match activation channels");
  ActivationCodes xr = x;
  WeightCodes wr = w;
  xr.group_of.assign(x.cols, 0);
  for (std::size_t j = 0; j < x.cols; ++j) {
    const auto c = static_cast<std::size_t>(g.reorder[j]);
    xr.group_of[j] = x.group(c);
    for (std::size_t n = 0; n < x.rows; ++n) xr.codes[n * x.cols + j] = x.codes[n * x.cols + c];
    for (std::size_t m = 0; m < w.cols; ++m) wr.codes[j * w.cols + m] = w.codes[c * w.cols + m];
  }
  return {xr, wr};
}

// ---------------------------------------------------------------------------
// Configuration comparison.

struct Workload {
  std::size_t n = 0, k = 0, m = 0;
  double log2_fraction = 0.5;  // share of HLUQ activations on the shift lane
  int groups = 4;              // HLUQ parameter groups

  std::int64_t macs() const { return static_cast<std::int64_t>(n * k * m); }
};

enum class Precision { fp32, int8, hluq_int4 };

inline std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::fp32: return "fp32";
    case Precision::int8: return "int8";
    case Precision::hluq_int4: return "hluq_int4";
  }
  return "?";
}

struct ConfigCost {
  Precision precision = Precision::fp32;
  int lanes = 0;
  std::int64_t cycles = 0;
  double energy = 0.0;
  double speedup = 1.0;     // fp32 cycles / cycles
  double efficiency = 1.0;  // fp32 energy / energy, same op count
  double reference_speedup = 1.0;
};

struct Comparison {
  std::vector<ConfigCost> rows;

  std::string csv() const {
    std::string out = "config,lanes,cycles,energy,speedup,efficiency,reference_speedup\n";
    for (const auto& r : rows)
      out += std::string(to_string(r.precision)) + "," + std::to_string(r.lanes) + "," + std::to_string(r.cycles) +
             "," + kv::format_double(r.energy) + "," + kv::format_double(r.speedup) + "," +
             kv::format_double(r.efficiency) + "," + kv::format_double(r.reference_speedup) + "\n";
    return out;
  }
};

/// Parallelism 8 / 32 / 64 by default. reference_speedup is a fixed external
/// figure per precision, listed next to the modeled value.
inline Comparison cost_compare(const Workload& wl, const CostTable& ct = {}, std::array<int, 3> lanes = {8, 32, 64},
                               int pe_width = 8, int pipeline_stages = 4) {
  ct.validate();
  if (wl.macs() <= 0) throw ConfigError("workload dims must be positive");
  if (!(wl.log2_fraction >= 0.0 && wl.log2_fraction <= 1.0)) throw ConfigError("log2 fraction must be in [0, 1]");
  if (wl.groups < 1) throw ConfigError("group count must be positive");
  for (int l : lanes)
    if (l < 1) throw ConfigError("lane count must be positive");
  if (pe_width < 1) throw ConfigError("pe_width must be at least 1");

  constexpr std::array<double, 3> reference{1.00, 3.96, 7.89};
  constexpr std::array<Precision, 3> kinds{Precision::fp32, Precision::int8, Precision::hluq_int4};
  const double macs = static_cast<double>(wl.macs());
  const double outs = static_cast<double>(wl.n * wl.m);
  const double in_elems = static_cast<double>(wl.n * wl.k), w_elems = static_cast<double>(wl.k * wl.m);

  Comparison cmp;
  for (std::size_t i = 0; i < 3; ++i) {
    ConfigCost c;
    c.precision = kinds[i];
    c.lanes = lanes[i];
    c.reference_speedup = reference[i];
    double cyc_weight = 1.0, energy = 0.0;
    switch (kinds[i]) {
      case Precision::fp32:
        cyc_weight = ct.cycle(Op::fp32_mac);
        energy = ct.fp32_mac * macs + ct.dram_bit * (32.0 * (in_elems + w_elems + outs));
        break;
      case Precision::int8:
        cyc_weight = ct.cycle(Op::int_mul);
        energy = ct.int8_mul * macs + ct.add_per_bit * 32 * macs + ct.dequant_fp_op * outs +
                 ct.dram_bit * (8.0 * (in_elems + w_elems) + 32.0 * outs + 2.0 * 18 * (1 + wl.m));
        break;
      case Precision::hluq_int4: {
        const double shifts = macs * wl.log2_fraction, muls = macs - shifts;
        cyc_weight = std::max(ct.cycle(Op::int_mul), ct.cycle(Op::bit_shift));
        energy = ct.int8_mul * 0.25 * muls + ct.bit_shift * shifts + ct.add_per_bit * 32 * macs +
                 ct.add_per_bit * 32 * shifts + ct.dequant_fp_op * outs * (7.0 * wl.groups + 1) +
                 ct.dram_bit * (4.0 * (in_elems + w_elems) + 32.0 * outs + 18.0 * (4 * wl.groups + 2 * wl.m));
        break;
      }
    }
    c.cycles = static_cast<std::int64_t>(std::ceil(macs * cyc_weight / (static_cast<double>(lanes[i]) * pe_width))) +
               pipeline_stages;
    c.energy = energy;
    cmp.rows.push_back(c);
  }
  for (auto& r : cmp.rows) {
    r.speedup = static_cast<double>(cmp.rows[0].cycles) / static_cast<double>(r.cycles);
    r.efficiency = cmp.rows[0].energy / r.energy;
  }
  return cmp;
}

/// DRAM bits for quantization parameters of `groups` units at 2 params each.
inline std::int64_t param_dram_bits(std::int64_t groups, int param_bits = 18) {
  if (groups < 1 || param_bits < 1) throw ConfigError("parameter traffic needs positive groups and width");
  return groups * 2 * param_bits;
}

}  // namespace ahcq::hwsim
