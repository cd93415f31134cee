#pragma once

// Experiment drivers shared by the CLI and the acceptance runner: the toy
// block problem, reconstruction regimes, the {CAG, HLUQ} ablation and the
// group-count sweep, state serialization and the simulator run on a
// reconstructed block.

#include <future>
#include <string>
#include <vector>

#include "ahcq/cag.hpp"
#include "ahcq/calibration.hpp"
#include "ahcq/config.hpp"
#include "ahcq/datagen.hpp"
#include "ahcq/hwsim.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/quantize_tensor.hpp"
#include "ahcq/reconstruction.hpp"

namespace ahcq::experiments {

struct ToyProblem {
  recon::ToyBlock block;
  std::vector<Tensor> batches;
};

inline ToyProblem toy_problem(const config::ExperimentConfig& cfg) {
  auto f = datagen::gen_toy_block(cfg.toy_spec());
  ToyProblem p{{std::move(f.w1), std::move(f.b1), std::move(f.w2), std::move(f.b2)}, std::move(f.batches)};
  p.block.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Regimes.

/// Input site treatment: fixed per-channel, fixed per-tensor, or per-channel
/// start regrouped along the milestone schedule.
enum class InputMode { per_channel, per_tensor, cag };

inline std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::per_channel: return "per_channel";
    case InputMode::per_tensor: return "per_tensor";
    case InputMode::cag: return "cag";
  }
  return "?";
}

struct Regime {
  InputMode input = InputMode::cag;
  recon::MidScheme mid = recon::MidScheme::hluq;

  std::string name() const { return std::string(to_string(input)) + "+" + std::string(recon::to_string(mid)); }
};

struct RegimeRun {
  Regime regime;
  recon::ReconResult result;
};

inline RegimeRun run_regime(const ToyProblem& p, const config::ExperimentConfig& cfg, Regime r) {
  auto io = cfg.init_options();
  io.setup.mid = r.mid;
  io.input_granularity = r.input == InputMode::per_tensor ? Granularity::per_tensor : Granularity::per_channel;
  auto ro = cfg.recon_options();
  if (r.input != InputMode::cag) ro.schedule = cag::MilestoneSchedule{cfg.iters, {}};
  auto st = recon::init_state(p.block, p.batches, io);
  return {r, recon::reconstruct(p.block, p.batches, std::move(st), ro)};
}

/// Runs regimes concurrently; results come back in input order.
inline std::vector<RegimeRun> run_regimes(const ToyProblem& p, const config::ExperimentConfig& cfg,
                                          const std::vector<Regime>& regimes) {
  std::vector<std::future<RegimeRun>> jobs;
  for (const auto& r : regimes) jobs.push_back(std::async(std::launch::async, [&p, &cfg, r] { return run_regime(p, cfg, r); }));
  std::vector<RegimeRun> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

// ---------------------------------------------------------------------------
// Group-count sweep on a channel-varied tensor.

struct SweepPoint {
  std::string label;  // "G=4", "per_tensor", "per_channel"
  int groups = 0;
  double mse = 0.0;
};

/// Quantization MSE with per-channel MSE-searched parameters, k-means
/// groupings refined per group, and one per-tensor parameter pair.
inline std::vector<SweepPoint> group_sweep(const Tensor& t, int k, const std::vector<int>& groups, std::uint64_t seed) {
  const auto pc = calibration::mse_init(t, k, Granularity::per_channel);
  const int channels = static_cast<int>(t.cols());
  std::vector<SweepPoint> out;
  for (int g : groups) {
    if (g >= channels) {
      out.push_back({"G=" + std::to_string(g), g, quantization_mse(t, pc)});
      continue;
    }
    auto ga = cag::apply_grouping(pc, g, seed);
    out.push_back({"G=" + std::to_string(g), g, quantization_mse(t, cag::refine_groups(t, ga, k))});
  }
  out.push_back({"per_tensor", 1, quantization_mse(t, calibration::mse_init(t, k, Granularity::per_tensor))});
  out.push_back({"per_channel", channels, quantization_mse(t, pc)});
  return out;
}

// ---------------------------------------------------------------------------
// Post-GELU quantizer comparison: HLUQ from the grid search (identity W, so
// the objective is the plain squared error) against exhaustive scans.

struct QuantizerComparison {
  HluqConfig hluq;
  double hluq_mse = 0.0;
  QuantParams uniform;
  double uniform_mse = 0.0;
  QuantParams log2;
  double log2_mse = 0.0;

  std::string csv() const {
    return "scheme,mse\nhluq," + kv::format_double(hluq_mse) + "\nuniform_scan," + kv::format_double(uniform_mse) +
           "\nlog2_biased_scan," + kv::format_double(log2_mse) + "\n";
  }
};

inline QuantizerComparison compare_quantizers(const Tensor& x, int k, const calibration::HluqSearchSpace& space,
                                              int scan_points = 256) {
  if (x.rank() != 2 || x.cols() != 1) throw ShapeError("quantizer comparison takes a [N, 1] sample");
  const double n = static_cast<double>(x.rows());
  QuantizerComparison c;
  const auto r = calibration::hluq_search(x, Tensor({1, 1}, {1.0f}, 1), k, space);
  c.hluq = r.config;
  c.hluq_mse = r.best.objective / n;
  std::vector<double> v(x.data().begin(), x.data().end());
  const auto u = calibration::scan_uniform(v, k, scan_points);
  const auto l = calibration::scan_log2_biased(v, k, scan_points);
  c.uniform = u.params;
  c.uniform_mse = u.sse / n;
  c.log2 = l.params;
  c.log2_mse = l.sse / n;
  return c;
}

// ---------------------------------------------------------------------------
// Ablation.

struct AblationRow {
  std::string study;  // "ablation" or "group_sweep"
  std::string name;
  bool cag = false;
  bool hluq = false;
  int groups = 0;
  std::string metric;
  double value = 0.0;
};

struct Ablation {
  std::vector<AblationRow> rows;

  const AblationRow& find(std::string_view study, std::string_view name) const {
    for (const auto& r : rows)
      if (r.study == study && r.name == name) return r;
    throw ParameterError("no ablation row " + std::string(study) + "/" + std::string(name));
  }

  std::string csv() const {
    std::string out = "study,name,cag,hluq,groups,metric,value\n";
    for (const auto& r : rows)
      out += r.study + "," + r.name + "," + (r.cag ? "1" : "0") + "," + (r.hluq ? "1" : "0") + "," +
             std::to_string(r.groups) + "," + r.metric + "," + kv::format_double(r.value) + "\n";
    return out;
  }
};

/// 2x2 {CAG, HLUQ} grid. CAG off means a per-tensor input site; HLUQ off
/// means a uniform post-GELU site.
inline std::vector<Regime> ablation_regimes() {
  using recon::MidScheme;
  return {{InputMode::cag, MidScheme::hluq},
          {InputMode::cag, MidScheme::uniform},
          {InputMode::per_tensor, MidScheme::hluq},
          {InputMode::per_tensor, MidScheme::uniform}};
}

inline Ablation ablate(const config::ExperimentConfig& cfg) {
  Ablation a;
  const auto p = toy_problem(cfg);
  for (const auto& run : run_regimes(p, cfg, ablation_regimes())) {
    const bool cag = run.regime.input == InputMode::cag;
    const int g = cag ? static_cast<int>(run.result.state.p.in.units()) : 1;
    a.rows.push_back({"ablation", run.regime.name(), cag, run.regime.mid == recon::MidScheme::hluq, g,
                      "block_loss", run.result.final_loss});
  }
  const auto t = datagen::gen(cfg.varied_spec());
  for (const auto& s : group_sweep(t, cfg.k_a, cfg.sweep, cfg.seed)) {
    const bool grouped = s.label != "per_tensor" && s.label != "per_channel";
    a.rows.push_back({"group_sweep", s.label, grouped, false, s.groups, "mse", s.mse});
  }
  return a;
}

// ---------------------------------------------------------------------------
// State serialization.

namespace detail {

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    if constexpr (std::is_floating_point_v<T>)
      s += kv::format_double(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<double> doubles(const kv::Section& sec, std::string_view key) {
  std::vector<double> out;
  for (auto t : kv::split_ws(sec.at(key))) out.push_back(kv::parse_double(t, key));
  return out;
}

inline std::vector<int> ints(const kv::Section& sec, std::string_view key) {
  std::vector<int> out;
  for (auto t : kv::split_ws(sec.at(key))) out.push_back(static_cast<int>(kv::parse_int(t, key)));
  return out;
}

inline void write_site(kv::Document& doc, const std::string& name, const recon::UniformSite& s) {
  doc.add(name).set("log_s", join(s.log_s)).set("zero", join(s.zero)).set("unit_of", join(s.unit_of));
}

inline recon::UniformSite read_site(const kv::Document& doc, const std::string& name) {
  const auto& sec = doc.at(name);
  recon::UniformSite s{doubles(sec, "log_s"), doubles(sec, "zero"), ints(sec, "unit_of")};
  if (s.log_s.size() != s.zero.size()) throw FormatError("site " + name + ": log_s and zero differ in length");
  for (int u : s.unit_of)
    if (u < 0 || static_cast<std::size_t>(u) >= s.units()) throw FormatError("site " + name + ": bad unit index");
  return s;
}

}  // namespace detail

inline kv::Document state_document(const recon::ReconState& st) {
  kv::Document doc;
  doc.add("setup")
      .set("k_a", st.setup.k_a)
      .set("k_w", st.setup.k_w)
      .set("quant_input", st.setup.quant_input ? 1 : 0)
      .set("quant_mid", st.setup.quant_mid ? 1 : 0)
      .set("quant_weights", st.setup.quant_weights ? 1 : 0)
      .set("mid", std::string(recon::to_string(st.setup.mid)))
      .set("iteration", st.iteration);
  detail::write_site(doc, "in", st.p.in);
  detail::write_site(doc, "mid", st.p.mid);
  doc.add("hluq")
      .set("log_s1", st.p.hluq.log_s1)
      .set("log_s2", st.p.hluq.log_s2)
      .set("offset", st.p.hluq.offset)
      .set("b_hat", st.p.hluq.b_hat);
  detail::write_site(doc, "w1", st.p.w1);
  detail::write_site(doc, "w2", st.p.w2);
  doc.add("perturbation").set("d1", detail::join(st.p.d1)).set("d2", detail::join(st.p.d2));
  return doc;
}

/// Loss history is not part of the state file; it goes to loss.csv.
inline recon::ReconState read_state(const kv::Document& doc) {
  recon::ReconState st;
  const auto& s = doc.at("setup");
  st.setup.k_a = static_cast<int>(s.integer("k_a"));
  st.setup.k_w = static_cast<int>(s.integer("k_w"));
  st.setup.quant_input = s.integer("quant_input") != 0;
  st.setup.quant_mid = s.integer("quant_mid") != 0;
  st.setup.quant_weights = s.integer("quant_weights") != 0;
  st.setup.mid = recon::parse_mid_scheme(s.at("mid"));
  st.iteration = static_cast<int>(s.integer("iteration"));
  check_bits(st.setup.k_a);
  check_bits(st.setup.k_w);
  st.p.in = detail::read_site(doc, "in");
  st.p.mid = detail::read_site(doc, "mid");
  const auto& h = doc.at("hluq");
  st.p.hluq = {h.number("log_s1"), h.number("log_s2"), h.number("offset"), static_cast<int>(h.integer("b_hat"))};
  st.p.w1 = detail::read_site(doc, "w1");
  st.p.w2 = detail::read_site(doc, "w2");
  const auto& d = doc.at("perturbation");
  st.p.d1 = detail::doubles(d, "d1");
  st.p.d2 = detail::doubles(d, "d2");
  return st;
}

/// Throws ShapeError when a state does not fit the block.
inline void check_state(const recon::ToyBlock& b, const recon::ReconState& st) {
  const std::size_t C = b.channels(), H = b.hidden();
  if (st.p.in.channels() != C || st.p.mid.channels() != H || st.p.w1.channels() != H || st.p.w2.channels() != C ||
      st.p.d1.size() != C * H || st.p.d2.size() != H * C)
    throw ShapeError("reconstruction state does not match the block dims");
}

// ---------------------------------------------------------------------------
// Simulator run on a reconstructed block: post-GELU activations of one
// batch (HLUQ codes, one config) times the perturbed W2 (uniform codes).

struct BlockSimulation {
  hwsim::SimResult sim;
  double max_abs_error = 0.0;  // against the dequantized fp32 reference
  hwsim::Comparison comparison;
};

inline BlockSimulation simulate_block(const ToyProblem& p, const recon::ReconState& st,
                                      const config::ExperimentConfig& cfg, std::size_t batch = 0) {
  check_state(p.block, st);
  if (batch >= p.batches.size()) throw ParameterError("batch index out of range");
  if (st.setup.mid != recon::MidScheme::hluq) throw ParameterError("simulation needs an HLUQ post-GELU site");
  const auto& b = p.block;
  const std::size_t H = b.hidden(), C = b.channels();
  const Tensor g = recon::detail::hidden_fp(b, p.batches[batch]);
  const auto x = hwsim::encode_activations(g, {st.p.hluq.config(st.setup.k_a)});

  const auto s = st.p.w2.scales();
  std::vector<double> col_s(C);
  std::vector<int> col_z(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto u = static_cast<std::size_t>(st.p.w2.unit_of[c]);
    col_s[c] = s[u];
    col_z[c] = static_cast<int>(std::clamp(std::round(st.p.w2.zero[u]), 0.0, static_cast<double>(max_code(st.setup.k_w))));
  }
  std::vector<float> w(H * C);
  const auto w2 = b.w2.data();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t c = 0; c < C; ++c)
      w[h * C + c] = static_cast<float>(w2[h * C + c] + col_s[c] * st.p.d2[h * C + c]);
  const auto wq = hwsim::encode_weights(Tensor({H, C}, std::move(w), 1), col_s, col_z, st.setup.k_w);

  BlockSimulation out;
  out.sim = hwsim::simulate_matmul(x, wq, cfg.pe);
  const auto ref = hwsim::reference_matmul(x, wq);
  for (std::size_t i = 0; i < ref.size(); ++i)
    out.max_abs_error = std::max(out.max_abs_error, std::abs(static_cast<double>(out.sim.y.data()[i]) - ref.data()[i]));
  const auto& r = out.sim.report;
  hwsim::Workload wl{g.rows(), H, C, static_cast<double>(r.log2_elements) / static_cast<double>(r.log2_elements + r.uniform_elements),
                     cfg.groups};
  out.comparison = hwsim::cost_compare(wl, cfg.pe.costs, cfg.compare_lanes, cfg.pe.pe_width, cfg.pe.pipeline_stages);
  return out;
}

}  // namespace ahcq::experiments
