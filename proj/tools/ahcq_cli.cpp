// ahcq: fixture generation, calibration, reconstruction, simulation and
// ablation front end. Artifacts go under --out (default $AHCQ_OUT, else
// ./ahcq_out); each command reads what the previous one wrote.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "ahcq.hpp"

namespace fs = std::filesystem;
using namespace ahcq;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Context {
  config::ExperimentConfig cfg;
  fs::path out;

  fs::path dir(const std::string& name) const {
    const auto d = out / name;
    fs::create_directories(d);
    return d;
  }

  // Upstream artifact; missing files are reported with the producing command.
  fs::path need(const std::string& rel, const char* producer) const {
    const auto p = out / rel;
    if (!fs::exists(p)) throw FormatError("missing input " + p.string() + " (run '" + producer + "' first)");
    return p;
  }
};

Context make_context(const Globals& g) {
  Context c;
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path)) throw ConfigError("config file " + g.config_path + " does not exist");
    try {
      c.cfg = config::load(g.config_path);
    } catch (const ConfigError& e) {
      throw ConfigError(g.config_path + ": " + e.what());
    }
  }
  if (g.seed) {
    c.cfg.seed = *g.seed;
    c.cfg.validate();
  }
  std::string out = g.out;
  if (out.empty()) {
    const char* env = std::getenv("AHCQ_OUT");
    out = env && *env ? env : "ahcq_out";
  }
  c.out = out;
  fs::create_directories(c.out);
  return c;
}

void write(const fs::path& p, std::string_view text) {
  kv::write_file(p.string(), text);
  std::cout << "wrote " << p.string() << "\n";
}

// ---------------------------------------------------------------------------
// Fixture files.

std::string toy_stem(const config::ExperimentConfig& cfg) { return datagen::file_stem(cfg.toy_spec()); }

void save_fixture(const Context& ctx, const datagen::FixtureSpec& spec, const Tensor& t) {
  const auto d = ctx.dir("fixtures");
  const auto stem = datagen::file_stem(spec);
  container::save((d / (stem + ".ahct")).string(), t);
  std::cout << "wrote " << (d / (stem + ".ahct")).string() << "\n";
  write(d / (stem + ".txt"), datagen::header(spec).str());
}

// File names carry kind, dims and seed only; the sidecar holds the rest.
void check_sidecar(const Context& ctx, const datagen::FixtureSpec& spec) {
  const auto p = ctx.need("fixtures/" + datagen::file_stem(spec) + ".txt", "gen");
  if (kv::read_file(p.string()) != datagen::header(spec).str())
    throw FormatError(p.string() + " was generated with different [fixture] settings; rerun 'gen'");
}

Tensor load_fixture(const Context& ctx, const datagen::FixtureSpec& spec) {
  check_sidecar(ctx, spec);
  return container::load(ctx.need("fixtures/" + datagen::file_stem(spec) + ".ahct", "gen").string());
}

experiments::ToyProblem load_toy(const Context& ctx) {
  check_sidecar(ctx, ctx.cfg.toy_spec());
  const auto stem = toy_stem(ctx.cfg);
  auto part = [&](const char* name) {
    return container::load(ctx.need("fixtures/" + stem + "_" + name + ".ahct", "gen").string());
  };
  experiments::ToyProblem p{{part("w1"), part("b1"), part("w2"), part("b2")}, {}};
  const Tensor x = part("x");
  const std::size_t tokens = ctx.cfg.tokens, c = ctx.cfg.channels;
  if (x.rank() != 2 || x.cols() != c || x.rows() != tokens * ctx.cfg.batches)
    throw ShapeError("toy fixture input does not match [fixture] dims; rerun 'gen'");
  for (std::size_t b = 0; b < ctx.cfg.batches; ++b) {
    const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(b * tokens * c);
    p.batches.emplace_back(std::vector<std::size_t>{tokens, c}, std::vector<float>(first, first + tokens * c), 1);
  }
  try {
    p.block.validate();
  } catch (const Error& e) {
    throw ShapeError(std::string("toy fixture weights: ") + e.what());
  }
  if (p.block.channels() != c || p.block.hidden() != ctx.cfg.hidden)
    throw ShapeError("toy fixture weights do not match [fixture] dims; rerun 'gen'");
  return p;
}

// ---------------------------------------------------------------------------
// Commands.

void cmd_gen(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  save_fixture(ctx, cfg.post_gelu_spec(), datagen::gen(cfg.post_gelu_spec()));
  save_fixture(ctx, cfg.varied_spec(), datagen::gen(cfg.varied_spec()));
  const auto spec = cfg.toy_spec();
  const auto f = datagen::gen_toy_block(spec);
  const auto d = ctx.dir("fixtures");
  const auto stem = toy_stem(cfg);
  auto put = [&](const char* name, const Tensor& t) {
    const auto p = d / (stem + "_" + name + ".ahct");
    container::save(p.string(), t);
    std::cout << "wrote " << p.string() << "\n";
  };
  put("w1", f.w1);
  put("b1", f.b1);
  put("w2", f.w2);
  put("b2", f.b2);
  put("x", datagen::gen(spec));
  write(d / (stem + ".txt"), datagen::header(spec).str());
}

void cmd_calibrate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto d = ctx.dir("calibrate");

  const auto pg = load_fixture(ctx, cfg.post_gelu_spec());
  const auto cmp = experiments::compare_quantizers(pg, cfg.k_a, cfg.hluq);
  write(d / "post_gelu_quantizers.csv", cmp.csv());
  kv::Document h;
  h.add("hluq")
      .set("s1", cmp.hluq.s1)
      .set("s2_step", cmp.hluq.s2_step)
      .set("b_hat", cmp.hluq.b_hat)
      .set("k", cmp.hluq.k)
      .set("offset", cmp.hluq.offset);
  write(d / "post_gelu_hluq.txt", h.str());

  const auto cv = load_fixture(ctx, cfg.varied_spec());
  const auto pc = calibration::mse_init(cv, cfg.k_a, Granularity::per_channel);
  write(d / "channel_varied_per_channel.txt", params_io::to_text(pc));

  const auto p = load_toy(ctx);
  const auto st = recon::init_state(p.block, p.batches, cfg.init_options());
  write(d / "toy_init_state.txt", experiments::state_document(st).str());
}

void cmd_reconstruct(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto p = load_toy(ctx);
  auto st = experiments::read_state(kv::parse(kv::read_file(ctx.need("calibrate/toy_init_state.txt", "calibrate").string())));
  experiments::check_state(p.block, st);
  if (st.setup.k_a != cfg.k_a || st.setup.k_w != cfg.k_w || st.setup.mid != cfg.mid)
    throw ConfigError("calibrate/toy_init_state.txt was produced with different [bits]/[quantizers]; rerun 'calibrate'");
  const auto res = recon::reconstruct(p.block, p.batches, std::move(st), cfg.recon_options());
  const auto d = ctx.dir("reconstruct");
  write(d / "state.txt", experiments::state_document(res.state).str());
  write(d / "loss.csv", recon::loss_csv(res.state.loss_history));
  kv::Document g;
  params_io::write_param_set(g, recon::site_params(res.state.p.in, cfg.k_a), "input");
  write(d / "input_grouping.txt", g.str());
  kv::Document s;
  std::string events;
  for (const auto& e : res.regroups) events += (events.empty() ? "" : " ") + std::to_string(e.iteration) + ":" + std::to_string(e.groups);
  s.add("reconstruction")
      .set("iters", cfg.iters)
      .set("initial_loss", res.initial_loss)
      .set("final_loss", res.final_loss)
      .set("input_units", res.state.p.in.units())
      .set("regroups", events.empty() ? "none" : events);
  write(d / "summary.txt", s.str());
}

void cmd_simulate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto p = load_toy(ctx);
  const auto st = experiments::read_state(kv::parse(kv::read_file(ctx.need("reconstruct/state.txt", "reconstruct").string())));
  const auto r = experiments::simulate_block(p, st, cfg);
  const auto d = ctx.dir("simulate");
  kv::Document doc;
  r.sim.report.write(doc, "sim");
  doc.add("fidelity").set("max_abs_error", r.max_abs_error);
  write(d / "report.txt", doc.str());
  write(d / "report.csv", hwsim::SimReport::csv_header() + r.sim.report.csv_row());
  write(d / "cost_compare.csv", r.comparison.csv());
}

void cmd_ablate(const Context& ctx) {
  const auto a = experiments::ablate(ctx.cfg);
  write(ctx.dir("ablate") / "ablation.csv", a.csv());
}

// Digest: every CSV under the output dir, as aligned tables.
std::string digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv" && e.path().filename() != "loss.csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream out;
  out << "ahcq report\n";
  for (const auto& f : files) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(kv::read_file(f.string()));
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
      rows.push_back(std::move(cells));
    }
    std::vector<std::size_t> width;
    for (const auto& r : rows)
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (width.size() <= i) width.push_back(0);
        width[i] = std::max(width[i], r[i].size());
      }
    out << "\n== " << fs::relative(f, root).string() << " (" << (rows.empty() ? 0 : rows.size() - 1) << " rows)\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        out << r[i];
        if (i + 1 < r.size()) out << std::string(width[i] - r[i].size() + 2, ' ');
      }
      out << "\n";
    }
  }
  const auto loss = root / "reconstruct" / "loss.csv";
  if (fs::exists(loss)) {
    std::istringstream in(kv::read_file(loss.string()));
    std::string line, first, last;
    std::size_t n = 0;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (n++ == 0) first = line;
      last = line;
    }
    out << "\n== reconstruct/loss.csv (" << n << " iterations)\nfirst " << first << "\nlast  " << last << "\n";
  }
  return out.str();
}

void cmd_report(const Context& ctx) {
  const auto text = digest(ctx.out);
  kv::write_file((ctx.out / "report.txt").string(), text);
  std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ahcq: channel-grouped hybrid quantization experiments"};
  app.require_subcommand(1, 1);
  Globals g;
  app.add_option("--config", g.config_path, "experiment config file");
  app.add_option("--seed", g.seed, "override [experiment] seed");
  app.add_option("--out", g.out, "output directory (default $AHCQ_OUT or ./ahcq_out)");

  using Cmd = void (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Cmd>> cmds{
      {"gen", "write post_gelu, channel_varied and toy block fixtures", cmd_gen},
      {"calibrate", "quantizer comparison, per-channel params, initial reconstruction state", cmd_calibrate},
      {"reconstruct", "block reconstruction from the calibrated state", cmd_reconstruct},
      {"simulate", "run the reconstructed mid layer through the PE simulator", cmd_simulate},
      {"ablate", "{CAG, HLUQ} grid plus group-count sweep", cmd_ablate},
      {"report", "digest of all CSV outputs", cmd_report},
  };
  Cmd chosen = nullptr;
  for (const auto& [name, help, fn] : cmds) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, f = fn] { chosen = f; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    chosen(make_context(g));
  } catch (const std::exception& e) {
    std::cerr << "ahcq: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
