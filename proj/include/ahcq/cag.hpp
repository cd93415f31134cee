#pragma once

// Channel-aware grouping: k-means over per-channel (s, z) pairs, shared group
// parameters, and the channel permutation that makes groups contiguous.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ahcq/calibration.hpp"
#include "ahcq/error.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/quantize_tensor.hpp"
#include "ahcq/rng.hpp"

namespace ahcq::cag {

struct Point {
  double s = 0.0;
  double z = 0.0;
  bool operator==(const Point&) const = default;
};

enum class Features { raw, standardized };

struct KMeansResult {
  std::vector<Point> centroids;   // ascending s (then z)
  std::vector<int> assignment;    // point -> centroid
  std::vector<double> distortion; // after every assignment step
  int iterations = 0;
  int requested_k = 0;
  bool reduced = false;           // K was cut to the number of distinct points
};

namespace detail {

inline double dist2(const Point& a, const Point& b) {
  const double ds = a.s - b.s, dz = a.z - b.z;
  return ds * ds + dz * dz;
}

inline std::size_t count_distinct(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.s < b.s || (a.s == b.s && a.z < b.z);
  });
  return static_cast<std::size_t>(std::unique(pts.begin(), pts.end()) - pts.begin());
}

inline std::vector<Point> standardize(const std::vector<Point>& pts) {
  const double n = static_cast<double>(pts.size());
  double ms = 0.0, mz = 0.0;
  for (const auto& p : pts) ms += p.s, mz += p.z;
  ms /= n;
  mz /= n;
  double vs = 0.0, vz = 0.0;
  for (const auto& p : pts) vs += (p.s - ms) * (p.s - ms), vz += (p.z - mz) * (p.z - mz);
  const double ss = vs > 0.0 ? std::sqrt(vs / n) : 1.0;
  const double sz = vz > 0.0 ? std::sqrt(vz / n) : 1.0;
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({(p.s - ms) / ss, (p.z - mz) / sz});
  return out;
}

}  // namespace detail

/// Lloyd's algorithm with farthest-point seeding. The first seed is drawn
/// from `seed`; each later seed is the point farthest from the chosen ones
/// (lowest index on ties). Stops at an assignment fixpoint or max_iters.
/// Empty clusters are reseeded at the point farthest from its centroid.
/// Clustering runs in `features` space; returned centroids are always the
/// raw (s, z) means of their members.
inline KMeansResult kmeans(const std::vector<Point>& points, int k, std::uint64_t seed,
                           Features features = Features::raw, int max_iters = 100) {
  if (points.empty()) throw ParameterError("kmeans needs at least one point");
  if (k < 1) throw ParameterError("kmeans needs K >= 1");
  KMeansResult res;
  res.requested_k = k;
  const std::size_t distinct = detail::count_distinct(points);
  if (static_cast<std::size_t>(k) > distinct) {
    k = static_cast<int>(distinct);
    res.reduced = true;
  }
  const auto pts = features == Features::raw ? points : detail::standardize(points);
  const std::size_t n = pts.size();
  const auto K = static_cast<std::size_t>(k);

  std::vector<Point> cent;
  {
    rng::Stream r(seed, 21);
    cent.push_back(pts[r.below(n)]);
    std::vector<double> near(n);
    for (std::size_t i = 0; i < n; ++i) near[i] = detail::dist2(pts[i], cent[0]);
    while (cent.size() < K) {
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (near[i] > near[far]) far = i;
      cent.push_back(pts[far]);
      for (std::size_t i = 0; i < n; ++i) near[i] = std::min(near[i], detail::dist2(pts[i], cent.back()));
    }
  }

  std::vector<int> assign(n, -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = detail::dist2(pts[i], cent[0]);
      for (std::size_t c = 1; c < K; ++c) {
        const double d = detail::dist2(pts[i], cent[c]);
        if (d < bd) bd = d, best = static_cast<int>(c);
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      total += bd;
    }
    res.distortion.push_back(total);
    res.iterations = it + 1;
    if (!changed) break;

    std::vector<Point> sum(K);
    std::vector<std::size_t> cnt(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& acc = sum[static_cast<std::size_t>(assign[i])];
      acc.s += pts[i].s;
      acc.z += pts[i].z;
      ++cnt[static_cast<std::size_t>(assign[i])];
    }
    for (std::size_t c = 0; c < K; ++c) {
      if (cnt[c] == 0) continue;
      cent[c] = {sum[c].s / static_cast<double>(cnt[c]), sum[c].z / static_cast<double>(cnt[c])};
    }
    for (std::size_t c = 0; c < K; ++c) {
      if (cnt[c] != 0) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = detail::dist2(pts[i], cent[static_cast<std::size_t>(assign[i])]);
        if (d > fd) fd = d, far = i;
      }
      cent[c] = pts[far];
      --cnt[static_cast<std::size_t>(assign[far])];
      assign[far] = static_cast<int>(c);
      cnt[c] = 1;
    }
  }

  // Raw-space means, then relabel by ascending s.
  std::vector<Point> raw(K);
  std::vector<std::size_t> cnt(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    raw[c].s += points[i].s;
    raw[c].z += points[i].z;
    ++cnt[c];
  }
  for (std::size_t c = 0; c < K; ++c) {
    raw[c].s /= static_cast<double>(cnt[c]);
    raw[c].z /= static_cast<double>(cnt[c]);
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return raw[a].s < raw[b].s || (raw[a].s == raw[b].s && raw[a].z < raw[b].z);
  });
  std::vector<int> rank(K);
  for (std::size_t r = 0; r < K; ++r) {
    res.centroids.push_back(raw[order[r]]);
    rank[order[r]] = static_cast<int>(r);
  }
  res.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.assignment[i] = rank[static_cast<std::size_t>(assign[i])];
  return res;
}

/// Sum of squared raw-space distances of points to their centroids.
inline double distortion(const std::vector<Point>& points, const std::vector<Point>& centroids,
                         const std::vector<int>& assignment) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    acc += detail::dist2(points[i], centroids[static_cast<std::size_t>(assignment[i])]);
  return acc;
}

// ---------------------------------------------------------------------------

struct GroupAssignment {
  std::vector<int> group_of;      // channel -> group
  std::vector<Point> centroids;   // per group (s, z)
  std::vector<std::size_t> reorder;  // position -> original channel

  std::size_t groups() const noexcept { return centroids.size(); }
  std::size_t channels() const noexcept { return group_of.size(); }

  void validate() const {
    const std::size_t g = groups(), c = channels();
    if (g == 0 || c == 0) throw ParameterError("empty grouping");
    std::vector<std::size_t> members(g, 0);
    for (int x : group_of) {
      if (x < 0 || static_cast<std::size_t>(x) >= g) throw ParameterError("group index out of range");
      ++members[static_cast<std::size_t>(x)];
    }
    for (auto m : members)
      if (m == 0) throw ParameterError("empty group");
    if (reorder.size() != c) throw ParameterError("reorder length differs from channel count");
    std::vector<bool> seen(c, false);
    for (auto r : reorder) {
      if (r >= c || seen[r]) throw ParameterError("reorder is not a permutation");
      seen[r] = true;
    }
  }

  bool operator==(const GroupAssignment&) const = default;
};

/// Channels sorted by group, stable by original index.
inline std::vector<std::size_t> contiguous_order(const std::vector<int>& group_of) {
  std::vector<std::size_t> order(group_of.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return group_of[a] < group_of[b]; });
  return order;
}

inline GroupAssignment identity_grouping(std::size_t channels, const std::vector<Point>& params) {
  GroupAssignment g;
  g.group_of.resize(channels);
  std::iota(g.group_of.begin(), g.group_of.end(), 0);
  g.centroids = params;
  g.reorder = contiguous_order(g.group_of);
  return g;
}

inline std::vector<Point> points_of(const ParamSet& ps) {
  std::vector<Point> pts;
  pts.reserve(ps.params.size());
  for (const auto& p : ps.params) {
    if (p.scheme != Scheme::uniform) throw ParameterError("grouping clusters uniform (s, z) parameters");
    pts.push_back({p.s, static_cast<double>(p.z)});
  }
  return pts;
}

inline GroupAssignment group_points(const std::vector<Point>& pts, int k, std::uint64_t seed,
                                    Features features = Features::raw) {
  const auto km = kmeans(pts, k, seed, features);
  GroupAssignment g{km.assignment, km.centroids, {}};
  g.reorder = contiguous_order(g.group_of);
  return g;
}

/// Clusters per-channel uniform parameters into k groups.
inline GroupAssignment apply_grouping(const ParamSet& per_channel, int k, std::uint64_t seed,
                                      Features features = Features::raw) {
  if (per_channel.granularity != Granularity::per_channel)
    throw ParameterError("apply_grouping needs per-channel parameters");
  for (const auto& p : per_channel.params) p.validate();
  return group_points(points_of(per_channel), k, seed, features);
}

/// Per-group parameter set built from the centroids (z rounded and clamped).
inline ParamSet to_param_set(const GroupAssignment& g, int bits) {
  std::vector<QuantParams> ps;
  ps.reserve(g.groups());
  for (const auto& c : g.centroids) {
    const int z = static_cast<int>(std::clamp(std::round(c.z), 0.0, static_cast<double>(max_code(bits))));
    ps.push_back(QuantParams::uniform(c.s, z, bits));
  }
  return ParamSet::per_group(std::move(ps), g.group_of);
}

/// Re-fits each group's shared parameters on the pooled values of its
/// channels: the centroid competes with the unit scale search and the lower
/// error wins. Centroids are updated to the chosen parameters.
inline ParamSet refine_groups(const Tensor& t, GroupAssignment& g, int bits) {
  auto ps = to_param_set(g, bits);
  ps.check_against(t.channels());
  std::vector<std::vector<double>> pooled(g.groups());
  for (std::size_t i = 0; i < t.size(); ++i)
    pooled[static_cast<std::size_t>(g.group_of[t.channel_of(i)])].push_back(t[i]);
  for (std::size_t j = 0; j < g.groups(); ++j) {
    const double base = calibration::unit_sse(pooled[j], ps.params[j]);
    const auto fit = calibration::search_unit(pooled[j], bits);
    if (fit.sse < base) {
      ps.params[j] = fit.params;
      g.centroids[j] = {fit.params.s, static_cast<double>(fit.params.z)};
    }
  }
  return ps;
}

// ---------------------------------------------------------------------------

struct Milestone {
  int iter = 0;
  int groups = 0;
  bool operator==(const Milestone&) const = default;
};

struct MilestoneSchedule {
  int total_iters = 0;
  std::vector<Milestone> milestones;

  void validate() const {
    if (total_iters < 0) throw ParameterError("total iterations must be nonnegative");
    for (std::size_t j = 0; j < milestones.size(); ++j) {
      const auto& m = milestones[j];
      if (m.iter < 1 || m.iter > total_iters)
        throw ParameterError("milestone at iteration " + std::to_string(m.iter) + " lies outside [1, " +
                             std::to_string(total_iters) + "]");
      if (m.groups < 1) throw ParameterError("milestone group count must be positive");
      if (j > 0 && m.iter <= milestones[j - 1].iter)
        throw ParameterError("milestone iterations must increase strictly");
      if (j > 0 && m.groups >= milestones[j - 1].groups)
        throw ParameterError("milestone group counts must decrease strictly");
    }
  }

  int final_groups() const { return milestones.empty() ? 0 : milestones.back().groups; }

  /// C -> 64 -> 16 -> k at 25/50/75% of T, dropping steps not above k.
  static MilestoneSchedule geometric(int total_iters, int k) {
    MilestoneSchedule s{total_iters, {}};
    for (auto [frac, g] : {std::pair{1, 64}, std::pair{2, 16}})
      if (g > k) s.milestones.push_back({total_iters * frac / 4, g});
    s.milestones.push_back({total_iters * 3 / 4, k});
    s.validate();
    return s;
  }

  /// "iter:groups iter:groups ..." form used in configs.
  static MilestoneSchedule parse(int total_iters, std::string_view text) {
    MilestoneSchedule s{total_iters, {}};
    for (auto tok : kv::split_ws(text)) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ConfigError("milestone '" + std::string(tok) + "' is not iter:groups");
      s.milestones.push_back({static_cast<int>(kv::parse_int(tok.substr(0, colon), "milestones")),
                              static_cast<int>(kv::parse_int(tok.substr(colon + 1), "milestones"))});
    }
    s.validate();
    return s;
  }

  std::string str() const {
    std::string out;
    for (const auto& m : milestones) {
      if (!out.empty()) out += ' ';
      out += std::to_string(m.iter) + ":" + std::to_string(m.groups);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------

struct StorageCost {
  std::int64_t register_bits = 0;
  std::int64_t baseline_bits = 0;  // one (s, z) pair per channel
  std::int64_t dram_bytes = 0;
  double reduction = 0.0;          // 1 - G / C
};

inline StorageCost storage_cost(std::int64_t channels, std::int64_t groups, int bits_per_param) {
  if (groups < 1 || channels < groups) throw ParameterError("storage cost needs C >= G >= 1");
  if (bits_per_param < 1) throw ParameterError("bits per parameter must be positive");
  StorageCost c;
  c.register_bits = groups * 2 * bits_per_param;
  c.baseline_bits = channels * 2 * bits_per_param;
  c.dram_bytes = (c.register_bits + 7) / 8;
  c.reduction = 1.0 - static_cast<double>(groups) / static_cast<double>(channels);
  return c;
}

// ---------------------------------------------------------------------------

inline void write_grouping(kv::Document& doc, const GroupAssignment& g, const std::string& name = "grouping") {
  auto join = [](const auto& v, auto fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += fmt(v[i]);
    }
    return out;
  };
  auto& sec = doc.add(name);
  sec.set("groups", g.groups())
      .set("channels", g.channels())
      .set("centroid_s", join(g.centroids, [](const Point& p) { return kv::format_double(p.s); }))
      .set("centroid_z", join(g.centroids, [](const Point& p) { return kv::format_double(p.z); }))
      .set("group_of", join(g.group_of, [](int x) { return std::to_string(x); }))
      .set("reorder", join(g.reorder, [](std::size_t x) { return std::to_string(x); }));
}

inline GroupAssignment read_grouping(const kv::Document& doc, const std::string& name = "grouping") {
  const auto& sec = doc.at(name);
  GroupAssignment g;
  const auto s = kv::split_ws(sec.at("centroid_s"));
  const auto z = kv::split_ws(sec.at("centroid_z"));
  if (s.size() != z.size()) throw FormatError("centroid lists differ in length");
  for (std::size_t i = 0; i < s.size(); ++i)
    g.centroids.push_back({kv::parse_double(s[i], "centroid_s"), kv::parse_double(z[i], "centroid_z")});
  for (auto t : kv::split_ws(sec.at("group_of")))
    g.group_of.push_back(static_cast<int>(kv::parse_int(t, "group_of")));
  for (auto t : kv::split_ws(sec.at("reorder")))
    g.reorder.push_back(static_cast<std::size_t>(kv::parse_u64(t, "reorder")));
  if (static_cast<std::int64_t>(g.groups()) != sec.integer("groups") ||
      static_cast<std::int64_t>(g.channels()) != sec.integer("channels"))
    throw FormatError("grouping counts disagree with its lists");
  try {
    g.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("invalid grouping: ") + e.what());
  }
  return g;
}

}  // namespace ahcq::cag
