#pragma once

// Patch classification and orientation.
//
// Phase 1 traces multi-bounce paths from both sides of every patch, derives
// the interior/exterior/outside class from the mean bounce counts and picks
// an orientation per patch, then makes every plane consistent by a signum
// vote. Phase 2 re-checks each remaining patch with single-bounce rays:
// looking at the back faces of other patches means the patch points into a
// wall, so it is flipped; a second vote follows. Signs are stored relative
// to each patch's reference normal (+1 keeps it, -1 flips it).

#include "normorient/parallel.hpp"
#include "normorient/patch_model.hpp"
#include "normorient/pointcloud_io.hpp"
#include "normorient/ray_engine.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace normorient {

enum class PatchClass : std::uint8_t { unset, in, ex, out };

inline std::string_view to_string(PatchClass c) {
  switch (c) {
    case PatchClass::unset: return "unset";
    case PatchClass::in: return "in";
    case PatchClass::ex: return "ex";
    case PatchClass::out: return "out";
  }
  return "?";
}

struct SideStats {
  double length = 0.0;   // sum of log(1 + segment length)
  double bounces = 0.0;  // mean hits per path
};

inline SideStats accumulate_stats(std::span<const PathSample> samples) {
  if (samples.empty()) throw std::invalid_argument("accumulate_stats: need at least one path");
  SideStats s;
  std::uint64_t hits = 0;
  for (const auto& path : samples) {
    for (double l : path.lengths) s.length += std::log1p(l);
    hits += path.bounces;
  }
  s.bounces = static_cast<double>(hits) / static_cast<double>(samples.size());
  return s;
}

inline PatchClass classify_patch(const SideStats& plus, const SideStats& minus, double tau) {
  const bool open_plus = plus.bounces < tau;
  const bool open_minus = minus.bounces < tau;
  if (open_plus && open_minus) return PatchClass::out;
  if (open_plus != open_minus) return PatchClass::ex;
  return PatchClass::in;
}

/// Exterior patches point away from the open side; interior patches point to
/// the side with the larger accumulated length (ties flip).
inline int orient_patch(PatchClass cls, const SideStats& plus, const SideStats& minus, double tau) {
  switch (cls) {
    case PatchClass::ex: return minus.bounces < tau ? 1 : -1;
    case PatchClass::in: return plus.length > minus.length ? 1 : -1;
    default: throw std::invalid_argument("orient_patch: patch class must be in or ex");
  }
}

struct SurfaceVote {
  std::uint32_t plane = 0;
  int theta = 0;
  int sign = 0;  // resulting orientation relative to the plane normal
  std::uint32_t voters = 0;
};

/// theta = sum of the voters' signs; the plane keeps its reference normal
/// only for a strictly positive sum.
inline SurfaceVote vote_surface(std::uint32_t plane, std::span<const std::int8_t> signs) {
  if (signs.empty()) throw std::invalid_argument("vote_surface: plane has no voting patches");
  SurfaceVote v;
  v.plane = plane;
  for (auto s : signs) v.theta += (s > 0) - (s < 0);
  v.voters = static_cast<std::uint32_t>(signs.size());
  v.sign = v.theta > 0 ? 1 : -1;
  return v;
}

struct FacadeVote {
  int phi = 0;
  int sign = 0;  // corrected sign relative to the patch reference normal
};

/// Single-bounce check around the current orientation sign * normal. Each ray
/// adds sgn(<oriented normal of the hit patch, ray direction>); escaping rays
/// add 0. The orientation is kept only for a negative sum.
inline FacadeVote facade_correct(const Scene& scene, const Patch& patch, int sign,
                                 std::span<const std::int8_t> patch_signs, const TraceConfig& cfg) {
  const KeyedRng rng(cfg.seed);
  const Vec3 axis = sign > 0 ? Vec3(patch.normal) : Vec3(-patch.normal);
  FacadeVote out;
  for (std::uint32_t i = 0; i < cfg.rays; ++i) {
    const Vec3 dir =
        sample_cone(axis, cfg.cone_half_angle, rng.uniform2({static_cast<std::uint64_t>(RngDomain::facade), patch.id, i}));
    auto hit = scene.intersect(patch.center, dir, cfg.t_min);
    if (!hit) continue;
    const Quad& q = scene.quads()[hit->quad];
    const Vec3 oriented = patch_signs[hit->id] > 0 ? Vec3(q.normal) : Vec3(-q.normal);
    const double d = oriented.dot(dir);
    out.phi += (d > 0.0) - (d < 0.0);
  }
  out.sign = out.phi < 0 ? sign : -sign;
  return out;
}

enum class Phase : std::uint8_t { p1a = 0, p1b = 1, p2a = 2, p2b = 3 };
inline constexpr std::array<std::string_view, 4> kPhaseNames = {"1A", "1B", "2A", "2B"};

struct PatchDecision {
  PatchClass cls = PatchClass::unset;
  std::array<std::int8_t, 4> sign{};  // per phase; 0 for out patches
  SideStats plus, minus;
  int phi = 0;
};

struct PhaseTimings {
  std::array<double, 4> ms{};
  double total() const { return ms[0] + ms[1] + ms[2] + ms[3]; }
};

struct PipelineResult {
  std::vector<PatchDecision> decisions;  // indexed by patch id
  std::vector<SurfaceVote> votes_1b, votes_2b;
  std::vector<std::uint32_t> dropped_planes;  // planes whose patches are all out
  PhaseTimings timings;

  std::size_t count(PatchClass c) const {
    std::size_t n = 0;
    for (const auto& d : decisions) n += d.cls == c;
    return n;
  }
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

inline std::vector<SurfaceVote> vote_all(const PatchSet& set, std::size_t plane_count, std::vector<PatchDecision>& dec,
                                         int from, int to, std::vector<std::uint32_t>* dropped) {
  std::vector<std::vector<std::int8_t>> signs(plane_count);
  for (const auto& p : set.patches) {
    if (dec[p.id].cls != PatchClass::out) signs[p.plane].push_back(dec[p.id].sign[from]);
  }
  std::vector<SurfaceVote> votes;
  std::vector<std::int8_t> plane_sign(plane_count, 0);
  for (std::uint32_t s = 0; s < plane_count; ++s) {
    if (signs[s].empty()) {
      if (dropped) dropped->push_back(s);
      continue;
    }
    votes.push_back(vote_surface(s, signs[s]));
    plane_sign[s] = static_cast<std::int8_t>(votes.back().sign);
  }
  for (const auto& p : set.patches) {
    if (dec[p.id].cls != PatchClass::out) dec[p.id].sign[to] = plane_sign[p.plane];
  }
  return votes;
}

}  // namespace detail

/// Full orientation pipeline over a patch set (phases 1A, 1B, 2A, 2B).
inline PipelineResult run_pipeline(const PatchSet& set, std::size_t plane_count, const TraceConfig& cfg) {
  cfg.validate();
  if (set.patches.empty()) throw std::invalid_argument("run_pipeline: empty patch set");
  using clock = std::chrono::steady_clock;
  PipelineResult r;
  r.decisions.resize(set.patches.size());

  // 1A: both sides of every patch against the full patch set.
  auto t0 = clock::now();
  {
    const Scene scene = Scene::from_patches(set);
    parallel_for(set.patches.size(), [&](std::size_t i) {
      const Patch& p = set.patches[i];
      PatchDecision& d = r.decisions[i];
      d.plus = accumulate_stats(trace_paths(scene, p, +1, cfg));
      d.minus = accumulate_stats(trace_paths(scene, p, -1, cfg));
      d.cls = classify_patch(d.plus, d.minus, cfg.tau);
      if (d.cls != PatchClass::out) d.sign[0] = static_cast<std::int8_t>(orient_patch(d.cls, d.plus, d.minus, cfg.tau));
    });
  }
  r.timings.ms[0] = detail::elapsed_ms(t0);

  t0 = clock::now();
  r.votes_1b = detail::vote_all(set, plane_count, r.decisions, 0, 1, &r.dropped_planes);
  r.timings.ms[1] = detail::elapsed_ms(t0);

  // 2A: outside patches no longer take part.
  t0 = clock::now();
  {
    std::vector<std::uint8_t> active(set.patches.size());
    std::vector<std::int8_t> signs(set.patches.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      active[i] = r.decisions[i].cls != PatchClass::out;
      signs[i] = r.decisions[i].sign[1];
    }
    const Scene scene = Scene::from_patches(set, active);
    parallel_for(set.patches.size(), [&](std::size_t i) {
      if (!active[i]) return;
      auto v = facade_correct(scene, set.patches[i], signs[i], signs, cfg);
      r.decisions[i].phi = v.phi;
      r.decisions[i].sign[2] = static_cast<std::int8_t>(v.sign);
    });
  }
  r.timings.ms[2] = detail::elapsed_ms(t0);

  t0 = clock::now();
  r.votes_2b = detail::vote_all(set, plane_count, r.decisions, 2, 3, nullptr);
  r.timings.ms[3] = detail::elapsed_ms(t0);
  return r;
}

/// Per-point result of applying patch orientations to the input cloud.
struct OrientedCloud {
  PointCloud cloud;                          // input with final (2B) normals
  std::vector<PointLabel> labels;            // interior / exterior / outside / off_patch
  std::array<std::vector<std::int8_t>, 4> phase_sign;  // per phase: +1 keep, -1 flip, 0 unscored
};

/// Flips each on-patch point normal to agree with its patch's oriented
/// normal. Points off patches or on outside patches keep their input normal.
inline OrientedCloud propagate_to_points(const PointCloud& cloud, const PatchSet& set, const PipelineResult& result) {
  if (!cloud.has_normals()) throw std::invalid_argument("propagate_to_points: cloud has no normals");
  OrientedCloud out;
  out.cloud = cloud;
  out.labels.assign(cloud.size(), PointLabel::off_patch);
  for (auto& v : out.phase_sign) v.assign(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto pid = set.point_patch[i];
    if (pid < 0) continue;
    const Patch& patch = set.patches[static_cast<std::size_t>(pid)];
    const PatchDecision& d = result.decisions[static_cast<std::size_t>(pid)];
    if (d.cls == PatchClass::out) {
      out.labels[i] = PointLabel::outside;
      continue;
    }
    out.labels[i] = d.cls == PatchClass::in ? PointLabel::interior : PointLabel::exterior;
    for (int ph = 0; ph < 4; ++ph) {
      const Vec3 oriented = d.sign[ph] > 0 ? Vec3(patch.normal) : Vec3(-patch.normal);
      out.phase_sign[ph][i] = cloud.normals[i].dot(oriented) < 0.0 ? -1 : 1;
    }
    if (out.phase_sign[3][i] < 0) out.cloud.normals[i] = -cloud.normals[i];
  }
  return out;
}

}  // namespace normorient
