#include "normorient/orientation.hpp"
#include "normorient/synthetic_scenes.hpp"
#include "test_util.hpp"

#include <cmath>
#include <map>

using namespace normorient;

namespace {

PathSample path(std::vector<double> lengths, std::uint32_t bounces) { return {std::move(lengths), bounces}; }

struct ModelPatches {
  PointCloud cloud;
  std::vector<Plane> planes;
  std::vector<std::uint32_t> point_rect;
  PatchSet set;
};

// Samples every model rectangle on a regular grid and groups coplanar
// rectangles into one plane, the way plane detection would.
ModelPatches patches_from_model(const SurfaceModel& model, double spacing, double cell) {
  ModelPatches m;
  std::map<std::pair<int, long>, std::uint32_t> plane_of;
  for (std::uint32_t r = 0; r < model.rects.size(); ++r) {
    const Rect& rect = model.rects[r];
    const int axis = dominant_axis(rect.normal);
    const auto key = std::make_pair(axis, std::lround(rect.corner[axis] * 1e6));
    auto it = plane_of.find(key);
    if (it == plane_of.end()) {
      const auto id = static_cast<std::uint32_t>(m.planes.size());
      it = plane_of.emplace(key, id).first;
      m.planes.push_back(Plane::through(rect.normal, rect.corner, id));
    }
    Plane& plane = m.planes[it->second];
    const int na = std::max(1, static_cast<int>(std::floor(rect.e1.norm() / spacing)));
    const int nb = std::max(1, static_cast<int>(std::floor(rect.e2.norm() / spacing)));
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < nb; ++b) {
        plane.inliers.push_back(static_cast<std::uint32_t>(m.cloud.size()));
        m.cloud.points.push_back(rect.corner + (a + 0.5) / na * rect.e1 + (b + 0.5) / nb * rect.e2);
        m.cloud.normals.push_back((a + b) % 2 ? Vec3(rect.normal) : Vec3(-rect.normal));
        m.point_rect.push_back(r);
      }
  }
  m.set = build_patches(m.planes, m.cloud, cell);
  return m;
}

// The model rectangle owning most of a patch's points.
std::uint32_t patch_rect(const ModelPatches& m, const Patch& p) {
  std::map<std::uint32_t, std::size_t> votes;
  for (auto i : p.members) votes[m.point_rect[i]]++;
  return std::max_element(votes.begin(), votes.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
}

Vec3 oriented(const Patch& p, const PatchDecision& d, int phase) {
  return d.sign[phase] > 0 ? Vec3(p.normal) : Vec3(-p.normal);
}

// Every non-out patch of a plane carries the same sign after a vote.
std::size_t consistency_violations(const PatchSet& set, const PipelineResult& r, int phase) {
  std::map<std::uint32_t, int> seen;
  std::size_t bad = 0;
  for (const auto& p : set.patches) {
    const auto& d = r.decisions[p.id];
    if (d.cls == PatchClass::out) continue;
    auto [it, fresh] = seen.emplace(p.plane, d.sign[phase]);
    bad += !fresh && it->second != d.sign[phase];
  }
  return bad;
}

Quad big_quad(double z, const Vec3& normal, std::uint32_t id) {
  return {Vec3(-100, -100, z), Vec3(200, 0, 0), Vec3(0, 200, 0), normal, id};
}

}  // namespace

TEST(AccumulateStats, HandComputedExamples) {
  const std::vector<PathSample> zero = {path({0, 0, 0}, 0), path({0, 0, 0}, 0)};
  auto s = accumulate_stats(zero);
  EXPECT_EQ(s.length, 0.0);
  EXPECT_EQ(s.bounces, 0.0);

  const std::vector<PathSample> one = {path({std::exp(1.0) - 1.0, 0, 0}, 1)};
  s = accumulate_stats(one);
  EXPECT_NEAR(s.length, 1.0, 1e-12);
  EXPECT_NEAR(s.bounces, 1.0, 1e-12);

  const std::vector<PathSample> two = {path({1, 3}, 2), path({1, 0}, 1)};
  s = accumulate_stats(two);
  EXPECT_NEAR(s.length, std::log(2.0) + std::log(4.0) + std::log(2.0), 1e-12);
  EXPECT_NEAR(s.length, 2.772588722239781, 1e-12);
  EXPECT_NEAR(s.bounces, 1.5, 1e-12);

  EXPECT_THROW(accumulate_stats({}), std::invalid_argument);
}

TEST(ClassifyPatch, Examples) {
  EXPECT_EQ(classify_patch({0, 1}, {0, 2}, 4), PatchClass::out);
  EXPECT_EQ(classify_patch({0, 6}, {0, 2}, 4), PatchClass::ex);
  EXPECT_EQ(classify_patch({0, 6}, {0, 5}, 4), PatchClass::in);
}

TEST(ClassifyPatch, ExhaustiveGrid) {
  for (int bp = 0; bp <= 8; ++bp)
    for (int bm = 0; bm <= 8; ++bm) {
      const int open = (bp < 4) + (bm < 4);
      const PatchClass expect = open == 2 ? PatchClass::out : open == 1 ? PatchClass::ex : PatchClass::in;
      EXPECT_EQ(classify_patch({0, double(bp)}, {0, double(bm)}, 4.0), expect) << bp << "," << bm;
    }
}

TEST(OrientPatch, Examples) {
  EXPECT_EQ(orient_patch(PatchClass::ex, {0, 6}, {0, 1}, 4), 1);
  EXPECT_EQ(orient_patch(PatchClass::ex, {0, 1}, {0, 6}, 4), -1);
  EXPECT_EQ(orient_patch(PatchClass::in, {100, 8}, {40, 8}, 4), 1);
  EXPECT_EQ(orient_patch(PatchClass::in, {40, 8}, {100, 8}, 4), -1);
  EXPECT_EQ(orient_patch(PatchClass::in, {70, 8}, {70, 8}, 4), -1);
  EXPECT_THROW(orient_patch(PatchClass::out, {0, 0}, {0, 0}, 4), std::invalid_argument);
}

TEST(VoteSurface, Examples) {
  const std::vector<std::int8_t> keep = {1, 1, -1}, tie = {1, -1}, flip = {-1, -1, -1};
  auto v = vote_surface(3, keep);
  EXPECT_EQ(v.theta, 1);
  EXPECT_EQ(v.sign, 1);
  EXPECT_EQ(v.voters, 3u);
  EXPECT_EQ(v.plane, 3u);
  v = vote_surface(0, tie);
  EXPECT_EQ(v.theta, 0);
  EXPECT_EQ(v.sign, -1);
  v = vote_surface(0, flip);
  EXPECT_EQ(v.theta, -3);
  EXPECT_EQ(v.sign, -1);
  EXPECT_THROW(vote_surface(0, {}), std::invalid_argument);
}

TEST(FacadeCorrect, FrontBackAndEscape) {
  TraceConfig cfg;
  Patch patch;
  patch.id = 0;
  patch.normal = Vec3::UnitZ();
  const std::vector<std::int8_t> signs = {1, 1};

  // Quad above whose normal faces the patch: front faces only.
  const Scene front({big_quad(2.0, -Vec3::UnitZ(), 1)});
  auto v = facade_correct(front, patch, +1, signs, cfg);
  EXPECT_EQ(v.phi, -static_cast<int>(cfg.rays));
  EXPECT_EQ(v.sign, 1);

  const Scene back({big_quad(2.0, Vec3::UnitZ(), 1)});
  v = facade_correct(back, patch, +1, signs, cfg);
  EXPECT_EQ(v.phi, static_cast<int>(cfg.rays));
  EXPECT_EQ(v.sign, -1);

  // The same geometry with the hit patch's sign flipped reads as front faces.
  const std::vector<std::int8_t> flipped = {1, -1};
  v = facade_correct(back, patch, +1, flipped, cfg);
  EXPECT_EQ(v.phi, -static_cast<int>(cfg.rays));
  EXPECT_EQ(v.sign, 1);

  // Nothing on the traced side: every ray escapes and the patch flips.
  const Scene below({big_quad(-2.0, Vec3::UnitZ(), 1)});
  v = facade_correct(below, patch, +1, signs, cfg);
  EXPECT_EQ(v.phi, 0);
  EXPECT_EQ(v.sign, -1);
  v = facade_correct(below, patch, -1, signs, cfg);
  EXPECT_EQ(v.phi, -static_cast<int>(cfg.rays));
  EXPECT_EQ(v.sign, -1);
}

TEST(RunPipeline, SingleLayerRoomIsExteriorAndFacesInward) {
  BuildingSpec b;
  SurfaceModel model = build_building(b);
  std::erase_if(model.rects, [](const Rect& r) { return r.kind != SurfaceKind::inner; });
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  const auto r = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  const Vec3 center = model.rooms[0].interior.center();
  for (const auto& p : m.set.patches) {
    const auto& d = r.decisions[p.id];
    ASSERT_EQ(d.cls, PatchClass::ex);
    for (int ph = 0; ph < 4; ++ph) EXPECT_GT(oriented(p, d, ph).dot(center - p.center), 0.0) << ph;
  }
}

TEST(RunPipeline, DoubleSlabRoom) {
  const SurfaceModel model = build_building(BuildingSpec{});
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  const auto r = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  const Vec3 center = model.rooms[0].interior.center();
  std::size_t inner = 0, outer = 0;
  for (const auto& p : m.set.patches) {
    const auto& d = r.decisions[p.id];
    const Rect& rect = model.rects[patch_rect(m, p)];
    if (rect.kind == SurfaceKind::inner) {
      ++inner;
      EXPECT_EQ(d.cls, PatchClass::in);
      for (int ph = 0; ph < 4; ++ph) EXPECT_GT(oriented(p, d, ph).dot(center - p.center), 0.0);
    } else {
      ++outer;
      EXPECT_EQ(d.cls, PatchClass::ex);
      // Phase 1 turns facade patches toward the closed side; phase 2 corrects them.
      EXPECT_LT(oriented(p, d, 1).dot(rect.normal), 0.0);
      EXPECT_GT(oriented(p, d, 3).dot(rect.normal), 0.0);
    }
  }
  EXPECT_GT(inner, 0u);
  EXPECT_GT(outer, 0u);
  EXPECT_EQ(consistency_violations(m.set, r, 1), 0u);
  EXPECT_EQ(consistency_violations(m.set, r, 3), 0u);
}

TEST(RunPipeline, SharedWallFacesNearerRoom) {
  BuildingSpec b;
  b.cols = 2;
  Opening door;
  door.line = 1;
  door.a0 = 1.5;
  door.a1 = 2.5;
  door.z1 = 2.1;
  b.openings.push_back(door);
  const SurfaceModel model = build_building(b);
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  const auto r = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  std::size_t shared = 0;
  for (const auto& p : m.set.patches) {
    const Rect& rect = model.rects[patch_rect(m, p)];
    if (rect.kind != SurfaceKind::inner || dominant_axis(rect.normal) != 0) continue;
    if (std::abs(p.center.x() - 5.0) > 0.2) continue;
    ++shared;
    const auto& d = r.decisions[p.id];
    EXPECT_EQ(d.cls, PatchClass::in);
    const Vec3 nearer = model.rooms[static_cast<std::size_t>(rect.room)].interior.center();
    EXPECT_GT(oriented(p, d, 3).dot(nearer - p.center), 0.0);
  }
  EXPECT_GT(shared, 20u);
  EXPECT_EQ(consistency_violations(m.set, r, 1), 0u);
  EXPECT_EQ(consistency_violations(m.set, r, 3), 0u);
}

TEST(RunPipeline, FloatingClusterIsOutAndDropped) {
  BuildingSpec b;
  b.clutter.push_back({Vec3(40, 40, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)});
  const SurfaceModel model = build_building(b);
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  const auto r = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  std::size_t out = 0;
  std::uint32_t clutter_plane = 0;
  for (const auto& p : m.set.patches) {
    if (model.rects[patch_rect(m, p)].kind != SurfaceKind::clutter) continue;
    const auto& d = r.decisions[p.id];
    EXPECT_EQ(d.cls, PatchClass::out);
    EXPECT_EQ(d.plus.bounces, 0.0);
    EXPECT_EQ(d.minus.bounces, 0.0);
    EXPECT_EQ(d.sign, (std::array<std::int8_t, 4>{}));
    clutter_plane = p.plane;
    ++out;
  }
  EXPECT_EQ(out, 9u);
  EXPECT_EQ(r.count(PatchClass::out), out);
  EXPECT_EQ(r.dropped_planes, std::vector<std::uint32_t>{clutter_plane});
}

TEST(RunPipeline, InvariantUnderReferenceNormalSign) {
  BuildingSpec b;
  b.cols = 2;
  const SurfaceModel model = build_building(b);
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  PatchSet negated = m.set;
  for (auto& p : negated.patches) p.normal = -p.normal;
  const auto a = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  const auto c = run_pipeline(negated, m.planes.size(), TraceConfig{});
  for (const auto& p : m.set.patches) {
    const auto& da = a.decisions[p.id];
    const auto& dc = c.decisions[p.id];
    EXPECT_EQ(da.cls, dc.cls);
    EXPECT_EQ(da.plus.length, dc.minus.length);
    EXPECT_EQ(da.plus.bounces, dc.minus.bounces);
    for (int ph = 0; ph < 4; ++ph) EXPECT_EQ(da.sign[ph], -dc.sign[ph]);
  }
}

TEST(RunPipeline, IndependentOfThreadCount) {
  const SurfaceModel model = build_building(BuildingSpec{});
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  set_thread_count(1);
  const auto a = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  set_thread_count(4);
  const auto b = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  set_thread_count(0);
  for (std::size_t i = 0; i < a.decisions.size(); ++i) {
    EXPECT_EQ(a.decisions[i].sign, b.decisions[i].sign);
    EXPECT_EQ(a.decisions[i].plus.length, b.decisions[i].plus.length);
    EXPECT_EQ(a.decisions[i].phi, b.decisions[i].phi);
  }
}

TEST(PropagateToPoints, FlipsToPatchOrientation) {
  PointCloud c;
  c.points = {Vec3(0.1, 0.1, 0), Vec3(0.35, 0.1, 0), Vec3(5, 5, 5)};
  c.normals = {Vec3::UnitZ(), -Vec3::UnitZ(), Vec3::UnitX()};
  Plane plane = Plane::through(Vec3::UnitZ(), Vec3::Zero());
  plane.inliers = {0, 1};
  const PatchSet set = build_patches(std::vector<Plane>{plane}, c, 0.2);
  ASSERT_EQ(set.patches.size(), 2u);
  PipelineResult r;
  r.decisions.resize(2);
  for (auto& d : r.decisions) {
    d.cls = PatchClass::in;
    d.sign = {1, 1, -1, -1};
  }
  const auto out = propagate_to_points(c, set, r);
  EXPECT_EQ(out.cloud.normals[0], -Vec3::UnitZ());
  EXPECT_EQ(out.cloud.normals[1], -Vec3::UnitZ());
  EXPECT_EQ(out.cloud.normals[2], Vec3::UnitX());
  EXPECT_EQ(out.phase_sign[0][0], 1);
  EXPECT_EQ(out.phase_sign[0][1], -1);
  EXPECT_EQ(out.phase_sign[3][0], -1);
  EXPECT_EQ(out.phase_sign[3][1], 1);
  EXPECT_EQ(out.phase_sign[3][2], 0);
  EXPECT_EQ(out.labels[0], PointLabel::interior);
  EXPECT_EQ(out.labels[2], PointLabel::off_patch);

  r.decisions[1].cls = PatchClass::out;
  r.decisions[1].sign = {};
  const auto out2 = propagate_to_points(c, set, r);
  EXPECT_EQ(out2.labels[1], PointLabel::outside);
  EXPECT_EQ(out2.cloud.normals[1], -Vec3::UnitZ());
  EXPECT_EQ(out2.phase_sign[3][1], 0);
}

TEST(PropagateToPoints, FullSceneMatchesFinalPatchNormals) {
  const SurfaceModel model = build_building(BuildingSpec{});
  const ModelPatches m = patches_from_model(model, 0.1, 0.4);
  const auto r = run_pipeline(m.set, m.planes.size(), TraceConfig{});
  const auto out = propagate_to_points(m.cloud, m.set, r);
  for (std::size_t i = 0; i < m.cloud.size(); ++i) {
    const auto pid = m.set.point_patch[i];
    ASSERT_GE(pid, 0);
    const Patch& p = m.set.patches[static_cast<std::size_t>(pid)];
    EXPECT_GT(out.cloud.normals[i].dot(oriented(p, r.decisions[p.id], 3)), 0.0);
  }
}
