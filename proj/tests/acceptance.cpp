// Acceptance suite: one PASS/FAIL line per criterion, exit status = number
// of failed criteria.

#include "normorient/normorient.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>

using namespace normorient;
namespace fs = std::filesystem;

namespace {

struct SceneRun {
  SceneSpec spec;
  SurfaceModel model;
  SyntheticScan scan;
  PointCloud input;
  PlaneDetection detection;
  PatchSet patches;
  PipelineResult result;
  OrientedCloud oriented;
  std::vector<std::int8_t> gt;
};

// Same stages and defaults as `normorient orient`, in process.
void orient(SceneRun& r, const TraceConfig& cfg, bool warmup) {
  r.detection = detect_planes(r.input, DetectionParams{});
  r.patches = build_patches(r.detection.planes, r.input, kDefaultCellSize);
  if (warmup) run_pipeline(r.patches, r.detection.planes.size(), cfg);
  r.result = run_pipeline(r.patches, r.detection.planes.size(), cfg);
  r.oriented = propagate_to_points(r.input, r.patches, r.result);
  r.gt = ground_truth_signs(r.input, r.scan.scanners);
}

SceneRun run_scene(const std::string& name, const TraceConfig& cfg = {}, bool negate = false, bool warmup = false) {
  SceneRun r;
  r.spec = preset_scene(name);
  r.model = build_building(r.spec.building);
  r.scan = simulate_scan(r.model, r.spec.scanners, r.spec.scan);
  r.input = r.scan.cloud;
  if (negate)
    for (auto& n : r.input.normals) n = -n;
  orient(r, cfg, warmup);
  return r;
}

std::vector<std::uint8_t> mask_where(const SceneRun& r, auto&& pred) {
  std::vector<std::uint8_t> m(r.input.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = pred(i) ? 1 : 0;
  return m;
}

PhaseScore score(const SceneRun& r, int phase, std::span<const std::uint8_t> mask = {}) {
  return score_phase(r.oriented.phase_sign[phase], r.gt, mask);
}

// Non-out patches of one plane disagreeing with the first such patch.
std::size_t consistency_violations(const SceneRun& r, int phase) {
  std::map<std::uint32_t, int> plane_sign;
  std::size_t bad = 0;
  for (const auto& p : r.patches.patches) {
    const auto& d = r.result.decisions[p.id];
    if (d.cls == PatchClass::out) continue;
    if (d.sign[phase] != 1 && d.sign[phase] != -1) ++bad;
    auto [it, fresh] = plane_sign.emplace(p.plane, d.sign[phase]);
    if (!fresh && it->second != d.sign[phase]) ++bad;
  }
  return bad;
}

// Everything the pipeline decides: the points it oriented with their final
// normals, plus the label of every point, as PLY bytes.
std::string decided_output(const SceneRun& r) {
  PointCloud c;
  for (std::size_t i = 0; i < r.input.size(); ++i) {
    const PointLabel l = r.oriented.labels[i];
    if (l != PointLabel::interior && l != PointLabel::exterior) continue;
    c.points.push_back(r.oriented.cloud.points[i]);
    c.normals.push_back(r.oriented.cloud.normals[i]);
  }
  PointCloud labels;
  labels.points = r.input.points;
  for (auto l : r.oriented.labels) labels.colors.push_back(label_color(l));
  return encode_ply(c, CloudFormat::ply_binary_le) + encode_ply(labels, CloudFormat::ply_binary_le);
}

std::string pct(const PhaseScore& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%% (%zu/%zu)", s.percent(), s.correct, s.total);
  return buf;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(NORMORIENT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  std::map<std::string, SceneRun> runs;
  std::size_t violations_1b = 0, violations_2b = 0;
  auto track = [&](const SceneRun& r) {
    violations_1b += consistency_violations(r, 1);
    violations_2b += consistency_violations(r, 3);
  };

  // 1. S1: correctness, classification and phase runtime after one warm-up.
  {
    SceneRun r = run_scene("S1", TraceConfig{}, false, true);
    track(r);
    const PhaseScore s = score(r, 3);
    const std::size_t n = r.patches.patches.size(), in = r.result.count(PatchClass::in);
    const double ms = r.result.timings.total();
    char buf[256];
    std::snprintf(buf, sizeof buf, "S1 2B %s; patches in %zu/%zu (ex %zu, out %zu); phases 1A-2B %.0f ms", pct(s).c_str(),
                  in, n, r.result.count(PatchClass::ex), r.result.count(PatchClass::out), ms);
    report(1, s.percent() >= 99.5 && in == n && ms < 5000.0, buf);
    runs.emplace("S1", std::move(r));
  }

  // 2. S3: correctness and the bounce ablation on the room without a scanner.
  {
    SceneRun r = run_scene("S3");
    track(r);
    const std::int32_t occluded = r.model.room_index(1, 1, 1);
    auto on_room = [&](const SceneRun& x) {
      return mask_where(x, [&](std::size_t i) { return x.model.rects[x.scan.surface[i]].room == occluded; });
    };
    const auto mask8 = on_room(r);
    const PhaseScore s = score(r, 3), sub8 = score(r, 0, mask8);
    TraceConfig one;
    one.bounces = 1;
    one.tau = 0.5;  // b/2, as for b = 8
    SceneRun r1 = r;
    orient(r1, one, false);
    const PhaseScore sub1 = score(r1, 0, on_room(r1));
    // With tau left at 4, one bounce can never reach it and every patch is out.
    one.tau = 4.0;
    SceneRun r1_fixed = r;
    orient(r1_fixed, one, false);
    const std::size_t out_fixed = r1_fixed.result.count(PatchClass::out);
    const double gain = sub8.percent() - sub1.percent();
    char buf[400];
    std::snprintf(buf, sizeof buf,
                  "S3 2B %s; occluded room 1A b=8/tau=4 %s vs b=1/tau=0.5 %s, gain %+.2f pp (b=1/tau=4: %zu/%zu patches out)",
                  pct(s).c_str(), pct(sub8).c_str(), pct(sub1).c_str(), gain, out_fixed, r1_fixed.patches.patches.size());
    report(2, s.percent() >= 95.0 && gain >= 5.0, buf);
    runs.emplace("S3", std::move(r));
  }

  // 3. S4: clutter rejected, facade corrected by phase 2.
  {
    SceneRun r = run_scene("S4");
    track(r);
    std::size_t clutter = 0, clutter_out = 0;
    for (std::size_t i = 0; i < r.input.size(); ++i) {
      if (r.model.rects[r.scan.surface[i]].kind != SurfaceKind::clutter) continue;
      ++clutter;
      clutter_out += r.oriented.labels[i] == PointLabel::outside;
    }
    const auto facade = mask_where(r, [&](std::size_t i) { return r.model.rects[r.scan.surface[i]].kind == SurfaceKind::outer; });
    const PhaseScore s = score(r, 3), f1b = score(r, 1, facade), f2b = score(r, 3, facade);
    const double frac = clutter ? static_cast<double>(clutter_out) / static_cast<double>(clutter) : 0.0;
    char buf[320];
    std::snprintf(buf, sizeof buf, "S4 clutter out %zu/%zu (%.2f%%); 2B %s; facade 1B %s -> 2B %s", clutter_out, clutter,
                  100.0 * frac, pct(s).c_str(), pct(f1b).c_str(), pct(f2b).c_str());
    report(3, clutter > 0 && frac >= 0.9 && s.percent() >= 95.0 && f1b.total > 0 && f2b.percent() >= f1b.percent(), buf);
    runs.emplace("S4", std::move(r));
  }

  // 4. Surface consistency on S1-S4 (S2 is run here for the first time).
  {
    SceneRun r = run_scene("S2");
    track(r);
    runs.emplace("S2", std::move(r));
    char buf[160];
    std::snprintf(buf, sizeof buf, "sign disagreements within a plane on S1-S4: after 1B %zu, after 2B %zu", violations_1b,
                  violations_2b);
    report(4, violations_1b == 0 && violations_2b == 0, buf);
  }

  // 5. Negated input normals.
  {
    bool ok = true;
    std::string detail;
    for (const char* name : {"S1", "S2", "S3", "S4"}) {
      const SceneRun neg = run_scene(name, TraceConfig{}, true);
      const SceneRun& pos = runs.at(name);
      const bool same = decided_output(pos) == decided_output(neg);
      std::size_t passthrough = 0;
      for (auto l : pos.oriented.labels) passthrough += l == PointLabel::outside || l == PointLabel::off_patch;
      ok = ok && same;
      detail += std::string(name) + (same ? " identical" : " DIFFERENT") + " (" + std::to_string(passthrough) +
                " unoriented points pass through); ";
    }
    report(5, ok, detail);
  }

  // 6. Oracles.
  {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 10.0), size(0.1, 1.0);
    std::normal_distribution<double> g;
    auto unit = [&] { return Vec3(g(rng), g(rng), g(rng)).normalized(); };
    std::vector<Quad> quads;
    for (std::uint32_t i = 0; i < 1000; ++i) {
      Vec3 t, b;
      const Vec3 n = unit();
      orthonormal_basis(n, t, b);
      const double s = size(rng);
      quads.push_back({Vec3(u(rng), u(rng), u(rng)), s * t, s * b, n, i});
    }
    const Scene scene(quads);
    std::size_t mismatches = 0, hits = 0;
    for (int k = 0; k < 10000; ++k) {
      const Vec3 o(u(rng), u(rng), u(rng)), d = unit();
      std::optional<std::pair<double, std::uint32_t>> best;
      for (std::uint32_t i = 0; i < quads.size(); ++i) {
        const auto t = intersect_quad(quads[i], o, d, 1e-3);
        if (t && (!best || *t < best->first)) best = std::make_pair(*t, i);
      }
      const auto h = scene.intersect(o, d, 1e-3);
      hits += h.has_value();
      if (h.has_value() != best.has_value() || (h && (h->quad != best->second || h->distance != best->first))) ++mismatches;
    }

    const std::vector<PathSample> e1 = {{{0, 0, 0}, 0}}, e2 = {{{std::exp(1.0) - 1.0, 0}, 1}}, e3 = {{{1, 3}, 2}, {{1, 0}, 1}};
    const SideStats a1 = accumulate_stats(e1), a2 = accumulate_stats(e2), a3 = accumulate_stats(e3);
    const double stats_err = std::max({std::abs(a1.length), std::abs(a1.bounces), std::abs(a2.length - 1.0),
                                       std::abs(a2.bounces - 1.0), std::abs(a3.length - std::log(16.0)),
                                       std::abs(a3.bounces - 1.5)});

    std::size_t table_errors = 0;
    for (int bp = 0; bp <= 8; ++bp)
      for (int bm = 0; bm <= 8; ++bm) {
        const bool op = bp < 4, om = bm < 4;
        const PatchClass want = op && om ? PatchClass::out : op != om ? PatchClass::ex : PatchClass::in;
        table_errors += classify_patch({0, double(bp)}, {0, double(bm)}, 4.0) != want;
      }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "BVH vs linear scan: %zu mismatches over 10000 rays (%zu hits); accumulate_stats max error %.2e; "
                  "classify_patch grid errors %zu/81",
                  mismatches, hits, stats_err, table_errors);
    report(6, mismatches == 0 && stats_err <= 1e-12 && table_errors == 0, buf);
  }

  // 7. Cone sampling.
  {
    const KeyedRng rng(7);
    const Vec3 axis = Vec3::UnitZ();
    std::size_t outside = 0;
    double sum = 0.0;
    const std::uint64_t n = 1000000;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double c = sample_cone(axis, 60.0, rng.uniform2({i})).dot(axis);
      outside += c < 0.5;
      sum += c;
    }
    const double mean = sum / static_cast<double>(n);
    char buf[160];
    std::snprintf(buf, sizeof buf, "10^6 samples: %zu below cos 60; mean <d,axis> %.6f (target 0.75)", outside, mean);
    report(7, outside == 0 && std::abs(mean - 0.75) <= 0.001, buf);
  }

  // 8. CLI determinism across thread counts.
  {
    const fs::path dir = fs::temp_directory_path() / "normorient_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    bool ok = run_cli("synth --scene S4 --output-dir " + d) == 0;
    const std::string common = "orient --input " + d + "/S4.ply --scanners " + d + "/S4.scanners --seed 17";
    ok = ok && run_cli(common + " --threads 1 --output-dir " + d + "/t1") == 0;
    ok = ok && run_cli(common + " --threads 4 --output-dir " + d + "/t4") == 0;
    const bool ply = ok && read_bytes(dir / "t1" / "oriented.ply") == read_bytes(dir / "t4" / "oriented.ply");
    const bool rep = ok && read_bytes(dir / "t1" / "report.json") == read_bytes(dir / "t4" / "report.json");
    fs::remove_all(dir);
    report(8, ok && ply && rep,
           std::string("S4 orient --threads 1 vs 4: oriented.ply ") + (ply ? "identical" : "differs") + ", report.json " +
               (rep ? "identical" : "differs") + (ok ? "" : " (CLI run failed)"));
  }

  // 9. Plane detection on noiseless S2, predicates rechecked from scratch.
  {
    const SceneRun& r = runs.at("S2");
    const DetectionParams params;
    const double cos_alpha = std::cos(params.alpha_deg * std::numbers::pi / 180.0);
    std::size_t bad = 0, inliers = 0;
    for (const auto& p : r.detection.planes)
      for (auto i : p.inliers) {
        ++inliers;
        const double dist = std::abs(p.normal.dot(r.input.points[i]) - p.offset);
        const double c = std::abs(p.normal.dot(r.input.normals[i]));
        bad += dist > params.epsilon || c < cos_alpha;
      }
    const double frac = static_cast<double>(r.detection.assigned_count()) / static_cast<double>(r.input.size());
    char buf[200];
    std::snprintf(buf, sizeof buf, "noiseless S2 (noise %g): %.2f%% assigned to %zu planes; %zu of %zu inliers violate eps/alpha",
                  r.spec.scan.noise, 100.0 * frac, r.detection.planes.size(), bad, inliers);
    report(9, r.spec.scan.noise == 0.0 && frac >= 0.95 && bad == 0, buf);
  }

  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
