#pragma once

// Parametric axis-aligned buildings and a simulated terrestrial scanner.
//
// Rooms sit on a grid of cells (i along x, j along y, s = story). Walls,
// floors and ceilings are slabs of thickness t centered on the grid lines,
// so every slab has two faces. A face that looks into a room is an inner
// face of that room; a slab side with no room behind it is an outer face.
// Openings are cut through both faces of a wall and lined with four reveal
// rectangles so a ray can never enter the slab interior.

#include "normorient/parallel.hpp"
#include "normorient/pointcloud_io.hpp"
#include "normorient/random.hpp"
#include "normorient/ray_engine.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace normorient {

class SceneSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SurfaceKind : std::uint8_t { inner, outer, reveal, clutter };

inline std::string_view to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::inner: return "inner";
    case SurfaceKind::outer: return "outer";
    case SurfaceKind::reveal: return "reveal";
    case SurfaceKind::clutter: return "clutter";
  }
  return "?";
}

enum class OpeningKind : std::uint8_t { door, window };

/// Hole in the wall on grid line `line` of the given axis ('x': the wall
/// x = line * room_x, 'y': y = line * room_y). [a0, a1] is the world
/// coordinate along the wall, [z0, z1] the height above the room's floor.
struct Opening {
  OpeningKind kind = OpeningKind::door;
  std::uint32_t story = 0;
  char axis = 'x';
  std::uint32_t line = 0;
  double a0 = 0, a1 = 0, z0 = 0, z1 = 0;
};

struct ClutterRect {
  Vec3 corner = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitZ();
};

struct BuildingSpec {
  std::uint32_t stories = 1, rows = 1, cols = 1;  // rows along y, cols along x
  double room_x = 5.0, room_y = 4.0;
  double story_height = 3.0;  // floor-to-floor
  double wall_thickness = 0.2;
  std::vector<std::array<std::uint32_t, 3>> missing;  // (i, j, s) cells without a room
  std::vector<Opening> openings;
  std::vector<ClutterRect> clutter;

  bool has_room(long i, long j, long s) const {
    if (i < 0 || j < 0 || s < 0 || i >= cols || j >= rows || s >= stories) return false;
    for (const auto& m : missing) {
      if (m[0] == i && m[1] == j && m[2] == s) return false;
    }
    return true;
  }
  double interior_height() const { return story_height - wall_thickness; }

  void validate() const {
    if (stories < 1 || rows < 1 || cols < 1) throw SceneSpecError("stories, rows and cols must be >= 1");
    if (!(wall_thickness > 0.0)) throw SceneSpecError("wall_thickness must be > 0");
    if (!(room_x > wall_thickness) || !(room_y > wall_thickness) || !(story_height > wall_thickness)) {
      throw SceneSpecError("room_x, room_y and story_height must exceed wall_thickness");
    }
    for (const auto& m : missing) {
      if (m[0] >= cols || m[1] >= rows || m[2] >= stories) throw SceneSpecError("missing cell outside the grid");
    }
  }
};

struct Rect {
  Vec3 corner = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();  // into the room, out of the building for outer faces
  SurfaceKind kind = SurfaceKind::inner;
  std::int32_t room = -1;   // owning room, -1 for clutter
  std::uint32_t face = 0;   // rectangles cut from the same face share this id
};

struct Room {
  std::uint32_t i = 0, j = 0, s = 0;
  Aabb interior;
};

struct SurfaceModel {
  BuildingSpec spec;
  std::vector<Rect> rects;
  std::vector<Room> rooms;

  std::int32_t room_index(long i, long j, long s) const {
    for (std::size_t r = 0; r < rooms.size(); ++r) {
      if (rooms[r].i == i && rooms[r].j == j && rooms[r].s == s) return static_cast<std::int32_t>(r);
    }
    return -1;
  }
  std::size_t count(SurfaceKind k) const {
    return static_cast<std::size_t>(std::count_if(rects.begin(), rects.end(), [&](const Rect& r) { return r.kind == k; }));
  }
};

namespace detail {

struct Box2 {
  double u0, u1, v0, v1;
};

/// Rectangle minus non-overlapping holes, as vertical strips merged where
/// neighbors have identical v-intervals.
inline std::vector<Box2> subtract_holes(const Box2& r, const std::vector<Box2>& holes) {
  if (holes.empty()) return {r};
  std::vector<double> us = {r.u0, r.u1};
  for (const auto& h : holes) {
    us.push_back(std::clamp(h.u0, r.u0, r.u1));
    us.push_back(std::clamp(h.u1, r.u0, r.u1));
  }
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());
  std::vector<Box2> out;
  std::vector<std::pair<double, double>> prev;
  std::vector<std::size_t> prev_idx;
  for (std::size_t k = 0; k + 1 < us.size(); ++k) {
    const double ua = us[k], ub = us[k + 1];
    std::vector<std::pair<double, double>> cut;
    for (const auto& h : holes) {
      if (h.u0 <= ua && h.u1 >= ub) cut.emplace_back(std::max(h.v0, r.v0), std::min(h.v1, r.v1));
    }
    std::sort(cut.begin(), cut.end());
    std::vector<std::pair<double, double>> keep;
    double v = r.v0;
    for (const auto& [c0, c1] : cut) {
      if (c0 > v) keep.emplace_back(v, c0);
      v = std::max(v, c1);
    }
    if (v < r.v1) keep.emplace_back(v, r.v1);
    if (keep == prev) {
      for (auto idx : prev_idx) out[idx].u1 = ub;
      continue;
    }
    prev = keep;
    prev_idx.clear();
    for (const auto& [k0, k1] : keep) {
      prev_idx.push_back(out.size());
      out.push_back({ua, ub, k0, k1});
    }
  }
  return out;
}

/// In-plane axes for a face perpendicular to `axis`: x -> (y, z),
/// y -> (x, z), z -> (x, y).
inline std::pair<int, int> face_axes(int axis) {
  if (axis == 0) return {1, 2};
  if (axis == 1) return {0, 2};
  return {0, 1};
}

class ModelBuilder {
 public:
  explicit ModelBuilder(SurfaceModel& m) : m_(m) {}

  void face(int axis, double coord, int normal_sign, Box2 box, const std::vector<Box2>& holes, SurfaceKind kind,
            std::int32_t room) {
    const auto [ua, va] = face_axes(axis);
    const std::uint32_t id = next_face_++;
    for (const Box2& b : subtract_holes(box, holes)) {
      Rect r;
      r.corner[axis] = coord;
      r.corner[ua] = b.u0;
      r.corner[va] = b.v0;
      r.e1 = Vec3::Zero();
      r.e2 = Vec3::Zero();
      r.e1[ua] = b.u1 - b.u0;
      r.e2[va] = b.v1 - b.v0;
      r.normal = Vec3::Zero();
      r.normal[axis] = normal_sign;
      r.kind = kind;
      r.room = room;
      r.face = id;
      m_.rects.push_back(r);
    }
  }

  void rect(const Vec3& corner, const Vec3& e1, const Vec3& e2, const Vec3& normal, SurfaceKind kind,
            std::int32_t room) {
    m_.rects.push_back({corner, e1, e2, normal, kind, room, next_face_++});
  }

 private:
  SurfaceModel& m_;
  std::uint32_t next_face_ = 0;
};

}  // namespace detail

inline SurfaceModel build_building(const BuildingSpec& spec) {
  spec.validate();
  SurfaceModel model;
  model.spec = spec;
  const double t = spec.wall_thickness, h = t / 2.0;
  const std::array<double, 3> pitch = {spec.room_x, spec.room_y, spec.story_height};
  const std::array<long, 3> dims = {spec.cols, spec.rows, spec.stories};

  for (std::uint32_t s = 0; s < spec.stories; ++s) {
    for (std::uint32_t j = 0; j < spec.rows; ++j) {
      for (std::uint32_t i = 0; i < spec.cols; ++i) {
        if (!spec.has_room(i, j, s)) continue;
        Room r{i, j, s, {}};
        r.interior.extend(Vec3(i * spec.room_x + h, j * spec.room_y + h, s * spec.story_height + h));
        r.interior.extend(Vec3((i + 1) * spec.room_x - h, (j + 1) * spec.room_y - h, (s + 1) * spec.story_height - h));
        model.rooms.push_back(r);
      }
    }
  }

  // Openings grouped per wall (story, axis, line), validated against the wall.
  std::map<std::tuple<std::uint32_t, int, std::uint32_t>, std::vector<detail::Box2>> holes;
  for (std::size_t k = 0; k < spec.openings.size(); ++k) {
    const Opening& o = spec.openings[k];
    const std::string tag = "opening " + std::to_string(k) + ": ";
    if (o.axis != 'x' && o.axis != 'y') throw SceneSpecError(tag + "axis must be x or y");
    const int axis = o.axis == 'x' ? 0 : 1;
    const int along = axis == 0 ? 1 : 0;
    if (o.story >= spec.stories || o.line > static_cast<std::uint32_t>(dims[axis])) {
      throw SceneSpecError(tag + "wall outside the grid");
    }
    if (!(o.a0 < o.a1) || !(o.z0 < o.z1)) throw SceneSpecError(tag + "empty rectangle");
    const long cell = static_cast<long>(std::floor(o.a0 / pitch[along]));
    const double lo = cell * pitch[along] + h, hi = (cell + 1) * pitch[along] - h;
    if (o.a0 < lo || o.a1 > hi || o.z0 < 0.0 || o.z1 > spec.interior_height()) {
      throw SceneSpecError(tag + "rectangle exceeds the wall extent");
    }
    std::array<long, 3> a{}, b{};
    a[axis] = static_cast<long>(o.line) - 1;
    b[axis] = o.line;
    a[along] = b[along] = cell;
    a[2] = b[2] = o.story;
    if (!spec.has_room(a[0], a[1], a[2]) && !spec.has_room(b[0], b[1], b[2])) {
      throw SceneSpecError(tag + "no wall at this position");
    }
    const double zb = o.story * spec.story_height + h;
    const detail::Box2 box{o.a0, o.a1, zb + o.z0, zb + o.z1};
    auto& list = holes[{o.story, axis, o.line}];
    for (const auto& other : list) {
      if (box.u0 < other.u1 && other.u0 < box.u1 && box.v0 < other.v1 && other.v0 < box.v1) {
        throw SceneSpecError(tag + "overlaps another opening on the same wall");
      }
    }
    list.push_back(box);
  }

  detail::ModelBuilder builder(model);

  // Every slab: `axis` is its normal direction, `line` its grid line, and
  // (c0, c1) the cell coordinates along the two in-plane axes.
  for (int axis = 0; axis < 3; ++axis) {
    const auto [ua, va] = detail::face_axes(axis);
    for (long line = 0; line <= dims[axis]; ++line) {
      for (long c1 = 0; c1 < dims[va]; ++c1) {
        for (long c0 = 0; c0 < dims[ua]; ++c0) {
          auto cell = [&](long along_axis, long d0, long d1) {
            std::array<long, 3> c{};
            c[axis] = along_axis;
            c[ua] = c0 + d0;
            c[va] = c1 + d1;
            return c;
          };
          auto room_at = [&](const std::array<long, 3>& c) { return model.room_index(c[0], c[1], c[2]); };
          const std::int32_t below = room_at(cell(line - 1, 0, 0));
          const std::int32_t above = room_at(cell(line, 0, 0));
          if (below < 0 && above < 0) continue;
          const double g = line * pitch[axis];
          std::vector<detail::Box2> hole_list;
          if (axis < 2) {
            auto it = holes.find({static_cast<std::uint32_t>(c1), axis, static_cast<std::uint32_t>(line)});
            if (it != holes.end()) {
              for (const auto& bx : it->second) {
                if (bx.u0 >= c0 * pitch[ua] && bx.u1 <= (c0 + 1) * pitch[ua]) hole_list.push_back(bx);
              }
            }
          }
          const detail::Box2 inner{c0 * pitch[ua] + h, (c0 + 1) * pitch[ua] - h, c1 * pitch[va] + h,
                                   (c1 + 1) * pitch[va] - h};

          // Outer faces run cell edge to cell edge, extended by h where the
          // same outer face does not continue into the neighboring cell.
          auto outer_box = [&](bool room_is_above) {
            auto continues = [&](long d0, long d1) {
              const bool there = room_at(cell(room_is_above ? line : line - 1, d0, d1)) >= 0;
              const bool opposite = room_at(cell(room_is_above ? line - 1 : line, d0, d1)) >= 0;
              return there && !opposite;
            };
            detail::Box2 b{c0 * pitch[ua], (c0 + 1) * pitch[ua], c1 * pitch[va], (c1 + 1) * pitch[va]};
            if (!continues(-1, 0)) b.u0 -= h;
            if (!continues(1, 0)) b.u1 += h;
            if (!continues(0, -1)) b.v0 -= h;
            if (!continues(0, 1)) b.v1 += h;
            return b;
          };

          // Face at g - h looks toward -axis; face at g + h toward +axis.
          if (below >= 0) {
            builder.face(axis, g - h, -1, inner, hole_list, SurfaceKind::inner, below);
          } else {
            builder.face(axis, g - h, -1, outer_box(true), hole_list, SurfaceKind::outer, above);
          }
          if (above >= 0) {
            builder.face(axis, g + h, 1, inner, hole_list, SurfaceKind::inner, above);
          } else {
            builder.face(axis, g + h, 1, outer_box(false), hole_list, SurfaceKind::outer, below);
          }

          // Reveals line the opening through the slab, normals pointing into the hole.
          for (const auto& o : hole_list) {
            const std::int32_t owner = below >= 0 ? below : above;
            Vec3 base = Vec3::Zero();
            base[axis] = g - h;
            Vec3 depth = Vec3::Zero();
            depth[axis] = t;
            auto at = [&](double u, double v) {
              Vec3 p = base;
              p[ua] = u;
              p[va] = v;
              return p;
            };
            Vec3 du = Vec3::Zero(), dv = Vec3::Zero(), nu = Vec3::Zero(), nv = Vec3::Zero();
            du[ua] = o.u1 - o.u0;
            dv[va] = o.v1 - o.v0;
            nu[ua] = 1.0;
            nv[va] = 1.0;
            builder.rect(at(o.u0, o.v0), depth, dv, nu, SurfaceKind::reveal, owner);
            builder.rect(at(o.u1, o.v0), depth, dv, -nu, SurfaceKind::reveal, owner);
            builder.rect(at(o.u0, o.v0), depth, du, nv, SurfaceKind::reveal, owner);
            builder.rect(at(o.u0, o.v1), depth, du, -nv, SurfaceKind::reveal, owner);
          }
        }
      }
    }
  }

  const Vec3 center(spec.cols * spec.room_x / 2.0, spec.rows * spec.room_y / 2.0, spec.stories * spec.story_height / 2.0);
  for (std::size_t k = 0; k < spec.clutter.size(); ++k) {
    const ClutterRect& c = spec.clutter[k];
    Vec3 n = c.e1.cross(c.e2);
    if (!(n.norm() > 0.0)) throw SceneSpecError("clutter " + std::to_string(k) + ": degenerate rectangle");
    n.normalize();
    if (n.dot(c.corner + 0.5 * (c.e1 + c.e2) - center) < 0.0) n = -n;
    builder.rect(c.corner, c.e1, c.e2, n, SurfaceKind::clutter, -1);
  }
  return model;
}

struct ScanParams {
  double angular_step = 1.0;  // degrees
  double noise = 0.0;         // sigma of the perpendicular Gaussian offset, meters
  std::uint64_t seed = 1;
  bool scramble_signs = true; // randomize the sign of the written normals

  void validate() const {
    if (!(angular_step > 0.0 && angular_step <= 90.0)) throw SceneSpecError("angular_step must be in (0, 90]");
    if (!(noise >= 0.0)) throw SceneSpecError("noise must be >= 0");
  }
};

struct SyntheticScan {
  PointCloud cloud;                   // points, (sign-scrambled) normals, scan ids
  ScannerMetadata scanners;
  std::vector<std::uint32_t> surface; // model rectangle per point
  std::vector<Vec3> true_normals;     // facing the scanner that saw the point
};

/// Scanners must not sit inside a slab.
inline void check_scanner(const SurfaceModel& model, const Vec3& p, std::size_t index) {
  const double h = model.spec.wall_thickness / 2.0;
  for (const Room& r : model.rooms) {
    const Vec3 lo = r.interior.lo, hi = r.interior.hi;
    if ((p.array() > lo.array()).all() && (p.array() < hi.array()).all()) return;
  }
  for (const Room& r : model.rooms) {
    const Vec3 lo = r.interior.lo.array() - h;
    const Vec3 hi = r.interior.hi.array() + h;
    if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) {
      throw SceneSpecError("scanner " + std::to_string(index) + " is embedded in a wall slab");
    }
  }
}

inline SyntheticScan simulate_scan(const SurfaceModel& model, const std::vector<Vec3>& scanners, const ScanParams& params) {
  params.validate();
  if (scanners.empty()) throw SceneSpecError("at least one scanner is required");
  for (std::size_t k = 0; k < scanners.size(); ++k) check_scanner(model, scanners[k], k);

  std::vector<Quad> quads;
  quads.reserve(model.rects.size());
  for (std::uint32_t r = 0; r < model.rects.size(); ++r) {
    const Rect& rc = model.rects[r];
    quads.push_back({rc.corner, rc.e1, rc.e2, rc.normal, r});
  }
  const Scene scene(std::move(quads));

  const auto n_el = static_cast<std::uint32_t>(std::lround(180.0 / params.angular_step));
  const auto n_az = static_cast<std::uint32_t>(std::lround(360.0 / params.angular_step));
  struct Sample {
    Vec3 point, normal, truth;
    std::uint32_t surface;
  };
  const std::size_t rows = scanners.size() * n_el;
  std::vector<std::vector<Sample>> per_row(rows);
  const KeyedRng rng(params.seed);

  parallel_for(rows, [&](std::size_t row) {
    const std::uint32_t sc = static_cast<std::uint32_t>(row / n_el);
    const std::uint32_t e = static_cast<std::uint32_t>(row % n_el);
    const Vec3& o = scanners[sc];
    const double el = deg_to_rad(-90.0 + (e + 0.5) * 180.0 / n_el);
    for (std::uint32_t a = 0; a < n_az; ++a) {
      const double az = deg_to_rad(a * 360.0 / n_az);
      const Vec3 d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      auto hit = scene.intersect(o, d, 0.0);
      if (!hit) continue;
      const Rect& rc = model.rects[hit->id];
      const std::uint64_t ray = static_cast<std::uint64_t>(e) * n_az + a;
      const Vec3 truth = rc.normal.dot(o - hit->point) >= 0.0 ? Vec3(rc.normal) : Vec3(-rc.normal);
      Vec3 p = hit->point;
      if (params.noise > 0.0) {
        const auto [u1, u2] = rng.uniform2({4, sc, ray});
        const double g = std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * kPi * u2);
        p += params.noise * g * rc.normal;
      }
      Vec3 n = truth;
      if (params.scramble_signs && (rng.hash({5, sc, ray}) & 1u)) n = -n;
      per_row[row].push_back({p, n, truth, hit->id});
    }
  });

  SyntheticScan out;
  for (std::uint32_t k = 0; k < scanners.size(); ++k) out.scanners.positions[k] = scanners[k];
  std::size_t total = 0;
  for (const auto& r : per_row) total += r.size();
  out.cloud.points.reserve(total);
  out.cloud.normals.reserve(total);
  out.cloud.scan_ids.reserve(total);
  for (std::size_t row = 0; row < rows; ++row) {
    for (const Sample& s : per_row[row]) {
      out.cloud.points.push_back(s.point);
      out.cloud.normals.push_back(s.normal);
      out.cloud.scan_ids.push_back(static_cast<std::uint32_t>(row / n_el));
      out.surface.push_back(s.surface);
      out.true_normals.push_back(s.truth);
    }
  }
  return out;
}

/// A complete scene: building, scanner placement and scan settings.
struct SceneSpec {
  std::string name;
  BuildingSpec building;
  std::vector<Vec3> scanners;
  ScanParams scan;
};

namespace detail {

inline double spec_number(const std::string& key, std::string_view tok) {
  auto v = parse_double(tok);
  if (!v) throw SceneSpecError("key '" + key + "': '" + std::string(tok) + "' is not a number");
  return *v;
}

inline std::uint32_t spec_count(const std::string& key, std::string_view tok) {
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw SceneSpecError("key '" + key + "': '" + std::string(tok) + "' is not a non-negative integer");
  }
  return v;
}

inline void expect_arity(const std::string& key, const std::vector<std::string_view>& tok, std::size_t n) {
  if (tok.size() != n) {
    throw SceneSpecError("key '" + key + "': expected " + std::to_string(n) + " values, got " +
                         std::to_string(tok.size()));
  }
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

/// Plain "key = value" scene description. Repeatable keys: missing,
/// door, window, clutter, scanner. Unknown keys and malformed values are
/// errors that name the key.
inline SceneSpec parse_scene_spec(std::string_view text) {
  SceneSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw SceneSpecError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    const auto tok = detail::split_ws(value);
    BuildingSpec& b = spec.building;
    auto one = [&] {
      detail::expect_arity(key, tok, 1);
      return tok[0];
    };
    if (key == "name") {
      spec.name = value;
    } else if (key == "stories") {
      b.stories = detail::spec_count(key, one());
    } else if (key == "rows") {
      b.rows = detail::spec_count(key, one());
    } else if (key == "cols") {
      b.cols = detail::spec_count(key, one());
    } else if (key == "room_x") {
      b.room_x = detail::spec_number(key, one());
    } else if (key == "room_y") {
      b.room_y = detail::spec_number(key, one());
    } else if (key == "story_height") {
      b.story_height = detail::spec_number(key, one());
    } else if (key == "wall_thickness") {
      b.wall_thickness = detail::spec_number(key, one());
    } else if (key == "missing") {
      detail::expect_arity(key, tok, 3);
      b.missing.push_back({detail::spec_count(key, tok[0]), detail::spec_count(key, tok[1]), detail::spec_count(key, tok[2])});
    } else if (key == "door" || key == "window") {
      detail::expect_arity(key, tok, 7);
      Opening o;
      o.kind = key == "door" ? OpeningKind::door : OpeningKind::window;
      o.story = detail::spec_count(key, tok[0]);
      if (tok[1] != "x" && tok[1] != "y") throw SceneSpecError("key '" + key + "': axis must be x or y");
      o.axis = tok[1][0];
      o.line = detail::spec_count(key, tok[2]);
      o.a0 = detail::spec_number(key, tok[3]);
      o.a1 = detail::spec_number(key, tok[4]);
      o.z0 = detail::spec_number(key, tok[5]);
      o.z1 = detail::spec_number(key, tok[6]);
      b.openings.push_back(o);
    } else if (key == "clutter") {
      detail::expect_arity(key, tok, 9);
      ClutterRect c;
      for (int k = 0; k < 3; ++k) {
        c.corner[k] = detail::spec_number(key, tok[k]);
        c.e1[k] = detail::spec_number(key, tok[3 + k]);
        c.e2[k] = detail::spec_number(key, tok[6 + k]);
      }
      b.clutter.push_back(c);
    } else if (key == "scanner") {
      detail::expect_arity(key, tok, 3);
      spec.scanners.emplace_back(detail::spec_number(key, tok[0]), detail::spec_number(key, tok[1]),
                                 detail::spec_number(key, tok[2]));
    } else if (key == "angular_step") {
      spec.scan.angular_step = detail::spec_number(key, one());
    } else if (key == "noise") {
      spec.scan.noise = detail::spec_number(key, one());
    } else if (key == "seed") {
      spec.scan.seed = detail::spec_count(key, one());
    } else {
      throw SceneSpecError("unknown key '" + key + "' on line " + std::to_string(lineno));
    }
  }
  try {
    spec.building.validate();
    spec.scan.validate();
  } catch (const SceneSpecError& e) {
    throw SceneSpecError(std::string("invalid scene: ") + e.what());
  }
  if (spec.scanners.empty()) throw SceneSpecError("key 'scanner': at least one scanner is required");
  return spec;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  try {
    return parse_scene_spec(detail::read_file(path));
  } catch (const SceneSpecError& e) {
    throw SceneSpecError(path.string() + ": " + e.what());
  }
}

inline std::string format_scene_spec(const SceneSpec& spec) {
  std::string out;
  auto num = [&](double v) { detail::append_double_text(out, v); };
  auto kv = [&](std::string_view key) {
    out += key;
    out += " =";
  };
  auto sp_num = [&](double v) {
    out += ' ';
    num(v);
  };
  const BuildingSpec& b = spec.building;
  if (!spec.name.empty()) out += "name = " + spec.name + "\n";
  out += "stories = " + std::to_string(b.stories) + "\n";
  out += "rows = " + std::to_string(b.rows) + "\n";
  out += "cols = " + std::to_string(b.cols) + "\n";
  kv("room_x"); sp_num(b.room_x); out += '\n';
  kv("room_y"); sp_num(b.room_y); out += '\n';
  kv("story_height"); sp_num(b.story_height); out += '\n';
  kv("wall_thickness"); sp_num(b.wall_thickness); out += '\n';
  for (const auto& m : b.missing) {
    out += "missing = " + std::to_string(m[0]) + ' ' + std::to_string(m[1]) + ' ' + std::to_string(m[2]) + '\n';
  }
  for (const auto& o : b.openings) {
    out += o.kind == OpeningKind::door ? "door = " : "window = ";
    out += std::to_string(o.story) + ' ' + o.axis + ' ' + std::to_string(o.line);
    for (double v : {o.a0, o.a1, o.z0, o.z1}) sp_num(v);
    out += '\n';
  }
  for (const auto& c : b.clutter) {
    kv("clutter");
    for (const Vec3* v : {&c.corner, &c.e1, &c.e2}) {
      for (int k = 0; k < 3; ++k) sp_num((*v)[k]);
    }
    out += '\n';
  }
  for (const auto& s : spec.scanners) {
    kv("scanner");
    for (int k = 0; k < 3; ++k) sp_num(s[k]);
    out += '\n';
  }
  kv("angular_step"); sp_num(spec.scan.angular_step); out += '\n';
  kv("noise"); sp_num(spec.scan.noise); out += '\n';
  out += "seed = " + std::to_string(spec.scan.seed) + "\n";
  return out;
}

/// Built-in scene battery S1..S4 (case-insensitive).
inline SceneSpec preset_scene(std::string_view name) {
  std::string n(name);
  for (auto& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  SceneSpec s;
  s.name = n;
  BuildingSpec& b = s.building;
  if (n == "S1") {
    // Closed single room.
    s.scanners = {{2.3, 1.8, 1.6}};
    s.scan = {0.8, 0.003, 11, true};
  } else if (n == "S2") {
    // Two rooms sharing a wall with a door.
    b.cols = 2;
    b.openings.push_back({OpeningKind::door, 0, 'x', 1, 1.5, 2.5, 0.0, 2.1});
    s.scanners = {{2.3, 1.8, 1.6}, {7.4, 2.2, 1.5}};
    s.scan = {1.0, 0.0, 12, true};
  } else if (n == "S3") {
    // Two stories of 2x2 rooms; the upper room (1, 1) has no scanner and
    // is only seen through its doors.
    b.stories = 2;
    b.rows = 2;
    b.cols = 2;
    for (std::uint32_t st = 0; st < 2; ++st) {
      b.openings.push_back({OpeningKind::door, st, 'x', 1, 1.5, 2.5, 0.0, 2.1});
      b.openings.push_back({OpeningKind::door, st, 'x', 1, 5.5, 6.5, 0.0, 2.1});
      b.openings.push_back({OpeningKind::door, st, 'y', 1, 2.0, 3.0, 0.0, 2.1});
      b.openings.push_back({OpeningKind::door, st, 'y', 1, 7.0, 8.0, 0.0, 2.1});
    }
    s.scanners = {{2.3, 1.8, 1.6}, {7.4, 2.2, 1.5}, {2.6, 6.1, 1.7}, {7.7, 5.8, 1.4},
                  {2.4, 1.9, 4.6}, {7.6, 2.1, 4.5}, {2.7, 6.2, 4.4}};
    s.scan = {1.0, 0.002, 13, true};
  } else if (n == "S4") {
    // L-shaped story without cell (1, 1). A window in room (1, 0) looks
    // into the notch at the exterior facade of room (0, 1) and, further
    // out, at a free-standing clutter wall.
    b.rows = 2;
    b.cols = 2;
    b.missing.push_back({1, 1, 0});
    b.openings.push_back({OpeningKind::door, 0, 'x', 1, 1.5, 2.5, 0.0, 2.1});
    b.openings.push_back({OpeningKind::door, 0, 'y', 1, 2.0, 3.0, 0.0, 2.1});
    b.openings.push_back({OpeningKind::window, 0, 'y', 1, 5.3, 9.5, 0.5, 2.5});
    b.clutter.push_back({Vec3(-3.0, 12.0, -0.1), Vec3(21.0, 0.0, 0.0), Vec3(0.0, 0.0, 6.0)});
    s.scanners = {{2.3, 1.8, 1.6}, {7.4, 1.8, 1.5}, {2.6, 6.1, 1.7}};
    s.scan = {1.0, 0.002, 14, true};
  } else {
    throw SceneSpecError("unknown scene '" + std::string(name) + "' (expected S1, S2, S3 or S4)");
  }
  return s;
}

}  // namespace normorient
