#pragma once

// Ray queries against patch quads and the multi-bounce path tracer.

#include "normorient/geometry.hpp"
#include "normorient/patch_model.hpp"
#include "normorient/random.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace normorient {

/// Planar rectangle: corner + s*e1 + t*e2 for s, t in [0, 1]; e1 is
/// orthogonal to e2. `normal` is the owning patch's reference normal and
/// only its sign-free direction matters for intersection.
struct Quad {
  Vec3 corner = Vec3::Zero();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();
  std::uint32_t id = 0;

  static Quad from_corners(const std::array<Vec3, 4>& c, const Vec3& normal, std::uint32_t id) {
    return {c[0], c[1] - c[0], c[3] - c[0], normal, id};
  }

  Aabb bounds() const {
    Aabb b;
    b.extend(corner);
    b.extend(corner + e1);
    b.extend(corner + e2);
    b.extend(corner + e1 + e2);
    return b;
  }
};

/// Distance along the ray to the quad, if it is hit strictly beyond t_min.
/// Negating quad.normal negates numerator and denominator exactly, so the
/// result does not depend on the normal's sign.
inline std::optional<double> intersect_quad(const Quad& q, const Vec3& origin, const Vec3& dir, double t_min) {
  const double denom = q.normal.dot(dir);
  if (denom == 0.0) return std::nullopt;
  const double t = q.normal.dot(q.corner - origin) / denom;
  if (!(t > t_min)) return std::nullopt;
  const Vec3 rel = origin + t * dir - q.corner;
  const double a = rel.dot(q.e1) / q.e1.squaredNorm();
  const double b = rel.dot(q.e2) / q.e2.squaredNorm();
  if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) return std::nullopt;
  return t;
}

struct Hit {
  std::uint32_t quad = 0;   // index into the scene's quad list
  std::uint32_t id = 0;     // patch id carried by the quad
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
};

/// Bounding volume hierarchy over quads. Nearest-hit queries are exact:
/// boxes are padded and pruning is inclusive, and equal distances resolve to
/// the lower quad index, the same rule a linear scan uses.
class Bvh {
 public:
  Bvh() = default;
  explicit Bvh(std::span<const Quad> quads) { build(quads); }

  void build(std::span<const Quad> quads) {
    nodes_.clear();
    order_.resize(quads.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (quads.empty()) return;
    boxes_.resize(quads.size());
    centroids_.resize(quads.size());
    for (std::size_t i = 0; i < quads.size(); ++i) {
      Aabb b = quads[i].bounds();
      const Vec3 pad = Vec3::Constant(1e-7) + 1e-9 * b.lo.cwiseAbs().cwiseMax(b.hi.cwiseAbs());
      b.lo -= pad;
      b.hi += pad;
      boxes_[i] = b;
      centroids_[i] = b.center();
    }
    nodes_.reserve(2 * quads.size());
    nodes_.emplace_back();
    build_node(0, 0, static_cast<std::uint32_t>(quads.size()));
    boxes_.clear();
    centroids_.clear();
  }

  bool empty() const { return nodes_.empty(); }

  std::optional<Hit> nearest(std::span<const Quad> quads, const Vec3& origin, const Vec3& dir, double t_min) const {
    if (nodes_.empty()) return std::nullopt;
    const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
    double best_t = std::numeric_limits<double>::infinity();
    std::uint32_t best_q = 0;
    bool found = false;

    std::uint32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!slab_test(node.box, origin, dir, inv, t_min, best_t)) continue;
      if (node.count > 0) {
        for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
          const std::uint32_t qi = order_[k];
          auto t = intersect_quad(quads[qi], origin, dir, t_min);
          if (t && (*t < best_t || (*t == best_t && qi < best_q))) {
            best_t = *t;
            best_q = qi;
            found = true;
          }
        }
      } else {
        // Push the far child first so the near one is popped next.
        const Node& l = nodes_[node.first];
        const Node& r = nodes_[node.first + 1];
        const bool left_first = (l.box.center() - origin).dot(dir) <= (r.box.center() - origin).dot(dir);
        stack[top++] = left_first ? node.first + 1 : node.first;
        stack[top++] = left_first ? node.first : node.first + 1;
      }
    }
    if (!found) return std::nullopt;
    return Hit{best_q, quads[best_q].id, origin + best_t * dir, best_t};
  }

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first index into order_; inner: left child id
    std::uint32_t count = 0;  // 0 for inner nodes
  };
  static constexpr std::uint32_t kLeafSize = 4;

  static bool slab_test(const Aabb& box, const Vec3& o, const Vec3& d, const Vec3& inv, double t_min, double t_max) {
    double t0 = t_min, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
      if (d[a] == 0.0) {
        if (o[a] < box.lo[a] || o[a] > box.hi[a]) return false;
        continue;
      }
      double ta = (box.lo[a] - o[a]) * inv[a];
      double tb = (box.hi[a] - o[a]) * inv[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }

  void build_node(std::uint32_t id, std::uint32_t begin, std::uint32_t end) {
    Aabb box, cbox;
    for (std::uint32_t k = begin; k < end; ++k) {
      box.extend(boxes_[order_[k]]);
      cbox.extend(centroids_[order_[k]]);
    }
    nodes_[id].box = box;
    if (end - begin <= kLeafSize) {
      nodes_[id].first = begin;
      nodes_[id].count = end - begin;
      return;
    }
    const Vec3 ext = cbox.extent();
    int axis = 0;
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroids_[a][axis], cb = centroids_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    // Children live in consecutive slots.
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[id].first = left;
    nodes_[id].count = 0;
    build_node(left, begin, mid);
    build_node(left + 1, mid, end);
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
};

/// Immutable ray-tracing scene over the active patches of a patch set.
class Scene {
 public:
  Scene() = default;

  explicit Scene(std::vector<Quad> quads) : quads_(std::move(quads)) { bvh_.build(quads_); }

  /// Quads of every patch whose `active` flag is set (all patches when the
  /// mask is empty).
  static Scene from_patches(const PatchSet& set, std::span<const std::uint8_t> active = {}) {
    std::vector<Quad> quads;
    quads.reserve(set.patches.size());
    for (const auto& p : set.patches) {
      if (!active.empty() && !active[p.id]) continue;
      quads.push_back(Quad::from_corners(patch_quad(p, set.bitmaps[p.plane]), p.normal, p.id));
    }
    return Scene(std::move(quads));
  }

  std::span<const Quad> quads() const { return quads_; }
  std::size_t size() const { return quads_.size(); }

  std::optional<Hit> intersect(const Vec3& origin, const Vec3& dir, double t_min) const {
    return bvh_.nearest(quads_, origin, dir, t_min);
  }

 private:
  std::vector<Quad> quads_;
  Bvh bvh_;
};

/// Uniform direction on the spherical cap of the given half-angle around a
/// unit axis, from two uniforms in [0, 1).
inline Vec3 sample_cone(const Vec3& axis, double half_angle_deg, double u1, double u2) {
  const double cos_max = std::cos(deg_to_rad(half_angle_deg));
  const double z = 1.0 - u1 * (1.0 - cos_max);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u2;
  Vec3 t, b;
  orthonormal_basis(axis, t, b);
  return (r * std::cos(phi) * t + r * std::sin(phi) * b + z * axis).normalized();
}

inline Vec3 sample_cone(const Vec3& axis, double half_angle_deg, std::pair<double, double> u) {
  return sample_cone(axis, half_angle_deg, u.first, u.second);
}

struct TraceConfig {
  std::uint32_t rays = 50;          // k, per patch side
  std::uint32_t bounces = 8;        // b
  double tau = 4.0;                 // bounce threshold
  double cone_half_angle = 60.0;    // degrees (120 degree cone)
  double t_min = 1e-3;              // self-hit offset, meters
  std::uint64_t seed = 1;

  void validate() const {
    if (rays < 1) throw std::invalid_argument("TraceConfig: rays must be >= 1");
    if (bounces < 1) throw std::invalid_argument("TraceConfig: bounces must be >= 1");
    if (!(tau >= 0.0)) throw std::invalid_argument("TraceConfig: tau must be >= 0");
    if (!(cone_half_angle > 0.0 && cone_half_angle < 90.0)) {
      throw std::invalid_argument("TraceConfig: cone half-angle must be in (0, 90)");
    }
    if (!(t_min >= 0.0)) throw std::invalid_argument("TraceConfig: t_min must be >= 0");
  }
};

/// One traced path: segment lengths (zero after termination) and the number
/// of surface hits.
struct PathSample {
  std::vector<double> lengths;
  std::uint32_t bounces = 0;
};

enum class RngDomain : std::uint64_t { path_trace = 1, facade = 2 };

/// Key for a patch side. It is a function of the physical direction
/// side * normal, so flipping a reference normal swaps the side labels but
/// keeps the random numbers attached to each direction.
inline std::uint64_t side_key(const Vec3& normal, int side) {
  return canonical_sign(side > 0 ? Vec3(normal) : Vec3(-normal)) > 0 ? 1u : 0u;
}

/// Hemisphere axis after hitting a surface: the side the ray came from.
inline Vec3 bounce_axis(const Vec3& surface_normal, const Vec3& dir) {
  return surface_normal.dot(dir) < 0.0 ? Vec3(surface_normal) : Vec3(-surface_normal);
}

/// k paths from the patch center into the cone around side * normal. Each
/// hit reflects into a cone around the incoming hemisphere; a path ends when
/// it escapes or after cfg.bounces hits.
inline std::vector<PathSample> trace_paths(const Scene& scene, const Patch& patch, int side, const TraceConfig& cfg) {
  const KeyedRng rng(cfg.seed);
  const Vec3 axis0 = side > 0 ? Vec3(patch.normal) : Vec3(-patch.normal);
  const std::uint64_t skey = side_key(patch.normal, side);
  std::vector<PathSample> out(cfg.rays);
  for (std::uint32_t i = 0; i < cfg.rays; ++i) {
    PathSample& path = out[i];
    path.lengths.assign(cfg.bounces, 0.0);
    Vec3 origin = patch.center;
    Vec3 dir = sample_cone(axis0, cfg.cone_half_angle,
                           rng.uniform2({static_cast<std::uint64_t>(RngDomain::path_trace), patch.id, skey, i, 0}));
    for (std::uint32_t j = 0; j < cfg.bounces; ++j) {
      auto hit = scene.intersect(origin, dir, cfg.t_min);
      if (!hit) break;
      path.lengths[j] = hit->distance;
      path.bounces = j + 1;
      if (j + 1 == cfg.bounces) break;
      const Vec3 axis = bounce_axis(scene.quads()[hit->quad].normal, dir);
      origin = hit->point;
      dir = sample_cone(axis, cfg.cone_half_angle,
                        rng.uniform2({static_cast<std::uint64_t>(RngDomain::path_trace), patch.id, skey, i, j + 1}));
    }
  }
  return out;
}

}  // namespace normorient
