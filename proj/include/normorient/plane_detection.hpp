#pragma once

// Multi-plane RANSAC with normal-deviation and connectivity constraints.
//
// Planes are extracted greedily. Each round draws candidate planes from
// 3-point samples among the still unassigned points, scores them on a random
// subsample, then refines the best ones with least-squares fits restricted to
// the largest connected component of their inliers on a 2D grid. A round
// that cannot produce min_support inliers ends the extraction.

#include "normorient/geometry.hpp"
#include "normorient/parallel.hpp"
#include "normorient/pointcloud_io.hpp"
#include "normorient/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace normorient {

struct Plane {
  std::uint32_t id = 0;
  Vec3 normal = Vec3::UnitZ();  // arbitrary but fixed sign
  double offset = 0.0;          // plane: normal . x = offset
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  std::vector<std::uint32_t> inliers;

  double signed_distance(const Vec3& x) const { return normal.dot(x) - offset; }
  Vec2 project(const Vec3& x) const { return {u.dot(x), v.dot(x)}; }
  Vec3 lift(const Vec2& uv) const { return offset * normal + uv.x() * u + uv.y() * v; }

  static Plane through(const Vec3& normal, const Vec3& point, std::uint32_t id = 0) {
    Plane p;
    p.id = id;
    p.normal = canonicalize(normal.normalized());
    p.offset = p.normal.dot(point);
    std::tie(p.u, p.v) = plane_frame(p.normal);
    return p;
  }
};

struct DetectionParams {
  double epsilon = 0.02;            // inlier distance (m)
  double alpha_deg = 20.0;          // max normal deviation
  std::size_t min_support = 500;
  double connectivity_cell = 0.3;   // m
  std::size_t max_candidates = 200; // per extraction round
  std::uint64_t seed = 1;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("DetectionParams: epsilon must be > 0");
    if (!(alpha_deg > 0.0 && alpha_deg < 90.0)) throw std::invalid_argument("DetectionParams: alpha must be in (0, 90)");
    if (min_support < 3) throw std::invalid_argument("DetectionParams: min_support must be >= 3");
    if (!(connectivity_cell > 0.0)) throw std::invalid_argument("DetectionParams: connectivity_cell must be > 0");
    if (max_candidates == 0) throw std::invalid_argument("DetectionParams: max_candidates must be >= 1");
  }
};

struct PlaneDetection {
  std::vector<Plane> planes;
  std::vector<std::int32_t> assignment;  // plane id per point, -1 when unassigned

  std::size_t assigned_count() const {
    return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(), [](auto a) { return a >= 0; }));
  }
};

inline bool is_plane_inlier(const Plane& plane, const Vec3& point, const Vec3& normal, double epsilon,
                            double cos_alpha) {
  return std::abs(plane.signed_distance(point)) <= epsilon && std::abs(normal.dot(plane.normal)) >= cos_alpha;
}

/// Unassigned points (mask value 1) within epsilon of the plane whose normal is
/// within alpha of +-plane.normal. Returned in ascending index order.
inline std::vector<std::uint32_t> plane_inliers(const Plane& plane, const PointCloud& cloud,
                                                std::span<const std::uint8_t> unassigned, double epsilon,
                                                double alpha_deg) {
  const double cos_alpha = std::cos(deg_to_rad(alpha_deg));
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    if (unassigned[i] && is_plane_inlier(plane, cloud.points[i], cloud.normals[i], epsilon, cos_alpha)) out.push_back(i);
  }
  return out;
}

/// Points of `members` falling in the largest 8-connected cluster of occupied
/// grid cells in the plane's frame. Result is sorted by point index.
inline std::vector<std::uint32_t> largest_connected_component(const Plane& plane, const PointCloud& cloud,
                                                              std::span<const std::uint32_t> members,
                                                              double cell) {
  if (members.empty()) return {};
  struct Item {
    std::int64_t i, j;
    std::uint32_t point;
  };
  std::vector<Item> items;
  items.reserve(members.size());
  for (auto idx : members) {
    const Vec2 uv = plane.project(cloud.points[idx]);
    items.push_back({static_cast<std::int64_t>(std::floor(uv.x() / cell)),
                     static_cast<std::int64_t>(std::floor(uv.y() / cell)), idx});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::tie(a.i, a.j, a.point) < std::tie(b.i, b.j, b.point);
  });

  struct Cell {
    std::int64_t i, j;
    std::size_t first, count;
  };
  std::vector<Cell> cells;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (cells.empty() || cells.back().i != items[k].i || cells.back().j != items[k].j) {
      cells.push_back({items[k].i, items[k].j, k, 0});
    }
    ++cells.back().count;
  }
  auto key = [](std::int64_t i, std::int64_t j) {
    return (static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL) ^ static_cast<std::uint64_t>(j);
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> lookup;
  lookup.reserve(cells.size() * 2);
  for (std::size_t c = 0; c < cells.size(); ++c) lookup[key(cells[c].i, cells[c].j)].push_back(c);
  auto find = [&](std::int64_t i, std::int64_t j) -> std::ptrdiff_t {
    auto it = lookup.find(key(i, j));
    if (it == lookup.end()) return -1;
    for (auto c : it->second) {
      if (cells[c].i == i && cells[c].j == j) return static_cast<std::ptrdiff_t>(c);
    }
    return -1;
  };

  std::vector<std::int32_t> comp(cells.size(), -1);
  std::vector<std::size_t> comp_points;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < cells.size(); ++start) {
    if (comp[start] >= 0) continue;
    const auto label = static_cast<std::int32_t>(comp_points.size());
    comp_points.push_back(0);
    comp[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      comp_points[label] += cells[c].count;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const auto n = find(cells[c].i + di, cells[c].j + dj);
          if (n >= 0 && comp[n] < 0) {
            comp[n] = label;
            stack.push_back(static_cast<std::size_t>(n));
          }
        }
      }
    }
  }
  const auto best = static_cast<std::int32_t>(
      std::max_element(comp_points.begin(), comp_points.end()) - comp_points.begin());
  std::vector<std::uint32_t> out;
  out.reserve(comp_points[best]);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (comp[c] != best) continue;
    for (std::size_t k = cells[c].first; k < cells[c].first + cells[c].count; ++k) out.push_back(items[k].point);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Least-squares plane through the given points (centroid + smallest
/// covariance eigenvector). Summation order is fixed.
inline Plane fit_plane(const PointCloud& cloud, std::span<const std::uint32_t> idx, std::uint32_t id = 0) {
  Vec3 mean = Vec3::Zero();
  for (auto i : idx) mean += cloud.points[i];
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : idx) {
    const Vec3 d = cloud.points[i] - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  return Plane::through(solver.eigenvectors().col(0), mean, id);
}

namespace detail {

inline std::uint64_t spread_bits(std::uint64_t x) {
  x &= 0x1fffff;
  x = (x | x << 32) & 0x1f00000000ffffULL;
  x = (x | x << 16) & 0x1f0000ff0000ffULL;
  x = (x | x << 8) & 0x100f00f00f00f00fULL;
  x = (x | x << 4) & 0x10c30c30c30c30c3ULL;
  x = (x | x << 2) & 0x1249249249249249ULL;
  return x;
}

// Point indices in Morton (Z-curve) order, so that nearby positions in the
// array are mostly nearby in space.
inline std::vector<std::uint32_t> morton_order(const PointCloud& cloud) {
  Aabb box;
  for (const auto& p : cloud.points) box.extend(p);
  const Vec3 ext = box.extent().cwiseMax(Vec3::Constant(1e-12));
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(cloud.size());
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const Vec3 q = ((cloud.points[i] - box.lo).cwiseQuotient(ext) * 2097151.0).cwiseMax(Vec3::Zero());
    keyed[i] = {spread_bits(static_cast<std::uint64_t>(q.x())) | spread_bits(static_cast<std::uint64_t>(q.y())) << 1 |
                    spread_bits(static_cast<std::uint64_t>(q.z())) << 2,
                i};
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::uint32_t> order(cloud.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  return order;
}

}  // namespace detail

/// Greedy multi-plane extraction. `eligible` (optional, same length as the
/// cloud) excludes points from detection, e.g. those with degenerate normals.
inline PlaneDetection detect_planes(const PointCloud& cloud, const DetectionParams& params,
                                    std::span<const std::uint8_t> eligible = {}) {
  params.validate();
  if (!cloud.has_normals()) throw std::invalid_argument("detect_planes: cloud has no normals");
  if (!eligible.empty() && eligible.size() != cloud.size()) {
    throw std::invalid_argument("detect_planes: eligibility mask length mismatch");
  }

  constexpr std::size_t kScoreSample = 4096;
  constexpr std::size_t kTriesPerRound = 3;
  constexpr std::array<std::size_t, 5> kWindows = {32, 128, 512, 2048, 8192};
  const double cos_alpha = std::cos(deg_to_rad(params.alpha_deg));

  PlaneDetection result;
  result.assignment.assign(cloud.size(), -1);
  std::vector<std::uint8_t> unassigned(cloud.size(), 1);
  if (!eligible.empty()) {
    for (std::size_t i = 0; i < cloud.size(); ++i) unassigned[i] = eligible[i] ? 1 : 0;
  }
  const std::vector<std::uint32_t> order = detail::morton_order(cloud);
  RandomStream rng(params.seed, 0x5a17);

  // Inliers over the remaining points, evaluated in parallel into a flag
  // array and gathered in index order.
  std::vector<std::uint8_t> flags;
  auto inliers_of = [&](const Plane& plane, std::span<const std::uint32_t> remaining) {
    flags.assign(remaining.size(), 0);
    parallel_for((remaining.size() + 1023) / 1024, [&](std::size_t chunk) {
      const std::size_t end = std::min(remaining.size(), (chunk + 1) * 1024);
      for (std::size_t k = chunk * 1024; k < end; ++k) {
        const auto i = remaining[k];
        flags[k] = is_plane_inlier(plane, cloud.points[i], cloud.normals[i], params.epsilon, cos_alpha) ? 1 : 0;
      }
    });
    std::vector<std::uint32_t> out;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      if (flags[k]) out.push_back(remaining[k]);
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  for (;;) {
    std::vector<std::uint32_t> remaining;  // Morton order
    for (auto i : order) {
      if (unassigned[i]) remaining.push_back(i);
    }
    if (remaining.size() < params.min_support || remaining.size() < 3) break;

    std::vector<std::uint32_t> sample(std::min(kScoreSample, remaining.size()));
    for (auto& s : sample) s = remaining[rng.below(remaining.size())];

    std::vector<Plane> candidates;
    candidates.reserve(params.max_candidates);
    for (std::size_t c = 0; c < params.max_candidates; ++c) {
      const std::size_t pos = rng.below(remaining.size());
      const std::size_t half = kWindows[rng.below(kWindows.size())] / 2;
      const std::size_t lo = pos >= half ? pos - half : 0;
      const std::size_t hi = std::min(remaining.size(), pos + half + 1);
      const std::uint32_t a = remaining[pos];
      const std::uint32_t b = remaining[lo + rng.below(hi - lo)];
      const std::uint32_t d = remaining[lo + rng.below(hi - lo)];
      if (a == b || a == d || b == d) continue;
      const Vec3 e1 = cloud.points[b] - cloud.points[a];
      const Vec3 e2 = cloud.points[d] - cloud.points[a];
      const Vec3 n = e1.cross(e2);
      if (!(n.norm() > 1e-6 * e1.norm() * e2.norm())) continue;
      Plane cand = Plane::through(n, cloud.points[a]);
      const Vec3& nn = cand.normal;
      if (std::abs(cloud.normals[a].dot(nn)) < cos_alpha || std::abs(cloud.normals[b].dot(nn)) < cos_alpha ||
          std::abs(cloud.normals[d].dot(nn)) < cos_alpha) {
        continue;
      }
      candidates.push_back(std::move(cand));
    }
    if (candidates.empty()) break;

    std::vector<std::size_t> scores(candidates.size(), 0);
    parallel_for(candidates.size(), [&](std::size_t c) {
      std::size_t s = 0;
      for (auto i : sample) s += is_plane_inlier(candidates[c], cloud.points[i], cloud.normals[i], params.epsilon, cos_alpha);
      scores[c] = s;
    });
    std::vector<std::size_t> rank(candidates.size());
    for (std::size_t c = 0; c < rank.size(); ++c) rank[c] = c;
    std::stable_sort(rank.begin(), rank.end(), [&](auto x, auto y) { return scores[x] > scores[y]; });

    bool accepted = false;
    for (std::size_t t = 0; t < std::min(kTriesPerRound, rank.size()) && !accepted; ++t) {
      Plane plane = candidates[rank[t]];
      std::vector<std::uint32_t> members;
      for (int refine = 0; refine < 3; ++refine) {
        auto raw = inliers_of(plane, remaining);
        if (raw.size() < 3) break;
        members = largest_connected_component(plane, cloud, raw, params.connectivity_cell);
        if (members.size() < 3) break;
        plane = fit_plane(cloud, members);
      }
      if (members.size() < params.min_support) continue;
      // Final membership is evaluated against the final plane, so every
      // reported inlier satisfies the distance and angle predicates.
      members = largest_connected_component(plane, cloud, inliers_of(plane, remaining), params.connectivity_cell);
      if (members.size() < params.min_support) continue;

      plane.id = static_cast<std::uint32_t>(result.planes.size());
      plane.inliers = std::move(members);
      for (auto i : plane.inliers) {
        unassigned[i] = 0;
        result.assignment[i] = static_cast<std::int32_t>(plane.id);
      }
      result.planes.push_back(std::move(plane));
      accepted = true;
    }
    if (!accepted) break;
  }
  return result;
}

}  // namespace normorient
