#pragma once

#include "normorient/plane_detection.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <vector>

namespace normorient {

inline constexpr double kDefaultCellSize = 0.2;

/// Occupancy grid on one detected plane. Cell (i, j) covers
/// [origin.u + i*cell, origin.u + (i+1)*cell) x [origin.v + j*cell, ...) in
/// the plane frame. The plane geometry is kept alongside so cells can be
/// lifted back to 3D.
struct OccupancyBitmap {
  std::uint32_t plane = 0;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  Vec2 origin = Vec2::Zero();
  double cell_size = kDefaultCellSize;
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> bits;  // row-major, j * width + i

  bool at(std::uint32_t i, std::uint32_t j) const { return bits[static_cast<std::size_t>(j) * width + i] != 0; }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  Vec3 lift(double a, double b) const { return offset * normal + a * u + b * v; }
  Vec2 project(const Vec3& x) const { return {u.dot(x), v.dot(x)}; }

  std::pair<std::uint32_t, std::uint32_t> cell_of(const Vec3& x) const {
    const Vec2 uv = project(x) - origin;
    auto clampi = [](double t, std::uint32_t n) {
      const double f = std::floor(t);
      if (f < 0.0) return 0u;
      return std::min(static_cast<std::uint32_t>(f), n - 1);
    };
    return {clampi(uv.x() / cell_size, width), clampi(uv.y() / cell_size, height)};
  }
};

struct Patch {
  std::uint32_t id = 0;
  std::uint32_t plane = 0;
  std::uint32_t i = 0, j = 0;
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // reference normal, shared with the owning plane
  std::vector<std::uint32_t> members;
};

struct PatchSet {
  std::vector<OccupancyBitmap> bitmaps;     // one per plane, indexed by plane id
  std::vector<Patch> patches;               // ids are positions in this vector
  std::vector<std::int32_t> point_patch;    // patch id per point, -1 when off-patch

  std::size_t on_patch_count() const {
    return static_cast<std::size_t>(std::count_if(point_patch.begin(), point_patch.end(), [](auto p) { return p >= 0; }));
  }
};

/// One patch per occupied bitmap cell. Patch centers are the centroids of
/// their member points projected onto the plane.
inline PatchSet build_patches(std::span<const Plane> planes, const PointCloud& cloud, double cell_size = kDefaultCellSize) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("build_patches: cell_size must be > 0");
  PatchSet set;
  set.point_patch.assign(cloud.size(), -1);
  set.bitmaps.resize(planes.size());

  // Per-plane cell membership, computed independently per plane.
  std::vector<std::vector<std::vector<std::uint32_t>>> cell_members(planes.size());
  parallel_for(planes.size(), [&](std::size_t p) {
    const Plane& plane = planes[p];
    OccupancyBitmap& bm = set.bitmaps[p];
    bm.plane = plane.id;
    bm.normal = plane.normal;
    bm.offset = plane.offset;
    bm.u = plane.u;
    bm.v = plane.v;
    bm.cell_size = cell_size;
    if (plane.inliers.empty()) return;
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (auto idx : plane.inliers) {
      const Vec2 uv = plane.project(cloud.points[idx]);
      lo = lo.cwiseMin(uv);
      hi = hi.cwiseMax(uv);
    }
    bm.origin = lo;
    bm.width = static_cast<std::uint32_t>(std::floor((hi.x() - lo.x()) / cell_size)) + 1;
    bm.height = static_cast<std::uint32_t>(std::floor((hi.y() - lo.y()) / cell_size)) + 1;
    bm.bits.assign(static_cast<std::size_t>(bm.width) * bm.height, 0);
    auto& members = cell_members[p];
    members.resize(bm.bits.size());
    for (auto idx : plane.inliers) {
      auto [i, j] = bm.cell_of(cloud.points[idx]);
      const std::size_t c = static_cast<std::size_t>(j) * bm.width + i;
      bm.bits[c] = 1;
      members[c].push_back(idx);
    }
  });

  for (std::size_t p = 0; p < planes.size(); ++p) {
    const OccupancyBitmap& bm = set.bitmaps[p];
    for (std::uint32_t j = 0; j < bm.height; ++j) {
      for (std::uint32_t i = 0; i < bm.width; ++i) {
        auto& members = cell_members[p][static_cast<std::size_t>(j) * bm.width + i];
        if (members.empty()) continue;
        Patch patch;
        patch.id = static_cast<std::uint32_t>(set.patches.size());
        patch.plane = planes[p].id;
        patch.i = i;
        patch.j = j;
        patch.normal = planes[p].normal;
        Vec3 c = Vec3::Zero();
        for (auto idx : members) c += cloud.points[idx];
        c /= static_cast<double>(members.size());
        patch.center = c - planes[p].signed_distance(c) * planes[p].normal;
        std::sort(members.begin(), members.end());
        for (auto idx : members) set.point_patch[idx] = static_cast<std::int32_t>(patch.id);
        patch.members = std::move(members);
        set.patches.push_back(std::move(patch));
      }
    }
  }
  return set;
}

/// The patch's cell square lifted to 3D, counter-clockwise around +normal.
inline std::array<Vec3, 4> patch_quad(const Patch& patch, const OccupancyBitmap& bitmap) {
  const double a0 = bitmap.origin.x() + patch.i * bitmap.cell_size;
  const double b0 = bitmap.origin.y() + patch.j * bitmap.cell_size;
  const double a1 = a0 + bitmap.cell_size;
  const double b1 = b0 + bitmap.cell_size;
  return {bitmap.lift(a0, b0), bitmap.lift(a1, b0), bitmap.lift(a1, b1), bitmap.lift(a0, b1)};
}

/// Debug dump of one bitmap as a binary PGM (occupied = white). Row 0 of the
/// image is the highest v row so the picture is not mirrored.
inline void write_bitmap_pgm(const OccupancyBitmap& bm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << bm.width << ' ' << bm.height << "\n255\n";
  for (std::uint32_t r = 0; r < bm.height; ++r) {
    const std::uint32_t j = bm.height - 1 - r;
    for (std::uint32_t i = 0; i < bm.width; ++i) out.put(bm.at(i, j) ? static_cast<char>(255) : 0);
  }
}

}  // namespace normorient
