#pragma once

#include "normorient/knn.hpp"
#include "normorient/parallel.hpp"
#include "normorient/pointcloud_io.hpp"

#include <Eigen/Eigenvalues>

#include <stdexcept>
#include <vector>

namespace normorient {

inline constexpr std::size_t kDefaultKnn = 16;

struct EstimatedNormals {
  PointCloud cloud;                     // input cloud with normals replaced
  std::vector<std::uint8_t> degenerate; // 1 where the neighborhood has no dominant plane
  std::size_t degenerate_count() const {
    std::size_t n = 0;
    for (auto d : degenerate) n += d;
    return n;
  }
};

inline KnnIndex build_knn_index(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("build_knn_index: empty cloud");
  return KnnIndex(cloud.points);
}

struct PcaNormal {
  Vec3 normal;
  bool degenerate = false;
};

/// Smallest-eigenvalue eigenvector of the neighborhood covariance, with the
/// sign fixed so its dominant component is positive.
inline PcaNormal pca_normal(std::span<const Vec3> pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Vec3 ev = solver.eigenvalues();  // ascending
  PcaNormal out;
  out.normal = canonicalize(solver.eigenvectors().col(0).normalized());
  // Two smallest eigenvalues within a 1e-3 ratio of each other (or both
  // numerically zero, as for a line): the normal direction is not determined.
  const double l0 = std::max(ev[0], 0.0), l1 = std::max(ev[1], 0.0), l2 = std::max(ev[2], 0.0);
  out.degenerate = (l1 - l0) <= 1e-3 * l1 || l1 <= 1e-12 * l2;
  return out;
}

inline EstimatedNormals estimate_normals(const PointCloud& cloud, const KnnIndex& index,
                                         std::size_t k_neighbors = kDefaultKnn) {
  if (k_neighbors < 3) throw std::invalid_argument("estimate_normals: k_neighbors must be >= 3");
  if (cloud.size() < 3) throw std::invalid_argument("estimate_normals: need at least 3 points");
  EstimatedNormals out;
  out.cloud = cloud;
  out.cloud.normals.assign(cloud.size(), Vec3::UnitZ());
  out.degenerate.assign(cloud.size(), 0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    thread_local std::vector<std::uint32_t> nn;
    thread_local std::vector<Vec3> pts;
    index.query(cloud.points[i], k_neighbors, nn);
    pts.clear();
    for (auto j : nn) pts.push_back(cloud.points[j]);
    const PcaNormal r = pca_normal(pts);
    out.cloud.normals[i] = r.normal;
    out.degenerate[i] = r.degenerate ? 1 : 0;
  });
  return out;
}

}  // namespace normorient
