#pragma once

#include "normorient/geometry.hpp"

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace normorient {

/// Exact k-nearest-neighbor index (kd-tree). Results are ordered by squared
/// distance, ties broken by point index, so they match a brute-force scan.
class KnnIndex {
 public:
  explicit KnnIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw std::invalid_argument("KnnIndex: empty point set");
    order_.resize(points_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::uint32_t i) const { return points_[i]; }

  /// min(k, n) nearest point indices to q, nearest first.
  std::vector<std::uint32_t> query(const Vec3& q, std::size_t k) const {
    std::vector<std::uint32_t> out;
    query(q, k, out);
    return out;
  }

  void query(const Vec3& q, std::size_t k, std::vector<std::uint32_t>& out) const {
    out.clear();
    k = std::min(k, points_.size());
    if (k == 0) return;
    Heap heap;
    heap.reserve(k);
    search(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    out.reserve(heap.size());
    for (const auto& e : heap) out.push_back(e.second);
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;
  using Entry = std::pair<double, std::uint32_t>;
  using Heap = std::vector<Entry>;  // max-heap on (distance², index)

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::uint32_t left = 0, right = 0;  // child node ids; 0 marks a leaf
    int axis = 0;
    double split = 0.0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({begin, end, 0, 0, 0, 0.0});
    if (end - begin <= kLeafSize) return id;

    Aabb box;
    for (std::uint32_t i = begin; i < end; ++i) box.extend(points_[order_[i]]);
    int axis = 0;
    const Vec3 ext = box.extent();
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;

    const std::uint32_t mid = begin + (end - begin) / 2;
    auto less = [&](std::uint32_t a, std::uint32_t b) {
      const double ca = points_[a][axis], cb = points_[b][axis];
      return ca < cb || (ca == cb && a < b);
    };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, less);
    const double split = points_[order_[mid]][axis];

    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void offer(Heap& heap, std::size_t k, double d2, std::uint32_t idx) const {
    const Entry e{d2, idx};
    if (heap.size() < k) {
      heap.push_back(e);
      std::push_heap(heap.begin(), heap.end());
    } else if (e < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = e;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::uint32_t node_id, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.left == 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        offer(heap, k, (points_[idx] - q).squaredNorm(), idx);
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // Inclusive bound: equal-distance points on the far side can still win the index tie-break.
    if (heap.size() < k || diff * diff <= heap.front().first) search(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace normorient
