#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgseg/scene.hpp"

namespace dgseg {

// Uniform voxel hash over a fixed point set. Points are bucketed by
// floor(p / cell); each bucket lists its point indices in ascending order.
class VoxelHash {
 public:
  VoxelHash(std::span<const Vec3> points, double cell_size);

  double cell_size() const { return cell_; }
  std::size_t size() const { return points_.size(); }

  // Calls fn(index) for every point within `radius` (inclusive) of q, visiting
  // buckets in a fixed order and indices ascending within a bucket.
  template <typename Fn>
  void for_each_within(const Vec3& q, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    const auto c = cell_of(q);
    for (int dx = -reach; dx <= reach; ++dx) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dz = -reach; dz <= reach; ++dz) {
          auto it = buckets_.find(pack({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == buckets_.end()) continue;
          for (std::uint32_t k = it->second.first; k < it->second.second; ++k) {
            const std::uint32_t idx = order_[k];
            if (squared_distance(points_[idx], q) <= r2) fn(static_cast<std::size_t>(idx));
          }
        }
      }
    }
  }

  std::vector<std::size_t> within(const Vec3& q, double radius) const;

  // The k nearest points to q (optionally excluding one index), sorted by
  // (distance, index).
  std::vector<std::size_t> knn(const Vec3& q, std::size_t k, std::ptrdiff_t exclude = -1) const;

  static double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
  }

 private:
  using Cell = std::array<std::int64_t, 3>;

  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)), static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
  }
  static std::uint64_t pack(const Cell& c) {
    constexpr std::int64_t bias = 1 << 20;
    constexpr std::uint64_t mask = (1ULL << 21) - 1;
    return ((static_cast<std::uint64_t>(c[0] + bias) & mask) << 42) |
           ((static_cast<std::uint64_t>(c[1] + bias) & mask) << 21) | (static_cast<std::uint64_t>(c[2] + bias) & mask);
  }

  std::span<const Vec3> points_;
  double cell_;
  std::vector<std::uint32_t> order_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> buckets_;
  Cell lo_{}, hi_{};
};

}  // namespace dgseg
