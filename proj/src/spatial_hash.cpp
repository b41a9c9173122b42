#include "dgseg/spatial_hash.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "dgseg/error.hpp"

namespace dgseg {

VoxelHash::VoxelHash(std::span<const Vec3> points, double cell_size) : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel hash cell size must be positive");
  const std::size_t n = points.size();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(points[i]);
    keys[i] = pack(c);
    if (i == 0) {
      lo_ = hi_ = c;
    } else {
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], c[a]);
        hi_[a] = std::max(hi_[a], c[a]);
      }
    }
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0U);
  std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  buckets_.reserve(n / 4 + 1);
  std::uint32_t start = 0;
  for (std::uint32_t k = 1; k <= n; ++k) {
    if (k == n || keys[order_[k]] != keys[order_[start]]) {
      buckets_.emplace(keys[order_[start]], std::make_pair(start, k));
      start = k;
    }
  }
}

std::vector<std::size_t> VoxelHash::within(const Vec3& q, double radius) const {
  std::vector<std::size_t> out;
  for_each_within(q, radius, [&](std::size_t i) { out.push_back(i); });
  return out;
}

std::vector<std::size_t> VoxelHash::knn(const Vec3& q, std::size_t k, std::ptrdiff_t exclude) const {
  const std::size_t available = points_.size() - (exclude >= 0 ? 1 : 0);
  k = std::min(k, available);
  if (k == 0) return {};

  const auto c = cell_of(q);
  std::int64_t max_ring = 0;
  for (int a = 0; a < 3; ++a) max_ring = std::max({max_ring, c[a] - lo_[a], hi_[a] - c[a]});

  std::vector<std::pair<double, std::size_t>> cand;
  auto visit_cell = [&](const Cell& cell) {
    auto it = buckets_.find(pack(cell));
    if (it == buckets_.end()) return;
    for (std::uint32_t j = it->second.first; j < it->second.second; ++j) {
      const std::uint32_t idx = order_[j];
      if (static_cast<std::ptrdiff_t>(idx) == exclude) continue;
      cand.emplace_back(squared_distance(points_[idx], q), idx);
    }
  };

  for (std::int64_t ring = 0;; ++ring) {
    // Visit only the shell at Chebyshev distance `ring` from the query cell.
    for (std::int64_t dx = -ring; dx <= ring; ++dx) {
      for (std::int64_t dy = -ring; dy <= ring; ++dy) {
        const bool edge_xy = std::abs(dx) == ring || std::abs(dy) == ring;
        if (edge_xy) {
          for (std::int64_t dz = -ring; dz <= ring; ++dz) visit_cell({c[0] + dx, c[1] + dy, c[2] + dz});
        } else {
          visit_cell({c[0] + dx, c[1] + dy, c[2] - ring});
          if (ring > 0) visit_cell({c[0] + dx, c[1] + dy, c[2] + ring});
        }
      }
    }
    // Every point closer than the distance from q to the visited block's
    // boundary has been seen.
    if (cand.size() >= k) {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
      const double kth = cand[k - 1].first;
      double covered = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        covered = std::min({covered, q[a] - static_cast<double>(c[a] - ring) * cell_,
                            static_cast<double>(c[a] + ring + 1) * cell_ - q[a]});
      }
      covered = std::max(covered, 0.0);
      if (kth < covered * covered || ring >= max_ring) break;
    } else if (ring >= max_ring) {
      break;
    }
  }
  std::sort(cand.begin(), cand.end());
  cand.resize(std::min(k, cand.size()));
  std::vector<std::size_t> out;
  out.reserve(cand.size());
  for (const auto& [d, i] : cand) out.push_back(i);
  return out;
}

}  // namespace dgseg
