#include "dgseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "dgseg/error.hpp"
#include "dgseg/spatial_hash.hpp"

namespace dgseg {

namespace {

constexpr double kLocalScale = 10.0;

void fill_row(const PointCloud& pc, const VoxelHash& index, std::size_t i, int k, const Vec3& center,
              double floor_z, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  const Vec3& p = pc.positions[i];
  row.setZero();
  for (int a = 0; a < 3; ++a) row(a) = p[a] - center[a];
  row(3) = p[2] - floor_z;
  if (k <= 0) return;

  const auto nbrs = index.knn(p, static_cast<std::size_t>(k), static_cast<std::ptrdiff_t>(i));
  if (nbrs.empty()) return;
  Eigen::Vector3d pv(p[0], p[1], p[2]);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (auto j : nbrs) mean += Eigen::Vector3d(pc.positions[j][0], pc.positions[j][1], pc.positions[j][2]);
  mean /= static_cast<double>(nbrs.size());
  row.segment<3>(4) = kLocalScale * (mean - pv).transpose();

  // Covariance of the neighbourhood including the point itself.
  Eigen::Vector3d centroid = (mean * static_cast<double>(nbrs.size()) + pv) / static_cast<double>(nbrs.size() + 1);
  Eigen::Matrix3d cov = (pv - centroid) * (pv - centroid).transpose();
  for (auto j : nbrs) {
    const Eigen::Vector3d d = Eigen::Vector3d(pc.positions[j][0], pc.positions[j][1], pc.positions[j][2]) - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(nbrs.size() + 1);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(cov);
  // Eigen returns ascending eigenvalues.
  const Eigen::Vector3d ev = solver.eigenvalues().cwiseMax(0.0);
  const double l1 = ev(2), l2 = ev(1), l3 = ev(0);
  row(7) = kLocalScale * std::sqrt(l1);
  row(8) = kLocalScale * std::sqrt(l2);
  row(9) = kLocalScale * std::sqrt(l3);
  if (l1 > 1e-18) {
    row(10) = (l1 - l2) / l1;
    row(11) = (l2 - l3) / l1;
    row(12) = l3 / l1;
    row(13) = std::abs(solver.eigenvectors()(2, 0));
  }
}

}  // namespace

double estimate_floor_height(const PointCloud& pc) {
  if (pc.empty()) throw Error(ErrorCode::EmptyCloud, "floor height of an empty cloud");
  std::vector<double> z(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) z[i] = pc.positions[i][2];
  const auto rank = static_cast<std::ptrdiff_t>(0.02 * static_cast<double>(z.size() - 1));
  std::nth_element(z.begin(), z.begin() + rank, z.end());
  return z[static_cast<std::size_t>(rank)];
}

PointFeatures extract_point_features(const PointCloud& pc, int k, std::span<const std::size_t> rows,
                                     double search_cell) {
  if (pc.empty()) throw Error(ErrorCode::EmptyCloud, "features of an empty cloud");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const int k_eff = std::min<int>(k, static_cast<int>(pc.size()) - 1);
  const VoxelHash index(pc.positions, search_cell);
  const Vec3 center = bounding_box(pc).center();
  const double floor_z = estimate_floor_height(pc);
  PointFeatures out(static_cast<Eigen::Index>(rows.size()), kFeatureDim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    fill_row(pc, index, rows[r], k_eff, center, floor_z, out.row(static_cast<Eigen::Index>(r)));
  }
  return out;
}

PointFeatures extract_point_features(const PointCloud& pc, int k, double search_cell) {
  std::vector<std::size_t> rows(pc.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return extract_point_features(pc, k, rows, search_cell);
}

VoxelSample voxel_downsample(const PointCloud& pc, double voxel_size) {
  VoxelSample out;
  out.voxel_of_point.resize(pc.size());
  if (voxel_size <= 0.0) {
    out.cloud = pc;
    std::iota(out.voxel_of_point.begin(), out.voxel_of_point.end(), std::size_t{0});
    return out;
  }
  std::unordered_map<std::uint64_t, std::size_t> slot;
  slot.reserve(pc.size());
  std::vector<std::size_t> reps;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.positions[i];
    std::uint64_t key = 0;
    for (int a = 0; a < 3; ++a) {
      const auto c = static_cast<std::int64_t>(std::floor(p[a] / voxel_size)) + (1 << 20);
      key = (key << 21) | (static_cast<std::uint64_t>(c) & ((1ULL << 21) - 1));
    }
    auto [it, inserted] = slot.emplace(key, reps.size());
    if (inserted) reps.push_back(i);
    out.voxel_of_point[i] = it->second;
  }
  out.cloud = subset(pc, reps);
  return out;
}

}  // namespace dgseg
