#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dgseg/scene.hpp"

namespace dgseg {

// Per-point input features, one row per point:
//   0-2   position relative to the bounding-box centre
//   3     height above the estimated floor
//   4-6   mean neighbour offset (x10)
//   7-9   square roots of the neighbourhood covariance eigenvalues, descending (x10)
//   10-12 linearity, planarity, scattering
//   13    |z| of the neighbourhood normal
inline constexpr int kFeatureDim = 14;
using PointFeatures = Eigen::MatrixXd;

struct FeatureConfig {
  int k = 16;
  double voxel_size = 0.05;   // <= 0 disables voxel downsampling
  double search_cell = 0.10;  // voxel hash cell for neighbour queries
};

// Label-free floor height: the 2nd percentile of z.
double estimate_floor_height(const PointCloud& pc);

PointFeatures extract_point_features(const PointCloud& pc, int k, double search_cell = 0.10);
// Features for the listed rows only; neighbourhoods still use every point.
PointFeatures extract_point_features(const PointCloud& pc, int k, std::span<const std::size_t> rows,
                                     double search_cell = 0.10);

struct VoxelSample {
  PointCloud cloud;                        // first point of each voxel, in order of appearance
  std::vector<std::size_t> voxel_of_point; // input point -> row of `cloud`
};

VoxelSample voxel_downsample(const PointCloud& pc, double voxel_size);

}  // namespace dgseg
