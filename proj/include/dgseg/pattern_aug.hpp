#pragma once

#include <vector>

#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

struct ScanSimParams {
  int num_cameras = 4;
  double camera_height = 1.5;
  int azimuth_bins = 360;
  int elevation_bins = 180;
  double noise_sigma = 0.01;
  double keep_prob = 0.95;
  double floor_cell_size = 0.10;  // raster used to find camera positions

  void validate() const;
};

// Camera positions on random free floor cells, or the bounding-box centre when
// the scene has no usable floor.
std::vector<Vec3> place_cameras(const PointCloud& pc, const ScanSimParams& params, Rng& rng);

// Indices (ascending) of points that are the nearest point of their
// (azimuth, elevation) bin for at least one camera.
std::vector<std::size_t> visible_indices(const PointCloud& pc, const std::vector<Vec3>& cameras,
                                         const ScanSimParams& params);

struct ScanResult {
  PointCloud cloud;
  std::vector<std::size_t> source_index;  // input index of each output point
  std::vector<Vec3> cameras;
};

// Occlusion culling from simulated cameras, then Gaussian jitter and random
// dropout of the survivors. Throws EmptyResult when nothing survives.
ScanResult virtual_scan_detailed(const PointCloud& pc, const ScanSimParams& params, Rng& rng);
PointCloud virtual_scan(const PointCloud& pc, const ScanSimParams& params, Rng& rng);

struct RigidAugConfig {
  double max_rotation = 6.283185307179586;  // z rotation drawn from [0, max_rotation)
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translation_sigma = 0.1;

  static RigidAugConfig identity() { return {0.0, 1.0, 1.0, 0.0}; }
  void validate() const;
};

struct RigidTransform {
  double rotation_z = 0.0;
  double scale = 1.0;
  Vec3 translation{};

  Vec3 apply(const Vec3& p) const;
};

RigidTransform draw_rigid(const RigidAugConfig& cfg, Rng& rng);
PointCloud apply_rigid(const PointCloud& pc, const RigidTransform& t);
PointCloud random_rigid(const PointCloud& pc, const RigidAugConfig& cfg, Rng& rng);

}  // namespace dgseg
