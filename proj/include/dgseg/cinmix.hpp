#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dgseg/clustering.hpp"
#include "dgseg/occupancy.hpp"
#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

// One density cluster of a mixable thing class, in a local frame whose origin
// is the xy centroid of its points and whose minimum z is 0.
struct InstanceGroup {
  std::vector<Vec3> points;
  std::optional<std::vector<Rgb>> colors;
  int class_id = kChair;
  Footprint footprint;  // unrotated, at the grid cell size
  std::string source_scene;
};

struct Placement {
  Vec3 translation{};
  double rotation_z = 0.0;  // [0, 2*pi)
  int cell_x = 0;
  int cell_y = 0;
  Footprint footprint;  // rotated footprint anchored at (cell_x, cell_y)
};

struct CinmixConfig {
  DbscanParams dbscan;
  double cell_size = 0.10;
  double occupy_height = 2.0;
  int num_instances = 0;         // 0 draws uniformly from {1,2,3,4}
  double cluster_subsample = 1;  // fraction of class points handed to DBSCAN
};

std::vector<InstanceGroup> extract_instance_groups(const PointCloud& vendor, const DbscanParams& params,
                                                   double cell_size = 0.10, const std::string& source_scene = {},
                                                   double cluster_subsample = 1.0);

std::optional<Placement> place_instance(const FloorOccupancyGrid& grid, const InstanceGroup& inst, Rng& rng);

// Instance points in the client frame.
std::vector<Vec3> transform_instance(const InstanceGroup& inst, const Placement& placement);

// Marks the placement's footprint cells as not free.
void occupy(FloorOccupancyGrid& grid, const Placement& placement);

struct PlacedInstance {
  std::size_t group = 0;         // index into the group list
  Placement placement;
  std::size_t first_point = 0;   // offset of the inserted points in the output
  std::size_t num_points = 0;
};

struct MixResult {
  PointCloud cloud;
  std::vector<PlacedInstance> placed;
  FloorOccupancyGrid initial_grid;  // client grid before any insertion
  std::size_t attempts = 0;
};

// Geometry-constrained mixing with precomputed vendor groups.
MixResult cinmix_with_groups(const std::vector<InstanceGroup>& groups, const PointCloud& client,
                             const CinmixConfig& cfg, Rng& rng);
MixResult cinmix_detailed(const PointCloud& vendor, const PointCloud& client, const CinmixConfig& cfg, Rng& rng);
PointCloud cinmix(const PointCloud& vendor, const PointCloud& client, const CinmixConfig& cfg, Rng& rng);

// Both scenes recentred on their bounding-box centres, then concatenated.
PointCloud mix3d(const PointCloud& a, const PointCloud& b);

struct CuboidMixResult {
  PointCloud cloud;
  struct Source {
    int scene = 0;  // 0 = a, 1 = b
    std::size_t index = 0;
    int cell = 0;
  };
  std::vector<Source> provenance;
  std::vector<bool> cell_from_a;
};

// Splits each scene's bounding box into a grid of cuboids with random interior
// split planes; a random subset of cell indices keeps a's points, the rest take
// b's points (b is first translated onto a's bounding-box centre).
CuboidMixResult cuboid_mix_detailed(const PointCloud& a, const PointCloud& b, std::array<int, 3> splits, Rng& rng);
PointCloud cuboid_mix(const PointCloud& a, const PointCloud& b, std::array<int, 3> splits, Rng& rng);

}  // namespace dgseg
