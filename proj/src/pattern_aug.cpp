#include "dgseg/pattern_aug.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dgseg/error.hpp"
#include "dgseg/occupancy.hpp"

namespace dgseg {

void ScanSimParams::validate() const {
  if (num_cameras < 1) throw Error(ErrorCode::InvalidArgument, "num_cameras must be >= 1");
  if (azimuth_bins < 1 || elevation_bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sigma must be >= 0");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "keep_prob must be in (0,1]");
}

std::vector<Vec3> place_cameras(const PointCloud& pc, const ScanSimParams& params, Rng& rng) {
  std::vector<Vec3> cams;
  std::vector<std::size_t> free_cells;
  FloorOccupancyGrid grid;
  bool has_floor = false;
  try {
    grid = build_floor_grid(pc, params.floor_cell_size);
    has_floor = true;
    for (std::size_t k = 0; k < grid.free.cells.size(); ++k) {
      if (grid.free.cells[k]) free_cells.push_back(k);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoFloor) throw;
  }
  if (!has_floor || free_cells.empty()) {
    cams.assign(static_cast<std::size_t>(params.num_cameras), bounding_box(pc).center());
    return cams;
  }
  const auto w = static_cast<std::size_t>(grid.free.width);
  for (int c = 0; c < params.num_cameras; ++c) {
    const std::size_t k = free_cells[uniform_index(rng, free_cells.size())];
    cams.push_back({grid.center_x(static_cast<int>(k % w)), grid.center_y(static_cast<int>(k / w)),
                    grid.floor_z + params.camera_height});
  }
  return cams;
}

std::vector<std::size_t> visible_indices(const PointCloud& pc, const std::vector<Vec3>& cameras,
                                         const ScanSimParams& params) {
  params.validate();
  constexpr double pi = std::numbers::pi;
  const std::size_t az = static_cast<std::size_t>(params.azimuth_bins);
  const std::size_t el = static_cast<std::size_t>(params.elevation_bins);
  std::vector<bool> seen(pc.size(), false);
  std::vector<std::size_t> nearest(az * el);
  std::vector<double> depth(az * el);
  for (const auto& cam : cameras) {
    std::fill(nearest.begin(), nearest.end(), std::numeric_limits<std::size_t>::max());
    std::fill(depth.begin(), depth.end(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const auto& p = pc.positions[i];
      const double dx = p[0] - cam[0], dy = p[1] - cam[1], dz = p[2] - cam[2];
      const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
      std::size_t ba = 0, be = 0;
      if (r > 0.0) {
        const double azimuth = std::atan2(dy, dx);
        const double elevation = std::asin(std::clamp(dz / r, -1.0, 1.0));
        ba = std::min(az - 1, static_cast<std::size_t>((azimuth + pi) / (2.0 * pi) * static_cast<double>(az)));
        be = std::min(el - 1, static_cast<std::size_t>((elevation + 0.5 * pi) / pi * static_cast<double>(el)));
      }
      const std::size_t bin = ba * el + be;
      // Strict comparison keeps the lowest index among equidistant points.
      if (r < depth[bin]) {
        depth[bin] = r;
        nearest[bin] = i;
      }
    }
    for (std::size_t i : nearest) {
      if (i != std::numeric_limits<std::size_t>::max()) seen[i] = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

ScanResult virtual_scan_detailed(const PointCloud& pc, const ScanSimParams& params, Rng& rng) {
  params.validate();
  if (pc.empty()) throw Error(ErrorCode::EmptyResult, "virtual scan of an empty cloud");
  ScanResult res;
  res.cameras = place_cameras(pc, params, rng);
  const auto visible = visible_indices(pc, res.cameras, params);
  if (pc.colors) res.cloud.colors.emplace();
  for (std::size_t i : visible) {
    if (params.keep_prob < 1.0 && uniform01(rng) >= params.keep_prob) continue;
    Vec3 p = pc.positions[i];
    if (params.noise_sigma > 0.0) {
      for (auto& v : p) v += normal(rng, params.noise_sigma);
    }
    res.cloud.push_back(p, pc.labels[i], pc.colors ? (*pc.colors)[i] : Rgb{});
    res.source_index.push_back(i);
  }
  if (res.cloud.empty()) throw Error(ErrorCode::EmptyResult, "no point survived the virtual scan");
  return res;
}

PointCloud virtual_scan(const PointCloud& pc, const ScanSimParams& params, Rng& rng) {
  return virtual_scan_detailed(pc, params, rng).cloud;
}

void RigidAugConfig::validate() const {
  if (!(max_rotation >= 0.0)) throw Error(ErrorCode::InvalidArgument, "max_rotation must be >= 0");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw Error(ErrorCode::InvalidArgument, "bad scale range");
  if (!(translation_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "translation_sigma must be >= 0");
}

Vec3 RigidTransform::apply(const Vec3& p) const {
  const double c = std::cos(rotation_z), s = std::sin(rotation_z);
  return {scale * (c * p[0] - s * p[1]) + translation[0], scale * (s * p[0] + c * p[1]) + translation[1],
          scale * p[2] + translation[2]};
}

RigidTransform draw_rigid(const RigidAugConfig& cfg, Rng& rng) {
  cfg.validate();
  RigidTransform t;
  t.rotation_z = cfg.max_rotation * uniform01(rng);
  t.scale = uniform(rng, cfg.scale_min, cfg.scale_max);
  for (auto& v : t.translation) v = cfg.translation_sigma > 0.0 ? normal(rng, cfg.translation_sigma) : 0.0;
  return t;
}

PointCloud apply_rigid(const PointCloud& pc, const RigidTransform& t) {
  PointCloud out = pc;
  for (auto& p : out.positions) p = t.apply(p);
  return out;
}

PointCloud random_rigid(const PointCloud& pc, const RigidAugConfig& cfg, Rng& rng) {
  return apply_rigid(pc, draw_rigid(cfg, rng));
}

}  // namespace dgseg
