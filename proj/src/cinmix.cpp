#include "dgseg/cinmix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgseg/error.hpp"

namespace dgseg {

std::vector<InstanceGroup> extract_instance_groups(const PointCloud& vendor, const DbscanParams& params,
                                                   double cell_size, const std::string& source_scene,
                                                   double cluster_subsample) {
  if (!(cluster_subsample > 0.0 && cluster_subsample <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "cluster_subsample must be in (0, 1]");
  }
  const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / cluster_subsample)));
  std::vector<InstanceGroup> groups;
  for (int cls : kMixableClasses) {
    std::vector<std::size_t> idx;
    const auto all = class_indices(vendor, cls);
    for (std::size_t k = 0; k < all.size(); k += stride) idx.push_back(all[k]);
    if (idx.empty()) continue;

    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(vendor.positions[i]);
    const auto clusters = dbscan(pts, params);

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(clusters.num_clusters));
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (clusters.labels[k] >= 0) members[static_cast<std::size_t>(clusters.labels[k])].push_back(k);
    }
    for (const auto& member : members) {
      InstanceGroup g;
      g.class_id = cls;
      g.source_scene = source_scene;
      double cx = 0.0, cy = 0.0, min_z = std::numeric_limits<double>::infinity();
      for (auto k : member) {
        cx += pts[k][0];
        cy += pts[k][1];
        min_z = std::min(min_z, pts[k][2]);
      }
      cx /= static_cast<double>(member.size());
      cy /= static_cast<double>(member.size());
      if (vendor.colors) g.colors.emplace();
      g.points.reserve(member.size());
      for (auto k : member) {
        g.points.push_back({pts[k][0] - cx, pts[k][1] - cy, pts[k][2] - min_z});
        if (vendor.colors) g.colors->push_back((*vendor.colors)[idx[k]]);
      }
      g.footprint = rasterize_footprint(g.points, 0.0, cell_size);
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

std::optional<Placement> place_instance(const FloorOccupancyGrid& grid, const InstanceGroup& inst, Rng& rng) {
  Placement pl;
  pl.rotation_z = uniform_angle(rng);
  pl.footprint = rasterize_footprint(inst.points, pl.rotation_z, grid.cell_size);
  const Raster eroded = erode(grid.free, pl.footprint);
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < eroded.cells.size(); ++k) {
    if (eroded.cells[k]) candidates.push_back(k);
  }
  if (candidates.empty()) return std::nullopt;
  const std::size_t k = candidates[uniform_index(rng, candidates.size())];
  pl.cell_x = static_cast<int>(k % static_cast<std::size_t>(eroded.width));
  pl.cell_y = static_cast<int>(k / static_cast<std::size_t>(eroded.width));
  pl.translation = {grid.center_x(pl.cell_x), grid.center_y(pl.cell_y), grid.floor_z};
  return pl;
}

std::vector<Vec3> transform_instance(const InstanceGroup& inst, const Placement& placement) {
  const double c = std::cos(placement.rotation_z), s = std::sin(placement.rotation_z);
  std::vector<Vec3> out;
  out.reserve(inst.points.size());
  for (const auto& p : inst.points) {
    out.push_back({c * p[0] - s * p[1] + placement.translation[0], s * p[0] + c * p[1] + placement.translation[1],
                   p[2] + placement.translation[2]});
  }
  return out;
}

void occupy(FloorOccupancyGrid& grid, const Placement& placement) {
  const Raster& m = placement.footprint.mask;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      const int gx = placement.cell_x + x - placement.footprint.anchor_x;
      const int gy = placement.cell_y + y - placement.footprint.anchor_y;
      if (grid.free.in_bounds(gx, gy)) grid.free.set(gx, gy, false);
    }
  }
}

MixResult cinmix_with_groups(const std::vector<InstanceGroup>& groups, const PointCloud& client,
                             const CinmixConfig& cfg, Rng& rng) {
  MixResult res;
  res.initial_grid = build_floor_grid(client, cfg.cell_size, cfg.occupy_height);
  res.cloud = client;
  if (groups.empty()) return res;

  const int count = cfg.num_instances > 0 ? cfg.num_instances : 1 + static_cast<int>(uniform_index(rng, 4));
  FloorOccupancyGrid grid = res.initial_grid;
  for (int m = 0; m < count; ++m) {
    const std::size_t gi = uniform_index(rng, groups.size());
    const InstanceGroup& g = groups[gi];
    ++res.attempts;
    auto placement = place_instance(grid, g, rng);
    if (!placement) continue;
    occupy(grid, *placement);
    const auto pts = transform_instance(g, *placement);
    PlacedInstance placed{gi, *placement, res.cloud.size(), pts.size()};
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Rgb color = g.colors ? (*g.colors)[k] : Rgb{128, 128, 128};
      res.cloud.push_back(pts[k], static_cast<Label>(g.class_id), color);
    }
    res.placed.push_back(std::move(placed));
  }
  return res;
}

MixResult cinmix_detailed(const PointCloud& vendor, const PointCloud& client, const CinmixConfig& cfg, Rng& rng) {
  const auto groups = extract_instance_groups(vendor, cfg.dbscan, cfg.cell_size, {}, cfg.cluster_subsample);
  return cinmix_with_groups(groups, client, cfg, rng);
}

PointCloud cinmix(const PointCloud& vendor, const PointCloud& client, const CinmixConfig& cfg, Rng& rng) {
  return cinmix_detailed(vendor, client, cfg, rng).cloud;
}

namespace {

PointCloud translated(const PointCloud& pc, const Vec3& t) {
  PointCloud out = pc;
  for (auto& p : out.positions) {
    for (int a = 0; a < 3; ++a) p[a] += t[a];
  }
  return out;
}

Vec3 negated(const Vec3& v) { return {-v[0], -v[1], -v[2]}; }

// Interior split planes along each axis, ascending.
std::array<std::vector<double>, 3> draw_splits(const Aabb& box, const std::array<int, 3>& splits, Rng& rng) {
  std::array<std::vector<double>, 3> planes;
  for (int a = 0; a < 3; ++a) {
    for (int k = 1; k < splits[a]; ++k) planes[a].push_back(uniform(rng, box.min[a], box.max[a]));
    std::sort(planes[a].begin(), planes[a].end());
  }
  return planes;
}

int cell_of(const Vec3& p, const std::array<std::vector<double>, 3>& planes, const std::array<int, 3>& splits) {
  std::array<int, 3> c{};
  for (int a = 0; a < 3; ++a) {
    c[a] = static_cast<int>(std::upper_bound(planes[a].begin(), planes[a].end(), p[a]) - planes[a].begin());
  }
  return c[0] + splits[0] * (c[1] + splits[1] * c[2]);
}

}  // namespace

PointCloud mix3d(const PointCloud& a, const PointCloud& b) {
  return concat(translated(a, negated(bounding_box(a).center())), translated(b, negated(bounding_box(b).center())));
}

CuboidMixResult cuboid_mix_detailed(const PointCloud& a, const PointCloud& b, std::array<int, 3> splits, Rng& rng) {
  for (int s : splits) {
    if (s < 1) throw Error(ErrorCode::InvalidArgument, "cuboid splits must be >= 1 per axis");
  }
  const Aabb box_a = bounding_box(a);
  const Vec3 ca = box_a.center(), cb = bounding_box(b).center();
  const PointCloud b_aligned = translated(b, {ca[0] - cb[0], ca[1] - cb[1], ca[2] - cb[2]});
  const Aabb box_b = bounding_box(b_aligned);

  const auto planes_a = draw_splits(box_a, splits, rng);
  const auto planes_b = draw_splits(box_b, splits, rng);
  const int cells = splits[0] * splits[1] * splits[2];

  CuboidMixResult res;
  res.cell_from_a.resize(static_cast<std::size_t>(cells));
  for (int c = 0; c < cells; ++c) res.cell_from_a[static_cast<std::size_t>(c)] = uniform01(rng) < 0.5;

  if (a.colors && b.colors) res.cloud.colors.emplace();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int c = cell_of(a.positions[i], planes_a, splits);
    if (!res.cell_from_a[static_cast<std::size_t>(c)]) continue;
    res.cloud.push_back(a.positions[i], a.labels[i], a.colors ? (*a.colors)[i] : Rgb{});
    res.provenance.push_back({0, i, c});
  }
  for (std::size_t i = 0; i < b_aligned.size(); ++i) {
    const int c = cell_of(b_aligned.positions[i], planes_b, splits);
    if (res.cell_from_a[static_cast<std::size_t>(c)]) continue;
    res.cloud.push_back(b_aligned.positions[i], b_aligned.labels[i], b.colors ? (*b.colors)[i] : Rgb{});
    res.provenance.push_back({1, i, c});
  }
  return res;
}

PointCloud cuboid_mix(const PointCloud& a, const PointCloud& b, std::array<int, 3> splits, Rng& rng) {
  return cuboid_mix_detailed(a, b, splits, rng).cloud;
}

}  // namespace dgseg
