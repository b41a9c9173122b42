#include "dgseg/occupancy.hpp"

#include <algorithm>
#include <climits>

#include "dgseg/error.hpp"

namespace dgseg {

namespace {

Raster dilate3(const Raster& in) {
  Raster out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy) {
        for (int dx = -1; dx <= 1 && !any; ++dx) any = in.at(x + dx, y + dy);
      }
      out.set(x, y, any);
    }
  }
  return out;
}

Raster erode3(const Raster& in) {
  Raster out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1 && all; ++dx) all = in.at(x + dx, y + dy);
      }
      out.set(x, y, all);
    }
  }
  return out;
}

}  // namespace

std::size_t Raster::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

Footprint rasterize_footprint(std::span<const Vec3> local_points, double rotation_z, double cell_size) {
  if (local_points.empty()) throw Error(ErrorCode::InvalidArgument, "footprint of an empty point set");
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "cell size must be positive");
  const double c = std::cos(rotation_z), s = std::sin(rotation_z);
  std::vector<std::pair<int, int>> offsets;
  offsets.reserve(local_points.size());
  int min_x = INT_MAX, min_y = INT_MAX, max_x = INT_MIN, max_y = INT_MIN;
  for (const auto& p : local_points) {
    const int ox = offset_cell(c * p[0] - s * p[1], cell_size);
    const int oy = offset_cell(s * p[0] + c * p[1], cell_size);
    offsets.emplace_back(ox, oy);
    min_x = std::min(min_x, ox);
    min_y = std::min(min_y, oy);
    max_x = std::max(max_x, ox);
    max_y = std::max(max_y, oy);
  }
  // One cell of padding so the closing can grow into it.
  Raster raw(max_x - min_x + 3, max_y - min_y + 3);
  for (auto [ox, oy] : offsets) raw.set(ox - min_x + 1, oy - min_y + 1, true);
  const Raster closed = erode3(dilate3(raw));

  int x0 = INT_MAX, y0 = INT_MAX, x1 = INT_MIN, y1 = INT_MIN;
  for (int y = 0; y < closed.height; ++y) {
    for (int x = 0; x < closed.width; ++x) {
      if (!closed.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  Footprint fp;
  fp.mask = Raster(x1 - x0 + 1, y1 - y0 + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) fp.mask.set(x - x0, y - y0, closed.at(x, y));
  }
  fp.anchor_x = -min_x + 1 - x0;
  fp.anchor_y = -min_y + 1 - y0;
  return fp;
}

int FloorOccupancyGrid::cell_x(double x) const {
  return std::clamp(static_cast<int>(std::floor((x - origin_x) / cell_size)), 0, free.width - 1);
}

int FloorOccupancyGrid::cell_y(double y) const {
  return std::clamp(static_cast<int>(std::floor((y - origin_y) / cell_size)), 0, free.height - 1);
}

FloorOccupancyGrid build_floor_grid(const PointCloud& client, double cell_size, double occupy_height) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "cell size must be positive");
  std::vector<double> floor_z;
  for (std::size_t i = 0; i < client.size(); ++i) {
    if (client.labels[i] == kFloor) floor_z.push_back(client.positions[i][2]);
  }
  if (floor_z.empty()) throw Error(ErrorCode::NoFloor, "client scene has no floor points");

  FloorOccupancyGrid grid;
  const auto mid = floor_z.begin() + static_cast<std::ptrdiff_t>(floor_z.size() / 2);
  std::nth_element(floor_z.begin(), mid, floor_z.end());
  grid.floor_z = *mid;
  if (floor_z.size() % 2 == 0) {
    grid.floor_z = 0.5 * (grid.floor_z + *std::max_element(floor_z.begin(), mid));
  }

  const Aabb box = bounding_box(client);
  grid.origin_x = box.min[0];
  grid.origin_y = box.min[1];
  grid.cell_size = cell_size;
  const int w = static_cast<int>(std::floor((box.max[0] - box.min[0]) / cell_size)) + 1;
  const int h = static_cast<int>(std::floor((box.max[1] - box.min[1]) / cell_size)) + 1;
  grid.free = Raster(w, h);

  Raster has_floor(w, h), blocked(w, h);
  const double z_hi = grid.floor_z + occupy_height;
  for (std::size_t i = 0; i < client.size(); ++i) {
    const auto& p = client.positions[i];
    const int cx = grid.cell_x(p[0]), cy = grid.cell_y(p[1]);
    if (client.labels[i] == kFloor) {
      has_floor.set(cx, cy, true);
    } else if (p[2] >= grid.floor_z && p[2] <= z_hi) {
      blocked.set(cx, cy, true);
    }
  }
  for (std::size_t k = 0; k < grid.free.cells.size(); ++k) {
    grid.free.cells[k] = (has_floor.cells[k] && !blocked.cells[k]) ? 1 : 0;
  }
  return grid;
}

Raster erode(const Raster& free, const Footprint& footprint) {
  if (footprint.empty()) throw Error(ErrorCode::InvalidArgument, "erosion by an empty footprint");
  const int w = free.width, h = free.height;

  // Horizontal runs of the footprint, as offsets from the anchor.
  struct Run {
    int dy, dx0, dx1;
  };
  std::vector<Run> runs;
  const Raster& m = footprint.mask;
  for (int y = 0; y < m.height; ++y) {
    int x = 0;
    while (x < m.width) {
      if (!m.at(x, y)) {
        ++x;
        continue;
      }
      int end = x;
      while (end + 1 < m.width && m.at(end + 1, y)) ++end;
      runs.push_back({y - footprint.anchor_y, x - footprint.anchor_x, end - footprint.anchor_x});
      x = end + 1;
    }
  }

  // prefix[y][x] = number of free cells in row y before column x.
  std::vector<int> prefix(static_cast<std::size_t>(h) * static_cast<std::size_t>(w + 1), 0);
  auto pre = [&](int y, int x) -> int& {
    return prefix[static_cast<std::size_t>(y) * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(x)];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) pre(y, x + 1) = pre(y, x) + (free.at(x, y) ? 1 : 0);
  }

  Raster out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool fits = true;
      for (const Run& r : runs) {
        const int yy = y + r.dy, a = x + r.dx0, b = x + r.dx1;
        if (yy < 0 || yy >= h || a < 0 || b >= w || pre(yy, b + 1) - pre(yy, a) != b - a + 1) {
          fits = false;
          break;
        }
      }
      out.set(x, y, fits);
    }
  }
  return out;
}

FloorOccupancyGrid erode_free_map(const FloorOccupancyGrid& grid, const Footprint& footprint) {
  FloorOccupancyGrid out = grid;
  out.free = erode(grid.free, footprint);
  return out;
}

}  // namespace dgseg
