#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dgseg/scene.hpp"

namespace dgseg {

// Row-major 2D boolean raster; x is the fast axis.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  Raster() = default;
  Raster(int w, int h, bool value = false)
      : width(w), height(h), cells(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), value ? 1 : 0) {}

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool at(int x, int y) const { return in_bounds(x, y) && cells[index(x, y)] != 0; }
  void set(int x, int y, bool v) { cells[index(x, y)] = v ? 1 : 0; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  std::size_t count() const;
  bool operator==(const Raster&) const = default;
};

// A set of cells relative to an anchor cell. Offsets of set cells from the
// anchor are (x - anchor_x, y - anchor_y); the anchor need not be set.
struct Footprint {
  Raster mask;
  int anchor_x = 0;
  int anchor_y = 0;

  bool empty() const { return mask.count() == 0; }
};

// Rasterizes the xy projection of local-frame points (origin at the anchor
// cell centre) after rotating them by `rotation_z`, then closes the result
// with a 3x3 structuring element.
Footprint rasterize_footprint(std::span<const Vec3> local_points, double rotation_z, double cell_size);

// Cell index along one axis for a coordinate measured from a cell centre.
inline int offset_cell(double coord, double cell_size) {
  return static_cast<int>(std::floor(coord / cell_size + 0.5));
}

struct FloorOccupancyGrid {
  double origin_x = 0.0;  // corner of cell (0,0)
  double origin_y = 0.0;
  double cell_size = 0.1;
  double floor_z = 0.0;
  Raster free;

  int cell_x(double x) const;
  int cell_y(double y) const;
  double center_x(int cx) const { return origin_x + (cx + 0.5) * cell_size; }
  double center_y(int cy) const { return origin_y + (cy + 0.5) * cell_size; }
};

// Free cells hold at least one floor point and no non-floor point whose z lies
// within [floor_z, floor_z + occupy_height].
FloorOccupancyGrid build_floor_grid(const PointCloud& client, double cell_size, double occupy_height = 2.0);

// Binary erosion of `free` by the footprint: a cell stays free iff the
// footprint anchored there covers only free cells (cells outside the raster
// count as blocked).
Raster erode(const Raster& free, const Footprint& footprint);
FloorOccupancyGrid erode_free_map(const FloorOccupancyGrid& grid, const Footprint& footprint);

}  // namespace dgseg
