#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dgseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline dgseg::PointCloud random_cloud(std::size_t n, dgseg::Rng& rng, double extent = 5.0, bool colors = false) {
  dgseg::PointCloud pc;
  if (colors) pc.colors.emplace();
  for (std::size_t i = 0; i < n; ++i) {
    const dgseg::Vec3 p{dgseg::uniform(rng, -extent, extent), dgseg::uniform(rng, -extent, extent),
                        dgseg::uniform(rng, 0.0, extent)};
    const std::size_t r = dgseg::uniform_index(rng, 9);
    const dgseg::Label l = r == 8 ? dgseg::kIgnoreLabel : static_cast<dgseg::Label>(r);
    pc.push_back(p, l,
                 {static_cast<std::uint8_t>(rng() % 256), static_cast<std::uint8_t>(rng() % 256),
                  static_cast<std::uint8_t>(rng() % 256)});
  }
  return pc;
}

// Points on an axis-aligned floor rectangle at height z.
inline void add_floor(dgseg::PointCloud& pc, double x0, double y0, double x1, double y1, double z, double step) {
  for (double x = x0 + 0.5 * step; x < x1; x += step) {
    for (double y = y0 + 0.5 * step; y < y1; y += step) pc.push_back({x, y, z}, dgseg::kFloor);
  }
}

// Surface-free solid block of points of one label.
inline void add_block(dgseg::PointCloud& pc, dgseg::Vec3 lo, dgseg::Vec3 hi, double step, dgseg::Label label) {
  for (double x = lo[0]; x <= hi[0] + 1e-9; x += step) {
    for (double y = lo[1]; y <= hi[1] + 1e-9; y += step) {
      for (double z = lo[2]; z <= hi[2] + 1e-9; z += step) pc.push_back({x, y, z}, label);
    }
  }
}

}  // namespace testutil
