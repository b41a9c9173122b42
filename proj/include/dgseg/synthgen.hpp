#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgseg/pattern_aug.hpp"
#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

// Two domain styles: a clean, regular, densely sampled "synthetic" room and a
// cluttered, irregular, sparse and scanned "real" room.
struct SceneStyle {
  std::string name = "source_clean";
  double density = 200.0;     // surface points per square metre
  double regularity = 1.0;    // >= 0.5: grid-regular layout, jittered by (1 - regularity)
  int clutter_min = 0;        // unlabelled (ignore) boxes
  int clutter_max = 0;
  double room_min = 4.5;      // side length range, metres
  double room_max = 6.5;
  double wall_height = 2.6;
  bool apply_scan_sim = false;
  ScanSimParams scan;

  void validate() const;
  static SceneStyle source_clean();
  static SceneStyle target_real();
  static SceneStyle by_name(const std::string& name);
};

void to_json(nlohmann::json& j, const SceneStyle& s);
void from_json(const nlohmann::json& j, SceneStyle& s);

PointCloud generate_scene(const SceneStyle& style, Rng& rng);

struct GenerateConfig {
  // split -> style name -> scene count
  std::map<std::string, std::map<std::string, int>> counts;
  std::map<std::string, SceneStyle> styles;  // overrides of the presets
  int max_points_per_scene = 20000;

  static GenerateConfig from_json(const nlohmann::json& j);
  SceneStyle style(const std::string& name) const;
};

// Random subsample (order preserved) down to at most `max_points`.
PointCloud cap_points(const PointCloud& pc, std::size_t max_points, Rng& rng);

// Writes every scene plus manifest.json into `out_dir`; fully determined by seed.
Dataset generate_dataset(const GenerateConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace dgseg
