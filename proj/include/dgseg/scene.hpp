#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgseg {

using Vec3 = std::array<double, 3>;
using Rgb = std::array<std::uint8_t, 3>;
using Label = std::uint8_t;

inline constexpr int kNumClasses = 8;
inline constexpr Label kIgnoreLabel = 255;

// Label space shared by source and target domains.
enum ClassId : Label {
  kWall = 0,
  kFloor = 1,
  kChair = 2,
  kSofa = 3,
  kTable = 4,
  kDoor = 5,
  kWindow = 6,
  kBookshelf = 7,
};

std::string_view class_name(int class_id);
bool is_valid_label(int label);
bool is_thing_class(int class_id);
// Thing classes that stand on the floor and may be transplanted between scenes.
bool is_mixable_class(int class_id);
inline constexpr std::array<int, 4> kMixableClasses = {kChair, kSofa, kTable, kBookshelf};

struct Aabb {
  Vec3 min{};
  Vec3 max{};

  Vec3 center() const;
  Vec3 extent() const;
};

struct PointCloud {
  std::vector<Vec3> positions;
  std::optional<std::vector<Rgb>> colors;
  std::vector<Label> labels;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool has_colors() const { return colors.has_value(); }

  // Appends a point; a color is required iff the cloud carries colors.
  void push_back(const Vec3& p, Label label, const Rgb& color = {128, 128, 128});
  void reserve(std::size_t n);

  // Throws dgseg::Error on any invariant violation.
  void validate() const;
};

PointCloud subset(const PointCloud& pc, std::span<const std::size_t> indices);
// Concatenation; the result carries colors only if both inputs do.
PointCloud concat(const PointCloud& a, const PointCloud& b);

PointCloud load_scene(const std::filesystem::path& path);
void save_scene(const PointCloud& pc, const std::filesystem::path& path);

// In-memory variants of the IPC1 codec.
PointCloud parse_ipc1(std::string_view text);
std::string format_ipc1(const PointCloud& pc);

std::vector<std::size_t> indices_with_label(const PointCloud& pc, Label label);
std::vector<std::size_t> class_indices(const PointCloud& pc, int class_id);
Aabb bounding_box(const PointCloud& pc);
Aabb bounding_box(std::span<const Vec3> points);

// A dataset directory: `*.ipc1` scenes plus `manifest.json`.
struct DatasetEntry {
  std::string file;
  std::string split;
  std::string style;
};

struct Dataset {
  std::filesystem::path dir;
  std::vector<DatasetEntry> entries;

  std::vector<DatasetEntry> split(std::string_view name) const;
  std::filesystem::path path_of(const DatasetEntry& e) const { return dir / e.file; }
};

Dataset load_manifest(const std::filesystem::path& dir);
void save_manifest(const Dataset& ds);
std::vector<PointCloud> load_split(const Dataset& ds, std::string_view split);

}  // namespace dgseg
