#include "dgseg/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dgseg/error.hpp"

namespace dgseg {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "wall", "floor", "chair", "sofa", "table", "door", "window", "bookshelf"};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

void append_fixed(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  if (ec != std::errc()) throw Error(ErrorCode::NonFiniteCoordinate, "cannot format value");
  out.append(buf, ptr);
}

void append_int(std::string& out, int v) {
  char buf[16];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace

std::string_view class_name(int class_id) {
  if (class_id == kIgnoreLabel) return "ignore";
  if (class_id < 0 || class_id >= kNumClasses) throw Error(ErrorCode::InvalidClassId, std::to_string(class_id));
  return kClassNames[static_cast<std::size_t>(class_id)];
}

bool is_valid_label(int label) { return (label >= 0 && label < kNumClasses) || label == kIgnoreLabel; }

bool is_thing_class(int class_id) { return class_id >= kChair && class_id < kNumClasses; }

bool is_mixable_class(int class_id) {
  return std::find(kMixableClasses.begin(), kMixableClasses.end(), class_id) != kMixableClasses.end();
}

Vec3 Aabb::center() const {
  return {0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]), 0.5 * (min[2] + max[2])};
}

Vec3 Aabb::extent() const { return {max[0] - min[0], max[1] - min[1], max[2] - min[2]}; }

void PointCloud::push_back(const Vec3& p, Label label, const Rgb& color) {
  positions.push_back(p);
  labels.push_back(label);
  if (colors) colors->push_back(color);
}

void PointCloud::reserve(std::size_t n) {
  positions.reserve(n);
  labels.reserve(n);
  if (colors) colors->reserve(n);
}

void PointCloud::validate() const {
  if (labels.size() != positions.size() || (colors && colors->size() != positions.size())) {
    throw Error(ErrorCode::LengthMismatch, "positions, colors and labels differ in length");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw Error(ErrorCode::NonFiniteCoordinate, "point " + std::to_string(i));
    }
    if (!is_valid_label(labels[i])) {
      throw Error(ErrorCode::LabelOutOfRange, "point " + std::to_string(i) + " has label " + std::to_string(labels[i]));
    }
  }
}

PointCloud subset(const PointCloud& pc, std::span<const std::size_t> indices) {
  PointCloud out;
  if (pc.colors) out.colors.emplace();
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.positions.push_back(pc.positions[i]);
    out.labels.push_back(pc.labels[i]);
    if (pc.colors) out.colors->push_back((*pc.colors)[i]);
  }
  return out;
}

PointCloud concat(const PointCloud& a, const PointCloud& b) {
  PointCloud out;
  out.positions = a.positions;
  out.positions.insert(out.positions.end(), b.positions.begin(), b.positions.end());
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  if (a.colors && b.colors) {
    out.colors = *a.colors;
    out.colors->insert(out.colors->end(), b.colors->begin(), b.colors->end());
  }
  return out;
}

PointCloud parse_ipc1(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  // A trailing newline produces one empty tail entry; blank tail lines are tolerated.
  while (!lines.empty() && split_ws(lines.back()).empty()) lines.pop_back();

  if (lines.empty() || split_ws(lines[0]) != std::vector<std::string_view>{"ipc1"}) {
    throw Error(ErrorCode::MalformedHeader, "expected 'ipc1'", 1);
  }
  if (lines.size() < 2) throw Error(ErrorCode::MalformedHeader, "missing 'points <N>'", 2);
  auto count_tokens = split_ws(lines[1]);
  long long n = 0;
  if (count_tokens.size() != 2 || count_tokens[0] != "points" || !parse_number(count_tokens[1], n) || n < 1) {
    throw Error(ErrorCode::MalformedHeader, "expected 'points <N>' with N >= 1", 2);
  }
  if (lines.size() < 3) throw Error(ErrorCode::MalformedHeader, "missing 'fields' line", 3);
  auto fields = split_ws(lines[2]);
  bool with_color = false;
  if (fields == std::vector<std::string_view>{"fields", "x", "y", "z", "label"}) {
    with_color = false;
  } else if (fields == std::vector<std::string_view>{"fields", "x", "y", "z", "r", "g", "b", "label"}) {
    with_color = true;
  } else {
    throw Error(ErrorCode::MalformedHeader, "unsupported fields line", 3);
  }
  const std::size_t width = with_color ? 7 : 4;
  const auto count = static_cast<std::size_t>(n);
  if (lines.size() - 3 != count) {
    int line_no = static_cast<int>(std::min(lines.size(), count + 3)) + 1;
    throw Error(ErrorCode::FieldCountMismatch,
                "header declares " + std::to_string(count) + " points, file has " + std::to_string(lines.size() - 3),
                line_no);
  }

  PointCloud pc;
  if (with_color) pc.colors.emplace();
  pc.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int line_no = static_cast<int>(i) + 4;
    auto toks = split_ws(lines[i + 3]);
    if (toks.size() != width) {
      throw Error(ErrorCode::FieldCountMismatch,
                  "expected " + std::to_string(width) + " fields, got " + std::to_string(toks.size()), line_no);
    }
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      if (!parse_number(toks[a], p[a])) throw Error(ErrorCode::MalformedRecord, "bad coordinate", line_no);
      if (!std::isfinite(p[a])) throw Error(ErrorCode::NonFiniteCoordinate, "coordinate is not finite", line_no);
    }
    Rgb rgb{};
    if (with_color) {
      for (int c = 0; c < 3; ++c) {
        int v = 0;
        if (!parse_number(toks[3 + c], v) || v < 0 || v > 255) {
          throw Error(ErrorCode::MalformedRecord, "color must be an integer in [0,255]", line_no);
        }
        rgb[c] = static_cast<std::uint8_t>(v);
      }
    }
    int label = 0;
    if (!parse_number(toks[width - 1], label)) throw Error(ErrorCode::MalformedRecord, "bad label", line_no);
    if (!is_valid_label(label)) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label), line_no);
    }
    pc.push_back(p, static_cast<Label>(label), rgb);
  }
  return pc;
}

std::string format_ipc1(const PointCloud& pc) {
  pc.validate();
  std::string out;
  out.reserve(pc.size() * 40 + 64);
  out += "ipc1\npoints ";
  append_int(out, static_cast<int>(pc.size()));
  out += pc.colors ? "\nfields x y z r g b label\n" : "\nfields x y z label\n";
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.positions[i];
    append_fixed(out, p[0]);
    out += ' ';
    append_fixed(out, p[1]);
    out += ' ';
    append_fixed(out, p[2]);
    if (pc.colors) {
      for (auto c : (*pc.colors)[i]) {
        out += ' ';
        append_int(out, c);
      }
    }
    out += ' ';
    append_int(out, pc.labels[i]);
    out += '\n';
  }
  return out;
}

PointCloud load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return parse_ipc1(ss.str());
}

void save_scene(const PointCloud& pc, const std::filesystem::path& path) {
  const std::string text = format_ipc1(pc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::vector<std::size_t> indices_with_label(const PointCloud& pc, Label label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pc.labels.size(); ++i) {
    if (pc.labels[i] == label) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> class_indices(const PointCloud& pc, int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) throw Error(ErrorCode::InvalidClassId, std::to_string(class_id));
  return indices_with_label(pc, static_cast<Label>(class_id));
}

Aabb bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyCloud, "bounding box of an empty cloud");
  Aabb box{points[0], points[0]};
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], p[a]);
      box.max[a] = std::max(box.max[a], p[a]);
    }
  }
  return box;
}

Aabb bounding_box(const PointCloud& pc) { return bounding_box(std::span<const Vec3>(pc.positions)); }

std::vector<DatasetEntry> Dataset::split(std::string_view name) const {
  std::vector<DatasetEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

Dataset load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  Dataset ds;
  ds.dir = dir;
  try {
    for (const auto& s : j.at("scenes")) {
      ds.entries.push_back({s.at("file").get<std::string>(), s.at("split").get<std::string>(),
                            s.value("style", std::string{})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return ds;
}

void save_manifest(const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "ipc1";
  j["scenes"] = nlohmann::json::array();
  nlohmann::json splits = nlohmann::json::object();
  splits["train"] = nlohmann::json::array();
  splits["val"] = nlohmann::json::array();
  for (const auto& e : ds.entries) {
    j["scenes"].push_back({{"file", e.file}, {"split", e.split}, {"style", e.style}});
    splits[e.split].push_back(e.file);
  }
  j["splits"] = splits;
  const auto path = ds.dir / "manifest.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::vector<PointCloud> load_split(const Dataset& ds, std::string_view split) {
  std::vector<PointCloud> out;
  for (const auto& e : ds.split(split)) out.push_back(load_scene(ds.path_of(e)));
  return out;
}

}  // namespace dgseg
