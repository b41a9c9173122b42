#include "dgseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include "dgseg/error.hpp"

namespace dgseg {

namespace {

constexpr double kPi = std::numbers::pi;

// Axis-aligned box in an item's local frame; z0 is the bottom.
struct Box {
  double cx, cy, z0, sx, sy, sz;
  bool bottom = false;  // sample the bottom face too
};

struct Pose {
  double x = 0.0, y = 0.0, yaw = 0.0;

  Vec3 apply(double lx, double ly, double lz) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * lx - s * ly + x, s * lx + c * ly + y, lz};
  }
  Pose compose(const Pose& inner) const {
    const Vec3 p = apply(inner.x, inner.y, 0.0);
    return {p[0], p[1], yaw + inner.yaw};
  }
};

struct Item {
  std::vector<Box> boxes;
  Label label = kChair;
  double half_x = 0.0, half_y = 0.0;  // local footprint half extents
  double radius() const { return std::hypot(half_x, half_y); }
};

class SurfaceSampler {
 public:
  SurfaceSampler(PointCloud& out, double density, Rng& rng) : out_(out), density_(density), rng_(rng) {}

  // Uniform samples on the parallelogram origin + a u + b v.
  void rect(const Vec3& origin, const Vec3& u, const Vec3& v, Label label,
            const std::function<bool(double, double)>& reject = {}) {
    const Vec3 n = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const double area = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    const double expected = area * density_;
    auto count = static_cast<std::size_t>(expected);
    if (uniform01(rng_) < expected - static_cast<double>(count)) ++count;
    for (std::size_t i = 0; i < count; ++i) {
      const double a = uniform01(rng_), b = uniform01(rng_);
      if (reject && reject(a, b)) continue;
      out_.push_back({origin[0] + a * u[0] + b * v[0], origin[1] + a * u[1] + b * v[1], origin[2] + a * u[2] + b * v[2]},
                     label);
    }
  }

  // Uniform samples on the segment origin + a u, at linear density sqrt(density).
  void line(const Vec3& origin, const Vec3& u, Label label) {
    const double expected = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) * std::sqrt(density_);
    auto count = static_cast<std::size_t>(expected);
    if (uniform01(rng_) < expected - static_cast<double>(count)) ++count;
    for (std::size_t i = 0; i < count; ++i) {
      const double a = uniform01(rng_);
      out_.push_back({origin[0] + a * u[0], origin[1] + a * u[1], origin[2] + a * u[2]}, label);
    }
  }

  void box(const Box& bx, const Pose& pose, Label label) {
    const double x0 = bx.cx - 0.5 * bx.sx, x1 = bx.cx + 0.5 * bx.sx;
    const double y0 = bx.cy - 0.5 * bx.sy, y1 = bx.cy + 0.5 * bx.sy;
    const double z0 = bx.z0, z1 = bx.z0 + bx.sz;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    auto dir = [&](double lx, double ly, double lz) { return Vec3{c * lx - s * ly, s * lx + c * ly, lz}; };
    const Vec3 ex = dir(bx.sx, 0, 0), ey = dir(0, bx.sy, 0), ez = dir(0, 0, bx.sz);
    rect(pose.apply(x0, y0, z1), ex, ey, label);  // top
    if (bx.bottom) rect(pose.apply(x0, y0, z0), ex, ey, label);
    rect(pose.apply(x0, y0, z0), ex, ez, label);
    rect(pose.apply(x0, y1, z0), ex, ez, label);
    rect(pose.apply(x0, y0, z0), ey, ez, label);
    rect(pose.apply(x1, y0, z0), ey, ez, label);
    // Boxes standing on the floor get their contact outline, so the lowest
    // sample sits exactly on the floor.
    if (z0 == 0.0 && !bx.bottom) {
      line(pose.apply(x0, y0, 0), ex, label);
      line(pose.apply(x0, y1, 0), ex, label);
      line(pose.apply(x0, y0, 0), ey, label);
      line(pose.apply(x1, y0, 0), ey, label);
    }
  }

  void item(const Item& it, const Pose& pose) {
    for (const auto& b : it.boxes) box(b, pose, it.label);
  }

 private:
  PointCloud& out_;
  double density_;
  Rng& rng_;
};

// Furniture builders. Local frame: footprint centred on the origin, standing
// on z = 0, "back" towards -y.
Item make_chair(Rng& rng) {
  Item it;
  it.label = kChair;
  if (uniform01(rng) < 0.7) {
    const double w = uniform(rng, 0.42, 0.50), seat = uniform(rng, 0.42, 0.47), top = uniform(rng, 0.85, 0.95);
    const double leg = 0.04;
    it.boxes.push_back({0, 0, seat - 0.05, w, w, 0.05, true});
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        it.boxes.push_back({sx * (0.5 * w - 0.5 * leg), sy * (0.5 * w - 0.5 * leg), 0, leg, leg, seat - 0.05});
      }
    }
    it.boxes.push_back({0, -0.5 * w + 0.02, seat, w, 0.04, top - seat});
    it.half_x = it.half_y = 0.5 * w;
  } else {
    // Armchair: solid upholstered base, back and arms.
    const double w = uniform(rng, 0.65, 0.80), d = uniform(rng, 0.62, 0.72);
    it.boxes.push_back({0, 0, 0, w, d, 0.42});
    it.boxes.push_back({0, -0.5 * d + 0.08, 0.42, w, 0.16, 0.42});
    for (int sx : {-1, 1}) it.boxes.push_back({sx * (0.5 * w - 0.06), 0.05, 0.42, 0.12, d - 0.1, 0.2});
    it.half_x = 0.5 * w;
    it.half_y = 0.5 * d;
  }
  return it;
}

Item make_table(Rng& rng) {
  Item it;
  it.label = kTable;
  double w, d, h;
  if (uniform01(rng) < 0.65) {
    w = uniform(rng, 1.2, 1.6);
    d = uniform(rng, 0.75, 0.9);
    h = uniform(rng, 0.72, 0.76);
  } else {
    w = uniform(rng, 0.9, 1.2);
    d = uniform(rng, 0.5, 0.65);
    h = uniform(rng, 0.38, 0.45);
  }
  const double leg = 0.06;
  it.boxes.push_back({0, 0, h - 0.04, w, d, 0.04, true});
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      it.boxes.push_back({sx * (0.5 * w - 0.05), sy * (0.5 * d - 0.05), 0, leg, leg, h - 0.04});
    }
  }
  it.half_x = 0.5 * w;
  it.half_y = 0.5 * d;
  return it;
}

Item make_sofa(Rng& rng) {
  Item it;
  it.label = kSofa;
  const double w = uniform01(rng) < 0.6 ? uniform(rng, 1.8, 2.2) : uniform(rng, 1.3, 1.6);
  const double d = uniform(rng, 0.85, 0.95);
  it.boxes.push_back({0, 0, 0, w, d, 0.42});
  it.boxes.push_back({0, -0.5 * d + 0.1, 0.42, w, 0.2, 0.45});
  for (int sx : {-1, 1}) it.boxes.push_back({sx * (0.5 * w - 0.1), 0.1, 0.42, 0.2, d - 0.2, 0.2});
  it.half_x = 0.5 * w;
  it.half_y = 0.5 * d;
  return it;
}

Item make_bookshelf(Rng& rng) {
  Item it;
  it.label = kBookshelf;
  const double w = uniform(rng, 0.7, 1.2), d = uniform(rng, 0.3, 0.4), h = uniform(rng, 1.6, 2.1);
  it.boxes.push_back({0, -0.5 * d + 0.01, 0, w, 0.02, h});
  for (int sx : {-1, 1}) it.boxes.push_back({sx * (0.5 * w - 0.01), 0, 0, 0.02, d, h});
  it.boxes.push_back({0, 0, h - 0.02, w, d, 0.02, true});
  it.boxes.push_back({0, 0, 0, w, d, 0.08});
  const int shelves = static_cast<int>(std::floor(h / 0.38));
  for (int s = 1; s < shelves; ++s) {
    it.boxes.push_back({0, 0, s * (h / shelves), w - 0.04, d - 0.02, 0.02, true});
    // A run of books on the shelf.
    const double books = uniform(rng, 0.3, 0.9) * (w - 0.06);
    it.boxes.push_back({-0.5 * (w - 0.06) + 0.5 * books, 0.02, s * (h / shelves) + 0.02, books, d - 0.1,
                        uniform(rng, 0.18, 0.3)});
  }
  it.half_x = 0.5 * w;
  it.half_y = 0.5 * d;
  return it;
}

Item make_clutter(Rng& rng) {
  Item it;
  it.label = kIgnoreLabel;
  const double w = uniform(rng, 0.25, 0.6), d = uniform(rng, 0.25, 0.6), h = uniform(rng, 0.2, 1.0);
  it.boxes.push_back({0, 0, 0, w, d, h});
  it.half_x = 0.5 * w;
  it.half_y = 0.5 * d;
  return it;
}

struct Opening {
  int wall;
  double t0, t1, z0, z1;
};

struct Room {
  double width, length, height;

  double wall_length(int wall) const { return (wall % 2 == 0) ? width : length; }
  // Wall-local frame: x along the wall, y pointing into the room.
  Pose wall_pose(int wall) const {
    switch (wall) {
      case 0: return {0.0, 0.0, 0.0};
      case 1: return {width, 0.0, 0.5 * kPi};
      case 2: return {width, length, kPi};
      default: return {0.0, length, 1.5 * kPi};
    }
  }
};

void sample_room_shell(SurfaceSampler& s, const Room& room, const std::vector<Opening>& openings) {
  s.rect({0, 0, 0}, {room.width, 0, 0}, {0, room.length, 0}, kFloor);
  for (int w = 0; w < 4; ++w) {
    const Pose pose = room.wall_pose(w);
    const double len = room.wall_length(w);
    const Vec3 origin = pose.apply(0, 0, 0);
    const Vec3 along = Vec3{pose.apply(len, 0, 0)[0] - origin[0], pose.apply(len, 0, 0)[1] - origin[1], 0};
    auto inside_opening = [&](double a, double b) {
      const double t = a * len, z = b * room.height;
      for (const auto& o : openings) {
        if (o.wall == w && t >= o.t0 && t <= o.t1 && z >= o.z0 && z <= o.z1) return true;
      }
      return false;
    };
    s.rect(origin, along, {0, 0, room.height}, kWall, inside_opening);
  }
}

void sample_door(SurfaceSampler& s, const Room& room, const Opening& o) {
  Item door;
  door.label = kDoor;
  door.boxes.push_back({0.5 * (o.t0 + o.t1), 0.02, 0.0, o.t1 - o.t0, 0.04, o.z1 - o.z0});
  s.item(door, room.wall_pose(o.wall));
}

void sample_window(SurfaceSampler& s, const Room& room, const Opening& o) {
  const Pose pose = room.wall_pose(o.wall);
  constexpr double depth = 0.12;
  const double w = o.t1 - o.t0, h = o.z1 - o.z0;
  auto p = [&](double t, double y, double z) { return pose.apply(t, y, z); };
  auto v = [&](double t, double y, double z) {
    const Vec3 a = pose.apply(t, y, z), b = pose.apply(0, 0, 0);
    return Vec3{a[0] - b[0], a[1] - b[1], z};
  };
  s.rect(p(o.t0, -depth, o.z0), v(w, 0, 0), v(0, 0, h), kWindow);      // pane
  s.rect(p(o.t0, -depth, o.z0), v(w, 0, 0), v(0, depth, 0), kWindow);  // sill
  s.rect(p(o.t0, -depth, o.z1), v(w, 0, 0), v(0, depth, 0), kWindow);  // head
  s.rect(p(o.t0, -depth, o.z0), v(0, depth, 0), v(0, 0, h), kWindow);  // jambs
  s.rect(p(o.t1, -depth, o.z0), v(0, depth, 0), v(0, 0, h), kWindow);
}

// Pose that keeps an item inside the room.
Pose random_floor_pose(const Room& room, const Item& it, Rng& rng) {
  const double r = std::min({it.radius(), 0.5 * room.width - 0.05, 0.5 * room.length - 0.05});
  return {uniform(rng, r, room.width - r), uniform(rng, r, room.length - r), uniform_angle(rng)};
}

Pose against_wall(const Room& room, int wall, double t, const Item& it) {
  return room.wall_pose(wall).compose({t, it.half_y + 0.02, 0.0});
}

bool overlaps(const std::vector<Opening>& existing, const Opening& o) {
  for (const auto& e : existing) {
    if (e.wall == o.wall && o.t0 < e.t1 + 0.2 && e.t0 < o.t1 + 0.2) return true;
  }
  return false;
}

Opening random_opening(const Room& room, int wall, double width, double z0, double z1, Rng& rng) {
  const double len = room.wall_length(wall);
  const double t = uniform(rng, 0.5 * width + 0.1, len - 0.5 * width - 0.1);
  return {wall, t - 0.5 * width, t + 0.5 * width, z0, z1};
}

void regular_layout(SurfaceSampler& s, const Room& room, const SceneStyle& style, Rng& rng,
                    std::vector<Opening>& openings) {
  const double jitter = (1.0 - style.regularity) * 0.3;
  auto jit = [&](Pose p) {
    if (jitter > 0.0) {
      p.x += normal(rng, jitter);
      p.y += normal(rng, jitter);
    }
    return p;
  };

  const Item table = make_table(rng);
  const Pose table_pose = jit({0.5 * room.width, 0.5 * room.length, 0.0});
  s.item(table, table_pose);

  // Two chairs on each long side of the table, facing it.
  const Item chair = make_chair(rng);
  const double spacing = std::max(table.half_x, chair.half_x * 2.0 + 0.15);
  for (int side : {-1, 1}) {
    for (int k : {-1, 1}) {
      const double x = table_pose.x + k * 0.5 * spacing;
      const double y = table_pose.y + side * (table.half_y + 0.2);
      s.item(chair, jit({x, y, side < 0 ? 0.0 : kPi}));
    }
  }

  const Item sofa = make_sofa(rng);
  s.item(sofa, against_wall(room, 0, 0.5 * room.width, sofa));
  const Item shelf = make_bookshelf(rng);
  s.item(shelf, against_wall(room, 2, 0.5 * room.width, shelf));

  const Opening door{1, 0.3 * room.length - 0.45, 0.3 * room.length + 0.45, 0.0, 2.0};
  const Opening window{3, 0.5 * room.length - 0.6, 0.5 * room.length + 0.6, 0.9, 2.0};
  openings = {door, window};
  sample_door(s, room, door);
  sample_window(s, room, window);
}

void irregular_layout(SurfaceSampler& s, const Room& room, const SceneStyle& style, Rng& rng,
                      std::vector<Opening>& openings) {
  std::vector<Pose> tables;
  const int n_tables = 1 + static_cast<int>(uniform_index(rng, 2));
  for (int i = 0; i < n_tables; ++i) {
    const Item t = make_table(rng);
    tables.push_back(random_floor_pose(room, t, rng));
    s.item(t, tables.back());
  }
  const int n_chairs = 2 + static_cast<int>(uniform_index(rng, 5));
  for (int i = 0; i < n_chairs; ++i) {
    const Item c = make_chair(rng);
    Pose p = random_floor_pose(room, c, rng);
    if (uniform01(rng) < 0.5) {
      const Pose& t = tables[uniform_index(rng, tables.size())];
      const double ang = uniform_angle(rng), dist = uniform(rng, 0.55, 1.0);
      const double r = c.radius();
      p.x = std::clamp(t.x + dist * std::cos(ang), r, room.width - r);
      p.y = std::clamp(t.y + dist * std::sin(ang), r, room.length - r);
      p.yaw = std::atan2(t.y - p.y, t.x - p.x) - 0.5 * kPi + normal(rng, 0.3);
    }
    s.item(c, p);
  }
  {
    const Item sofa = make_sofa(rng);
    if (uniform01(rng) < 0.6) {
      const int wall = static_cast<int>(uniform_index(rng, 4));
      const double len = room.wall_length(wall);
      const double t = uniform(rng, std::min(sofa.half_x + 0.05, 0.5 * len), std::max(len - sofa.half_x - 0.05, 0.5 * len));
      s.item(sofa, against_wall(room, wall, t, sofa));
    } else {
      s.item(sofa, random_floor_pose(room, sofa, rng));
    }
  }
  const int n_shelves = 1 + static_cast<int>(uniform_index(rng, 2));
  for (int i = 0; i < n_shelves; ++i) {
    const Item shelf = make_bookshelf(rng);
    const int wall = static_cast<int>(uniform_index(rng, 4));
    const double len = room.wall_length(wall);
    const double t = uniform(rng, std::min(shelf.half_x + 0.05, 0.5 * len), std::max(len - shelf.half_x - 0.05, 0.5 * len));
    s.item(shelf, against_wall(room, wall, t, shelf));
  }
  const int clutter = style.clutter_min + static_cast<int>(uniform_index(
                                              rng, static_cast<std::size_t>(style.clutter_max - style.clutter_min + 1)));
  for (int i = 0; i < clutter; ++i) {
    const Item c = make_clutter(rng);
    s.item(c, random_floor_pose(room, c, rng));
  }

  auto add_openings = [&](int count, double width, double z0, double z1) {
    std::vector<Opening> placed;
    for (int i = 0; i < count; ++i) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const Opening o = random_opening(room, static_cast<int>(uniform_index(rng, 4)), width, z0, z1, rng);
        if (overlaps(openings, o)) continue;
        openings.push_back(o);
        placed.push_back(o);
        break;
      }
    }
    return placed;
  };
  for (const auto& o : add_openings(1 + static_cast<int>(uniform_index(rng, 2)), uniform(rng, 0.8, 1.0), 0.0, 2.0)) {
    sample_door(s, room, o);
  }
  for (const auto& o : add_openings(1 + static_cast<int>(uniform_index(rng, 2)), uniform(rng, 0.9, 1.6), 0.8, 2.1)) {
    sample_window(s, room, o);
  }
}

}  // namespace

void SceneStyle::validate() const {
  if (!(density > 0.0)) throw Error(ErrorCode::ConfigError, "style density must be positive");
  if (!(regularity >= 0.0 && regularity <= 1.0)) throw Error(ErrorCode::ConfigError, "regularity must be in [0,1]");
  if (clutter_min < 0 || clutter_max < clutter_min) throw Error(ErrorCode::ConfigError, "bad clutter range");
  if (!(room_min >= 3.0 && room_max >= room_min)) throw Error(ErrorCode::ConfigError, "room sides must be >= 3 m");
  if (!(wall_height >= 2.2)) throw Error(ErrorCode::ConfigError, "wall height must be >= 2.2 m");
  if (apply_scan_sim) scan.validate();
}

SceneStyle SceneStyle::source_clean() { return {}; }

SceneStyle SceneStyle::target_real() {
  SceneStyle s;
  s.name = "target_real";
  s.density = 120.0;
  s.regularity = 0.0;
  s.clutter_min = 2;
  s.clutter_max = 5;
  s.room_min = 3.5;
  s.room_max = 7.0;
  s.apply_scan_sim = true;
  s.scan.num_cameras = 3;
  s.scan.keep_prob = 0.9;
  return s;
}

SceneStyle SceneStyle::by_name(const std::string& name) {
  if (name == "source_clean") return source_clean();
  if (name == "target_real") return target_real();
  throw Error(ErrorCode::ConfigError, "unknown scene style '" + name + "'");
}

void to_json(nlohmann::json& j, const SceneStyle& s) {
  j = {{"name", s.name},
       {"density", s.density},
       {"regularity", s.regularity},
       {"clutter_min", s.clutter_min},
       {"clutter_max", s.clutter_max},
       {"room_min", s.room_min},
       {"room_max", s.room_max},
       {"wall_height", s.wall_height},
       {"apply_scan_sim", s.apply_scan_sim},
       {"scan",
        {{"num_cameras", s.scan.num_cameras},
         {"camera_height", s.scan.camera_height},
         {"azimuth_bins", s.scan.azimuth_bins},
         {"elevation_bins", s.scan.elevation_bins},
         {"noise_sigma", s.scan.noise_sigma},
         {"keep_prob", s.scan.keep_prob}}}};
}

void from_json(const nlohmann::json& j, SceneStyle& s) {
  // Unspecified fields fall back to the preset of the same name.
  s = SceneStyle::by_name(j.value("name", s.name));
  s.density = j.value("density", s.density);
  s.regularity = j.value("regularity", s.regularity);
  s.clutter_min = j.value("clutter_min", s.clutter_min);
  s.clutter_max = j.value("clutter_max", s.clutter_max);
  s.room_min = j.value("room_min", s.room_min);
  s.room_max = j.value("room_max", s.room_max);
  s.wall_height = j.value("wall_height", s.wall_height);
  s.apply_scan_sim = j.value("apply_scan_sim", s.apply_scan_sim);
  if (j.contains("scan")) {
    const auto& sc = j.at("scan");
    s.scan.num_cameras = sc.value("num_cameras", s.scan.num_cameras);
    s.scan.camera_height = sc.value("camera_height", s.scan.camera_height);
    s.scan.azimuth_bins = sc.value("azimuth_bins", s.scan.azimuth_bins);
    s.scan.elevation_bins = sc.value("elevation_bins", s.scan.elevation_bins);
    s.scan.noise_sigma = sc.value("noise_sigma", s.scan.noise_sigma);
    s.scan.keep_prob = sc.value("keep_prob", s.scan.keep_prob);
  }
}

PointCloud generate_scene(const SceneStyle& style, Rng& rng) {
  style.validate();
  const Room room{uniform(rng, style.room_min, style.room_max), uniform(rng, style.room_min, style.room_max),
                  style.wall_height};
  PointCloud pc;
  SurfaceSampler sampler(pc, style.density, rng);
  std::vector<Opening> openings;
  if (style.regularity >= 0.5) {
    regular_layout(sampler, room, style, rng, openings);
  } else {
    irregular_layout(sampler, room, style, rng, openings);
  }
  sample_room_shell(sampler, room, openings);
  if (style.apply_scan_sim) {
    try {
      return virtual_scan(pc, style.scan, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyResult) throw;
    }
  }
  return pc;
}

GenerateConfig GenerateConfig::from_json(const nlohmann::json& j) {
  GenerateConfig cfg;
  try {
    cfg.max_points_per_scene = j.value("max_points_per_scene", cfg.max_points_per_scene);
    if (j.contains("styles")) {
      for (const auto& [name, js] : j.at("styles").items()) {
        nlohmann::json with_name = js;
        if (!with_name.contains("name")) with_name["name"] = name;
        cfg.styles[name] = with_name.get<SceneStyle>();
      }
    }
    for (const auto& [split, styles] : j.at("splits").items()) {
      if (split != "train" && split != "val") throw Error(ErrorCode::ConfigError, "unknown split '" + split + "'");
      for (const auto& [style, count] : styles.items()) {
        const int n = count.get<int>();
        if (n < 0) throw Error(ErrorCode::ConfigError, "negative scene count");
        cfg.counts[split][style] = n;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (cfg.max_points_per_scene < 1) throw Error(ErrorCode::ConfigError, "max_points_per_scene must be >= 1");
  return cfg;
}

SceneStyle GenerateConfig::style(const std::string& name) const {
  auto it = styles.find(name);
  return it != styles.end() ? it->second : SceneStyle::by_name(name);
}

PointCloud cap_points(const PointCloud& pc, std::size_t max_points, Rng& rng) {
  if (pc.size() <= max_points) return pc;
  std::vector<std::size_t> idx(pc.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates, then restore input order.
  for (std::size_t i = 0; i < max_points; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  return subset(pc, idx);
}

Dataset generate_dataset(const GenerateConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  Dataset ds;
  ds.dir = out_dir;
  std::uint64_t scene_index = 0;
  for (const auto& [split, styles] : cfg.counts) {
    for (const auto& [style_name, count] : styles) {
      const SceneStyle style = cfg.style(style_name);
      for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, scene_index++));
        const PointCloud pc =
            cap_points(generate_scene(style, rng), static_cast<std::size_t>(cfg.max_points_per_scene), rng);
        char name[128];
        std::snprintf(name, sizeof(name), "%s_%s_%04d.ipc1", split.c_str(), style_name.c_str(), i);
        save_scene(pc, out_dir / name);
        ds.entries.push_back({name, split, style_name});
      }
    }
  }
  save_manifest(ds);
  return ds;
}

}  // namespace dgseg
