#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "dgseg/error.hpp"
#include "dgseg/scene.hpp"
#include "test_util.hpp"

using namespace dgseg;

namespace {

ErrorCode parse_error(const std::string& text, int* line = nullptr) {
  try {
    parse_ipc1(text);
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.code();
  }
  FAIL("expected a parse error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("label space") {
  CHECK(class_name(kWall) == "wall");
  CHECK(class_name(kBookshelf) == "bookshelf");
  CHECK_FALSE(is_thing_class(kWall));
  CHECK_FALSE(is_thing_class(kFloor));
  for (int c = kChair; c <= kBookshelf; ++c) CHECK(is_thing_class(c));
  CHECK(is_valid_label(255));
  CHECK_FALSE(is_valid_label(8));
  CHECK_FALSE(is_mixable_class(kDoor));
  CHECK(is_mixable_class(kTable));
}

TEST_CASE("minimal valid file") {
  const PointCloud pc = parse_ipc1("ipc1\npoints 3\nfields x y z label\n0 0 0 0\n1 0 0 1\n0 1 0.5 2\n");
  REQUIRE(pc.size() == 3);
  CHECK(pc.labels == std::vector<Label>{0, 1, 2});
  CHECK(pc.positions[2][2] == doctest::Approx(0.5));
  CHECK_FALSE(pc.has_colors());
}

TEST_CASE("colored file") {
  const PointCloud pc = parse_ipc1("ipc1\npoints 1\nfields x y z r g b label\n1.5 -2 3 10 20 255 255\n");
  REQUIRE(pc.has_colors());
  CHECK((*pc.colors)[0] == Rgb{10, 20, 255});
  CHECK(pc.labels[0] == kIgnoreLabel);
}

TEST_CASE("declared count larger than records") {
  int line = 0;
  CHECK(parse_error("ipc1\npoints 5\nfields x y z label\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n", &line) ==
        ErrorCode::FieldCountMismatch);
  CHECK(line > 0);
}

TEST_CASE("label out of range names the line") {
  int line = 0;
  CHECK(parse_error("ipc1\npoints 2\nfields x y z label\n0 0 0 1\n0 0 0 9\n", &line) == ErrorCode::LabelOutOfRange);
  CHECK(line == 5);
}

TEST_CASE("header and record errors") {
  CHECK(parse_error("ipc2\npoints 1\nfields x y z label\n0 0 0 0\n") == ErrorCode::MalformedHeader);
  CHECK(parse_error("ipc1\npoints x\nfields x y z label\n0 0 0 0\n") == ErrorCode::MalformedHeader);
  CHECK(parse_error("ipc1\npoints 1\nfields x y label\n0 0 0\n") == ErrorCode::MalformedHeader);
  CHECK(parse_error("ipc1\npoints 1\nfields x y z label\n0 0 0\n") == ErrorCode::FieldCountMismatch);
  CHECK(parse_error("ipc1\npoints 1\nfields x y z label\nnan 0 0 0\n") == ErrorCode::NonFiniteCoordinate);
  CHECK(parse_error("ipc1\npoints 1\nfields x y z label\ninf 0 0 0\n") == ErrorCode::NonFiniteCoordinate);
  CHECK(parse_error("ipc1\npoints 1\nfields x y z r g b label\n0 0 0 1 2 300 0\n") == ErrorCode::MalformedRecord);
}

TEST_CASE("single point round trip") {
  testutil::TempDir dir;
  PointCloud pc;
  pc.push_back({1.2345678, -0.5, 3.25}, kChair);
  save_scene(pc, dir / "one.ipc1");
  const PointCloud back = load_scene(dir / "one.ipc1");
  REQUIRE(back.size() == 1);
  CHECK(back.labels == pc.labels);
  for (int a = 0; a < 3; ++a) CHECK(std::abs(back.positions[0][a] - pc.positions[0][a]) <= 1e-6);
}

TEST_CASE("round trip of 10k random points") {
  Rng rng(11);
  for (bool colors : {false, true}) {
    const PointCloud pc = testutil::random_cloud(10000, rng, 50.0, colors);
    const PointCloud back = parse_ipc1(format_ipc1(pc));
    REQUIRE(back.size() == pc.size());
    CHECK(back.labels == pc.labels);
    CHECK(back.has_colors() == colors);
    if (colors) CHECK(*back.colors == *pc.colors);
    double worst = 0.0;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      for (int a = 0; a < 3; ++a) worst = std::max(worst, std::abs(back.positions[i][a] - pc.positions[i][a]));
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("formatting is locale independent and stable") {
  PointCloud pc;
  pc.push_back({0.1, -1e-7, 12345.5}, kWall);
  const std::string text = format_ipc1(pc);
  CHECK(text.find(',') == std::string::npos);
  CHECK(format_ipc1(parse_ipc1(text)) == text);
}

TEST_CASE("unwritable path") {
  PointCloud pc;
  pc.push_back({0, 0, 0}, kWall);
  testutil::TempDir dir;
  try {
    {
      std::ofstream(dir / "file") << "x";
    }
    save_scene(pc, dir / "file" / "x.ipc1");
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoFailure);
    CHECK(e.is_io());
  }
  CHECK_THROWS_AS(load_scene(dir / "missing.ipc1"), Error);
}

TEST_CASE("class_indices") {
  PointCloud pc;
  for (Label l : {1, 2, 2}) pc.push_back({0, 0, 0}, l);
  CHECK(class_indices(pc, 2) == std::vector<std::size_t>{1, 2});
  PointCloud ones;
  ones.push_back({0, 0, 0}, 1);
  ones.push_back({0, 0, 0}, 1);
  CHECK(class_indices(ones, 2).empty());
  CHECK_THROWS_AS(class_indices(pc, 8), Error);
  CHECK_THROWS_AS(class_indices(pc, -1), Error);
}

TEST_CASE("class_indices matches a linear scan and partitions the cloud") {
  Rng rng(5);
  const PointCloud pc = testutil::random_cloud(1000, rng);
  std::vector<int> seen(pc.size(), 0);
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      if (pc.labels[i] == c) expect.push_back(i);
    }
    const auto got = class_indices(pc, c);
    CHECK(got == expect);
    for (auto i : got) ++seen[i];
  }
  for (auto i : indices_with_label(pc, kIgnoreLabel)) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("bounding_box") {
  PointCloud pc;
  pc.push_back({0, 0, 0}, 0);
  pc.push_back({1, 2, 3}, 0);
  Aabb b = bounding_box(pc);
  CHECK(b.min == Vec3{0, 0, 0});
  CHECK(b.max == Vec3{1, 2, 3});

  PointCloud single;
  single.push_back({4, -5, 6}, 0);
  b = bounding_box(single);
  CHECK(b.min == b.max);
  CHECK(b.min == Vec3{4, -5, 6});

  Rng rng(2);
  const PointCloud r = testutil::random_cloud(100, rng);
  Vec3 lo = r.positions[0], hi = r.positions[0];
  for (const auto& p : r.positions) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  b = bounding_box(r);
  CHECK(b.min == lo);
  CHECK(b.max == hi);
  CHECK_THROWS_AS(bounding_box(PointCloud{}), Error);
}

TEST_CASE("subset and concat") {
  Rng rng(9);
  const PointCloud a = testutil::random_cloud(10, rng, 1.0, true);
  const PointCloud b = testutil::random_cloud(5, rng, 1.0, false);
  const std::vector<std::size_t> idx{7, 2};
  const PointCloud s = subset(a, idx);
  CHECK(s.positions[0] == a.positions[7]);
  CHECK((*s.colors)[1] == (*a.colors)[2]);
  const PointCloud c = concat(a, b);
  CHECK(c.size() == 15);
  CHECK_FALSE(c.has_colors());
  CHECK(c.labels[10] == b.labels[0]);
}

TEST_CASE("manifest round trip") {
  testutil::TempDir dir;
  Dataset ds;
  ds.dir = dir.path();
  ds.entries = {{"a.ipc1", "train", "source_clean"}, {"b.ipc1", "val", "target_real"}, {"c.ipc1", "train", "x"}};
  save_manifest(ds);
  const Dataset back = load_manifest(dir.path());
  REQUIRE(back.entries.size() == 3);
  CHECK(back.split("train").size() == 2);
  CHECK(back.split("val")[0].file == "b.ipc1");
  CHECK(back.entries[1].style == "target_real");
  CHECK_THROWS_AS(load_manifest(dir / "missing"), Error);
}

}  // TEST_SUITE
