#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dgseg/error.hpp"
#include "dgseg/synthgen.hpp"
#include "dgseg/train.hpp"
#include "test_util.hpp"

using namespace dgseg;

namespace {

std::vector<PointCloud> toy_scenes(int n, std::uint64_t seed) {
  std::vector<PointCloud> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Rng cap(seed + static_cast<std::uint64_t>(i));
    out.push_back(cap_points(generate_scene(SceneStyle::source_clean(), rng), 6000, cap));
  }
  return out;
}

TrainConfig toy_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.warmup_epochs = 1;
  cfg.batch_scenes = 5;
  cfg.points_per_scene = 256;
  cfg.base_lr = 2e-3;
  cfg.cinmix.dbscan = {0.2, 20};
  cfg.scan.azimuth_bins = 120;
  cfg.scan.elevation_bins = 60;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("two epochs write two log records") {
  const auto scenes = toy_scenes(10, 1);
  const TrainResult r = train(toy_config(2), scenes, 7);
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].epoch == 1);
  CHECK(r.log[1].epoch == 2);
  CHECK(r.model.all_finite());
  CHECK(r.bank.any_initialized());
  CHECK(r.log[1].proto_loss > 0.0);

  testutil::TempDir dir;
  write_train_log(r.log, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "epoch,ce_loss,proto_loss,lr");
  int rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 2);
}

TEST_CASE("fixed seed replays exactly") {
  const auto scenes = toy_scenes(6, 2);
  TrainConfig cfg = toy_config(2);
  cfg.batch_scenes = 3;
  const TrainResult a = train(cfg, scenes, 11), b = train(cfg, scenes, 11);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].ce_loss == b.log[i].ce_loss);
    CHECK(a.log[i].proto_loss == b.log[i].proto_loss);
  }
  for (int p = 0; p < EncoderModel::kNumParams; ++p) CHECK(a.model.params()[p] == b.model.params()[p]);
}

TEST_CASE("training cross entropy decreases") {
  const auto scenes = toy_scenes(10, 3);
  TrainConfig cfg = toy_config(10);
  cfg.proto_train = false;
  cfg.rectify = false;
  cfg.mix = MixMode::None;
  std::vector<double> drops;
  for (std::uint64_t seed : {1, 2, 3}) {
    const TrainResult r = train(cfg, scenes, seed);
    drops.push_back(r.log.front().ce_loss - r.log.back().ce_loss);
  }
  std::sort(drops.begin(), drops.end());
  CHECK(drops[1] > 0.0);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.warmup_epochs = cfg.epochs;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.proto_train = false;
  CHECK_THROWS_AS(cfg.validate(), Error);  // rectify still on
  cfg.rectify = false;
  CHECK_NOTHROW(cfg.validate());
  cfg.use_ce = false;
  CHECK_THROWS_AS(cfg.validate(), Error);

  const TrainConfig parsed = TrainConfig::from_json(nlohmann::json::parse(
      R"({"epochs": 4, "warmup_epochs": 2, "mix": "cuboid", "cinmix": {"eps": 0.3, "min_pts": 12}})"));
  CHECK(parsed.epochs == 4);
  CHECK(parsed.mix == MixMode::Cuboid);
  CHECK(parsed.cinmix.dbscan.eps == 0.3);
  CHECK(parsed.cinmix.dbscan.min_pts == 12);
  const TrainConfig again = TrainConfig::from_json(parsed.to_json());
  CHECK(again.to_json() == parsed.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json::parse(R"({"mix": "blend"})")), Error);
  CHECK_THROWS_AS(train(TrainConfig{}, std::vector<PointCloud>{}, 1), Error);
}

}  // TEST_SUITE
