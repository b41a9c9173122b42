#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgseg/cinmix.hpp"
#include "dgseg/encoder.hpp"
#include "dgseg/features.hpp"
#include "dgseg/pattern_aug.hpp"
#include "dgseg/prototypes.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

enum class MixMode { None, Cinmix, Mix3d, Cuboid };

std::string to_string(MixMode m);
MixMode mix_mode_from_string(const std::string& s);

// How the trained model labels points at inference.
enum class Classifier {
  Parametric,     // global classifier only
  Rectified,      // global classifier reweighted by prototype similarity
  Prototype,      // argmax of prototype similarity (non-parametric only)
};

std::string to_string(Classifier c);

struct TrainConfig {
  std::string name = "run";
  std::filesystem::path dataset;       // training data (directory with manifest.json)
  std::string train_split = "train";
  std::filesystem::path eval_dataset;  // optional; empty = no evaluation after training
  std::string eval_split = "val";

  int epochs = 30;
  int batch_scenes = 8;
  int points_per_scene = 4096;
  int warmup_epochs = 5;
  double base_lr = 6e-4;
  double weight_decay = 0.01;
  double poly_power = 0.9;

  int hidden1 = 64;
  int hidden2 = 128;
  int embed_dim = 32;

  MixMode mix = MixMode::Cinmix;
  bool scan_sim = true;
  bool proto_train = true;
  bool use_ce = true;  // false: non-parametric only after warm-up
  bool rectify = true;
  double proto_loss_weight = 1.0;
  int proto_k = 3;
  double proto_lambda = 20.0;
  double proto_momentum = 0.999;
  int sinkhorn_iters = 3;

  CinmixConfig cinmix;
  std::array<int, 3> cuboid_splits = {2, 2, 1};
  ScanSimParams scan;
  RigidAugConfig rigid;
  FeatureConfig features;

  void validate() const;
  Classifier classifier() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct EpochLog {
  int epoch = 0;
  double ce_loss = 0.0;
  double proto_loss = 0.0;  // 0 until the bank is initialized
  double lr = 0.0;          // learning rate of the epoch's last step
};

struct TrainResult {
  EncoderModel model;
  PrototypeBank bank;
  std::vector<EpochLog> log;
};

using ProgressFn = std::function<void(const EpochLog&)>;

// Trains on already-loaded scenes; fully determined by `seed`.
TrainResult train(const TrainConfig& cfg, const std::vector<PointCloud>& scenes, std::uint64_t seed,
                  const ProgressFn& progress = {});
// Loads cfg.dataset / cfg.train_split first.
TrainResult train(const TrainConfig& cfg, std::uint64_t seed, const ProgressFn& progress = {});

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace dgseg
