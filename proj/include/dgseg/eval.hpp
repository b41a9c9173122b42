#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgseg/encoder.hpp"
#include "dgseg/features.hpp"
#include "dgseg/prototypes.hpp"
#include "dgseg/scene.hpp"
#include "dgseg/train.hpp"

namespace dgseg {

struct EvalResult {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};  // [gt][pred]
  std::array<double, kNumClasses> per_class_iou{};
  std::array<bool, kNumClasses> present{};  // class occurs in the ground truth
  double miou = 0.0;

  // Accumulates; ignore-labelled ground truth is skipped. Call finalize() after.
  void add(std::span<const Label> predictions, std::span<const Label> ground_truth);
  void finalize();
};

EvalResult evaluate(std::span<const Label> predictions, std::span<const Label> ground_truth);

// Argmax labels for precomputed features. Rectified and Prototype modes fall
// back to the global classifier when the bank has no initialized class; the
// fallback is reported through `fell_back`.
std::vector<Label> predict(const EncoderModel& model, const PrototypeBank* bank, const PointFeatures& features,
                           Classifier mode, bool* fell_back = nullptr);

// Voxel downsample, features, predict, then map back to every input point.
std::vector<Label> infer(const EncoderModel& model, const PrototypeBank* bank, const PointCloud& pc, Classifier mode,
                         const FeatureConfig& fc = {}, bool* fell_back = nullptr);

// Model-independent evaluation inputs, computed once per test scene.
struct PreparedScene {
  std::string style;
  VoxelSample voxels;
  PointFeatures features;
  std::vector<Label> labels;  // full-resolution ground truth
};

std::vector<PreparedScene> prepare_scenes(const Dataset& ds, const std::string& split, const FeatureConfig& fc);

// One evaluation per style present among the scenes, in sorted style order.
std::vector<std::pair<std::string, EvalResult>> evaluate_by_style(const EncoderModel& model, const PrototypeBank* bank,
                                                                  Classifier mode,
                                                                  const std::vector<PreparedScene>& scenes);

struct ResultRow {
  std::string method;
  std::string target;
  int seeds = 1;
  std::array<double, kNumClasses> iou{};
  double miou = 0.0;
  double miou_sd = 0.0;
};

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::string results_markdown(const std::vector<ResultRow>& rows);
std::string iou_chart_svg(const ResultRow& row);

// results.csv, results.md and one SVG chart per row.
void report(const std::vector<ResultRow>& rows, const std::filesystem::path& out_dir);

// Mean (and sample standard deviation of mIoU) over seeds of the same cell.
ResultRow aggregate(const std::string& method, const std::string& target, const std::vector<EvalResult>& runs);

struct AblationConfig {
  TrainConfig base;
  int seeds = 1;
  bool nonparam_only = false;
  // Extra single-mechanism rows with the mix3d and cuboid baselines.
  bool mix_baselines = false;

  static AblationConfig from_json(const nlohmann::json& j);
};

struct AblationCell {
  std::string method;
  TrainConfig config;   // training settings of the run
  Classifier mode;      // inference mode of the row
};

// Grid {CINMix on/off} x {proto-train on/off} x {rectify on/off, needs proto}.
std::vector<AblationCell> ablation_grid(const AblationConfig& cfg);

using RunLogFn = std::function<void(const std::string&)>;

// Trains every distinct configuration per seed and evaluates it on the
// eval split; rows are ordered as the grid, then by target style.
std::vector<ResultRow> run_ablation(const AblationConfig& cfg, std::uint64_t seed, const RunLogFn& log = {});

}  // namespace dgseg
