// Command-line front end: generate, augment, train, eval, ablate, report.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgseg/cinmix.hpp"
#include "dgseg/error.hpp"
#include "dgseg/eval.hpp"
#include "dgseg/pattern_aug.hpp"
#include "dgseg/synthgen.hpp"
#include "dgseg/train.hpp"

namespace fs = std::filesystem;
using namespace dgseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
};

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
  return dir;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Classifier classifier_from_string(const std::string& s) {
  if (s == "parametric") return Classifier::Parametric;
  if (s == "rectified") return Classifier::Rectified;
  if (s == "prototype") return Classifier::Prototype;
  throw Error(ErrorCode::ConfigError, "unknown classifier '" + s + "'");
}

int cmd_generate(const Globals& g) {
  nlohmann::json j = read_config(g.config);
  if (!j.contains("splits")) j["splits"] = {{"train", {{"source_clean", 10}}}, {"val", {{"target_real", 5}}}};
  const GenerateConfig cfg = GenerateConfig::from_json(j);
  const Dataset ds = generate_dataset(cfg, g.seed, prepare_out(g.out));
  std::cout << "wrote " << ds.entries.size() << " scenes to " << ds.dir.string() << "\n";
  return kExitOk;
}

struct AugmentOptions {
  std::string input;
  std::string mode = "cinmix";
  std::optional<double> cell_size;
  std::optional<int> num_instances;
  bool scan_sim = false;
  bool rigid = false;
  ScanSimParams scan;
};

// Augments every scene of a dataset directory into a new dataset directory.
// Mixing partners (the vendor, for cinmix) are drawn from the same dataset.
int cmd_augment(const Globals& g, AugmentOptions opt, const CLI::App& sub) {
  TrainConfig cfg = TrainConfig::from_json(read_config(g.config));
  if (opt.cell_size) cfg.cinmix.cell_size = *opt.cell_size;
  if (opt.num_instances) cfg.cinmix.num_instances = *opt.num_instances;
  // Scan flags given on the command line override the config.
  const auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (given("--num-cameras")) cfg.scan.num_cameras = opt.scan.num_cameras;
  if (given("--camera-height")) cfg.scan.camera_height = opt.scan.camera_height;
  if (given("--azimuth-bins")) cfg.scan.azimuth_bins = opt.scan.azimuth_bins;
  if (given("--elevation-bins")) cfg.scan.elevation_bins = opt.scan.elevation_bins;
  if (given("--noise-sigma")) cfg.scan.noise_sigma = opt.scan.noise_sigma;
  if (given("--keep-prob")) cfg.scan.keep_prob = opt.scan.keep_prob;
  if (cfg.cinmix.cell_size <= 0.0) throw Error(ErrorCode::InvalidArgument, "--cell-size must be > 0");
  if (cfg.cinmix.num_instances < 0) throw Error(ErrorCode::InvalidArgument, "--num-instances must be >= 0");
  cfg.scan.validate();
  const MixMode mode = mix_mode_from_string(opt.mode);

  const Dataset in = load_manifest(opt.input);
  std::vector<PointCloud> scenes;
  for (const auto& e : in.entries) scenes.push_back(load_scene(in.path_of(e)));
  Dataset out{prepare_out(g.out), in.entries};
  std::size_t inserted = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Rng rng(derive_seed(g.seed, i));
    const PointCloud& partner = scenes[uniform_index(rng, scenes.size())];
    PointCloud pc;
    switch (mode) {
      case MixMode::Cinmix: {
        const MixResult r = cinmix_detailed(partner, scenes[i], cfg.cinmix, rng);
        inserted += r.placed.size();
        pc = r.cloud;
        break;
      }
      case MixMode::Mix3d: pc = mix3d(scenes[i], partner); break;
      case MixMode::Cuboid: pc = cuboid_mix(scenes[i], partner, cfg.cuboid_splits, rng); break;
      case MixMode::None: pc = scenes[i]; break;
    }
    if (opt.scan_sim) {
      try {
        pc = virtual_scan(pc, cfg.scan, rng);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyResult) throw;
        std::cerr << "warning: virtual scan of " << in.entries[i].file << " left no points; kept unscanned\n";
      }
    }
    if (opt.rigid) pc = random_rigid(pc, cfg.rigid, rng);
    save_scene(pc, out.path_of(out.entries[i]));
  }
  save_manifest(out);
  std::cout << "wrote " << scenes.size() << " scenes to " << out.dir.string();
  if (mode == MixMode::Cinmix) std::cout << " (" << inserted << " instances inserted)";
  std::cout << "\n";
  return kExitOk;
}

int cmd_train(const Globals& g) {
  const TrainConfig cfg = TrainConfig::from_json(read_config(g.config));
  if (cfg.dataset.empty()) throw Error(ErrorCode::ConfigError, "config needs 'dataset'");
  const fs::path out = prepare_out(g.out);
  const TrainResult r = train(cfg, g.seed, [](const EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " ce " << e.ce_loss << " proto " << e.proto_loss << " lr " << e.lr << "\n";
  });
  save_model(r.model, out / "model.bin");
  save_bank(r.bank, out / "bank.bin");
  write_train_log(r.log, out / "train_log.csv");
  write_json(cfg.to_json(), out / "config.json");
  for (const auto& w : r.bank.warnings) std::cerr << "warning: " << w << "\n";
  if (!cfg.eval_dataset.empty()) {
    const auto scenes = prepare_scenes(load_manifest(cfg.eval_dataset), cfg.eval_split, cfg.features);
    std::vector<ResultRow> rows;
    for (const auto& [style, res] : evaluate_by_style(r.model, &r.bank, cfg.classifier(), scenes)) {
      rows.push_back(aggregate(cfg.name, style, {res}));
    }
    write_results_csv(rows, out / "results.csv");
  }
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& model_path, const std::string& bank_path,
             const std::string& dataset, const std::string& split, const std::string& classifier) {
  const TrainConfig cfg = TrainConfig::from_json(read_config(g.config));
  const EncoderModel model = load_model(model_path);
  std::optional<PrototypeBank> bank;
  if (!bank_path.empty()) bank = load_bank(bank_path);
  const Classifier mode = classifier.empty() ? cfg.classifier() : classifier_from_string(classifier);
  const fs::path data = dataset.empty() ? cfg.eval_dataset : fs::path(dataset);
  if (data.empty()) throw Error(ErrorCode::ConfigError, "no dataset given");
  const Dataset ds = load_manifest(data);
  const fs::path out = prepare_out(g.out);

  std::vector<ResultRow> rows;
  nlohmann::json detail = nlohmann::json::array();
  for (const auto& [style, res] :
       evaluate_by_style(model, bank ? &*bank : nullptr, mode, prepare_scenes(ds, split, cfg.features))) {
    rows.push_back(aggregate(cfg.name, style, {res}));
    detail.push_back({{"target", style}, {"miou", res.miou}, {"per_class_iou", res.per_class_iou},
                      {"present", res.present}, {"confusion", res.confusion}});
  }
  if (mode != Classifier::Parametric && (!bank || !bank->any_initialized())) {
    std::cerr << "warning: prototype bank uninitialized, using the global classifier\n";
  }
  write_results_csv(rows, out / "results.csv");
  write_json(detail, out / "eval.json");
  for (const auto& r : rows) std::cout << r.target << " mIoU " << r.miou << "\n";
  return kExitOk;
}

int cmd_ablate(const Globals& g, bool nonparam_only) {
  AblationConfig cfg = AblationConfig::from_json(read_config(g.config));
  if (nonparam_only) cfg.nonparam_only = true;
  const auto rows = run_ablation(cfg, g.seed, [](const std::string& msg) { std::cerr << msg << "\n"; });
  report(rows, prepare_out(g.out));
  std::cout << results_markdown(rows);
  return kExitOk;
}

int cmd_report(const Globals& g, const std::string& input) {
  report(read_results_csv(input), prepare_out(g.out));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-generalized indoor point cloud segmentation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--out", g.out, "Output directory");

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  AugmentOptions aug_opt;
  auto* aug = app.add_subcommand("augment", "Augment every scene of a dataset");
  aug->add_option("--input", aug_opt.input, "Input dataset directory")->required();
  aug->add_option("--mode", aug_opt.mode, "cinmix, mix3d, cuboid or none");
  aug->add_option("--cell-size", aug_opt.cell_size, "Floor grid cell size for cinmix");
  aug->add_option("--num-instances", aug_opt.num_instances, "Instances per cinmix client (0 draws from 1-4)");
  aug->add_flag("--scan-sim", aug_opt.scan_sim, "Apply the virtual scan after mixing");
  aug->add_option("--num-cameras", aug_opt.scan.num_cameras, "Virtual scan cameras");
  aug->add_option("--camera-height", aug_opt.scan.camera_height, "Camera height above the floor");
  aug->add_option("--azimuth-bins", aug_opt.scan.azimuth_bins, "Azimuth bins of the z-buffer");
  aug->add_option("--elevation-bins", aug_opt.scan.elevation_bins, "Elevation bins of the z-buffer");
  aug->add_option("--noise-sigma", aug_opt.scan.noise_sigma, "Jitter of surviving points");
  aug->add_option("--keep-prob", aug_opt.scan.keep_prob, "Dropout keep probability");
  aug->add_flag("--rigid", aug_opt.rigid, "Apply a random rigid transform last");
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string model_path, bank_path, dataset, split = "val", classifier;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained model");
  ev->add_option("--model", model_path, "model.bin")->required();
  ev->add_option("--bank", bank_path, "bank.bin");
  ev->add_option("--dataset", dataset, "Dataset directory (default: eval_dataset of the config)");
  ev->add_option("--split", split, "Split to evaluate");
  ev->add_option("--classifier", classifier, "parametric, rectified or prototype");
  bool nonparam_only = false;
  auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
  ab->add_flag("--nonparam-only", nonparam_only, "Prototype rows use the non-parametric classifier only");
  std::string report_in;
  auto* rep = app.add_subcommand("report", "Render results.csv as markdown and SVG charts");
  rep->add_option("--in", report_in, "results.csv")->required();
  for (auto* sub : {gen, aug, tr, ev, ab, rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_generate(g);
    if (*aug) return cmd_augment(g, aug_opt, *aug);
    if (*tr) return cmd_train(g);
    if (*ev) return cmd_eval(g, model_path, bank_path, dataset, split, classifier);
    if (*ab) return cmd_ablate(g, nonparam_only);
    if (*rep) return cmd_report(g, report_in);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_io() ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
