#include "dgseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dgseg/error.hpp"
#include "parallel.hpp"

namespace dgseg {

std::string to_string(MixMode m) {
  switch (m) {
    case MixMode::None: return "none";
    case MixMode::Cinmix: return "cinmix";
    case MixMode::Mix3d: return "mix3d";
    case MixMode::Cuboid: return "cuboid";
  }
  return "none";
}

MixMode mix_mode_from_string(const std::string& s) {
  if (s == "none") return MixMode::None;
  if (s == "cinmix") return MixMode::Cinmix;
  if (s == "mix3d") return MixMode::Mix3d;
  if (s == "cuboid") return MixMode::Cuboid;
  throw Error(ErrorCode::ConfigError, "unknown mix mode '" + s + "'");
}

std::string to_string(Classifier c) {
  switch (c) {
    case Classifier::Parametric: return "parametric";
    case Classifier::Rectified: return "rectified";
    case Classifier::Prototype: return "prototype";
  }
  return "parametric";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_scenes < 1) fail("batch_scenes must be >= 1");
  if (points_per_scene < 1) fail("points_per_scene must be >= 1");
  if (warmup_epochs < 0) fail("warmup_epochs must be >= 0");
  if (proto_train && (warmup_epochs < 1 || warmup_epochs >= epochs)) {
    fail("proto_train needs 1 <= warmup_epochs < epochs");
  }
  if (!(base_lr > 0.0)) fail("base_lr must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(poly_power >= 0.0)) fail("poly_power must be >= 0");
  if (hidden1 < 1 || hidden2 < 1 || embed_dim < 1) fail("layer sizes must be >= 1");
  if (rectify && !proto_train) fail("rectify requires proto_train");
  if (!use_ce && !proto_train) fail("use_ce=false requires proto_train");
  if (!use_ce && rectify) fail("rectify needs the global classifier (use_ce=true)");
  if (proto_k < 1) fail("proto_k must be >= 1");
  if (!(proto_lambda > 0.0)) fail("proto_lambda must be positive");
  if (!(proto_momentum >= 0.0 && proto_momentum <= 1.0)) fail("proto_momentum must be in [0,1]");
  if (sinkhorn_iters < 1) fail("sinkhorn_iters must be >= 1");
  if (!(proto_loss_weight >= 0.0)) fail("proto_loss_weight must be >= 0");
  if (features.k < 1) fail("features.k must be >= 1");
  if (!(features.search_cell > 0.0)) fail("features.search_cell must be positive");
  if (!(cinmix.cell_size > 0.0)) fail("cinmix.cell_size must be positive");
  if (!(cinmix.cluster_subsample > 0.0 && cinmix.cluster_subsample <= 1.0)) fail("cluster_subsample must be in (0,1]");
  if (cinmix.num_instances < 0) fail("num_instances must be >= 0");
  for (int s : cuboid_splits) {
    if (s < 1) fail("cuboid_splits must be >= 1");
  }
  try {
    cinmix.dbscan.validate();
    scan.validate();
    rigid.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

Classifier TrainConfig::classifier() const {
  if (!proto_train) return Classifier::Parametric;
  if (!use_ce) return Classifier::Prototype;
  return rectify ? Classifier::Rectified : Classifier::Parametric;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.name = j.value("name", c.name);
    c.dataset = j.value("dataset", c.dataset.string());
    c.train_split = j.value("train_split", c.train_split);
    c.eval_dataset = j.value("eval_dataset", c.eval_dataset.string());
    c.eval_split = j.value("eval_split", c.eval_split);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_scenes = j.value("batch_scenes", c.batch_scenes);
    c.points_per_scene = j.value("points_per_scene", c.points_per_scene);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.poly_power = j.value("poly_power", c.poly_power);
    c.hidden1 = j.value("hidden1", c.hidden1);
    c.hidden2 = j.value("hidden2", c.hidden2);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.mix = mix_mode_from_string(j.value("mix", to_string(c.mix)));
    c.scan_sim = j.value("scan_sim", c.scan_sim);
    c.proto_train = j.value("proto_train", c.proto_train);
    c.use_ce = j.value("use_ce", c.use_ce);
    c.rectify = j.value("rectify", c.rectify);
    c.proto_loss_weight = j.value("proto_loss_weight", c.proto_loss_weight);
    c.proto_k = j.value("proto_k", c.proto_k);
    c.proto_lambda = j.value("proto_lambda", c.proto_lambda);
    c.proto_momentum = j.value("proto_momentum", c.proto_momentum);
    c.sinkhorn_iters = j.value("sinkhorn_iters", c.sinkhorn_iters);
    if (j.contains("cinmix")) {
      const auto& m = j.at("cinmix");
      c.cinmix.dbscan.eps = m.value("eps", c.cinmix.dbscan.eps);
      c.cinmix.dbscan.min_pts = m.value("min_pts", c.cinmix.dbscan.min_pts);
      c.cinmix.cell_size = m.value("cell_size", c.cinmix.cell_size);
      c.cinmix.occupy_height = m.value("occupy_height", c.cinmix.occupy_height);
      c.cinmix.num_instances = m.value("num_instances", c.cinmix.num_instances);
      c.cinmix.cluster_subsample = m.value("cluster_subsample", c.cinmix.cluster_subsample);
    }
    c.cuboid_splits = j.value("cuboid_splits", c.cuboid_splits);
    if (j.contains("scan")) {
      const auto& s = j.at("scan");
      c.scan.num_cameras = s.value("num_cameras", c.scan.num_cameras);
      c.scan.camera_height = s.value("camera_height", c.scan.camera_height);
      c.scan.azimuth_bins = s.value("azimuth_bins", c.scan.azimuth_bins);
      c.scan.elevation_bins = s.value("elevation_bins", c.scan.elevation_bins);
      c.scan.noise_sigma = s.value("noise_sigma", c.scan.noise_sigma);
      c.scan.keep_prob = s.value("keep_prob", c.scan.keep_prob);
    }
    if (j.contains("rigid")) {
      const auto& r = j.at("rigid");
      c.rigid.max_rotation = r.value("max_rotation", c.rigid.max_rotation);
      c.rigid.scale_min = r.value("scale_min", c.rigid.scale_min);
      c.rigid.scale_max = r.value("scale_max", c.rigid.scale_max);
      c.rigid.translation_sigma = r.value("translation_sigma", c.rigid.translation_sigma);
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      c.features.k = f.value("k", c.features.k);
      c.features.voxel_size = f.value("voxel_size", c.features.voxel_size);
      c.features.search_cell = f.value("search_cell", c.features.search_cell);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"name", name},
          {"dataset", dataset.string()},
          {"train_split", train_split},
          {"eval_dataset", eval_dataset.string()},
          {"eval_split", eval_split},
          {"epochs", epochs},
          {"batch_scenes", batch_scenes},
          {"points_per_scene", points_per_scene},
          {"warmup_epochs", warmup_epochs},
          {"base_lr", base_lr},
          {"weight_decay", weight_decay},
          {"poly_power", poly_power},
          {"hidden1", hidden1},
          {"hidden2", hidden2},
          {"embed_dim", embed_dim},
          {"mix", to_string(mix)},
          {"scan_sim", scan_sim},
          {"proto_train", proto_train},
          {"use_ce", use_ce},
          {"rectify", rectify},
          {"proto_loss_weight", proto_loss_weight},
          {"proto_k", proto_k},
          {"proto_lambda", proto_lambda},
          {"proto_momentum", proto_momentum},
          {"sinkhorn_iters", sinkhorn_iters},
          {"cinmix",
           {{"eps", cinmix.dbscan.eps},
            {"min_pts", cinmix.dbscan.min_pts},
            {"cell_size", cinmix.cell_size},
            {"occupy_height", cinmix.occupy_height},
            {"num_instances", cinmix.num_instances},
            {"cluster_subsample", cinmix.cluster_subsample}}},
          {"cuboid_splits", cuboid_splits},
          {"scan",
           {{"num_cameras", scan.num_cameras},
            {"camera_height", scan.camera_height},
            {"azimuth_bins", scan.azimuth_bins},
            {"elevation_bins", scan.elevation_bins},
            {"noise_sigma", scan.noise_sigma},
            {"keep_prob", scan.keep_prob}}},
          {"rigid",
           {{"max_rotation", rigid.max_rotation},
            {"scale_min", rigid.scale_min},
            {"scale_max", rigid.scale_max},
            {"translation_sigma", rigid.translation_sigma}}},
          {"features", {{"k", features.k}, {"voxel_size", features.voxel_size}, {"search_cell", features.search_cell}}}};
}

namespace {

struct Sample {
  PointFeatures features;
  std::vector<Label> labels;
};

PointCloud augment_scene(const TrainConfig& cfg, const std::vector<PointCloud>& scenes,
                         const std::vector<std::vector<InstanceGroup>>& groups, std::size_t client, Rng& rng) {
  PointCloud pc;
  if (cfg.mix != MixMode::None && scenes.size() > 1) {
    // Partner scene drawn uniformly among the others.
    std::size_t other = uniform_index(rng, scenes.size() - 1);
    if (other >= client) ++other;
    switch (cfg.mix) {
      case MixMode::Cinmix:
        try {
          pc = cinmix_with_groups(groups[other], scenes[client], cfg.cinmix, rng).cloud;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoFloor) throw;
          pc = scenes[client];
        }
        break;
      case MixMode::Mix3d: pc = mix3d(scenes[client], scenes[other]); break;
      case MixMode::Cuboid: pc = cuboid_mix(scenes[client], scenes[other], cfg.cuboid_splits, rng); break;
      case MixMode::None: break;
    }
  } else {
    pc = scenes[client];
  }
  if (cfg.scan_sim) {
    try {
      pc = virtual_scan(pc, cfg.scan, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyResult) throw;
    }
  }
  return random_rigid(pc, cfg.rigid, rng);
}

Sample make_sample(const TrainConfig& cfg, const PointCloud& pc, Rng& rng) {
  const VoxelSample vs = voxel_downsample(pc, cfg.features.voxel_size);
  const std::size_t n = vs.cloud.size();
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto want = static_cast<std::size_t>(cfg.points_per_scene);
  if (n > want) {
    for (std::size_t i = 0; i < want; ++i) std::swap(rows[i], rows[i + uniform_index(rng, n - i)]);
    rows.resize(want);
    std::sort(rows.begin(), rows.end());
  }
  Sample s;
  s.features = extract_point_features(vs.cloud, cfg.features.k, rows, cfg.features.search_cell);
  s.labels.reserve(rows.size());
  for (auto r : rows) s.labels.push_back(vs.cloud.labels[r]);
  return s;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<PointCloud>& scenes, std::uint64_t seed,
                  const ProgressFn& progress) {
  cfg.validate();
  if (scenes.empty()) throw Error(ErrorCode::EmptyBatch, "no training scenes");

  // Stream layout: 0 model init, 1 epoch shuffles, 2 bank init, 3.. per-scene augmentation.
  Rng init_rng(derive_seed(seed, 0));
  Rng shuffle_rng(derive_seed(seed, 1));
  Rng bank_rng(derive_seed(seed, 2));

  TrainResult res;
  res.model = EncoderModel::random(kFeatureDim, cfg.hidden1, cfg.hidden2, cfg.embed_dim, kNumClasses, init_rng);

  std::vector<std::vector<InstanceGroup>> groups(scenes.size());
  if (cfg.mix == MixMode::Cinmix) {
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      groups[i] = extract_instance_groups(scenes[i], cfg.cinmix.dbscan, cfg.cinmix.cell_size,
                                          "scene" + std::to_string(i), cfg.cinmix.cluster_subsample);
    }
  }

  const auto batch = static_cast<std::size_t>(cfg.batch_scenes);
  const std::size_t steps_per_epoch = (scenes.size() + batch - 1) / batch;
  OptimState opt = OptimState::for_model(res.model, static_cast<long>(steps_per_epoch) * cfg.epochs);
  opt.base_lr = cfg.base_lr;
  opt.weight_decay = cfg.weight_decay;
  opt.power = cfg.poly_power;

  bool bank_ready = false;
  std::vector<std::vector<Eigen::RowVectorXd>> scene_means(kNumClasses);
  LossOptions warm_opts;
  LossOptions proto_opts{cfg.use_ce, cfg.proto_loss_weight};

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t draw = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const bool collect_means = cfg.proto_train && !bank_ready && epoch == cfg.warmup_epochs - 1;
    double ce_sum = 0.0, proto_sum = 0.0;
    std::size_t ce_steps = 0, proto_steps = 0;
    double last_lr = 0.0;

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * batch, hi = std::min(scenes.size(), lo + batch);
      std::vector<Sample> samples(hi - lo);
      detail::parallel_for(hi - lo, [&](std::size_t b) {
        Rng rng(derive_seed(seed, 3 + draw + b));
        samples[b] = make_sample(cfg, augment_scene(cfg, scenes, groups, order[lo + b], rng), rng);
      });
      draw += hi - lo;
      Eigen::Index rows = 0;
      for (const auto& sm : samples) rows += sm.features.rows();
      Eigen::MatrixXd x(rows, kFeatureDim);
      std::vector<Label> y;
      y.reserve(static_cast<std::size_t>(rows));
      std::vector<Eigen::Index> offsets;
      for (const auto& sm : samples) {
        offsets.push_back(static_cast<Eigen::Index>(y.size()));
        x.middleRows(offsets.back(), sm.features.rows()) = sm.features;
        y.insert(y.end(), sm.labels.begin(), sm.labels.end());
      }
      offsets.push_back(rows);

      LossResult loss;
      try {
        loss = bank_ready ? combined_loss(res.model, x, y, &res.bank, proto_opts)
                          : combined_loss(res.model, x, y, nullptr, warm_opts);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyBatch) throw;
        continue;  // nothing labelled in this batch
      }
      last_lr = opt.current_lr();
      optimizer_step(res.model, loss.grad, opt);
      ce_sum += loss.ce;
      ++ce_steps;
      if (loss.has_proto) {
        proto_sum += loss.proto;
        ++proto_steps;
      }

      const Eigen::MatrixXd& emb = loss.pass.embeddings;
      if (bank_ready) {
        for (int c = 0; c < kNumClasses; ++c) {
          if (!res.bank.initialized[static_cast<std::size_t>(c)]) continue;
          std::vector<Eigen::Index> idx;
          for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] == c) idx.push_back(static_cast<Eigen::Index>(j));
          }
          if (idx.empty()) continue;
          const Eigen::MatrixXd xc = emb(idx, Eigen::all);
          const TransportPlan q =
              sinkhorn_assign(xc, res.bank.prototypes[static_cast<std::size_t>(c)], res.bank.lambda, res.bank.sinkhorn_iters);
          momentum_update(res.bank, c, q, xc);
        }
      } else if (collect_means) {
        for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
          const Eigen::MatrixXd e = emb.middleRows(offsets[b], offsets[b + 1] - offsets[b]);
          const std::span<const Label> lab(y.data() + offsets[b], static_cast<std::size_t>(offsets[b + 1] - offsets[b]));
          for (int c = 0; c < kNumClasses; ++c) {
            if (std::find(lab.begin(), lab.end(), static_cast<Label>(c)) == lab.end()) continue;
            scene_means[static_cast<std::size_t>(c)].push_back(class_mean_feature(e, lab, c).transpose());
          }
        }
      }
    }

    if (collect_means) {
      std::vector<Eigen::MatrixXd> means(kNumClasses);
      for (int c = 0; c < kNumClasses; ++c) {
        const auto& rows = scene_means[static_cast<std::size_t>(c)];
        means[static_cast<std::size_t>(c)].resize(static_cast<Eigen::Index>(rows.size()), cfg.embed_dim);
        for (std::size_t r = 0; r < rows.size(); ++r) means[static_cast<std::size_t>(c)].row(static_cast<Eigen::Index>(r)) = rows[r];
      }
      res.bank = init_bank(means, cfg.proto_k, bank_rng);
      res.bank.momentum = cfg.proto_momentum;
      res.bank.lambda = cfg.proto_lambda;
      res.bank.sinkhorn_iters = cfg.sinkhorn_iters;
      bank_ready = res.bank.any_initialized();
    }

    EpochLog rec;
    rec.epoch = epoch + 1;
    rec.ce_loss = ce_steps > 0 ? ce_sum / static_cast<double>(ce_steps) : 0.0;
    rec.proto_loss = proto_steps > 0 ? proto_sum / static_cast<double>(proto_steps) : 0.0;
    rec.lr = last_lr;
    res.log.push_back(rec);
    if (progress) progress(rec);
  }
  if (!res.bank.any_initialized()) res.bank = PrototypeBank(kNumClasses, cfg.proto_k, cfg.embed_dim);
  return res;
}

TrainResult train(const TrainConfig& cfg, std::uint64_t seed, const ProgressFn& progress) {
  const Dataset ds = load_manifest(cfg.dataset);
  return train(cfg, load_split(ds, cfg.train_split), seed, progress);
}

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "epoch,ce_loss,proto_loss,lr\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.epoch, r.ce_loss, r.proto_loss, r.lr);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace dgseg
