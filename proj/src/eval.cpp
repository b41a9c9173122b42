#include "dgseg/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dgseg/error.hpp"
#include "parallel.hpp"

namespace dgseg {

void EvalResult::add(std::span<const Label> predictions, std::span<const Label> ground_truth) {
  if (predictions.size() != ground_truth.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                               std::to_string(ground_truth.size()) + " labels");
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Label g = ground_truth[i];
    if (g == kIgnoreLabel) continue;
    if (g >= kNumClasses) throw Error(ErrorCode::LabelOutOfRange, "ground truth label " + std::to_string(g));
    const Label p = predictions[i];
    if (p >= kNumClasses) throw Error(ErrorCode::LabelOutOfRange, "predicted label " + std::to_string(p));
    ++confusion[g][p];
  }
}

void EvalResult::finalize() {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t tp = confusion[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fn += confusion[c][o];
      fp += confusion[o][c];
    }
    present[c] = tp + fn > 0;
    const std::int64_t denom = tp + fp + fn;
    per_class_iou[c] = denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    if (present[c]) {
      sum += per_class_iou[c];
      ++n;
    }
  }
  miou = n > 0 ? sum / n : 0.0;
}

EvalResult evaluate(std::span<const Label> predictions, std::span<const Label> ground_truth) {
  EvalResult r;
  r.add(predictions, ground_truth);
  r.finalize();
  return r;
}

std::vector<Label> predict(const EncoderModel& model, const PrototypeBank* bank, const PointFeatures& features,
                           Classifier mode, bool* fell_back) {
  const ForwardPass f = forward(model, features);
  const bool bank_ok = bank != nullptr && bank->any_initialized();
  if (bank != nullptr && bank->dim != model.embed_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "bank dimension " + std::to_string(bank->dim) + " != embedding dimension " +
                                              std::to_string(model.embed_dim()));
  }
  if (fell_back) *fell_back = mode != Classifier::Parametric && !bank_ok;

  Eigen::MatrixXd scores;
  if (mode == Classifier::Parametric || !bank_ok) {
    scores = f.logits;  // argmax of softmax == argmax of logits
  } else if (mode == Classifier::Rectified) {
    scores = rectify(row_softmax(f.logits), proto_similarity(f.embeddings, *bank));
  } else {
    scores = proto_similarity(f.embeddings, *bank);
  }
  std::vector<Label> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);  // first maximum on ties
    out[static_cast<std::size_t>(r)] = static_cast<Label>(best);
  }
  return out;
}

std::vector<Label> infer(const EncoderModel& model, const PrototypeBank* bank, const PointCloud& pc, Classifier mode,
                         const FeatureConfig& fc, bool* fell_back) {
  const VoxelSample vs = voxel_downsample(pc, fc.voxel_size);
  const std::vector<Label> coarse =
      predict(model, bank, extract_point_features(vs.cloud, fc.k, fc.search_cell), mode, fell_back);
  std::vector<Label> out(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) out[i] = coarse[vs.voxel_of_point[i]];
  return out;
}

std::vector<PreparedScene> prepare_scenes(const Dataset& ds, const std::string& split, const FeatureConfig& fc) {
  const std::vector<DatasetEntry> entries = ds.split(split);
  std::vector<PreparedScene> out(entries.size());
  detail::parallel_for(entries.size(), [&](std::size_t i) {
    const PointCloud pc = load_scene(ds.path_of(entries[i]));
    PreparedScene& s = out[i];
    s.style = entries[i].style;
    s.labels = pc.labels;
    if (pc.empty()) return;
    s.voxels = voxel_downsample(pc, fc.voxel_size);
    s.features = extract_point_features(s.voxels.cloud, fc.k, fc.search_cell);
  });
  std::erase_if(out, [](const PreparedScene& s) { return s.labels.empty(); });
  return out;
}

std::vector<std::pair<std::string, EvalResult>> evaluate_by_style(const EncoderModel& model, const PrototypeBank* bank,
                                                                  Classifier mode,
                                                                  const std::vector<PreparedScene>& scenes) {
  std::vector<std::vector<Label>> coarse(scenes.size());
  detail::parallel_for(scenes.size(), [&](std::size_t i) { coarse[i] = predict(model, bank, scenes[i].features, mode); });
  std::map<std::string, EvalResult> acc;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const PreparedScene& s = scenes[k];
    std::vector<Label> full(s.labels.size());
    for (std::size_t i = 0; i < full.size(); ++i) full[i] = coarse[k][s.voxels.voxel_of_point[i]];
    acc[s.style].add(full, s.labels);
  }
  std::vector<std::pair<std::string, EvalResult>> out;
  for (auto& [style, r] : acc) {
    r.finalize();
    out.emplace_back(style, r);
  }
  return out;
}

namespace {

void check_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "result field '" + s + "' contains a comma, quote or newline");
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::string text = "method,target,seeds";
  for (int c = 0; c < kNumClasses; ++c) text += "," + std::string(class_name(c));
  text += ",miou,miou_sd\n";
  for (const auto& r : rows) {
    check_field(r.method);
    check_field(r.target);
    text += r.method + "," + r.target + "," + std::to_string(r.seeds);
    for (double v : r.iou) text += "," + fmt("%.6f", v);
    text += "," + fmt("%.6f", r.miou) + "," + fmt("%.6f", r.miou_sd) + "\n";
  }
  write_text(path, text);
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  std::vector<ResultRow> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 3 + kNumClasses + 2) {
      throw Error(ErrorCode::FieldCountMismatch, "expected " + std::to_string(5 + kNumClasses) + " fields", lineno);
    }
    ResultRow r;
    try {
      r.method = f[0];
      r.target = f[1];
      r.seeds = std::stoi(f[2]);
      for (int c = 0; c < kNumClasses; ++c) r.iou[c] = std::stod(f[3 + c]);
      r.miou = std::stod(f[3 + kNumClasses]);
      r.miou_sd = std::stod(f[4 + kNumClasses]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRecord, "non-numeric result field", lineno);
    }
    rows.push_back(r);
  }
  return rows;
}

std::string results_markdown(const std::vector<ResultRow>& rows) {
  std::string md = "| Method | Target |";
  for (int c = 0; c < kNumClasses; ++c) md += " " + std::string(class_name(c)) + " |";
  md += " mIoU |\n|---|---|";
  for (int c = 0; c < kNumClasses; ++c) md += "---|";
  md += "---|\n";
  for (const auto& r : rows) {
    md += "| " + r.method + " | " + r.target + " |";
    for (double v : r.iou) md += " " + fmt("%.2f", 100.0 * v) + " |";
    md += " " + fmt("%.2f", 100.0 * r.miou);
    if (r.seeds > 1) md += " ± " + fmt("%.2f", 100.0 * r.miou_sd);
    md += " |\n";
  }
  return md;
}

std::string iou_chart_svg(const ResultRow& row) {
  constexpr int bar_w = 50, gap = 14, left = 40, top = 40, plot_h = 200;
  const int width = left + kNumClasses * (bar_w + gap) + 20;
  const int height = top + plot_h + 60;
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
    << "  <text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">"
    << xml_escape(row.method + " on " + row.target) << " (mIoU " << fmt("%.2f", 100.0 * row.miou) << ")</text>\n"
    << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10 << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int c = 0; c < kNumClasses; ++c) {
    const double v = std::clamp(row.iou[c], 0.0, 1.0);
    const int x = left + c * (bar_w + gap);
    const int h = static_cast<int>(std::lround(v * plot_h));
    s << "  <rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w << "\" height=\"" << h
      << "\" fill=\"#4878a8\"/>\n"
      << "  <text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h - h - 4
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << fmt("%.1f", 100.0 * v)
      << "</text>\n"
      << "  <text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h + 16
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << xml_escape(class_name(c))
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void report(const std::vector<ResultRow>& rows, const std::filesystem::path& out_dir) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no results to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  write_results_csv(rows, out_dir / "results.csv");
  write_text(out_dir / "results.md", results_markdown(rows));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string stem = rows[i].method + "_" + rows[i].target;
    for (char& c : stem) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    char prefix[16];
    std::snprintf(prefix, sizeof(prefix), "iou_%02zu_", i);
    write_text(out_dir / (prefix + stem + ".svg"), iou_chart_svg(rows[i]));
  }
}

ResultRow aggregate(const std::string& method, const std::string& target, const std::vector<EvalResult>& runs) {
  if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "no runs to aggregate");
  ResultRow r;
  r.method = method;
  r.target = target;
  r.seeds = static_cast<int>(runs.size());
  for (const auto& e : runs) {
    for (int c = 0; c < kNumClasses; ++c) r.iou[c] += e.per_class_iou[c];
    r.miou += e.miou;
  }
  const double n = static_cast<double>(runs.size());
  for (auto& v : r.iou) v /= n;
  r.miou /= n;
  if (runs.size() > 1) {
    double ss = 0.0;
    for (const auto& e : runs) ss += (e.miou - r.miou) * (e.miou - r.miou);
    r.miou_sd = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

AblationConfig AblationConfig::from_json(const nlohmann::json& j) {
  AblationConfig c;
  c.base = TrainConfig::from_json(j);
  try {
    c.seeds = j.value("seeds", c.seeds);
    c.nonparam_only = j.value("nonparam_only", c.nonparam_only);
    c.mix_baselines = j.value("mix_baselines", c.mix_baselines);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (c.seeds < 1) throw Error(ErrorCode::ConfigError, "seeds must be >= 1");
  return c;
}

std::vector<AblationCell> ablation_grid(const AblationConfig& cfg) {
  std::vector<AblationCell> cells;
  auto make = [&](MixMode mix, bool proto) {
    TrainConfig t = cfg.base;
    t.mix = mix;
    t.proto_train = proto;
    t.use_ce = !(proto && cfg.nonparam_only);
    t.rectify = false;  // inference-time only; see AblationCell::mode
    return t;
  };
  for (MixMode mix : {MixMode::None, MixMode::Cinmix}) {
    const std::string prefix = mix == MixMode::None ? "baseline" : "+cinmix";
    cells.push_back({prefix, make(mix, false), Classifier::Parametric});
    if (cfg.nonparam_only) {
      cells.push_back({prefix + "+proto-np", make(mix, true), Classifier::Prototype});
    } else {
      cells.push_back({prefix + "+proto", make(mix, true), Classifier::Parametric});
      cells.push_back({prefix + "+proto+rectify", make(mix, true), Classifier::Rectified});
    }
  }
  for (auto& c : cells) {
    if (c.method.rfind("baseline+", 0) == 0) c.method = c.method.substr(8);
  }
  if (cfg.mix_baselines) {
    cells.push_back({"+mix3d", make(MixMode::Mix3d, false), Classifier::Parametric});
    cells.push_back({"+cuboid", make(MixMode::Cuboid, false), Classifier::Parametric});
  }
  return cells;
}

std::vector<ResultRow> run_ablation(const AblationConfig& cfg, std::uint64_t seed, const RunLogFn& log) {
  if (cfg.base.eval_dataset.empty()) throw Error(ErrorCode::ConfigError, "ablation needs eval_dataset");
  const std::vector<AblationCell> cells = ablation_grid(cfg);
  const std::vector<PointCloud> train_scenes = load_split(load_manifest(cfg.base.dataset), cfg.base.train_split);
  const std::vector<PreparedScene> test =
      prepare_scenes(load_manifest(cfg.base.eval_dataset), cfg.base.eval_split, cfg.base.features);
  if (test.empty()) throw Error(ErrorCode::ConfigError, "eval split '" + cfg.base.eval_split + "' is empty");

  // Cells sharing a training configuration share the trained model.
  std::vector<std::size_t> train_of(cells.size());
  std::vector<std::size_t> unique;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    train_of[i] = i;
    for (std::size_t u : unique) {
      if (cells[u].config.to_json() == cells[i].config.to_json()) train_of[i] = u;
    }
    if (train_of[i] == i) unique.push_back(i);
  }

  // results[cell][style] -> one EvalResult per seed
  std::vector<std::map<std::string, std::vector<EvalResult>>> results(cells.size());
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t run_seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    for (std::size_t u : unique) {
      if (log) log("seed " + std::to_string(s + 1) + "/" + std::to_string(cfg.seeds) + ": training " + cells[u].method);
      const TrainResult tr = train(cells[u].config, train_scenes, run_seed);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (train_of[i] != u) continue;
        for (auto& [style, r] : evaluate_by_style(tr.model, &tr.bank, cells[i].mode, test)) {
          results[i][style].push_back(r);
        }
      }
    }
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (const auto& [style, runs] : results[i]) rows.push_back(aggregate(cells[i].method, style, runs));
  }
  return rows;
}

}  // namespace dgseg
