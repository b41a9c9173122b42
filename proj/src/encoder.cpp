#include "dgseg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"
#include "dgseg/error.hpp"

namespace dgseg {

namespace {

constexpr std::uint32_t kModelVersion = 1;

Eigen::MatrixXd add_row(const Eigen::MatrixXd& m, const Eigen::MatrixXd& bias) {
  return m.rowwise() + bias.row(0);
}

}  // namespace

EncoderModel::EncoderModel(int in_dim, int hidden1, int hidden2, int embed_dim, int num_classes) {
  if (in_dim < 1 || hidden1 < 1 || hidden2 < 1 || embed_dim < 1 || num_classes < 1) {
    throw Error(ErrorCode::InvalidArgument, "encoder layer sizes must be >= 1");
  }
  params_[kW1] = Eigen::MatrixXd::Zero(in_dim, hidden1);
  params_[kB1] = Eigen::MatrixXd::Zero(1, hidden1);
  params_[kW2] = Eigen::MatrixXd::Zero(hidden1, hidden2);
  params_[kB2] = Eigen::MatrixXd::Zero(1, hidden2);
  params_[kW3] = Eigen::MatrixXd::Zero(hidden2, embed_dim);
  params_[kB3] = Eigen::MatrixXd::Zero(1, embed_dim);
  params_[kPhi] = Eigen::MatrixXd::Zero(num_classes, embed_dim);
  params_[kPhiBias] = Eigen::MatrixXd::Zero(1, num_classes);
}

EncoderModel EncoderModel::random(int in_dim, int hidden1, int hidden2, int embed_dim, int num_classes, Rng& rng) {
  EncoderModel m(in_dim, hidden1, hidden2, embed_dim, num_classes);
  auto fill = [&](Eigen::MatrixXd& w, double fan_in) {
    const double sigma = std::sqrt(2.0 / fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng, sigma);
    }
  };
  fill(m[kW1], in_dim);
  fill(m[kW2], hidden1);
  fill(m[kW3], hidden2);
  fill(m[kPhi], embed_dim);
  return m;
}

EncoderModel EncoderModel::zeros_like(const EncoderModel& other) {
  EncoderModel m = other;
  for (auto& p : m.params_) p.setZero();
  return m;
}

bool EncoderModel::all_finite() const {
  for (const auto& p : params_) {
    if (!p.allFinite()) return false;
  }
  return true;
}

ForwardPass forward(const EncoderModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.in_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "feature width " + std::to_string(features.cols()) + " != encoder input " +
                                              std::to_string(model.in_dim()));
  }
  using P = EncoderModel;
  ForwardPass f;
  f.a1 = add_row(features * model[P::kW1], model[P::kB1]);
  f.h1 = f.a1.cwiseMax(0.0);
  f.a2 = add_row(f.h1 * model[P::kW2], model[P::kB2]);
  f.h2 = f.a2.cwiseMax(0.0);
  Eigen::MatrixXd z = add_row(f.h2 * model[P::kW3], model[P::kB3]);
  f.norms = z.rowwise().norm().cwiseMax(1e-12);
  f.embeddings = z.array().colwise() / f.norms.array();
  f.logits = add_row(f.embeddings * model[P::kPhi].transpose(), model[P::kPhiBias]);
  return f;
}

LossResult combined_loss(const EncoderModel& model, const Eigen::MatrixXd& features, std::span<const Label> labels,
                         const PrototypeBank* bank, const LossOptions& opts) {
  using P = EncoderModel;
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "features and labels differ in length");
  }
  std::size_t valid = 0;
  for (auto l : labels) {
    if (l == kIgnoreLabel) continue;
    if (l >= model.num_classes()) throw Error(ErrorCode::LabelOutOfRange, std::to_string(l));
    ++valid;
  }
  if (valid == 0) throw Error(ErrorCode::EmptyBatch, "no labelled points in batch");
  const bool use_proto = bank != nullptr && bank->any_initialized();
  if (!opts.use_ce && !use_proto) throw Error(ErrorCode::InvalidArgument, "no loss term enabled");

  LossResult res;
  res.pass = forward(model, features);
  const ForwardPass& f = res.pass;
  const Eigen::Index n = features.rows();
  const double inv = 1.0 / static_cast<double>(valid);

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(n, model.num_classes());
  if (opts.use_ce) {
    const Eigen::MatrixXd probs = row_softmax(f.logits);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Label y = labels[static_cast<std::size_t>(j)];
      if (y == kIgnoreLabel) continue;
      res.ce -= std::log(std::max(probs(j, y), std::numeric_limits<double>::min()));
      d_logits.row(j) = probs.row(j) * inv;
      d_logits(j, y) -= inv;
    }
    res.ce *= inv;
  }

  Eigen::MatrixXd d_emb = d_logits * model[P::kPhi];
  if (use_proto) {
    const Similarity sim = proto_similarity_detailed(f.embeddings, *bank);
    Eigen::MatrixXd d_sim;
    res.proto = proto_loss(sim.scores, labels, &d_sim);
    res.has_proto = true;
    d_sim *= opts.proto_weight;
    for (int c = 0; c < bank->num_classes; ++c) {
      if (!bank->initialized[static_cast<std::size_t>(c)]) continue;
      const Eigen::MatrixXd& protos = bank->prototypes[static_cast<std::size_t>(c)];
      for (Eigen::Index j = 0; j < n; ++j) d_emb.row(j) += d_sim(j, c) * protos.row(sim.argmax(j, c));
    }
  }
  res.loss = (opts.use_ce ? res.ce : 0.0) + (use_proto ? opts.proto_weight * res.proto : 0.0);

  EncoderModel& g = res.grad;
  g = EncoderModel::zeros_like(model);
  g[P::kPhi] = d_logits.transpose() * f.embeddings;
  g[P::kPhiBias] = d_logits.colwise().sum();

  // Through the row normalization e = z / |z|.
  const Eigen::VectorXd radial = (d_emb.cwiseProduct(f.embeddings)).rowwise().sum();
  Eigen::MatrixXd d_z = d_emb - (f.embeddings.array().colwise() * radial.array()).matrix();
  d_z = d_z.array().colwise() / f.norms.array();

  g[P::kW3] = f.h2.transpose() * d_z;
  g[P::kB3] = d_z.colwise().sum();
  Eigen::MatrixXd d_a2 = (d_z * model[P::kW3].transpose()).cwiseProduct((f.a2.array() > 0.0).cast<double>().matrix());
  g[P::kW2] = f.h1.transpose() * d_a2;
  g[P::kB2] = d_a2.colwise().sum();
  Eigen::MatrixXd d_a1 = (d_a2 * model[P::kW2].transpose()).cwiseProduct((f.a1.array() > 0.0).cast<double>().matrix());
  g[P::kW1] = features.transpose() * d_a1;
  g[P::kB1] = d_a1.colwise().sum();
  return res;
}

OptimState OptimState::for_model(const EncoderModel& model, long total_steps) {
  OptimState s;
  s.m = EncoderModel::zeros_like(model);
  s.v = EncoderModel::zeros_like(model);
  s.total_steps = total_steps;
  return s;
}

double OptimState::current_lr() const { return poly_lr(base_lr, step, total_steps, power); }

double poly_lr(double base_lr, long step, long total_steps, double power) {
  if (total_steps < 1) throw Error(ErrorCode::InvalidArgument, "total_steps must be >= 1");
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return base_lr * std::pow(1.0 - frac, power);
}

void optimizer_step(EncoderModel& model, const EncoderModel& grad, OptimState& opt) {
  if (opt.step >= opt.total_steps) {
    throw Error(ErrorCode::InvalidArgument, "optimizer stepped past total_steps=" + std::to_string(opt.total_steps));
  }
  const double lr = opt.current_lr();
  const double t = static_cast<double>(opt.step + 1);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (int p = 0; p < EncoderModel::kNumParams; ++p) {
    auto& theta = model.params()[static_cast<std::size_t>(p)];
    const auto& g = grad.params()[static_cast<std::size_t>(p)];
    auto& m = opt.m.params()[static_cast<std::size_t>(p)];
    auto& v = opt.v.params()[static_cast<std::size_t>(p)];
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) throw Error(ErrorCode::ShapeMismatch, "gradient shape");
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    theta *= (1.0 - lr * opt.weight_decay);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
  }
  ++opt.step;
}

void save_model(const EncoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  binio::write_magic(out, "EMDL");
  binio::write_le<std::uint32_t>(out, kModelVersion);
  for (int dim : {model.in_dim(), model.hidden1(), model.hidden2(), model.embed_dim(), model.num_classes()}) {
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  }
  for (const auto& p : model.params()) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) binio::write_le<double>(out, p(r, c));
    }
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

EncoderModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string what = path.string();
  binio::expect_magic(in, "EMDL", what);
  if (binio::read_le<std::uint32_t>(in, what) != kModelVersion) {
    throw Error(ErrorCode::MalformedHeader, "unsupported model version");
  }
  std::array<int, 5> dims{};
  for (auto& d : dims) {
    d = static_cast<int>(binio::read_le<std::uint32_t>(in, what));
    if (d < 1 || d > 1 << 16) throw Error(ErrorCode::MalformedHeader, "implausible layer size");
  }
  EncoderModel model(dims[0], dims[1], dims[2], dims[3], dims[4]);
  for (auto& p : model.params()) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = binio::read_le<double>(in, what);
    }
  }
  return model;
}

}  // namespace dgseg
