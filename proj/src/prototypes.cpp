#include "dgseg/prototypes.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binio.hpp"
#include "dgseg/clustering.hpp"
#include "dgseg/error.hpp"

namespace dgseg {

namespace {

constexpr std::uint32_t kBankVersion = 1;

void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 1e-12) {
      m.row(r) /= n;
    } else {
      // Degenerate centroid; fall back to a fixed axis so the row stays unit.
      m.row(r).setZero();
      m(r, 0) = 1.0;
    }
  }
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

PrototypeBank::PrototypeBank(int num_classes_, int k_, int dim_)
    : num_classes(num_classes_),
      k(k_),
      dim(dim_),
      prototypes(static_cast<std::size_t>(num_classes_), Eigen::MatrixXd::Zero(k_, dim_)),
      initialized(static_cast<std::size_t>(num_classes_), false) {
  if (k_ < 1 || dim_ < 1 || num_classes_ < 1) throw Error(ErrorCode::InvalidArgument, "bank dimensions must be >= 1");
}

bool PrototypeBank::any_initialized() const {
  for (bool b : initialized) {
    if (b) return true;
  }
  return false;
}

Eigen::VectorXd class_mean_feature(const Eigen::MatrixXd& embeddings, std::span<const Label> labels, int class_id) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "embeddings and labels differ in length");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.cols());
  std::size_t count = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] != class_id) continue;
    sum += embeddings.row(static_cast<Eigen::Index>(j)).transpose();
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::ClassAbsentInScene, std::string(class_name(class_id)));
  return sum / static_cast<double>(count);
}

PrototypeBank init_bank(const std::vector<Eigen::MatrixXd>& scene_means, int k, Rng& rng, int kmeans_max_iter) {
  if (scene_means.empty()) throw Error(ErrorCode::InvalidArgument, "no classes given");
  Eigen::Index dim = 0;
  for (const auto& m : scene_means) dim = std::max(dim, m.cols());
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "no scene-mean features given");

  PrototypeBank bank(static_cast<int>(scene_means.size()), k, static_cast<int>(dim));
  for (std::size_t c = 0; c < scene_means.size(); ++c) {
    const Eigen::MatrixXd& means = scene_means[c];
    if (means.rows() == 0) {
      bank.warnings.push_back(std::string(class_name(static_cast<int>(c))) + ": class absent, left uninitialized");
      continue;
    }
    if (means.cols() != dim) throw Error(ErrorCode::ShapeMismatch, "scene-mean feature dimension differs");

    std::vector<Eigen::Index> distinct;
    for (Eigen::Index r = 0; r < means.rows() && static_cast<int>(distinct.size()) < k; ++r) {
      bool dup = false;
      for (auto d : distinct) dup = dup || means.row(r) == means.row(d);
      if (!dup) distinct.push_back(r);
    }
    Eigen::MatrixXd protos(k, dim);
    if (static_cast<int>(distinct.size()) < k) {
      for (int i = 0; i < k; ++i) protos.row(i) = means.row(distinct[static_cast<std::size_t>(i) % distinct.size()]);
      bank.warnings.push_back(std::string(class_name(static_cast<int>(c))) + ": " + std::to_string(distinct.size()) +
                              " distinct scene means for k=" + std::to_string(k) + ", replicated");
    } else {
      protos = kmeans(means, k, kmeans_max_iter, rng).centroids;
    }
    normalize_rows(protos);
    bank.prototypes[c] = protos;
    bank.initialized[c] = true;
  }
  return bank;
}

TransportPlan sinkhorn_assign(const Eigen::MatrixXd& features, const Eigen::MatrixXd& prototypes, double lambda,
                              int iters) {
  if (features.rows() < 1) throw Error(ErrorCode::InvalidArgument, "sinkhorn needs at least one feature");
  if (features.cols() != prototypes.cols()) throw Error(ErrorCode::ShapeMismatch, "feature/prototype dimension");
  if (iters < 1) throw Error(ErrorCode::InvalidArgument, "sinkhorn iters must be >= 1");
  if (!features.allFinite() || !prototypes.allFinite() || !std::isfinite(lambda)) {
    throw Error(ErrorCode::NonFiniteInput, "sinkhorn input");
  }
  const Eigen::Index n = features.rows(), k = prototypes.rows();
  Eigen::MatrixXd logits = lambda * (features * prototypes.transpose());
  for (Eigen::Index r = 0; r < n; ++r) logits.row(r).array() -= logits.row(r).maxCoeff();

  const double log_col_mass = std::log(static_cast<double>(n) / static_cast<double>(k));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(k);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index c = 0; c < k; ++c) v(c) = log_col_mass - log_sum_exp(logits.col(c) + u);
    for (Eigen::Index r = 0; r < n; ++r) u(r) = -log_sum_exp(logits.row(r).transpose() + v);
  }
  TransportPlan q(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) q(r, c) = std::exp(logits(r, c) + u(r) + v(c));
  }
  return q;
}

TransportPlan normalize_columns(const TransportPlan& q) {
  const double target = static_cast<double>(q.rows()) / static_cast<double>(q.cols());
  TransportPlan out = q;
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    const double s = q.col(c).sum();
    if (s > 0.0) out.col(c) *= target / s;
  }
  return out;
}

void momentum_update(PrototypeBank& bank, int class_id, const TransportPlan& q, const Eigen::MatrixXd& features) {
  if (class_id < 0 || class_id >= bank.num_classes) throw Error(ErrorCode::InvalidClassId, std::to_string(class_id));
  if (!bank.initialized[static_cast<std::size_t>(class_id)]) {
    throw Error(ErrorCode::UninitializedClass, std::string(class_name(class_id)));
  }
  if (q.rows() != features.rows() || q.cols() != bank.k || features.cols() != bank.dim) {
    throw Error(ErrorCode::ShapeMismatch, "transport plan / feature shapes");
  }
  auto& p = bank.prototypes[static_cast<std::size_t>(class_id)];
  const double m = bank.momentum;
  // m = 1 keeps P exactly; renormalizing would still perturb the last bit.
  if (m == 1.0) return;
  const double scale = static_cast<double>(bank.k) / static_cast<double>(features.rows());
  p = m * p + (1.0 - m) * scale * (q.transpose() * features);
  normalize_rows(p);
}

Similarity proto_similarity_detailed(const Eigen::MatrixXd& embeddings, const PrototypeBank& bank) {
  if (embeddings.cols() != bank.dim) throw Error(ErrorCode::ShapeMismatch, "embedding dimension != bank dimension");
  const Eigen::Index n = embeddings.rows();
  Similarity s;
  s.scores = Eigen::MatrixXd::Constant(n, bank.num_classes, -1.0);
  s.argmax = Eigen::MatrixXi::Constant(n, bank.num_classes, -1);
  for (int c = 0; c < bank.num_classes; ++c) {
    if (!bank.initialized[static_cast<std::size_t>(c)]) continue;
    const Eigen::MatrixXd dots = embeddings * bank.prototypes[static_cast<std::size_t>(c)].transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      s.scores(j, c) = dots.row(j).maxCoeff(&best);
      s.argmax(j, c) = static_cast<int>(best);
    }
  }
  return s;
}

Eigen::MatrixXd proto_similarity(const Eigen::MatrixXd& embeddings, const PrototypeBank& bank) {
  return proto_similarity_detailed(embeddings, bank).scores;
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp().transpose();
    out.row(r) = (e / e.sum()).matrix().transpose();
  }
  return out;
}

double proto_loss(const Eigen::MatrixXd& similarity, std::span<const Label> labels, Eigen::MatrixXd* grad) {
  if (static_cast<std::size_t>(similarity.rows()) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "similarity rows != labels");
  }
  std::size_t valid = 0;
  for (auto l : labels) valid += (l != kIgnoreLabel) ? 1 : 0;
  if (valid == 0) throw Error(ErrorCode::AllIgnored, "every point carries the ignore label");

  const Eigen::MatrixXd q = row_softmax(similarity);
  if (grad) *grad = Eigen::MatrixXd::Zero(similarity.rows(), similarity.cols());
  const double inv = 1.0 / static_cast<double>(valid);
  double loss = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == kIgnoreLabel) continue;
    const auto r = static_cast<Eigen::Index>(j);
    const int y = labels[j];
    if (y >= similarity.cols()) throw Error(ErrorCode::LabelOutOfRange, std::to_string(y));
    loss -= std::log(std::max(q(r, y), std::numeric_limits<double>::min()));
    if (grad) {
      grad->row(r) = q.row(r) * inv;
      (*grad)(r, y) -= inv;
    }
  }
  return loss * inv;
}

Eigen::MatrixXd rectify(const Eigen::MatrixXd& global_probs, const Eigen::MatrixXd& similarity) {
  if (global_probs.rows() != similarity.rows() || global_probs.cols() != similarity.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "probabilities and similarities differ in shape");
  }
  return row_softmax(similarity).cwiseProduct(global_probs);
}

void save_bank(const PrototypeBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  binio::write_magic(out, "PBNK");
  binio::write_le<std::uint32_t>(out, kBankVersion);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.num_classes));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.k));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.dim));
  for (const auto& p : bank.prototypes) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) binio::write_le<float>(out, static_cast<float>(p(r, c)));
    }
  }
  for (bool b : bank.initialized) binio::write_le<std::uint8_t>(out, b ? 1 : 0);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

PrototypeBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string what = path.string();
  binio::expect_magic(in, "PBNK", what);
  const auto version = binio::read_le<std::uint32_t>(in, what);
  if (version != kBankVersion) throw Error(ErrorCode::MalformedHeader, "unsupported bank version");
  const auto nc = binio::read_le<std::uint32_t>(in, what);
  const auto k = binio::read_le<std::uint32_t>(in, what);
  const auto d = binio::read_le<std::uint32_t>(in, what);
  if (nc == 0 || k == 0 || d == 0 || nc > 1024 || k > 4096 || d > 65536) {
    throw Error(ErrorCode::MalformedHeader, "implausible bank dimensions");
  }
  PrototypeBank bank(static_cast<int>(nc), static_cast<int>(k), static_cast<int>(d));
  for (auto& p : bank.prototypes) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = binio::read_le<float>(in, what);
    }
  }
  for (std::size_t c = 0; c < nc; ++c) bank.initialized[c] = binio::read_le<std::uint8_t>(in, what) != 0;
  return bank;
}

}  // namespace dgseg
