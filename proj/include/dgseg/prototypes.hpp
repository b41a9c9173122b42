#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

// Non-parametric multi-prototype bank: K unit vectors per class.
struct PrototypeBank {
  int num_classes = kNumClasses;
  int k = 3;
  int dim = 32;
  double momentum = 0.999;
  double lambda = 20.0;
  int sinkhorn_iters = 3;
  std::vector<Eigen::MatrixXd> prototypes;  // per class, k x dim
  std::vector<bool> initialized;
  std::vector<std::string> warnings;

  PrototypeBank() = default;
  PrototypeBank(int num_classes, int k, int dim);

  bool any_initialized() const;
};

// Mean embedding of the points labelled `class_id`.
Eigen::VectorXd class_mean_feature(const Eigen::MatrixXd& embeddings, std::span<const Label> labels, int class_id);

// Clusters each class's scene-mean features into k prototypes (k-means++
// seeded Lloyd). `scene_means[c]` holds one row per scene containing class c;
// a class with no rows stays uninitialized.
PrototypeBank init_bank(const std::vector<Eigen::MatrixXd>& scene_means, int k, Rng& rng, int kmeans_max_iter = 100);

using TransportPlan = Eigen::MatrixXd;  // n_c x K

// Entropic OT assignment of n_c features onto K prototypes with uniform
// prototype marginals. Runs `iters` rounds of (column, row) scaling in the log
// domain, so the result ends on a row normalization.
TransportPlan sinkhorn_assign(const Eigen::MatrixXd& features, const Eigen::MatrixXd& prototypes, double lambda,
                              int iters);

// Rescales columns to sum to n_c / K.
TransportPlan normalize_columns(const TransportPlan& q);

// P_c <- m P_c + (1 - m) (K / n_c) Q^T X_c, then row re-normalization.
void momentum_update(PrototypeBank& bank, int class_id, const TransportPlan& q, const Eigen::MatrixXd& features);

struct Similarity {
  Eigen::MatrixXd scores;  // N x C, -1 for uninitialized classes
  Eigen::MatrixXi argmax;  // N x C, index of the best prototype (-1 if uninitialized)
};

Similarity proto_similarity_detailed(const Eigen::MatrixXd& embeddings, const PrototypeBank& bank);
Eigen::MatrixXd proto_similarity(const Eigen::MatrixXd& embeddings, const PrototypeBank& bank);

// Mean over non-ignored points of -log softmax(S)[j, y_j]. When `grad` is
// given it receives dLoss/dS.
double proto_loss(const Eigen::MatrixXd& similarity, std::span<const Label> labels, Eigen::MatrixXd* grad = nullptr);

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& x);

// rectified = row_softmax(S) .* global_probs, without renormalization.
Eigen::MatrixXd rectify(const Eigen::MatrixXd& global_probs, const Eigen::MatrixXd& similarity);

void save_bank(const PrototypeBank& bank, const std::filesystem::path& path);
PrototypeBank load_bank(const std::filesystem::path& path);

}  // namespace dgseg
