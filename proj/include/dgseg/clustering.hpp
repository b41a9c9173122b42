#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

struct DbscanParams {
  double eps = 0.2;
  int min_pts = 100;  // neighbor count within eps, the point itself included

  void validate() const;
};

struct ClusterAssignment {
  std::vector<int> labels;  // cluster id, or kNoise
  int num_clusters = 0;

  static constexpr int kNoise = -1;
};

// Density clustering. Points are scanned in index order; clusters are numbered
// in order of discovery and a border point joins the first cluster that
// reaches it.
ClusterAssignment dbscan(std::span<const Vec3> points, const DbscanParams& params);

// Rows of `features` are samples. Returns K distinct rows picked by D^2 sampling.
Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& features, int k, Rng& rng);

struct KMeansResult {
  Eigen::MatrixXd centroids;       // K x D
  std::vector<int> assignment;     // per row, in [0, K)
  std::vector<double> inertia;     // after each assignment step
  int iterations = 0;
  bool converged = false;
};

KMeansResult kmeans(const Eigen::MatrixXd& features, int k, int max_iter, Rng& rng);

}  // namespace dgseg
