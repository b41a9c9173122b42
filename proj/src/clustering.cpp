#include "dgseg/clustering.hpp"

#include <deque>
#include <limits>

#include "dgseg/error.hpp"
#include "dgseg/spatial_hash.hpp"

namespace dgseg {

void DbscanParams::validate() const {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "dbscan eps must be positive");
  if (min_pts < 1) throw Error(ErrorCode::InvalidArgument, "dbscan min_pts must be >= 1");
}

ClusterAssignment dbscan(std::span<const Vec3> points, const DbscanParams& params) {
  params.validate();
  constexpr int kUnvisited = -2;
  ClusterAssignment out;
  out.labels.assign(points.size(), kUnvisited);
  if (points.empty()) return out;

  const VoxelHash index(points, params.eps);
  const auto min_pts = static_cast<std::size_t>(params.min_pts);
  std::vector<std::size_t> neighbors;
  auto region = [&](std::size_t i) {
    neighbors.clear();
    index.for_each_within(points[i], params.eps, [&](std::size_t j) { neighbors.push_back(j); });
    return neighbors.size();
  };

  std::deque<std::size_t> frontier;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (out.labels[i] != kUnvisited) continue;
    if (region(i) < min_pts) {
      out.labels[i] = ClusterAssignment::kNoise;
      continue;
    }
    const int cluster = out.num_clusters++;
    out.labels[i] = cluster;
    frontier.assign(neighbors.begin(), neighbors.end());
    while (!frontier.empty()) {
      const std::size_t j = frontier.front();
      frontier.pop_front();
      if (out.labels[j] == ClusterAssignment::kNoise) out.labels[j] = cluster;  // border point
      if (out.labels[j] != kUnvisited) continue;
      out.labels[j] = cluster;
      if (region(j) >= min_pts) frontier.insert(frontier.end(), neighbors.begin(), neighbors.end());
    }
  }
  return out;
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& features, int k, Rng& rng) {
  const auto m = static_cast<std::size_t>(features.rows());
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (m < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewSamples, std::to_string(m) + " samples for k=" + std::to_string(k));
  }
  if (!features.allFinite()) throw Error(ErrorCode::NonFiniteInput, "kmeans++ features");

  std::vector<std::size_t> chosen;
  std::vector<bool> taken(m, false);
  std::vector<double> d2(m, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t idx) {
    chosen.push_back(idx);
    taken[idx] = true;
    for (std::size_t r = 0; r < m; ++r) {
      d2[r] = std::min(d2[r], (features.row(static_cast<Eigen::Index>(r)) -
                               features.row(static_cast<Eigen::Index>(idx)))
                                  .squaredNorm());
    }
  };

  take(uniform_index(rng, m));
  while (chosen.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (!taken[r]) total += d2[r];
    }
    std::size_t pick = m;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (std::size_t r = 0; r < m; ++r) {
        if (taken[r] || d2[r] <= 0.0) continue;
        pick = r;
        u -= d2[r];
        if (u < 0.0) break;
      }
    } else {
      // All remaining rows coincide with a chosen one: pick among them uniformly.
      std::vector<std::size_t> rest;
      for (std::size_t r = 0; r < m; ++r) {
        if (!taken[r]) rest.push_back(r);
      }
      pick = rest[uniform_index(rng, rest.size())];
    }
    take(pick);
  }

  Eigen::MatrixXd seeds(k, features.cols());
  for (int i = 0; i < k; ++i) seeds.row(i) = features.row(static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(i)]));
  return seeds;
}

KMeansResult kmeans(const Eigen::MatrixXd& features, int k, int max_iter, Rng& rng) {
  if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  KMeansResult res;
  res.centroids = kmeanspp_seed(features, k, rng);
  const Eigen::Index m = features.rows();
  res.assignment.assign(static_cast<std::size_t>(m), -1);
  std::vector<double> best_d2(static_cast<std::size_t>(m), 0.0);

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (features.row(r) - res.centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& slot = res.assignment[static_cast<std::size_t>(r)];
      if (slot != best) changed = true;
      slot = best;
      best_d2[static_cast<std::size_t>(r)] = best_d;
      inertia += best_d;
    }
    res.inertia.push_back(inertia);
    res.iterations = iter + 1;
    if (!changed && iter > 0) {
      res.converged = true;
      break;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index r = 0; r < m; ++r) {
      const int c = res.assignment[static_cast<std::size_t>(r)];
      sums.row(c) += features.row(r);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the row farthest from its own centroid.
      Eigen::Index far = 0;
      for (Eigen::Index r = 1; r < m; ++r) {
        if (best_d2[static_cast<std::size_t>(r)] > best_d2[static_cast<std::size_t>(far)]) far = r;
      }
      res.centroids.row(c) = features.row(far);
      best_d2[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  return res;
}

}  // namespace dgseg
