#pragma once

#include "cas/core.hpp"

#include <cstdint>
#include <vector>

namespace cas {

/// K centroids in embedding space (one per row) and the Student-t degrees
/// of freedom.
struct ClusterState {
  Matrix<double> centroids;
  double alpha = 1.0;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
  /// Smallest pairwise centroid distance (infinity when K < 2).
  double min_pairwise_distance() const;
  /// K >= 2, finite, alpha > 0, pairwise-distinct centroids.
  void validate() const;
  bool operator==(const ClusterState& other) const {
    return alpha == other.alpha && centroids.rows() == other.centroids.rows() &&
           centroids.cols() == other.centroids.cols() && centroids == other.centroids;
  }
};

/// Row-stochastic N x K patch-to-cluster membership (Q).
struct SoftAssignment {
  Matrix<double> q;
};

/// Sharpened, frequency-normalized teacher distribution (P).
struct TargetAssignment {
  Matrix<double> p;
};

/// Student-t kernel q_ij proportional to (1 + |z_i - m_j|^2 / alpha)^(-(alpha+1)/2).
SoftAssignment soft_assign(const Matrix<double>& embeddings, const ClusterState& cs);

/// p_ij proportional to q_ij^2 / f_j with f_j = sum_i q_ij, rows renormalized.
TargetAssignment target_distribution(const SoftAssignment& q);

/// (1/N) sum_ij p_ij log(p_ij / q_ij), with 0 log 0 = 0.
double kl_loss(const TargetAssignment& p, const SoftAssignment& q);

/// KL(P || Q(Z, M)) and its gradients with P held fixed.
struct KlGradient {
  double loss = 0.0;
  SoftAssignment q;
  Matrix<double> d_embeddings;  // N x D
  Matrix<double> d_centroids;   // K x D
};
KlGradient kl_gradient(const TargetAssignment& p, const Matrix<double>& embeddings, const ClusterState& cs);

/// Per-row argmax; ties go to the lower cluster index.
std::vector<int> hard_assignments(const Matrix<double>& q);

/// Index of the nearest centroid (Euclidean) per row; ties to the lower index.
std::vector<int> nearest_centroid(const Matrix<double>& points, const Matrix<double>& centroids);

/// Largest deviation of a row sum from one.
double max_row_sum_error(const Matrix<double>& m);

struct KMeansResult {
  ClusterState state;
  std::vector<int> assignment;
  double objective = 0.0;               // (1/N) sum |x_i - m_{s_i}|^2
  std::vector<double> objective_trace;  // per Lloyd iteration of the winning restart
};

/// (1/N) sum_i |x_i - centroids[assignment_i]|^2.
double kmeans_objective(const Matrix<double>& points, const Matrix<double>& centroids,
                        const std::vector<int>& assignment);

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs. An
/// emptied cluster is re-seeded at the point farthest from its centroid.
KMeansResult kmeans_fit(const Matrix<double>& points, int k, std::uint64_t seed, int restarts = 10,
                        int max_iterations = 300);

}  // namespace cas
