#include "cas/clustering.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace cas {

double ClusterState::min_pairwise_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k(); ++a) {
    for (int b = a + 1; b < k(); ++b) best = std::min(best, (centroids.row(a) - centroids.row(b)).norm());
  }
  return best;
}

void ClusterState::validate() const {
  if (k() < 2) throw ValidationError("cluster state: K must be >= 2");
  if (!(alpha > 0.0)) throw ValidationError("cluster state: alpha must be > 0");
  if (!centroids.allFinite()) throw ValidationError("cluster state: non-finite centroid");
  if (!(min_pairwise_distance() > 0.0)) throw ValidationError("cluster state: two centroids coincide");
}

SoftAssignment soft_assign(const Matrix<double>& z, const ClusterState& cs) {
  if (z.cols() != cs.centroids.cols()) {
    throw ShapeMismatchError("soft_assign: embedding dim " + std::to_string(z.cols()) + " != centroid dim " +
                             std::to_string(cs.centroids.cols()));
  }
  if (cs.k() < 1 || !(cs.alpha > 0.0)) throw ValidationError("soft_assign: need K >= 1 and alpha > 0");
  const double exponent = -(cs.alpha + 1.0) / 2.0;
  SoftAssignment out{Matrix<double>(z.rows(), cs.k())};
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    // Log domain keeps far-away rows from underflowing to all zeros.
    for (int j = 0; j < cs.k(); ++j) {
      const double d2 = (z.row(i) - cs.centroids.row(j)).squaredNorm();
      out.q(i, j) = exponent * std::log1p(d2 / cs.alpha);
    }
    auto row = out.q.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
    row = row.cwiseMax(std::numeric_limits<double>::min());
  }
  return out;
}

TargetAssignment target_distribution(const SoftAssignment& sa) {
  const auto& q = sa.q;
  const RowVector<double> f = q.colwise().sum();
  TargetAssignment out{Matrix<double>(q.rows(), q.cols())};
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    out.p.row(i) = q.row(i).array().square() / f.array();
    out.p.row(i) /= out.p.row(i).sum();
  }
  return out;
}

double kl_loss(const TargetAssignment& tp, const SoftAssignment& sq) {
  const auto &p = tp.p, &q = sq.q;
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeMismatchError("kl_loss: P and Q shapes differ");
  if (p.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0.0) total += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  }
  return total / static_cast<double>(p.rows());
}

KlGradient kl_gradient(const TargetAssignment& tp, const Matrix<double>& z, const ClusterState& cs) {
  KlGradient g;
  g.q = soft_assign(z, cs);
  g.loss = kl_loss(tp, g.q);
  const double n = static_cast<double>(z.rows());
  const double scale = (cs.alpha + 1.0) / cs.alpha / n;
  g.d_embeddings = Matrix<double>::Zero(z.rows(), z.cols());
  g.d_centroids = Matrix<double>::Zero(cs.k(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (int j = 0; j < cs.k(); ++j) {
      const RowVector<double> diff = z.row(i) - cs.centroids.row(j);
      const double w = scale * (tp.p(i, j) - g.q.q(i, j)) / (1.0 + diff.squaredNorm() / cs.alpha);
      g.d_embeddings.row(i) += w * diff;
      g.d_centroids.row(j) -= w * diff;
    }
  }
  return g;
}

std::vector<int> hard_assignments(const Matrix<double>& q) {
  std::vector<int> out(static_cast<size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Eigen::Index j = 0;
    q.row(i).maxCoeff(&j);  // first maximum
    out[static_cast<size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

std::vector<int> nearest_centroid(const Matrix<double>& x, const Matrix<double>& centroids) {
  std::vector<int> out(static_cast<size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index j = 0;
    (centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&j);
    out[static_cast<size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

double max_row_sum_error(const Matrix<double>& m) {
  if (m.rows() == 0) return 0.0;
  return (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

double kmeans_objective(const Matrix<double>& x, const Matrix<double>& centroids, const std::vector<int>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    total += (x.row(i) - centroids.row(assignment[static_cast<size_t>(i)])).squaredNorm();
  }
  return x.rows() > 0 ? total / static_cast<double>(x.rows()) : 0.0;
}

namespace {

Matrix<double> kmeans_plus_plus(const Matrix<double>& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Matrix<double> centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = x.row(first(rng));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    if (!(d2.sum() > 0.0)) throw ValidationError("kmeans: fewer distinct points than clusters");
    std::discrete_distribution<Eigen::Index> pick(d2.data(), d2.data() + n);
    centers.row(c) = x.row(pick(rng));
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

struct LloydRun {
  Matrix<double> centers;
  std::vector<int> assignment;
  std::vector<double> trace;
};

LloydRun lloyd(const Matrix<double>& x, Matrix<double> centers, int max_iterations) {
  const int k = static_cast<int>(centers.rows());
  LloydRun run;
  run.assignment = nearest_centroid(x, centers);
  run.trace.push_back(kmeans_objective(x, centers, run.assignment));
  for (int it = 0; it < max_iterations; ++it) {
    Matrix<double> sums = Matrix<double>::Zero(k, x.cols());
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      sums.row(run.assignment[static_cast<size_t>(i)]) += x.row(i);
      ++counts[static_cast<size_t>(run.assignment[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double d = (x.row(i) - centers.row(run.assignment[static_cast<size_t>(i)])).squaredNorm();
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      --counts[static_cast<size_t>(run.assignment[static_cast<size_t>(far)])];
      run.assignment[static_cast<size_t>(far)] = c;
      counts[static_cast<size_t>(c)] = 1;
      centers.row(c) = x.row(far);
    }
    std::vector<int> next = nearest_centroid(x, centers);
    const bool stable = next == run.assignment;
    run.assignment = std::move(next);
    run.trace.push_back(kmeans_objective(x, centers, run.assignment));
    if (stable) break;
  }
  run.centers = std::move(centers);
  return run;
}

}  // namespace

KMeansResult kmeans_fit(const Matrix<double>& x, int k, std::uint64_t seed, int restarts, int max_iterations) {
  if (k < 1) throw ValidationError("kmeans: K must be >= 1");
  if (x.rows() < k) {
    throw ValidationError("kmeans: N=" + std::to_string(x.rows()) + " is smaller than K=" + std::to_string(k));
  }
  if (!x.allFinite()) throw ValidationError("kmeans: non-finite input");
  KMeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    LloydRun run = lloyd(x, kmeans_plus_plus(x, k, rng), max_iterations);
    const double obj = kmeans_objective(x, run.centers, run.assignment);
    if (obj < best.objective) {
      best.objective = obj;
      best.state.centroids = std::move(run.centers);
      best.assignment = std::move(run.assignment);
      best.objective_trace = std::move(run.trace);
    }
  }
  return best;
}

}  // namespace cas
