#include "cas/pretrain.hpp"

#include "cas/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cas {

namespace {

constexpr double kCollapseDistance = 1e-8;

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("pretrain config: " + what);
}

template <typename Scalar>
double elements(const FeatureMap<Scalar>& x) {
  return static_cast<double>(x.data.size());
}

template <typename Scalar>
void check_same_shapes(std::span<const FeatureMap<Scalar>> a, std::span<const FeatureMap<Scalar>> b) {
  if (a.size() != b.size()) throw ShapeMismatchError("reconstruction_loss: batch sizes differ");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].height != b[i].height || a[i].width != b[i].width || a[i].channels() != b[i].channels()) {
      throw ShapeMismatchError("reconstruction_loss: sample " + std::to_string(i) + " shapes differ");
    }
  }
}

template <typename Scalar>
double cas_loss_impl(const TargetAssignment& p, const SoftAssignment& q, std::span<const FeatureMap<Scalar>> output,
                     std::span<const FeatureMap<Scalar>> input, double lambda) {
  return kl_loss(p, q) + lambda * static_cast<double>(reconstruction_loss<Scalar>(output, input));
}

std::vector<size_t> batch_order(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<RasterPatch> gather(std::span<const RasterPatch> patches, std::span<const size_t> idx) {
  std::vector<RasterPatch> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(patches[i]);
  return out;
}

}  // namespace

void PretrainConfig::validate() const {
  require(phase1_epochs >= 0, "phase1_epochs must be >= 0");
  require(phase2_epochs >= 0, "phase2_epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(clusters >= 2, "clusters must be >= 2");
  require(target_update_interval >= 1, "target_update_interval must be >= 1");
  require(stop_delta > 0.0 && stop_delta <= 1.0, "stop_delta must be in (0, 1]");
  require(kmeans_restarts >= 1, "kmeans_restarts must be >= 1");
}

NetworkConfig pretrain_network_config(NetworkConfig base) {
  base.use_skips = false;
  base.head = Head::kReconstruction;
  base.validate();
  return base;
}

template <typename Scalar>
Scalar reconstruction_loss(std::span<const FeatureMap<Scalar>> output, std::span<const FeatureMap<Scalar>> input) {
  check_same_shapes(output, input);
  if (output.empty()) return Scalar(0);
  double total = 0.0;
  for (size_t i = 0; i < output.size(); ++i) {
    total += (output[i].data - input[i].data).template cast<double>().squaredNorm() / elements(input[i]);
  }
  return static_cast<Scalar>(total / static_cast<double>(output.size()));
}

double cas_loss(const TargetAssignment& p, const SoftAssignment& q, std::span<const FeatureMap<float>> output,
                std::span<const FeatureMap<float>> input, double lambda) {
  return cas_loss_impl(p, q, output, input, lambda);
}

double cas_loss(const TargetAssignment& p, const SoftAssignment& q, std::span<const FeatureMap<double>> output,
                std::span<const FeatureMap<double>> input, double lambda) {
  return cas_loss_impl(p, q, output, input, lambda);
}

template <typename Scalar>
CasGradient<Scalar> cas_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                      const ClusterState& cs, const TargetAssignment& p_batch,
                                      std::span<const FeatureMap<Scalar>> batch, double lambda) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (p_batch.p.rows() != n || p_batch.p.cols() != cs.k()) {
    throw ShapeMismatchError("cas_loss_gradient: target rows must match the batch");
  }
  const ForwardOptions opts{lambda > 0.0 ? Extent::kFull : Extent::kEncoder, {}};
  std::vector<ForwardPass<Scalar>> passes;
  passes.reserve(batch.size());
  Matrix<double> z(n, cfg.embedding_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    passes.push_back(forward(params, cfg, batch[static_cast<size_t>(i)], opts));
    z.row(i) = passes.back().embedding.template cast<double>();
  }
  KlGradient kg = kl_gradient(p_batch, z, cs);

  CasGradient<Scalar> g;
  g.kl = kg.loss;
  g.d_centroids = std::move(kg.d_centroids);
  g.d_params = params.zeros_like();
  double recon = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    OutputGradient<Scalar> og;
    og.embedding = kg.d_embeddings.row(i).template cast<Scalar>();
    if (lambda > 0.0) {
      Matrix<Scalar> diff = passes[static_cast<size_t>(i)].output.data - batch[static_cast<size_t>(i)].data;
      const double m = elements(batch[static_cast<size_t>(i)]);
      recon += diff.template cast<double>().squaredNorm() / m;
      og.output = static_cast<Scalar>(2.0 * lambda / (static_cast<double>(n) * m)) * diff;
    }
    backward(params, cfg, passes[static_cast<size_t>(i)], og, g.d_params);
  }
  if (lambda > 0.0) {
    g.reconstruction = recon / static_cast<double>(n);
    g.loss = g.kl + lambda * g.reconstruction;
  } else {
    g.reconstruction = std::numeric_limits<double>::quiet_NaN();
    g.loss = g.kl;
  }
  return g;
}

template <typename Scalar>
CasGradient<Scalar> reconstruction_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                                 std::span<const FeatureMap<Scalar>> batch) {
  const double n = static_cast<double>(batch.size());
  CasGradient<Scalar> g;
  g.d_params = params.zeros_like();
  double total = 0.0;
  for (const auto& x : batch) {
    auto pass = forward(params, cfg, x);
    Matrix<Scalar> diff = pass.output.data - x.data;
    total += diff.template cast<double>().squaredNorm() / elements(x);
    OutputGradient<Scalar> og;
    og.output = static_cast<Scalar>(2.0 / (n * elements(x))) * diff;
    backward(params, cfg, pass, og, g.d_params);
  }
  g.reconstruction = total / n;
  g.loss = g.reconstruction;
  g.kl = 0.0;
  return g;
}

Phase1Result phase1_train(std::span<const RasterPatch> patches, const NetworkConfig& net_in,
                          const PretrainConfig& cfg) {
  cfg.validate();
  const NetworkConfig net = pretrain_network_config(net_in);
  if (patches.empty()) throw ValidationError("phase1_train: no patches");
  Phase1Result result;
  result.params = init_params<float>(net, derive_seed(cfg.seed, 20));
  SgdMomentum<float> opt(cfg.learning_rate, cfg.momentum);
  std::mt19937_64 rng(derive_seed(cfg.seed, 21));
  const auto batch = static_cast<size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.phase1_epochs; ++epoch) {
    const auto order = batch_order(patches.size(), rng);
    double sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const auto idx = std::span<const size_t>(order).subspan(start, std::min(batch, order.size() - start));
      const auto xs = gather(patches, idx);
      auto g = reconstruction_loss_gradient<float>(result.params, net, xs);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError("phase1_train: non-finite reconstruction loss at epoch " + std::to_string(epoch));
      }
      opt.step(result.params, g.d_params);
      sum += g.loss * static_cast<double>(idx.size());
      count += idx.size();
    }
    if (!result.params.all_finite()) throw DivergenceError("phase1_train: parameters became non-finite");
    result.loss_trace.push_back(sum / static_cast<double>(count));
  }
  return result;
}

Phase1Result phase1_train(const PatchDataset& ds, const NetworkConfig& net, const PretrainConfig& cfg) {
  const auto patches = ds.all_features();
  return phase1_train(std::span<const RasterPatch>(patches), net, cfg);
}

Matrix<double> embed_patches(const NetworkParams<float>& params, const NetworkConfig& net,
                             std::span<const RasterPatch> patches) {
  return embed<float>(params, net, patches).cast<double>();
}

double mean_reconstruction_loss(const NetworkParams<float>& params, const NetworkConfig& net_in,
                                std::span<const RasterPatch> patches) {
  const NetworkConfig net = pretrain_network_config(net_in);
  if (patches.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : patches) {
    auto pass = forward(params, net, x);
    total += (pass.output.data - x.data).cast<double>().squaredNorm() / elements(x);
  }
  return total / static_cast<double>(patches.size());
}

Phase2Result phase2_train(std::span<const RasterPatch> patches, NetworkParams<float> params, ClusterState cs,
                          const NetworkConfig& net_in, const PretrainConfig& cfg) {
  cfg.validate();
  cs.validate();
  const NetworkConfig net = pretrain_network_config(net_in);
  if (cs.dim() != net.embedding_dim) throw ShapeMismatchError("phase2_train: centroid dim != embedding dim");
  if (patches.size() < static_cast<size_t>(cs.k())) throw ValidationError("phase2_train: fewer patches than clusters");

  Phase2Result result;
  SgdMomentum<float> opt(cfg.learning_rate, cfg.momentum);
  std::mt19937_64 rng(derive_seed(cfg.seed, 22));
  const auto batch = static_cast<size_t>(cfg.batch_size);

  TargetAssignment target;
  auto refresh = [&]() {
    const Matrix<double> z = embed_patches(params, net, patches);
    if (!z.allFinite()) throw DivergenceError("phase2_train: non-finite embeddings");
    SoftAssignment q = soft_assign(z, cs);
    target = target_distribution(q);
    return hard_assignments(q.q);
  };

  std::vector<int> assignment = refresh();
  double last_churn = std::numeric_limits<double>::quiet_NaN();
  bool stop = false;
  for (int epoch = 0; epoch < cfg.phase2_epochs && !stop; ++epoch) {
    const auto order = batch_order(patches.size(), rng);
    double kl_sum = 0.0, rec_sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      if (result.steps > 0 && result.steps % cfg.target_update_interval == 0) {
        std::vector<int> next = refresh();
        size_t changed = 0;
        for (size_t i = 0; i < next.size(); ++i) changed += next[i] != assignment[i];
        assignment = std::move(next);
        last_churn = static_cast<double>(changed) / static_cast<double>(assignment.size());
        ++result.refreshes;
        if (last_churn < cfg.stop_delta) {
          result.converged = true;
          stop = true;
          break;
        }
      }
      const auto idx = std::span<const size_t>(order).subspan(start, std::min(batch, order.size() - start));
      const auto xs = gather(patches, idx);
      TargetAssignment p_batch{Matrix<double>(static_cast<Eigen::Index>(idx.size()), cs.k())};
      for (size_t r = 0; r < idx.size(); ++r) p_batch.p.row(static_cast<Eigen::Index>(r)) = target.p.row(idx[r]);

      auto g = cas_loss_gradient<float>(params, net, cs, p_batch, xs, cfg.lambda);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError("phase2_train: non-finite loss at step " + std::to_string(result.steps));
      }
      opt.step(params, g.d_params);
      opt.step(cs.centroids, g.d_centroids);
      ++result.steps;
      if (!params.all_finite() || !cs.centroids.allFinite()) {
        throw DivergenceError("phase2_train: parameters became non-finite at step " + std::to_string(result.steps));
      }
      const double gap = cs.min_pairwise_distance();
      if (gap < kCollapseDistance) {
        throw DegenerateClusteringError("degenerate clustering: centroids collapsed (min pairwise distance " +
                                        std::to_string(gap) + ") at step " + std::to_string(result.steps));
      }
      kl_sum += g.kl * static_cast<double>(idx.size());
      if (cfg.lambda > 0.0) rec_sum += g.reconstruction * static_cast<double>(idx.size());
      count += idx.size();
    }
    if (count > 0) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.kl = kl_sum / static_cast<double>(count);
      if (cfg.lambda > 0.0) {
        rec.reconstruction = rec_sum / static_cast<double>(count);
        rec.total = rec.kl + cfg.lambda * rec.reconstruction;
      } else {
        rec.total = rec.kl;
      }
      rec.churn = last_churn;
      result.log.push_back(rec);
    }
  }
  result.q = soft_assign(embed_patches(params, net, patches), cs);
  result.params = std::move(params);
  result.clusters = std::move(cs);
  return result;
}

Phase2Result phase2_train(const PatchDataset& ds, NetworkParams<float> params, ClusterState cs,
                          const NetworkConfig& net, const PretrainConfig& cfg) {
  const auto patches = ds.all_features();
  return phase2_train(std::span<const RasterPatch>(patches), std::move(params), std::move(cs), net, cfg);
}

template float reconstruction_loss<float>(std::span<const FeatureMap<float>>, std::span<const FeatureMap<float>>);
template double reconstruction_loss<double>(std::span<const FeatureMap<double>>, std::span<const FeatureMap<double>>);
template CasGradient<float> cas_loss_gradient<float>(const NetworkParams<float>&, const NetworkConfig&,
                                                     const ClusterState&, const TargetAssignment&,
                                                     std::span<const FeatureMap<float>>, double);
template CasGradient<double> cas_loss_gradient<double>(const NetworkParams<double>&, const NetworkConfig&,
                                                       const ClusterState&, const TargetAssignment&,
                                                       std::span<const FeatureMap<double>>, double);
template CasGradient<float> reconstruction_loss_gradient<float>(const NetworkParams<float>&, const NetworkConfig&,
                                                                std::span<const FeatureMap<float>>);
template CasGradient<double> reconstruction_loss_gradient<double>(const NetworkParams<double>&, const NetworkConfig&,
                                                                  std::span<const FeatureMap<double>>);

}  // namespace cas
