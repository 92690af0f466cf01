#pragma once

#include "cas/clustering.hpp"
#include "cas/dataio.hpp"
#include "cas/network.hpp"
#include "cas/training_log.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cas {

struct PretrainConfig {
  int phase1_epochs = 20;
  int phase2_epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double lambda = 0.1;
  int clusters = 8;
  int target_update_interval = 100;  // optimizer steps between P refreshes
  double stop_delta = 0.001;         // stop when assignment churn falls below this
  std::uint64_t seed = 0;
  int kmeans_restarts = 10;

  void validate() const;
};

/// (1/B) sum_i |output_i - input_i|^2 / (H*W*C): the squared error of each
/// sample averaged over its pixels and bands, then over the batch.
template <typename Scalar>
Scalar reconstruction_loss(std::span<const FeatureMap<Scalar>> output, std::span<const FeatureMap<Scalar>> input);

/// kl_loss(P, Q) + lambda * reconstruction_loss(output, input).
double cas_loss(const TargetAssignment& p, const SoftAssignment& q, std::span<const FeatureMap<float>> output,
                std::span<const FeatureMap<float>> input, double lambda);
double cas_loss(const TargetAssignment& p, const SoftAssignment& q, std::span<const FeatureMap<double>> output,
                std::span<const FeatureMap<double>> input, double lambda);

/// Value and analytic gradient of the M-step objective on one minibatch,
/// with the batch rows of P held fixed. Gradients are w.r.t. every network
/// parameter and every centroid entry.
template <typename Scalar>
struct CasGradient {
  double loss = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
  NetworkParams<Scalar> d_params;
  Matrix<double> d_centroids;
};

template <typename Scalar>
CasGradient<Scalar> cas_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                      const ClusterState& cs, const TargetAssignment& p_batch,
                                      std::span<const FeatureMap<Scalar>> batch, double lambda);

/// Reconstruction-only objective and gradient on one minibatch.
template <typename Scalar>
CasGradient<Scalar> reconstruction_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                                 std::span<const FeatureMap<Scalar>> batch);

struct Phase1Result {
  NetworkParams<float> params;
  std::vector<double> loss_trace;  // epoch-mean reconstruction loss
};

/// Trains the skipless reconstruction network on all patches (X^l and X^u).
Phase1Result phase1_train(std::span<const RasterPatch> patches, const NetworkConfig& net, const PretrainConfig& cfg);
Phase1Result phase1_train(const PatchDataset& ds, const NetworkConfig& net, const PretrainConfig& cfg);

struct Phase2Result {
  NetworkParams<float> params;
  ClusterState clusters;
  SoftAssignment q;  // over all patches, final parameters
  std::vector<EpochRecord> log;
  int steps = 0;
  int refreshes = 0;
  bool converged = false;  // churn fell below stop_delta
};

/// EM refinement: every target_update_interval steps recompute Q over all
/// patches and refresh P; in between, minibatch descent on the CAS objective
/// w.r.t. encoder, decoder and centroids. Stops on low assignment churn or
/// after phase2_epochs. Throws DegenerateClusteringError on collapse.
Phase2Result phase2_train(std::span<const RasterPatch> patches, NetworkParams<float> params, ClusterState cs,
                          const NetworkConfig& net, const PretrainConfig& cfg);
Phase2Result phase2_train(const PatchDataset& ds, NetworkParams<float> params, ClusterState cs,
                          const NetworkConfig& net, const PretrainConfig& cfg);

/// Pooled embeddings of every patch, in double precision (N x D).
Matrix<double> embed_patches(const NetworkParams<float>& params, const NetworkConfig& net,
                             std::span<const RasterPatch> patches);

/// Mean reconstruction loss over a patch set, evaluated in batches.
double mean_reconstruction_loss(const NetworkParams<float>& params, const NetworkConfig& net,
                                std::span<const RasterPatch> patches);

/// Reconstruction network configuration derived from a dataset.
NetworkConfig pretrain_network_config(NetworkConfig base);

}  // namespace cas
