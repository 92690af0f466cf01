#pragma once

#include "cas/clustering.hpp"
#include "cas/dataio.hpp"
#include "cas/evaluate.hpp"
#include "cas/finetune.hpp"
#include "cas/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace cas {

struct ClusterUncertainty {
  std::vector<double> entropy;  // per cluster, natural log
};

/// Entropy of the predicted patch majority classes inside each cluster;
/// an empty cluster has entropy 0.
ClusterUncertainty cluster_uncertainty(std::span<const int> pred_majorities, std::span<const int> assignments, int k,
                                       int num_classes);

struct QueryBudget {
  int total = 0;
  std::vector<int> allocation;  // per cluster
};

/// floor(B/K) per cluster; the B mod K extras go one each to the most
/// uncertain clusters (ties to the lower index). Allocations are capped at
/// cluster size; overflow goes to the most uncertain cluster with room left,
/// then the next.
QueryBudget allocate_budget(const ClusterUncertainty& unc, std::span<const int> cluster_sizes, int budget, int k);

struct Query {
  size_t index = 0;  // into the embeddings passed to select_queries
  int cluster = 0;
  double distance = 0.0;
};

/// For each cluster, the allocated number of non-excluded members closest to
/// its centroid (distance ties to the lower index).
std::vector<Query> select_queries(const Matrix<double>& embeddings, const ClusterState& cs,
                                  std::span<const int> assignments, const QueryBudget& qb,
                                  std::span<const size_t> exclude);

/// JSON: round id plus one entry per query (index, cluster, distance).
nlohmann::json query_manifest(int round, std::span<const Query> queries, std::span<const size_t> patch_ids = {});

/// Pretrained network (reconstruction head) with its cluster state.
struct PretrainArtifacts {
  NetworkConfig net;
  NetworkParams<float> params;
  ClusterState clusters;
};

struct ActiveOptions {
  int budget = 10;  // queries per round
  int rounds = 1;
  FinetuneConfig finetune;
  std::uint64_t seed = 0;
};

struct ActiveRoundReport {
  int round = 0;
  std::vector<Query> queries;
  std::vector<size_t> query_ids;  // pool indices, in query order
  ClusterUncertainty uncertainty;
  bool uncertainty_computed = false;
  QueryBudget budget;
  MetricsReport active;
  MetricsReport random;
};

/// Cluster-driven query rounds with a random-sampling control of equal size.
/// `pool` plays the unlabeled set with its labels hidden until queried.
/// Each round fine-tunes the pretrained network on all labels revealed so far
/// and scores it on `test`.
std::vector<ActiveRoundReport> active_learning(std::span<const LabeledPatch> pool, std::span<const LabeledPatch> test,
                                               int num_classes, const PretrainArtifacts& pre,
                                               const ActiveOptions& opts);

ActiveRoundReport active_round(std::span<const LabeledPatch> pool, std::span<const LabeledPatch> test,
                               int num_classes, const PretrainArtifacts& pre, int budget, const FinetuneConfig& ft,
                               std::uint64_t seed);

/// Fine-tunes, predicts the test patches and fills a report.
MetricsReport finetune_and_evaluate(std::span<const LabeledPatch> train, std::span<const LabeledPatch> test,
                                    int num_classes, const NetworkParams<float>* init, const NetworkConfig& net,
                                    const FinetuneConfig& ft, NetworkParams<float>* trained = nullptr);

}  // namespace cas
