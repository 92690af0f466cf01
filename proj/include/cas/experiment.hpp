#pragma once

#include "cas/active.hpp"
#include "cas/checkpoint.hpp"
#include "cas/dataio.hpp"
#include "cas/evaluate.hpp"
#include "cas/finetune.hpp"
#include "cas/network.hpp"
#include "cas/pretrain.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cas {

/// cas: phase 1 + phase 2. dec: phase 2 with lambda = 0. autoencoder:
/// phase 1 only. scratch: no pretraining.
enum class Method { kCas, kDec, kAutoencoder, kScratch };
std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct ExperimentConfig {
  std::optional<std::filesystem::path> dataset;  // manifest or directory; synthetic when unset
  SyntheticConfig synthetic;
  int holdout = 50;  // synthetic test patches
  NetworkConfig network;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  Method method = Method::kCas;
  std::vector<int> few_shot_sizes{10};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<int> budgets;  // active learning
  int active_rounds = 1;
  std::filesystem::path output_dir = "cas_runs";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical JSON of everything that
/// determines a cell's result except the seed and the cell coordinates.
std::string config_digest(const ExperimentConfig& cfg);
std::string digest_of(const nlohmann::json& j);

struct ExperimentData {
  PatchDataset dataset;
  std::vector<LabeledPatch> test;          // synthetic holdout; empty for loaded data
  std::vector<LabelMask> unlabeled_masks;  // synthetic only
  bool synthetic = false;
};
ExperimentData prepare_data(const ExperimentConfig& cfg);

struct PretrainOutcome {
  PretrainArtifacts artifacts;  // clusters are the KMeans init for the autoencoder method
  ClusterState kmeans_init;
  std::vector<double> phase1_loss;
  std::vector<EpochRecord> phase2_log;
  bool from_cache = false;
};

/// Phase 1 (cached under output_dir/phase1 by digest), KMeans on the
/// embeddings, then phase 2 unless the method is autoencoder. Scratch is
/// rejected.
PretrainOutcome pretrain_for(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed,
                             bool force = false);

/// Patches with known labels for scoring clusters: every labeled patch, plus
/// the unlabeled ones when their masks are known.
struct ClusterEvalSet {
  std::vector<RasterPatch> images;
  std::vector<int> labels;  // aggregated labels
};
ClusterEvalSet cluster_eval_set(const ExperimentData& data);

struct ExperimentResult {
  std::vector<MetricsReport> reports;
  std::vector<std::string> failures;  // one line per failed cell

  bool ok() const { return failures.empty(); }
};

/// One cell per (seed, few-shot size). Completed cells whose stored digest
/// matches are loaded instead of recomputed unless `force`. A failing cell
/// records its diagnostic and the remaining cells still run. Writes
/// reports.json, reports.csv and comparison.txt under output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool force = false);

/// Active sampling for each (budget, seed): one cluster-selected and one
/// random-control report. Needs method cas.
ExperimentResult run_active(const ExperimentConfig& cfg, const std::vector<int>& budgets, bool force = false);

/// All cell reports found under a directory tree.
std::vector<MetricsReport> collect_reports(const std::filesystem::path& dir);

}  // namespace cas
