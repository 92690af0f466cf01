#pragma once

#include "cas/dataio.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cas {

struct F1Scores {
  std::vector<double> per_class;
  double mean = 0.0;
};

/// Per-class F1 = 2TP / (2TP + FP + FN) over pixels pooled across all
/// patches. A class absent from both prediction and truth scores 1. The mean
/// is unweighted over classes.
F1Scores f1_scores(std::span<const LabelMask> pred, std::span<const LabelMask> truth, int num_classes);

/// Shannon entropy (natural log) of a histogram; 0 for an empty one.
double entropy_of_counts(std::span<const size_t> counts);

/// sum_k (n_k / N) * H_k, H_k the entropy of the labels inside cluster k.
double weighted_cluster_entropy(std::span<const int> assignments, std::span<const int> labels, int k, int num_classes);

struct MetricsReport {
  std::string method;
  int n_labeled = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_class_f1;
  double mean_f1 = 0.0;
  std::optional<double> weighted_entropy;
  std::string config_digest;
  double wall_time_seconds = 0.0;
  bool empty_query = false;
  std::string f1_averaging = "macro";
  std::string diagnostic;  // non-empty when the run failed

  bool failed() const { return !diagnostic.empty(); }
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

struct ComparisonRow {
  std::string method;
  int n_labeled = 0;
  size_t runs = 0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation; 0 for a single run
};

/// Groups reports by (method, n_labeled) and summarizes mean_f1 over seeds.
/// Reports in one group must share their config digest.
std::vector<ComparisonRow> compare_runs(std::span<const MetricsReport> reports);

/// Plain-text table: method, n_labeled, runs, mean, std.
std::string format_comparison(std::span<const ComparisonRow> rows);

/// CSV: method,n_labeled,seed,mean_f1,weighted_entropy
std::string reports_csv(std::span<const MetricsReport> reports);

}  // namespace cas
