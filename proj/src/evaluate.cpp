#include "cas/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace cas {

F1Scores f1_scores(std::span<const LabelMask> pred, std::span<const LabelMask> truth, int num_classes) {
  if (pred.size() != truth.size()) throw ShapeMismatchError("f1_scores: different number of masks");
  const auto L = static_cast<size_t>(num_classes);
  std::vector<size_t> tp(L, 0), fp(L, 0), fn(L, 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].height != truth[i].height || pred[i].width != truth[i].width ||
        pred[i].labels.size() != truth[i].labels.size()) {
      throw ShapeMismatchError("f1_scores: mask " + std::to_string(i) + " shapes differ");
    }
    for (size_t p = 0; p < pred[i].labels.size(); ++p) {
      const size_t a = pred[i].labels[p], b = truth[i].labels[p];
      if (a >= L || b >= L) throw LabelRangeError("f1_scores: label out of range");
      if (a == b) {
        ++tp[a];
      } else {
        ++fp[a];
        ++fn[b];
      }
    }
  }
  F1Scores out;
  for (size_t c = 0; c < L; ++c) {
    const size_t denom = 2 * tp[c] + fp[c] + fn[c];
    out.per_class.push_back(denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom));
  }
  out.mean = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / static_cast<double>(L);
  return out;
}

double entropy_of_counts(std::span<const size_t> counts) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), size_t{0}));
  if (n == 0.0) return 0.0;
  double h = 0.0;
  for (size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double weighted_cluster_entropy(std::span<const int> assignments, std::span<const int> labels, int k,
                                int num_classes) {
  if (assignments.size() != labels.size()) throw ShapeMismatchError("weighted_cluster_entropy: length mismatch");
  if (assignments.empty()) return 0.0;
  std::vector<std::vector<size_t>> hist(static_cast<size_t>(k), std::vector<size_t>(static_cast<size_t>(num_classes)));
  for (size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] < 0 || assignments[i] >= k) throw ValidationError("weighted_cluster_entropy: cluster id out of range");
    if (labels[i] < 0 || labels[i] >= num_classes) throw LabelRangeError("weighted_cluster_entropy: label out of range");
    ++hist[static_cast<size_t>(assignments[i])][static_cast<size_t>(labels[i])];
  }
  double total = 0.0;
  for (const auto& h : hist) {
    const double n_k = static_cast<double>(std::accumulate(h.begin(), h.end(), size_t{0}));
    total += n_k * entropy_of_counts(h);
  }
  return total / static_cast<double>(assignments.size());
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["n_labeled"] = r.n_labeled;
  j["seed"] = r.seed;
  j["per_class_f1"] = r.per_class_f1;
  j["mean_f1"] = r.mean_f1;
  j["weighted_entropy"] = r.weighted_entropy ? nlohmann::json(*r.weighted_entropy) : nlohmann::json(nullptr);
  j["config_digest"] = r.config_digest;
  j["wall_time_seconds"] = r.wall_time_seconds;
  j["empty_query"] = r.empty_query;
  j["f1_averaging"] = r.f1_averaging;
  if (r.failed()) j["diagnostic"] = r.diagnostic;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.method = j.at("method").get<std::string>();
  r.n_labeled = j.at("n_labeled").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
  r.mean_f1 = j.at("mean_f1").get<double>();
  if (j.contains("weighted_entropy") && !j["weighted_entropy"].is_null()) {
    r.weighted_entropy = j["weighted_entropy"].get<double>();
  }
  r.config_digest = j.value("config_digest", std::string());
  r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  r.empty_query = j.value("empty_query", false);
  r.f1_averaging = j.value("f1_averaging", std::string("macro"));
  r.diagnostic = j.value("diagnostic", std::string());
  return r;
}

std::vector<ComparisonRow> compare_runs(std::span<const MetricsReport> reports) {
  std::map<std::pair<std::string, int>, std::vector<const MetricsReport*>> groups;
  for (const auto& r : reports) {
    if (!r.failed()) groups[{r.method, r.n_labeled}].push_back(&r);
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [key, members] : groups) {
    for (const auto* m : members) {
      if (m->config_digest != members.front()->config_digest) {
        throw ValidationError("compare_runs: inconsistent configurations for method " + key.first + " n=" +
                              std::to_string(key.second));
      }
    }
    ComparisonRow row{key.first, key.second, members.size(), 0.0, 0.0};
    for (const auto* m : members) row.mean_f1 += m->mean_f1;
    row.mean_f1 /= static_cast<double>(members.size());
    if (members.size() > 1) {
      double ss = 0.0;
      for (const auto* m : members) ss += (m->mean_f1 - row.mean_f1) * (m->mean_f1 - row.mean_f1);
      row.std_f1 = std::sqrt(ss / static_cast<double>(members.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_comparison(std::span<const ComparisonRow> rows) {
  std::string out = "method              n_labeled  runs  mean_f1  std_f1\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-18s  %9d  %4zu  %7.4f  %6.4f\n", r.method.c_str(), r.n_labeled, r.runs,
                  r.mean_f1, r.std_f1);
    out += line;
  }
  return out;
}

std::string reports_csv(std::span<const MetricsReport> reports) {
  std::string out = "method,n_labeled,seed,mean_f1,weighted_entropy\n";
  char line[256];
  for (const auto& r : reports) {
    if (r.failed()) continue;
    char h[64] = "";
    if (r.weighted_entropy) std::snprintf(h, sizeof(h), "%.10g", *r.weighted_entropy);
    std::snprintf(line, sizeof(line), "%s,%d,%llu,%.10g,%s\n", r.method.c_str(), r.n_labeled,
                  static_cast<unsigned long long>(r.seed), r.mean_f1, h);
    out += line;
  }
  return out;
}

}  // namespace cas
