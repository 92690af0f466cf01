#include "cas/experiment.hpp"

#include "cas/binary_io.hpp"
#include "cas/config_io.hpp"
#include "cas/training_log.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

namespace cas {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::kCas: return "cas";
    case Method::kDec: return "dec";
    case Method::kAutoencoder: return "autoencoder";
    case Method::kScratch: return "scratch";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "cas") return Method::kCas;
  if (name == "dec") return Method::kDec;
  if (name == "autoencoder") return Method::kAutoencoder;
  if (name == "scratch") return Method::kScratch;
  throw ValidationError("method: unknown method '" + name + "' (cas, dec, autoencoder, scratch)");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ValidationError("seeds: must be non-empty");
  if (few_shot_sizes.empty()) throw ValidationError("few_shot_sizes: must be non-empty");
  for (int n : few_shot_sizes) {
    if (n < 1) throw ValidationError("few_shot_sizes: entries must be >= 1");
  }
  for (int b : budgets) {
    if (b < 0) throw ValidationError("budgets: entries must be >= 0");
  }
  if (active_rounds < 1) throw ValidationError("active_rounds: must be >= 1");
  if (holdout < 0) throw ValidationError("holdout: must be >= 0");
  if (!dataset) {
    synthetic.validate();
    if (holdout < 1) throw ValidationError("holdout: synthetic experiments need a test set");
  }
  network.validate();
  if (method != Method::kScratch) pretrain.validate();
  finetune.validate();
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = c.dataset ? json(c.dataset->string()) : json(nullptr);
  j["synthetic"] = c.synthetic;
  j["holdout"] = c.holdout;
  j["network"] = c.network;
  j["pretrain"] = c.pretrain;
  j["finetune"] = c.finetune;
  j["method"] = to_string(c.method);
  j["few_shot_sizes"] = c.few_shot_sizes;
  j["seeds"] = c.seeds;
  j["budgets"] = c.budgets;
  j["active_rounds"] = c.active_rounds;
  j["output_dir"] = c.output_dir.string();
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("experiment config: expected a JSON object");
  static const std::set<std::string> known{"dataset", "synthetic",      "holdout", "network", "pretrain",
                                           "finetune", "method",        "few_shot_sizes", "seeds", "budgets",
                                           "active_rounds", "output_dir"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("experiment config: unknown field '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("dataset") && !j.at("dataset").is_null()) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("synthetic")) c.synthetic = j.at("synthetic").get<SyntheticConfig>();
    if (j.contains("holdout")) c.holdout = j.at("holdout").get<int>();
    if (j.contains("network")) c.network = j.at("network").get<NetworkConfig>();
    if (j.contains("pretrain")) c.pretrain = j.at("pretrain").get<PretrainConfig>();
    if (j.contains("finetune")) c.finetune = j.at("finetune").get<FinetuneConfig>();
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("few_shot_sizes")) c.few_shot_sizes = j.at("few_shot_sizes").get<std::vector<int>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("budgets")) c.budgets = j.at("budgets").get<std::vector<int>>();
    if (j.contains("active_rounds")) c.active_rounds = j.at("active_rounds").get<int>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing config: " + path.string());
  try {
    return experiment_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
}

std::string digest_of(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

namespace {

json data_identity(const ExperimentConfig& c) {
  if (c.dataset) return {{"dataset", fs::absolute(*c.dataset).lexically_normal().string()}};
  return {{"synthetic", c.synthetic}, {"holdout", c.holdout}};
}

json phase1_identity(const ExperimentConfig& c, std::uint64_t seed) {
  json p = c.pretrain;
  for (const char* k : {"phase2_epochs", "lambda", "clusters", "target_update_interval", "stop_delta",
                        "kmeans_restarts"}) {
    p.erase(k);
  }
  p["seed"] = seed;
  return {{"data", data_identity(c)}, {"network", pretrain_network_config(c.network)}, {"pretrain", p}};
}

json pretrain_identity(const ExperimentConfig& c, std::uint64_t seed) {
  json p = c.pretrain;
  p["seed"] = seed;
  if (c.method == Method::kDec) p["lambda"] = 0.0;
  if (c.method == Method::kAutoencoder) {
    for (const char* k : {"phase2_epochs", "lambda", "target_update_interval", "stop_delta"}) p.erase(k);
  }
  return {{"data", data_identity(c)},
          {"network", pretrain_network_config(c.network)},
          {"pretrain", p},
          {"method", to_string(c.method)}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  write_bytes(tmp, text);
  fs::rename(tmp, path);
}

std::optional<json> read_json(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    std::ifstream in(path);
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;  // a damaged cache entry is simply recomputed
  }
}

std::optional<Checkpoint> cached_checkpoint(const fs::path& path, const std::string& digest) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    auto ckpt = load_checkpoint(path);
    if (ckpt.extra.value("digest", "") == digest) return ckpt;
  } catch (const Error&) {
  }
  return std::nullopt;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string config_digest(const ExperimentConfig& c) {
  json j = to_json(c);
  for (const char* k : {"seeds", "few_shot_sizes", "budgets", "output_dir", "dataset", "synthetic", "holdout"}) {
    j.erase(k);
  }
  j["data"] = data_identity(c);
  j["pretrain"].erase("seed");
  j["finetune"].erase("seed");
  if (c.method == Method::kDec) j["pretrain"]["lambda"] = 0.0;
  if (c.method == Method::kAutoencoder) {
    for (const char* k : {"phase2_epochs", "lambda", "target_update_interval", "stop_delta"}) j["pretrain"].erase(k);
  }
  if (c.method == Method::kScratch) j.erase("pretrain");
  return digest_of(j);
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.dataset) {
    data.dataset = load_dataset(*cfg.dataset);
    return data;
  }
  auto world = generate_synthetic_world(cfg.synthetic, cfg.holdout);
  data.dataset = std::move(world.dataset);
  data.test = std::move(world.holdout);
  data.unlabeled_masks = std::move(world.unlabeled_masks);
  data.synthetic = true;
  return data;
}

ClusterEvalSet cluster_eval_set(const ExperimentData& data) {
  ClusterEvalSet s;
  const int L = data.dataset.manifest.classes;
  for (const auto& p : data.dataset.labeled) {
    s.images.push_back(p.image);
    s.labels.push_back(aggregated_label(p.mask, L));
  }
  if (data.unlabeled_masks.size() == data.dataset.unlabeled.size()) {
    for (size_t i = 0; i < data.unlabeled_masks.size(); ++i) {
      s.images.push_back(data.dataset.unlabeled[i]);
      s.labels.push_back(aggregated_label(data.unlabeled_masks[i], L));
    }
  }
  return s;
}

PretrainOutcome pretrain_for(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed,
                             bool force) {
  if (cfg.method == Method::kScratch) throw ValidationError("method scratch has no pretraining stage");
  PretrainConfig pc = cfg.pretrain;
  pc.seed = seed;
  if (cfg.method == Method::kDec) pc.lambda = 0.0;
  const NetworkConfig net = pretrain_network_config(cfg.network);
  const auto features = data.dataset.all_features();

  PretrainOutcome out;
  out.artifacts.net = cfg.network;

  const std::string full_digest = digest_of(pretrain_identity(cfg, seed));
  const fs::path full_path =
      cfg.output_dir / "pretrain" / (to_string(cfg.method) + "_seed" + std::to_string(seed) + ".cas");
  if (!force) {
    if (auto ck = cached_checkpoint(full_path, full_digest); ck && ck->clusters) {
      out.artifacts.params = std::move(ck->params);
      out.artifacts.clusters = *ck->clusters;
      out.from_cache = true;
      return out;
    }
  }

  const std::string p1_digest = digest_of(phase1_identity(cfg, seed));
  const fs::path p1_path = cfg.output_dir / "phase1" / ("seed" + std::to_string(seed) + ".cas");
  NetworkParams<float> params;
  if (auto ck = force ? std::nullopt : cached_checkpoint(p1_path, p1_digest)) {
    params = std::move(ck->params);
  } else {
    auto p1 = phase1_train(features, net, pc);
    params = std::move(p1.params);
    out.phase1_loss = std::move(p1.loss_trace);
    save_checkpoint({params, net, std::nullopt, {{"digest", p1_digest}, {"stage", "phase1"}}}, p1_path);
    write_loss_log(p1_path.parent_path() / ("seed" + std::to_string(seed) + "_loss.jsonl"), out.phase1_loss);
  }

  const Matrix<double> z = embed_patches(params, net, features);
  out.kmeans_init = kmeans_fit(z, pc.clusters, derive_seed(seed, 23), pc.kmeans_restarts).state;

  if (cfg.method == Method::kAutoencoder) {
    out.artifacts.params = std::move(params);
    out.artifacts.clusters = out.kmeans_init;
  } else {
    auto p2 = phase2_train(features, std::move(params), out.kmeans_init, net, pc);
    out.artifacts.params = std::move(p2.params);
    out.artifacts.clusters = std::move(p2.clusters);
    out.phase2_log = std::move(p2.log);
    fs::create_directories(full_path.parent_path());
    write_pretrain_log(cfg.output_dir / "pretrain" / (to_string(cfg.method) + "_seed" + std::to_string(seed) + ".jsonl"),
                       out.phase2_log);
  }
  save_checkpoint({out.artifacts.params, net, out.artifacts.clusters, {{"digest", full_digest}, {"stage", "pretrain"}}},
                  full_path);
  return out;
}

namespace {

void write_summary(const ExperimentConfig& cfg, const std::vector<MetricsReport>& reports, const std::string& stem) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_text(cfg.output_dir / (stem + ".json"), arr.dump(2) + "\n");
  write_text(cfg.output_dir / (stem + ".csv"), reports_csv(reports));
  std::vector<MetricsReport> ok;
  for (const auto& r : reports) {
    if (!r.failed() && !r.empty_query) ok.push_back(r);
  }
  write_text(cfg.output_dir / (stem + "_comparison.txt"), format_comparison(compare_runs(ok)));
}

MetricsReport failed_report(const std::string& method, int n, std::uint64_t seed, const std::string& digest,
                            const std::string& what) {
  MetricsReport r;
  r.method = method;
  r.n_labeled = n;
  r.seed = seed;
  r.config_digest = digest;
  r.diagnostic = what.empty() ? "unknown failure" : what;
  return r;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  const ExperimentData data = prepare_data(cfg);
  const std::string digest = config_digest(cfg);
  const std::string method = to_string(cfg.method);
  ExperimentResult result;

  for (std::uint64_t seed : cfg.seeds) {
    std::optional<PretrainOutcome> pre;
    std::string pre_error;
    for (int n : cfg.few_shot_sizes) {
      const fs::path cell = cfg.output_dir / "cells" / method / ("n" + std::to_string(n) + "_seed" + std::to_string(seed));
      if (!force) {
        if (auto j = read_json(cell.string() + ".json")) {
          try {
            auto r = report_from_json(*j);
            if (r.config_digest == digest && !r.failed()) {
              result.reports.push_back(std::move(r));
              continue;
            }
          } catch (const std::exception&) {
          }
        }
      }

      MetricsReport report;
      try {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.method != Method::kScratch && !pre && pre_error.empty()) {
          try {
            pre = pretrain_for(cfg, data, seed, force);
          } catch (const std::exception& e) {
            pre_error = std::string("pretraining: ") + e.what();
          }
        }
        if (!pre_error.empty()) throw Error(pre_error);

        const auto& ds = data.dataset;
        if (static_cast<size_t>(n) > ds.labeled.size()) {
          throw ValidationError("few-shot size " + std::to_string(n) + " exceeds the labeled set (" +
                                std::to_string(ds.labeled.size()) + ")");
        }
        const auto split = few_shot_split(ds, static_cast<size_t>(n), derive_seed(seed, 50));
        std::vector<LabeledPatch> train, test;
        for (size_t i : split.subset) train.push_back(ds.labeled[i]);
        if (data.synthetic) {
          test = data.test;
        } else {
          for (size_t i : split.remainder) test.push_back(ds.labeled[i]);
        }
        if (test.empty()) throw ValidationError("no test patches left after the few-shot split");

        FinetuneConfig ft = cfg.finetune;
        ft.seed = seed;
        ft.init_mode = cfg.method == Method::kScratch ? InitMode::kScratch : InitMode::kPretrained;
        NetworkParams<float> trained;
        report = finetune_and_evaluate(train, test, ds.manifest.classes, pre ? &pre->artifacts.params : nullptr,
                                       cfg.network, ft, &trained);
        if (pre) {
          const auto eval = cluster_eval_set(data);
          const Matrix<double> z = embed_patches(pre->artifacts.params, pretrain_network_config(cfg.network), eval.images);
          const auto assign = hard_assignments(soft_assign(z, pre->artifacts.clusters).q);
          report.weighted_entropy =
              weighted_cluster_entropy(assign, eval.labels, pre->artifacts.clusters.k(), ds.manifest.classes);
        }
        report.method = method;
        report.seed = seed;
        report.config_digest = digest;
        report.wall_time_seconds = seconds_since(t0);
        save_checkpoint({trained, segmentation_network_config(cfg.network), std::nullopt,
                         {{"digest", digest}, {"stage", "finetune"}, {"seed", seed}, {"n_labeled", n}}},
                        cell.string() + ".cas");
      } catch (const std::exception& e) {
        report = failed_report(method, n, seed, digest, e.what());
        result.failures.push_back(method + " n=" + std::to_string(n) + " seed=" + std::to_string(seed) + ": " +
                                  report.diagnostic);
      }
      write_text(cell.string() + ".json", to_json(report).dump(2) + "\n");
      result.reports.push_back(std::move(report));
    }
  }
  write_summary(cfg, result.reports, "reports");
  return result;
}

ExperimentResult run_active(const ExperimentConfig& cfg_in, const std::vector<int>& budgets, bool force) {
  if (budgets.empty()) throw ValidationError("budgets: at least one budget is required");
  ExperimentConfig cfg = cfg_in;
  cfg.budgets = budgets;
  cfg.validate();
  if (cfg.method != Method::kCas) throw ValidationError("active sampling needs method cas");
  const ExperimentData data = prepare_data(cfg);
  const std::string digest = config_digest(cfg);
  const int L = data.dataset.manifest.classes;
  ExperimentResult result;

  for (std::uint64_t seed : cfg.seeds) {
    std::optional<PretrainOutcome> pre;
    std::string pre_error;
    for (int budget : budgets) {
      const fs::path cell = cfg.output_dir / "active" / ("b" + std::to_string(budget) + "_seed" + std::to_string(seed));
      if (!force) {
        if (auto j = read_json(cell.string() + ".json")) {
          try {
            auto a = report_from_json(j->at("active"));
            auto r = report_from_json(j->at("random"));
            if (a.config_digest == digest && r.config_digest == digest && !a.failed() && !r.failed()) {
              result.reports.push_back(std::move(a));
              result.reports.push_back(std::move(r));
              continue;
            }
          } catch (const std::exception&) {
          }
        }
      }

      json out;
      try {
        if (!pre && pre_error.empty()) {
          try {
            pre = pretrain_for(cfg, data, seed, force);
          } catch (const std::exception& e) {
            pre_error = std::string("pretraining: ") + e.what();
          }
        }
        if (!pre_error.empty()) throw Error(pre_error);

        // The pool's labels act as the oracle and are only read once queried.
        std::vector<LabeledPatch> pool, test;
        if (data.synthetic) {
          pool = data.dataset.labeled;
          for (size_t i = 0; i < data.dataset.unlabeled.size(); ++i) {
            pool.push_back({data.dataset.unlabeled[i], data.unlabeled_masks[i]});
          }
          test = data.test;
        } else {
          const auto& ds = data.dataset;
          if (ds.labeled.size() < 2) throw ValidationError("active sampling needs at least two labeled patches");
          const auto split = few_shot_split(ds, ds.labeled.size() / 2, derive_seed(seed, 40));
          for (size_t i : split.subset) pool.push_back(ds.labeled[i]);
          for (size_t i : split.remainder) test.push_back(ds.labeled[i]);
        }

        ActiveOptions opts;
        opts.budget = budget;
        opts.rounds = cfg.active_rounds;
        opts.finetune = cfg.finetune;
        opts.seed = seed;
        const auto rounds = active_learning(pool, test, L, pre->artifacts, opts);
        auto last = rounds.back();
        last.active.config_digest = last.random.config_digest = digest;
        out["active"] = to_json(last.active);
        out["random"] = to_json(last.random);
        out["rounds"] = json::array();
        for (const auto& r : rounds) {
          auto m = query_manifest(r.round, r.queries);
          m["allocation"] = r.budget.allocation;
          m["uncertainty"] = r.uncertainty.entropy;
          m["uncertainty_computed"] = r.uncertainty_computed;
          m["active_mean_f1"] = r.active.mean_f1;
          m["random_mean_f1"] = r.random.mean_f1;
          out["rounds"].push_back(m);
        }
        result.reports.push_back(last.active);
        result.reports.push_back(last.random);
      } catch (const std::exception& e) {
        auto a = failed_report("cas_cluster", budget, seed, digest, e.what());
        auto r = failed_report("cas_random", budget, seed, digest, e.what());
        out["active"] = to_json(a);
        out["random"] = to_json(r);
        result.failures.push_back("active budget=" + std::to_string(budget) + " seed=" + std::to_string(seed) + ": " +
                                  a.diagnostic);
        result.reports.push_back(std::move(a));
        result.reports.push_back(std::move(r));
      }
      write_text(cell.string() + ".json", out.dump(2) + "\n");
    }
  }
  write_summary(cfg, result.reports, "active_reports");
  return result;
}

std::vector<MetricsReport> collect_reports(const fs::path& dir) {
  std::vector<MetricsReport> out;
  if (!fs::exists(dir)) throw MissingFileError("missing directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto j = read_json(f);
    if (!j || !j->is_object()) continue;
    try {
      if (j->contains("active") && j->contains("random")) {
        out.push_back(report_from_json(j->at("active")));
        out.push_back(report_from_json(j->at("random")));
      } else if (j->contains("mean_f1")) {
        out.push_back(report_from_json(*j));
      }
    } catch (const std::exception&) {
    }
  }
  return out;
}

}  // namespace cas
