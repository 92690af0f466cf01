// Command-line driver for the CAS pipeline.

#include "cas/config_io.hpp"
#include "cas/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string method;
  std::optional<double> lambda;
  std::optional<int> k;
  std::vector<int> budgets;
  std::vector<int> sizes;
  std::string checkpoint;
  std::string dataset;
  bool force = false;
  bool print_config = false;
};

cas::ExperimentConfig resolve(const Options& o) {
  cas::ExperimentConfig cfg;
  bool config_sets_out = false;
  if (!o.config.empty()) {
    cfg = cas::load_experiment_config(o.config);
    std::ifstream in(o.config);
    config_sets_out = json::parse(in).contains("output_dir");
  }
  // The environment supplies the default root; the config file and --out win.
  if (const char* root = std::getenv("CAS_OUTPUT_ROOT"); root != nullptr && !config_sets_out) cfg.output_dir = root;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (!o.method.empty()) cfg.method = cas::method_from_string(o.method);
  if (o.lambda) cfg.pretrain.lambda = *o.lambda;
  if (o.k) cfg.pretrain.clusters = *o.k;
  if (!o.budgets.empty()) cfg.budgets = o.budgets;
  if (!o.sizes.empty()) cfg.few_shot_sizes = o.sizes;
  if (!o.dataset.empty()) cfg.dataset = o.dataset;
  return cfg;
}

int finish(const cas::ExperimentResult& r) {
  const auto rows = [&] {
    std::vector<cas::MetricsReport> ok;
    for (const auto& rep : r.reports) {
      if (!rep.failed() && !rep.empty_query) ok.push_back(rep);
    }
    return cas::compare_runs(ok);
  }();
  std::cout << cas::format_comparison(rows);
  if (r.ok()) return 0;
  std::cerr << r.failures.size() << " cell(s) failed:\n";
  for (const auto& f : r.failures) std::cerr << "  " << f << "\n";
  return 1;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering-augmented self-supervised pretraining for few-shot segmentation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seeds, "Seed; repeat for several")->take_all();
    sub->add_option("--out", o.out, "Output directory (default: $CAS_OUTPUT_ROOT or ./cas_runs)");
    sub->add_option("--method", o.method, "cas | dec | autoencoder | scratch");
    sub->add_option("--lambda", o.lambda, "Reconstruction weight in phase 2");
    sub->add_option("--k", o.k, "Number of clusters");
    sub->add_option("--dataset", o.dataset, "Dataset directory or manifest (default: synthetic)");
    sub->add_flag("--force", o.force, "Ignore cached artifacts");
    sub->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
  };

  auto* synth = app.add_subcommand("synth-data", "Generate and save the synthetic dataset");
  common(synth);
  auto* pretrain = app.add_subcommand("pretrain", "Phase 1 and phase 2 pretraining");
  common(pretrain);
  auto* cluster = app.add_subcommand("cluster", "Cluster assignments and weighted entropy of a checkpoint");
  common(cluster);
  cluster->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  auto* finetune = app.add_subcommand("finetune", "Few-shot fine-tuning and evaluation");
  common(finetune);
  finetune->add_option("--n-labeled", o.sizes, "Few-shot size; repeat for several")->take_all();
  auto* active = app.add_subcommand("active", "Cluster-based active sampling against a random control");
  common(active);
  active->add_option("--budget", o.budgets, "Query budget; repeat for several")->take_all();
  auto* evaluate = app.add_subcommand("evaluate", "Score a fine-tuned checkpoint on the test patches");
  common(evaluate);
  evaluate->add_option("--checkpoint", o.checkpoint, "Segmentation checkpoint")->required()->check(CLI::ExistingFile);
  auto* report = app.add_subcommand("report", "Summarize reports under the output directory");
  common(report);
  auto* experiment = app.add_subcommand("experiment", "Run the full (seed x few-shot size) matrix");
  common(experiment);
  experiment->add_option("--n-labeled", o.sizes, "Few-shot size; repeat for several")->take_all();
  experiment->add_option("--budget", o.budgets, "Also run active sampling with these budgets")->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    cas::ExperimentConfig cfg = resolve(o);
    if (o.print_config) {
      print_json(cas::to_json(cfg));
      return 0;
    }

    if (synth->parsed()) {
      cfg.synthetic.validate();
      const auto manifest = cas::save_dataset(cas::generate_synthetic(cfg.synthetic), cfg.output_dir, o.force);
      std::cout << manifest.string() << "\n";
      return 0;
    }

    if (pretrain->parsed()) {
      cfg.validate();
      const auto data = cas::prepare_data(cfg);
      for (auto seed : cfg.seeds) {
        const auto pre = cas::pretrain_for(cfg, data, seed, o.force);
        std::cout << "seed " << seed << ": " << (pre.from_cache ? "cached" : "trained") << ", K="
                  << pre.artifacts.clusters.k() << "\n";
      }
      return 0;
    }

    if (cluster->parsed()) {
      const auto ckpt = cas::load_checkpoint(o.checkpoint);
      if (!ckpt.clusters) throw cas::ValidationError("checkpoint has no cluster state");
      const auto data = cas::prepare_data(cfg);
      const auto eval = cas::cluster_eval_set(data);
      const auto z = cas::embed_patches(ckpt.params, ckpt.config, eval.images);
      const auto assign = cas::hard_assignments(cas::soft_assign(z, *ckpt.clusters).q);
      const double h =
          cas::weighted_cluster_entropy(assign, eval.labels, ckpt.clusters->k(), data.dataset.manifest.classes);
      print_json({{"assignments", assign}, {"labels", eval.labels}, {"weighted_entropy", h}});
      return 0;
    }

    if (finetune->parsed() || experiment->parsed()) {
      auto result = cas::run_experiment(cfg, o.force);
      if (experiment->parsed() && !cfg.budgets.empty()) {
        auto act = cas::run_active(cfg, cfg.budgets, o.force);
        result.reports.insert(result.reports.end(), act.reports.begin(), act.reports.end());
        result.failures.insert(result.failures.end(), act.failures.begin(), act.failures.end());
      }
      return finish(result);
    }

    if (active->parsed()) {
      return finish(cas::run_active(cfg, cfg.budgets, o.force));
    }

    if (evaluate->parsed()) {
      const auto ckpt = cas::load_checkpoint(o.checkpoint);
      const auto data = cas::prepare_data(cfg);
      std::vector<cas::LabeledPatch> test = data.test.empty() ? data.dataset.labeled : data.test;
      std::vector<cas::RasterPatch> x;
      std::vector<cas::LabelMask> y;
      for (const auto& p : test) {
        x.push_back(p.image);
        y.push_back(p.mask);
      }
      const auto pred = cas::predict_masks(ckpt.params, ckpt.config, x);
      const auto f1 = cas::f1_scores(pred, y, data.dataset.manifest.classes);
      cas::MetricsReport r;
      r.method = ckpt.extra.value("stage", "checkpoint");
      r.per_class_f1 = f1.per_class;
      r.mean_f1 = f1.mean;
      r.config_digest = ckpt.extra.value("digest", "");
      print_json(cas::to_json(r));
      return 0;
    }

    if (report->parsed()) {
      const auto reports = cas::collect_reports(cfg.output_dir);
      std::vector<cas::MetricsReport> ok;
      size_t failed = 0;
      for (const auto& r : reports) {
        if (r.failed()) {
          ++failed;
          std::cerr << "failed: " << r.method << " n=" << r.n_labeled << " seed=" << r.seed << ": " << r.diagnostic
                    << "\n";
        } else if (!r.empty_query) {
          ok.push_back(r);
        }
      }
      std::cout << cas::format_comparison(cas::compare_runs(ok));
      return failed == 0 ? 0 : 1;
    }
  } catch (const cas::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
