#include "cas/active.hpp"

#include "cas/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <random>
#include <set>

namespace cas {

ClusterUncertainty cluster_uncertainty(std::span<const int> majorities, std::span<const int> assignments, int k,
                                       int num_classes) {
  if (majorities.size() != assignments.size()) throw ShapeMismatchError("cluster_uncertainty: length mismatch");
  std::vector<std::vector<size_t>> hist(static_cast<size_t>(k), std::vector<size_t>(static_cast<size_t>(num_classes)));
  for (size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] < 0 || assignments[i] >= k) throw ValidationError("cluster_uncertainty: cluster id out of range");
    if (majorities[i] < 0 || majorities[i] >= num_classes) throw LabelRangeError("cluster_uncertainty: class out of range");
    ++hist[static_cast<size_t>(assignments[i])][static_cast<size_t>(majorities[i])];
  }
  ClusterUncertainty out;
  for (const auto& h : hist) out.entropy.push_back(entropy_of_counts(h));
  return out;
}

QueryBudget allocate_budget(const ClusterUncertainty& unc, std::span<const int> sizes, int budget, int k) {
  if (budget < 0) throw ValidationError("allocate_budget: budget must be >= 0");
  if (k < 1 || static_cast<int>(sizes.size()) != k || static_cast<int>(unc.entropy.size()) != k) {
    throw ShapeMismatchError("allocate_budget: uncertainty and sizes must have K entries");
  }
  const long capacity = std::accumulate(sizes.begin(), sizes.end(), 0L);
  if (budget > capacity) {
    throw ValidationError("allocate_budget: budget " + std::to_string(budget) + " exceeds the unlabeled pool (" +
                          std::to_string(capacity) + ")");
  }
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return unc.entropy[a] > unc.entropy[b]; });

  QueryBudget qb{budget, std::vector<int>(static_cast<size_t>(k), budget / k)};
  for (int r = 0; r < budget % k; ++r) ++qb.allocation[static_cast<size_t>(order[static_cast<size_t>(r)])];
  int overflow = 0;
  for (int c = 0; c < k; ++c) {
    const int cap = std::max(0, sizes[static_cast<size_t>(c)]);
    if (qb.allocation[static_cast<size_t>(c)] > cap) {
      overflow += qb.allocation[static_cast<size_t>(c)] - cap;
      qb.allocation[static_cast<size_t>(c)] = cap;
    }
  }
  for (int c : order) {
    const int room = sizes[static_cast<size_t>(c)] - qb.allocation[static_cast<size_t>(c)];
    const int take = std::min(overflow, std::max(0, room));
    qb.allocation[static_cast<size_t>(c)] += take;
    overflow -= take;
  }
  return qb;
}

std::vector<Query> select_queries(const Matrix<double>& z, const ClusterState& cs, std::span<const int> assignments,
                                  const QueryBudget& qb, std::span<const size_t> exclude) {
  if (static_cast<size_t>(z.rows()) != assignments.size()) throw ShapeMismatchError("select_queries: length mismatch");
  if (static_cast<int>(qb.allocation.size()) != cs.k()) throw ShapeMismatchError("select_queries: allocation size != K");
  const std::set<size_t> excluded(exclude.begin(), exclude.end());
  std::vector<Query> out;
  for (int c = 0; c < cs.k(); ++c) {
    std::vector<Query> members;
    for (size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != c || excluded.count(i)) continue;
      members.push_back({i, c, (z.row(static_cast<Eigen::Index>(i)) - cs.centroids.row(c)).norm()});
    }
    const int want = qb.allocation[static_cast<size_t>(c)];
    if (want > static_cast<int>(members.size())) {
      throw ValidationError("select_queries: cluster " + std::to_string(c) + " has " + std::to_string(members.size()) +
                            " selectable members, allocation is " + std::to_string(want));
    }
    std::stable_sort(members.begin(), members.end(), [](const Query& a, const Query& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    });
    out.insert(out.end(), members.begin(), members.begin() + want);
  }
  return out;
}

nlohmann::json query_manifest(int round, std::span<const Query> queries, std::span<const size_t> patch_ids) {
  nlohmann::json j;
  j["round"] = round;
  j["queries"] = nlohmann::json::array();
  for (size_t i = 0; i < queries.size(); ++i) {
    nlohmann::json q = {{"index", queries[i].index}, {"cluster", queries[i].cluster}, {"distance", queries[i].distance}};
    if (i < patch_ids.size()) q["labeled_index"] = patch_ids[i];
    j["queries"].push_back(q);
  }
  return j;
}

MetricsReport finetune_and_evaluate(std::span<const LabeledPatch> train, std::span<const LabeledPatch> test,
                                    int num_classes, const NetworkParams<float>* init, const NetworkConfig& net,
                                    const FinetuneConfig& ft, NetworkParams<float>* trained) {
  const auto start = std::chrono::steady_clock::now();
  auto result = finetune_train(init, train, net, ft);
  std::vector<RasterPatch> test_x;
  std::vector<LabelMask> test_y;
  for (const auto& p : test) {
    test_x.push_back(p.image);
    test_y.push_back(p.mask);
  }
  const auto pred = predict_masks(result.params, net, test_x);
  const auto f1 = f1_scores(pred, test_y, num_classes);
  MetricsReport report;
  report.n_labeled = static_cast<int>(train.size());
  report.seed = ft.seed;
  report.per_class_f1 = f1.per_class;
  report.mean_f1 = f1.mean;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (trained != nullptr) *trained = std::move(result.params);
  return report;
}

namespace {

MetricsReport empty_report(const std::string& method, int n, std::uint64_t seed) {
  MetricsReport r;
  r.method = method;
  r.n_labeled = n;
  r.seed = seed;
  r.empty_query = true;
  return r;
}

}  // namespace

std::vector<ActiveRoundReport> active_learning(std::span<const LabeledPatch> pool, std::span<const LabeledPatch> test,
                                               int num_classes, const PretrainArtifacts& pre,
                                               const ActiveOptions& opts) {
  if (opts.budget < 0) throw ValidationError("active: budget must be >= 0");
  if (opts.rounds < 1) throw ValidationError("active: rounds must be >= 1");
  const NetworkConfig recon_net = pretrain_network_config(pre.net);
  if (test.empty()) throw ValidationError("active: empty test set");
  std::vector<RasterPatch> pool_x;
  for (const auto& p : pool) pool_x.push_back(p.image);
  const Matrix<double> z = embed_patches(pre.params, recon_net, pool_x);
  const std::vector<int> assign = hard_assignments(soft_assign(z, pre.clusters).q);
  const int k = pre.clusters.k();
  const int L = num_classes;

  FinetuneConfig ft = opts.finetune;
  ft.init_mode = InitMode::kPretrained;
  ft.seed = opts.seed;
  std::mt19937_64 rng(derive_seed(opts.seed, 41));

  auto gather = [&](const std::vector<size_t>& ids) {
    std::vector<LabeledPatch> out;
    for (size_t i : ids) out.push_back(pool[i]);
    return out;
  };
  auto draw = [&](const std::set<size_t>& taken, int n) {
    std::vector<size_t> free;
    for (size_t i = 0; i < pool_x.size(); ++i) {
      if (!taken.count(i)) free.push_back(i);
    }
    if (n > static_cast<int>(free.size())) throw ValidationError("active: budget exceeds the unlabeled pool");
    std::shuffle(free.begin(), free.end(), rng);
    free.resize(static_cast<size_t>(n));
    std::sort(free.begin(), free.end());
    return free;
  };

  std::set<size_t> excluded;
  std::vector<size_t> active_set;
  std::set<size_t> random_taken;
  std::vector<size_t> random_set;
  std::optional<NetworkParams<float>> model;
  std::vector<ActiveRoundReport> reports;

  for (int round = 0; round < opts.rounds; ++round) {
    ActiveRoundReport rep;
    rep.round = round;
    if (opts.budget == 0) {
      rep.budget = {0, std::vector<int>(static_cast<size_t>(k), 0)};
      rep.uncertainty.entropy.assign(static_cast<size_t>(k), 0.0);
      rep.active = empty_report("cas_cluster", static_cast<int>(active_set.size()), opts.seed);
      rep.random = empty_report("cas_random", static_cast<int>(random_set.size()), opts.seed);
      reports.push_back(std::move(rep));
      continue;
    }
    auto cluster_sizes = [&]() {
      std::vector<int> sizes(static_cast<size_t>(k), 0);
      for (size_t i = 0; i < assign.size(); ++i) {
        if (!excluded.count(i)) ++sizes[static_cast<size_t>(assign[i])];
      }
      return sizes;
    };
    std::vector<int> sizes = cluster_sizes();
    bool needs_uncertainty = opts.budget % k != 0;
    for (int s : sizes) needs_uncertainty = needs_uncertainty || s < opts.budget / k;

    rep.uncertainty.entropy.assign(static_cast<size_t>(k), 0.0);
    if (needs_uncertainty) {
      if (!model) {
        // Bootstrap model: fine-tuned on K random pool patches.
        const auto seed_set = draw(excluded, std::min<int>(k, static_cast<int>(pool_x.size() - excluded.size())));
        excluded.insert(seed_set.begin(), seed_set.end());
        model = finetune_train(&pre.params, gather(seed_set), pre.net, ft).params;
        sizes = cluster_sizes();
      }
      const auto masks = predict_masks(*model, pre.net, pool_x);
      std::vector<int> majorities;
      for (const auto& m : masks) majorities.push_back(aggregated_label(m, L));
      rep.uncertainty = cluster_uncertainty(majorities, assign, k, L);
      rep.uncertainty_computed = true;
    }
    rep.budget = allocate_budget(rep.uncertainty, sizes, opts.budget, k);
    std::vector<size_t> excluded_vec(excluded.begin(), excluded.end());
    rep.queries = select_queries(z, pre.clusters, assign, rep.budget, excluded_vec);
    for (const auto& q : rep.queries) {
      rep.query_ids.push_back(q.index);
      excluded.insert(q.index);
      active_set.push_back(q.index);
    }

    NetworkParams<float> trained;
    rep.active = finetune_and_evaluate(gather(active_set), test, L, &pre.params, pre.net, ft, &trained);
    rep.active.method = "cas_cluster";
    model = std::move(trained);

    const auto picks = draw(random_taken, opts.budget);
    random_taken.insert(picks.begin(), picks.end());
    random_set.insert(random_set.end(), picks.begin(), picks.end());
    rep.random = finetune_and_evaluate(gather(random_set), test, L, &pre.params, pre.net, ft);
    rep.random.method = "cas_random";
    reports.push_back(std::move(rep));
  }
  return reports;
}

ActiveRoundReport active_round(std::span<const LabeledPatch> pool, std::span<const LabeledPatch> test,
                               int num_classes, const PretrainArtifacts& pre, int budget, const FinetuneConfig& ft,
                               std::uint64_t seed) {
  ActiveOptions opts;
  opts.budget = budget;
  opts.rounds = 1;
  opts.finetune = ft;
  opts.seed = seed;
  return active_learning(pool, test, num_classes, pre, opts).front();
}

}  // namespace cas
