// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include "cas/binary_io.hpp"
#include "cas/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

using namespace cas;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, Verdict& v, double seconds) {
  std::printf("%s criterion %d (%s): %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.str().c_str(),
              seconds);
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

void run(int id, const std::string& name, double limit_seconds, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  const double s = seconds_since(t0);
  if (limit_seconds > 0) v.require(s < limit_seconds, "runtime over " + std::to_string(limit_seconds) + " s");
  report(id, name, v, s);
}

double rel(double got, double want) {
  const double scale = std::max(std::abs(got), std::abs(want));
  return scale == 0.0 ? 0.0 : std::abs(got - want) / scale;
}

Matrix<double> mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix<double> m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

FeatureMap<double> random_map(std::mt19937_64& rng, int h, int w, int c) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap<double> m{h, w, Matrix<double>(h * w, c)};
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = n(rng);
  return m;
}

// ---- criterion 1 -----------------------------------------------------------

void equation_oracles(Verdict& v) {
  double worst = 0.0;
  auto near = [&](double got, double want, const std::string& what) {
    const double e = rel(got, want);
    worst = std::max(worst, e);
    v.require(e <= 1e-6, what);
  };

  // soft assignment
  near(soft_assign(mat({{0.0}}), ClusterState{mat({{0.0}, {2.0}}), 1.0}).q(0, 0), 5.0 / 6.0, "q 5/6");
  near(soft_assign(mat({{0.0}}), ClusterState{mat({{0.0}, {2.0}}), 1.0}).q(0, 1), 1.0 / 6.0, "q 1/6");
  near(soft_assign(mat({{1.0, 2.0}}), ClusterState{mat({{1.0, 2.0}}), 1.0}).q(0, 0), 1.0, "q single cluster");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 2.0);
  Matrix<double> z(15, 3), mu(4, 3);
  for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = g(rng);
  for (Eigen::Index k = 0; k < mu.size(); ++k) mu.data()[k] = g(rng);
  const auto q = soft_assign(z, ClusterState{mu, 1.0});
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double total = 0.0;
    std::vector<double> k(static_cast<size_t>(mu.rows()));
    for (Eigen::Index j = 0; j < mu.rows(); ++j) {
      k[j] = 1.0 / (1.0 + (z.row(i) - mu.row(j)).squaredNorm());
      total += k[j];
    }
    for (Eigen::Index j = 0; j < mu.rows(); ++j) near(q.q(i, j), k[j] / total, "q brute force");
  }
  v.require(max_row_sum_error(q.q) <= 1e-6, "Q row sums");

  // target distribution
  const auto p = target_distribution(SoftAssignment{mat({{0.9, 0.1}, {0.5, 0.5}})}).p;
  const double a = 0.81 / 1.4, b = 0.01 / 0.6;
  near(p(0, 0), a / (a + b), "P[0,0]");
  near(p(0, 1), b / (a + b), "P[0,1]");
  near(p(1, 0), 0.3, "P[1,0]");
  near(p(1, 1), 0.7, "P[1,1]");
  const auto single = mat({{0.2, 0.3, 0.5}});
  v.require((target_distribution(SoftAssignment{single}).p - single).cwiseAbs().maxCoeff() <= 1e-6, "P = Q for N = 1");
  const auto pr = target_distribution(q);
  v.require(max_row_sum_error(pr.p) <= 1e-6, "P row sums");
  for (Eigen::Index j = 0; j < q.q.cols(); ++j) {
    const double f = q.q.col(j).sum();
    for (Eigen::Index i = 0; i < q.q.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < q.q.cols(); ++l) s += q.q(i, l) * q.q(i, l) / q.q.col(l).sum();
      near(pr.p(i, j), q.q(i, j) * q.q(i, j) / f / s, "P brute force");
    }
  }

  // KL
  near(kl_loss(TargetAssignment{mat({{1.0, 0.0}})}, SoftAssignment{mat({{0.5, 0.5}})}), std::log(2.0), "KL log 2");
  v.require(std::abs(kl_loss(TargetAssignment{q.q}, q)) <= 1e-12, "KL(P=Q) = 0");
  double kl_ref = 0.0;
  for (Eigen::Index i = 0; i < q.q.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.q.cols(); ++j) kl_ref += pr.p(i, j) * std::log(pr.p(i, j) / q.q(i, j));
  }
  kl_ref /= static_cast<double>(q.q.rows());
  const double kl = kl_loss(pr, q);
  near(kl, kl_ref, "KL brute force");
  v.require(kl >= 0.0, "KL >= 0");

  // reconstruction
  FeatureMap<double> three{1, 1, Matrix<double>::Constant(1, 1, 4.0)};
  FeatureMap<double> one{1, 1, Matrix<double>::Constant(1, 1, 1.0)};
  near(reconstruction_loss<double>(std::span(&three, 1), std::span(&one, 1)), 9.0, "recon 3^2");
  v.require(reconstruction_loss<double>(std::span(&one, 1), std::span(&one, 1)) == 0.0, "recon identity");
  std::vector<FeatureMap<double>> out, in;
  for (int i = 0; i < 3; ++i) {
    out.push_back(random_map(rng, 4, 5, 2));
    in.push_back(random_map(rng, 4, 5, 2));
  }
  double rec_ref = 0.0;
  for (size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < out[i].data.size(); ++k) {
      const double d = out[i].data.data()[k] - in[i].data.data()[k];
      s += d * d;
    }
    rec_ref += s / static_cast<double>(out[i].data.size());
  }
  rec_ref /= 3.0;
  const double rec = reconstruction_loss<double>(out, in);
  near(rec, rec_ref, "recon brute force");

  // combined loss
  near(cas_loss(pr, q, out, in, 0.1), kl + 0.1 * rec, "cas = a + 0.1 b");
  near(cas_loss(pr, q, out, in, 0.0), kl, "cas lambda 0 = KL");
  v.require(std::abs(cas_loss(TargetAssignment{q.q}, q, in, in, 0.1)) <= 1e-12, "cas zero");

  // pixel cross-entropy
  FeatureMap<double> uniform{2, 2, Matrix<double>::Constant(4, 4, 0.25)};
  LabelMask mask(2, 2, 1);
  near(pixel_cross_entropy<double>(std::span(&uniform, 1), std::span(&mask, 1)), std::log(4.0), "CE log 4");
  FeatureMap<double> onehot{2, 2, Matrix<double>::Zero(4, 4)};
  onehot.data.col(1).setOnes();
  v.require(pixel_cross_entropy<double>(std::span(&onehot, 1), std::span(&mask, 1)) == 0.0, "CE perfect");
  FeatureMap<double> probs{3, 3, Matrix<double>(9, 4)};
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (Eigen::Index k = 0; k < probs.data.size(); ++k) probs.data.data()[k] = u(rng);
  for (Eigen::Index r = 0; r < 9; ++r) probs.data.row(r) /= probs.data.row(r).sum();
  LabelMask lm(3, 3);
  double ce_ref = 0.0;
  for (int px = 0; px < 9; ++px) {
    lm.labels[static_cast<size_t>(px)] = static_cast<std::uint8_t>(px % 4);
    ce_ref -= std::log(probs.data(px, px % 4));
  }
  near(pixel_cross_entropy<double>(std::span(&probs, 1), std::span(&lm, 1)), ce_ref / 9.0, "CE brute force");
  v.detail << "max relative error " << worst;
}

// ---- criterion 2 -----------------------------------------------------------

struct GradCheck {
  double worst = 0.0;
  size_t checked = 0;

  void add(double analytic, double numeric) {
    if (std::abs(analytic) < 1e-9 && std::abs(numeric) < 1e-9) return;
    worst = std::max(worst, rel(analytic, numeric));
    ++checked;
  }
};

NetworkParams<double> jittered_params(const NetworkConfig& cfg, std::uint64_t seed) {
  auto params = init_params<double>(cfg, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> small(0.0, 0.1);
  for (auto& [name, t] : params.tensors) {
    if (name.ends_with(".bias")) {
      for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = small(rng);
    }
  }
  return params;
}

void perturb_all(NetworkParams<double>& params, const std::function<double()>& loss,
                 const std::function<double(const std::string&, Eigen::Index)>& analytic, GradCheck& gc) {
  const double h = 1e-5;
  for (auto& [name, t] : params.tensors) {
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      const double orig = t.data()[k];
      t.data()[k] = orig + h;
      const double up = loss();
      t.data()[k] = orig - h;
      const double down = loss();
      t.data()[k] = orig;
      gc.add(analytic(name, k), (up - down) / (2 * h));
    }
  }
}

void gradient_checks(Verdict& v) {
  GradCheck cas_gc, ce_gc;
  std::mt19937_64 rng(4);
  for (int depth : {1, 2}) {
    NetworkConfig cfg;
    cfg.in_channels = 2;
    cfg.num_classes = 3;
    cfg.depth = depth;
    cfg.base_channels = 2;
    cfg.embedding_dim = 3;

    // cas_loss, P fixed, through every parameter and centroid
    const NetworkConfig rc = pretrain_network_config(cfg);
    auto params = jittered_params(rc, 10 + depth);
    std::vector<FeatureMap<double>> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_map(rng, 8, 8, 2));
    const auto z = embed(params, rc, std::span<const FeatureMap<double>>(batch));
    ClusterState cs;
    cs.centroids = Matrix<double>(2, rc.embedding_dim);
    std::normal_distribution<double> jitter(0.0, 0.5);
    for (Eigen::Index k = 0; k < cs.centroids.size(); ++k) cs.centroids.data()[k] = z.mean() + jitter(rng);
    const auto p = target_distribution(soft_assign(z, cs));
    auto objective = [&](const ClusterState& c) {
      const auto q = soft_assign(embed(params, rc, std::span<const FeatureMap<double>>(batch)), c);
      return cas_loss(p, q, reconstruct(params, rc, std::span<const FeatureMap<double>>(batch)), batch, 0.1);
    };
    const auto g = cas_loss_gradient<double>(params, rc, cs, p, batch, 0.1);
    perturb_all(params, [&] { return objective(cs); },
                [&](const std::string& n, Eigen::Index k) { return g.d_params.at(n).data()[k]; }, cas_gc);
    for (Eigen::Index k = 0; k < cs.centroids.size(); ++k) {
      ClusterState m = cs;
      m.centroids.data()[k] += 1e-5;
      const double up = objective(m);
      m.centroids.data()[k] -= 2e-5;
      cas_gc.add(g.d_centroids.data()[k], (up - objective(m)) / 2e-5);
    }

    // cross-entropy through segment
    const NetworkConfig sc = segmentation_network_config(cfg);
    auto sp = jittered_params(sc, 20 + depth);
    std::vector<LabelMask> masks;
    std::uniform_int_distribution<int> lab(0, 2);
    for (int i = 0; i < 3; ++i) {
      LabelMask m(8, 8);
      for (auto& l : m.labels) l = static_cast<std::uint8_t>(lab(rng));
      masks.push_back(m);
    }
    const auto sg = segmentation_loss_gradient<double>(sp, sc, batch, masks);
    perturb_all(sp, [&] { return pixel_cross_entropy<double>(segment<double>(sp, sc, batch), masks); },
                [&](const std::string& n, Eigen::Index k) { return sg.d_params.at(n).data()[k]; }, ce_gc);
  }
  v.detail << "cas max rel " << cas_gc.worst << " over " << cas_gc.checked << " entries; cross-entropy max rel "
           << ce_gc.worst << " over " << ce_gc.checked;
  v.require(cas_gc.checked > 100 && ce_gc.checked > 100, "too few entries checked");
  v.require(cas_gc.worst < 1e-4, "cas gradient");
  v.require(ce_gc.worst < 1e-4, "cross-entropy gradient");
}

// ---- criterion 3 -----------------------------------------------------------

double brute_partition_optimum(const Matrix<double>& x, int k) {
  const int n = static_cast<int>(x.rows());
  std::vector<int> a(static_cast<size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Matrix<double> mu = Matrix<double>::Zero(k, x.cols());
    std::vector<int> count(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      mu.row(a[i]) += x.row(i);
      ++count[a[i]];
    }
    if (std::all_of(count.begin(), count.end(), [](int c) { return c > 0; })) {
      for (int j = 0; j < k; ++j) mu.row(j) /= count[j];
      double obj = 0.0;
      for (int i = 0; i < n; ++i) obj += (x.row(i) - mu.row(a[i])).squaredNorm();
      best = std::min(best, obj / n);
    }
    int pos = 0;
    while (pos < n && ++a[pos] == k) a[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

void kmeans_optimality(Verdict& v) {
  std::mt19937_64 rng(2024);
  int exact = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 6;  // 3..8
    std::normal_distribution<double> spread(0.0, 0.3);
    std::uniform_real_distribution<double> where(-20.0, 20.0);
    const double dx = where(rng), dy = where(rng);
    Matrix<double> x(n, 2);
    for (int i = 0; i < n; ++i) {
      const bool far = i % 2 == 1;
      x(i, 0) = (far ? dx + 8.0 : dx) + spread(rng);
      x(i, 1) = dy + spread(rng);
    }
    const double got = kmeans_fit(x, 2, static_cast<std::uint64_t>(trial)).objective;
    const double want = brute_partition_optimum(x, 2);
    worst = std::max(worst, rel(got, want));
    exact += rel(got, want) <= 1e-12;
  }
  v.detail << exact << "/20 instances at the brute-force optimum (max rel diff " << worst << ")";
  v.require(exact == 20, "suboptimal instance");
}

// ---- benchmark -------------------------------------------------------------

struct Benchmark {
  ExperimentConfig base;
  ExperimentData data;
  std::map<std::string, ExperimentResult> runs;
  std::map<std::string, double> seconds;
};

ExperimentConfig with_method(const ExperimentConfig& c, Method m) {
  auto out = c;
  out.method = m;
  return out;
}

double mean_f1_of(const ExperimentResult& r) {
  double s = 0.0;
  for (const auto& rep : r.reports) s += rep.mean_f1;
  return s / static_cast<double>(r.reports.size());
}

std::string per_seed(const ExperimentResult& r) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < r.reports.size(); ++i) os << (i ? " " : "") << std::round(r.reports[i].mean_f1 * 1000) / 1000;
  os << "]";
  return os.str();
}

void few_shot_trend(Benchmark& b, Verdict& v) {
  for (Method m : {Method::kScratch, Method::kAutoencoder, Method::kCas}) {
    const auto t0 = Clock::now();
    b.runs[to_string(m)] = run_experiment(with_method(b.base, m));
    b.seconds[to_string(m)] = seconds_since(t0);
    const auto& r = b.runs[to_string(m)];
    v.require(r.ok() && r.reports.size() == b.base.seeds.size(), to_string(m) + " cells failed");
    std::printf("  %s mean F1 %.4f per seed %s (%.0f s)\n", to_string(m).c_str(), mean_f1_of(r), per_seed(r).c_str(),
                b.seconds[to_string(m)]);
    std::fflush(stdout);
  }
  const double cas = mean_f1_of(b.runs["cas"]), ae = mean_f1_of(b.runs["autoencoder"]),
               scratch = mean_f1_of(b.runs["scratch"]);
  v.detail << "mean F1 cas " << cas << ", autoencoder " << ae << ", scratch " << scratch << "; cas - scratch "
           << cas - scratch;
  v.require(cas > ae, "cas > autoencoder");
  v.require(ae > scratch, "autoencoder > scratch");
  v.require(cas - scratch >= 0.05, "cas - scratch >= 0.05");
}

double raw_pixel_entropy(const ClusterEvalSet& eval, int k, int classes, std::uint64_t seed, int restarts) {
  const auto& first = eval.images.front();
  const Eigen::Index width = first.data.size();
  Matrix<double> x(static_cast<Eigen::Index>(eval.images.size()), width);
  for (size_t i = 0; i < eval.images.size(); ++i) {
    const auto& d = eval.images[i].data;
    for (Eigen::Index e = 0; e < width; ++e) x(static_cast<Eigen::Index>(i), e) = d.data()[e];
  }
  const auto km = kmeans_fit(x, k, derive_seed(seed, 23), restarts);
  return weighted_cluster_entropy(km.assignment, eval.labels, k, classes);
}

void clustering_quality(Benchmark& b, Verdict& v) {
  const int L = b.data.dataset.manifest.classes;
  v.require(b.base.pretrain.clusters == 2 * L, "K = 2L");
  const auto eval = cluster_eval_set(b.data);
  double cas = 0.0, ae = 0.0, raw = 0.0;
  const double n = static_cast<double>(b.base.seeds.size());
  for (size_t s = 0; s < b.base.seeds.size(); ++s) {
    cas += *b.runs["cas"].reports[s].weighted_entropy / n;
    ae += *b.runs["autoencoder"].reports[s].weighted_entropy / n;
    raw += raw_pixel_entropy(eval, b.base.pretrain.clusters, L, b.base.seeds[s], b.base.pretrain.kmeans_restarts) / n;
  }
  v.detail << "mean weighted entropy cas " << cas << ", phase-1 embeddings " << ae << ", raw pixels " << raw;
  v.require(cas < raw, "cas < raw pixels");
  v.require(cas < ae, "cas < phase-1 embeddings");
}

void detail_preservation(Benchmark& b, Verdict& v) {
  const auto features = b.data.dataset.all_features();
  const auto dec_cfg = with_method(b.base, Method::kDec);
  const auto cas_cfg = with_method(b.base, Method::kCas);
  int wins = 0;
  v.detail << "reconstruction (lambda 0.1 vs 0):";
  for (auto seed : b.base.seeds) {
    const auto cas = pretrain_for(cas_cfg, b.data, seed);
    const auto dec = pretrain_for(dec_cfg, b.data, seed);
    // dec must start from the phase-1 checkpoint the cas run left behind
    v.require(dec.from_cache || dec.phase1_loss.empty(), "phase 1 was retrained");
    const double rc = mean_reconstruction_loss(cas.artifacts.params, b.base.network, features);
    const double rd = mean_reconstruction_loss(dec.artifacts.params, b.base.network, features);
    wins += rc < rd;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %.4f/%.4f", rc, rd);
    v.detail << buf;
  }
  v.require(wins == static_cast<int>(b.base.seeds.size()), "lambda 0.1 lower on every seed");
}

void active_trend(Benchmark& b, Verdict& v) {
  const auto r = run_active(with_method(b.base, Method::kCas), {10});
  v.require(r.ok(), "active cells failed");
  double act = 0.0, rnd = 0.0;
  int na = 0, nr = 0;
  for (const auto& rep : r.reports) {
    if (rep.method == "cas_cluster") {
      act += rep.mean_f1;
      ++na;
    } else if (rep.method == "cas_random") {
      rnd += rep.mean_f1;
      ++nr;
    }
  }
  v.require(na == 5 && nr == 5, "five seeds each");
  act /= std::max(na, 1);
  rnd /= std::max(nr, 1);
  v.detail << "budget 10 mean F1 cluster " << act << " vs random " << rnd;
  v.require(act >= rnd, "cluster >= random");

  const ClusterUncertainty e{{0.5, 0.9, 0.1, 0.7, 0.3}};
  const std::vector<int> room(5, 100);
  v.require(allocate_budget(e, room, 10, 5).allocation == std::vector<int>{2, 2, 2, 2, 2}, "B=10 allocation");
  v.require(allocate_budget(e, room, 12, 5).allocation == std::vector<int>{2, 3, 2, 3, 2}, "B=12 allocation");
  v.require(allocate_budget(e, room, 3, 5).allocation == std::vector<int>{1, 1, 0, 1, 0}, "B=3 allocation");
  v.detail << "; allocation cases checked";
}

bool same_bits(const NetworkParams<float>& a, const NetworkParams<float>& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (const auto& [name, t] : a.tensors) {
    if (!b.contains(name)) return false;
    const auto& u = b.at(name);
    if (t.size() != u.size() || std::memcmp(t.data(), u.data(), sizeof(float) * static_cast<size_t>(t.size())) != 0) {
      return false;
    }
  }
  return true;
}

void determinism(Benchmark& b, const fs::path& work, Verdict& v) {
  auto cfg = with_method(b.base, Method::kCas);
  cfg.seeds = {b.base.seeds.front()};
  cfg.output_dir = work / "rerun";
  const auto again = run_experiment(cfg, true);
  v.require(again.ok() && again.reports.size() == 1, "rerun failed");
  if (again.ok()) {
    const auto& x = again.reports[0];
    const auto& y = b.runs["cas"].reports[0];
    v.require(x.mean_f1 == y.mean_f1 && x.per_class_f1 == y.per_class_f1 && x.weighted_entropy == y.weighted_entropy,
              "rerun metrics differ");
    v.detail << "cell rerun mean F1 " << x.mean_f1 << " == " << y.mean_f1;
    const auto cell = [&](const fs::path& root) { return root / "cells" / "cas" / "n10_seed0.cas"; };
    v.require(read_bytes(cell(cfg.output_dir)) == read_bytes(cell(b.base.output_dir)), "checkpoint bytes differ");
  }

  // checkpoint round-trip
  const auto pre = pretrain_for(cfg, b.data, cfg.seeds.front());
  Checkpoint ck{pre.artifacts.params, pretrain_network_config(cfg.network), pre.artifacts.clusters, {}};
  save_checkpoint(ck, work / "roundtrip.cas");
  const auto back = load_checkpoint(work / "roundtrip.cas");
  v.require(same_bits(back.params, ck.params), "checkpoint params");
  v.require(back.clusters && back.clusters->centroids == ck.clusters->centroids, "checkpoint centroids");

  // dataset round-trip
  save_dataset(b.data.dataset, work / "dataset", true);
  const auto ds = load_dataset(work / "dataset");
  bool same = ds.labeled.size() == b.data.dataset.labeled.size() && ds.unlabeled.size() == b.data.dataset.unlabeled.size();
  for (size_t i = 0; same && i < ds.labeled.size(); ++i) {
    const auto& a = ds.labeled[i].image.data;
    same = std::memcmp(a.data(), b.data.dataset.labeled[i].image.data.data(), sizeof(float) * a.size()) == 0 &&
           ds.labeled[i].mask == b.data.dataset.labeled[i].mask;
  }
  for (size_t i = 0; same && i < ds.unlabeled.size(); ++i) {
    const auto& a = ds.unlabeled[i].data;
    same = std::memcmp(a.data(), b.data.dataset.unlabeled[i].data.data(), sizeof(float) * a.size()) == 0;
  }
  v.require(same, "dataset round-trip");
  v.detail << "; checkpoint and dataset round-trips bit-exact";
}

// ---- criterion 9 -----------------------------------------------------------

void degeneracy_guard(Verdict& v) {
  // A two-channel single-level encoder pushed hard with a fixed target.
  SyntheticConfig sc;
  sc.n_labeled = 0;
  sc.n_unlabeled = 40;
  sc.height = sc.width = 16;
  const auto features = generate_synthetic(sc).all_features();
  NetworkConfig net;
  net.depth = 1;
  net.base_channels = 2;
  net.embedding_dim = 2;
  net = pretrain_network_config(net);
  PretrainConfig pc;
  pc.phase1_epochs = 2;
  pc.learning_rate = 0.02;
  pc.batch_size = 4;
  pc.clusters = 6;
  const auto p1 = phase1_train(features, net, pc);
  const auto km = kmeans_fit(embed_patches(p1.params, net, features), pc.clusters, 0, 10);

  pc.learning_rate = 12.0;
  pc.phase2_epochs = 100;
  pc.target_update_interval = 100000;
  pc.stop_delta = 1e-9;

  pc.lambda = 0.0;
  std::string diagnostic;
  bool emitted = false;
  try {
    phase2_train(features, p1.params, km.state, net, pc);
    emitted = true;
  } catch (const DegenerateClusteringError& e) {
    diagnostic = e.what();
  }
  v.require(!emitted, "lambda 0 run emitted results");
  v.require(diagnostic.find("degenerate clustering") != std::string::npos, "diagnostic text");
  v.detail << "lambda 0: " << (diagnostic.empty() ? "completed" : diagnostic);

  pc.lambda = 0.1;
  const auto ok = phase2_train(features, p1.params, km.state, net, pc);
  v.detail << "; lambda 0.1 completed, min centroid distance " << ok.clusters.min_pairwise_distance();
}

}  // namespace

int main() {
  const fs::path work = CAS_ACCEPTANCE_DIR;
  fs::remove_all(work);
  fs::create_directories(work);

  run(1, "equation oracles", 10, equation_oracles);
  run(2, "gradient checks", 120, gradient_checks);
  run(3, "kmeans optimality", 10, kmeans_optimality);
  run(9, "degeneracy guard", 0, degeneracy_guard);

  Benchmark b;
  b.base = load_experiment_config(CAS_BENCHMARK_CONFIG);
  b.base.output_dir = work / "benchmark";
  b.data = prepare_data(b.base);
  std::printf("benchmark: %zu labeled, %zu unlabeled, %zu test patches, %zu seeds\n", b.data.dataset.labeled.size(),
              b.data.dataset.unlabeled.size(), b.data.test.size(), b.base.seeds.size());
  std::fflush(stdout);

  run(4, "few-shot trend", 1800, [&](Verdict& v) { few_shot_trend(b, v); });
  const bool have_runs = b.runs.size() == 3;
  run(5, "clustering quality", 0, [&](Verdict& v) {
    if (!have_runs) throw std::runtime_error("benchmark runs missing");
    clustering_quality(b, v);
  });
  run(6, "detail preservation", 0, [&](Verdict& v) { detail_preservation(b, v); });
  run(7, "active learning trend", 0, [&](Verdict& v) { active_trend(b, v); });
  run(8, "determinism and persistence", 0, [&](Verdict& v) {
    if (!have_runs) throw std::runtime_error("benchmark runs missing");
    determinism(b, work, v);
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
