#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cas/clustering.hpp"
#include "cas/finetune.hpp"
#include "cas/pretrain.hpp"

#include <cmath>
#include <random>

using namespace cas;

namespace {

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

// Direct transcription of the Student-t kernel, one entry at a time.
Matrix<double> brute_q(const Matrix<double>& z, const Matrix<double>& mu, double alpha) {
  Matrix<double> q(z.rows(), mu.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < mu.rows(); ++j) {
      double d = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) d += (z(i, c) - mu(j, c)) * (z(i, c) - mu(j, c));
      q(i, j) = std::pow(1.0 + d / alpha, -(alpha + 1.0) / 2.0);
      total += q(i, j);
    }
    for (Eigen::Index j = 0; j < mu.rows(); ++j) q(i, j) /= total;
  }
  return q;
}

Matrix<double> brute_p(const Matrix<double>& q) {
  Matrix<double> p(q.rows(), q.cols());
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    double f = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) f += q(i, j);
    for (Eigen::Index i = 0; i < q.rows(); ++i) p(i, j) = q(i, j) * q(i, j) / f;
  }
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) s += p(i, j);
    for (Eigen::Index j = 0; j < q.cols(); ++j) p(i, j) /= s;
  }
  return p;
}

double brute_kl(const Matrix<double>& p, const Matrix<double>& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0) s += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  }
  return s / static_cast<double>(p.rows());
}

FeatureMap<double> random_map(std::mt19937_64& rng, int h, int w, int c) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap<double> m{h, w, Matrix<double>(h * w, c)};
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("soft_assign hand example") {
  ClusterState cs{mat({{0.0}, {2.0}}), 1.0};
  const auto q = soft_assign(mat({{0.0}}), cs).q;
  CHECK(q(0, 0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(q(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("soft_assign with one cluster at the point") {
  ClusterState cs{mat({{1.0, 2.0}}), 1.0};
  const auto q = soft_assign(mat({{1.0, 2.0}}), cs).q;
  CHECK(q(0, 0) == 1.0);
}

TEST_CASE("soft_assign matches the brute-force kernel and is translation invariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (double alpha : {1.0, 0.5, 3.0}) {
    Matrix<double> z(12, 3), mu(4, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = n(rng);
    const auto q = soft_assign(z, ClusterState{mu, alpha}).q;
    const auto ref = brute_q(z, mu, alpha);
    CHECK((q - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(max_row_sum_error(q) < 1e-12);

    RowVector<double> shift(3);
    shift << 5.0, -7.0, 0.25;
    const auto q2 = soft_assign(z.rowwise() + shift, ClusterState{mu.rowwise() + shift, alpha}).q;
    CHECK((q - q2).cwiseAbs().maxCoeff() < 1e-12);

    // rank consistency with the nearest centroid
    const auto hard = hard_assignments(q);
    const auto near = nearest_centroid(z, mu);
    CHECK(hard == near);
  }
}

TEST_CASE("soft_assign stays finite far from every centroid") {
  ClusterState cs{mat({{0.0}, {1.0}}), 1.0};
  const auto q = soft_assign(mat({{1e150}}), cs).q;
  CHECK(std::isfinite(q(0, 0)));
  CHECK(q.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("target_distribution hand example") {
  const auto p = target_distribution(SoftAssignment{mat({{0.9, 0.1}, {0.5, 0.5}})}).p;
  // f = (1.4, 0.6): row 0 is (0.81/1.4, 0.01/0.6) renormalized
  const double a = 0.81 / 1.4, b = 0.01 / 0.6;
  CHECK(p(0, 0) == doctest::Approx(a / (a + b)).epsilon(1e-12));
  CHECK(p(0, 0) == doctest::Approx(0.9720).epsilon(1e-4));
  CHECK(p(0, 1) == doctest::Approx(0.0280).epsilon(1e-2));
  CHECK(p(1, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p(1, 1) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("target_distribution edge rows") {
  const auto single = mat({{0.2, 0.3, 0.5}});
  CHECK((target_distribution(SoftAssignment{single}).p - single).cwiseAbs().maxCoeff() < 1e-15);
  const auto p = target_distribution(SoftAssignment{mat({{1.0, 0.0}, {0.4, 0.6}})}).p;
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
}

TEST_CASE("target_distribution matches brute force on random Q") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix<double> q(20, 5);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) /= q.row(i).sum();
  const auto p = target_distribution(SoftAssignment{q}).p;
  CHECK((p - brute_p(q)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(max_row_sum_error(p) < 1e-12);
}

TEST_CASE("kl_loss examples") {
  CHECK(kl_loss(TargetAssignment{mat({{1.0, 0.0}})}, SoftAssignment{mat({{0.5, 0.5}})}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto q = mat({{0.3, 0.7}, {0.6, 0.4}});
  CHECK(std::abs(kl_loss(TargetAssignment{q}, SoftAssignment{q})) <= 1e-12);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix<double> p(6, 3), qq(6, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = trial % 5 == 0 && i % 4 == 0 ? 0.0 : u(rng);
      qq.data()[i] = u(rng) + 1e-3;
    }
    for (Eigen::Index i = 0; i < 6; ++i) {
      p.row(i) /= p.row(i).sum();
      qq.row(i) /= qq.row(i).sum();
    }
    const double kl = kl_loss(TargetAssignment{p}, SoftAssignment{qq});
    CHECK(kl >= 0.0);
    CHECK(kl == doctest::Approx(brute_kl(p, qq)).epsilon(1e-12));
  }
}

TEST_CASE("reconstruction_loss") {
  FeatureMap<double> a{1, 1, Matrix<double>::Constant(1, 1, 4.0)};
  FeatureMap<double> b{1, 1, Matrix<double>::Constant(1, 1, 1.0)};
  CHECK(reconstruction_loss<double>(std::span(&a, 1), std::span(&b, 1)) == 9.0);
  CHECK(reconstruction_loss<double>(std::span(&a, 1), std::span(&a, 1)) == 0.0);

  std::mt19937_64 rng(7);
  std::vector<FeatureMap<double>> out, in;
  for (int i = 0; i < 3; ++i) {
    out.push_back(random_map(rng, 4, 6, 2));
    in.push_back(random_map(rng, 4, 6, 2));
  }
  double ref = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    for (Eigen::Index k = 0; k < out[i].data.size(); ++k) {
      const double d = out[i].data.data()[k] - in[i].data.data()[k];
      ref += d * d;
    }
  }
  ref /= 3.0 * 4 * 6 * 2;  // batch mean of per-element means
  CHECK(reconstruction_loss<double>(out, in) == doctest::Approx(ref).epsilon(1e-12));

  std::vector<FeatureMap<double>> wrong{random_map(rng, 4, 6, 3)};
  CHECK_THROWS_AS(reconstruction_loss<double>(std::span(out).first(1), wrong), ShapeMismatchError);
}

TEST_CASE("cas_loss is kl plus lambda times reconstruction") {
  std::mt19937_64 rng(9);
  std::vector<FeatureMap<double>> out{random_map(rng, 2, 2, 1)}, in{random_map(rng, 2, 2, 1)};
  const auto q = SoftAssignment{mat({{0.25, 0.75}})};
  const auto p = TargetAssignment{mat({{0.6, 0.4}})};
  const double a = kl_loss(p, q), b = reconstruction_loss<double>(out, in);
  CHECK(cas_loss(p, q, out, in, 0.1) == doctest::Approx(a + 0.1 * b).epsilon(1e-12));
  CHECK(cas_loss(p, q, out, in, 0.0) == doctest::Approx(a).epsilon(1e-12));
  CHECK(cas_loss(TargetAssignment{q.q}, q, in, in, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pixel_cross_entropy") {
  // uniform prediction over four classes costs log 4 per pixel
  FeatureMap<double> probs{2, 2, Matrix<double>::Constant(4, 4, 0.25)};
  LabelMask mask(2, 2, 1);
  CHECK(pixel_cross_entropy<double>(std::span(&probs, 1), std::span(&mask, 1)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  FeatureMap<double> sharp{1, 2, Matrix<double>(2, 2)};
  sharp.data << 0.9, 0.1, 0.2, 0.8;
  LabelMask m2(1, 2);
  m2.labels = {0, 0};
  CHECK(pixel_cross_entropy<double>(std::span(&sharp, 1), std::span(&m2, 1)) ==
        doctest::Approx(-(std::log(0.9) + std::log(0.2)) / 2.0).epsilon(1e-12));
}
