#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "echomil/attention.hpp"
#include "support.hpp"

using namespace echomil;
using MatD = RowMatrix<double>;
using VecD = Vector<double>;

namespace {

MatD random_matrix(testing::Gen& gen, int rows, int cols, double scale = 1.0) {
  MatD m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * gen.normal();
  }
  return m;
}

VecD random_vector(testing::Gen& gen, int n, double scale = 1.0) {
  VecD v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * gen.normal();
  return v;
}

// Scalar loss L = c . z for a fixed probe vector c.
double probe_loss(const MatD& h, const MatD& V, const VecD& w, const VecD& c) {
  return c.dot(attention_aggregate<double>(h, V, w).pooled);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

}  // namespace

TEST_CASE("single instance") {
  MatD h(1, 3);
  h << 0.5, -1.0, 2.0;
  testing::Gen gen(1);
  const auto out = attention_aggregate<double>(h, random_matrix(gen, 4, 3), random_vector(gen, 4));
  CHECK(out.weights[0] == doctest::Approx(1.0));
  for (int d = 0; d < 3; ++d) CHECK(out.pooled[d] == doctest::Approx(h(0, d)));
}

TEST_CASE("two-instance worked example") {
  MatD h(2, 2), V(2, 2);
  h << 1, 0, 0, 1;
  V << 1, 0, 0, 1;
  VecD w(2);
  w << 1, 1;
  const auto out = attention_aggregate<double>(h, V, w);
  const double s = std::tanh(1.0) + std::tanh(0.0);
  CHECK(std::abs(out.scores[0] - s) < 1e-12);
  CHECK(std::abs(out.scores[1] - s) < 1e-12);
  CHECK(std::abs(out.weights[0] - 0.5) < 1e-6);
  CHECK(std::abs(out.weights[1] - 0.5) < 1e-6);
  CHECK(std::abs(out.pooled[0] - 0.5) < 1e-6);
  CHECK(std::abs(out.pooled[1] - 0.5) < 1e-6);
}

TEST_CASE("weights form a distribution and pooled is their weighted sum") {
  testing::Gen gen(2);
  for (int trial = 0; trial < 10000; ++trial) {
    const int J = gen.integer(1, 12), D = gen.integer(1, 6), M = gen.integer(1, 6);
    const MatD h = random_matrix(gen, J, D, 3.0);
    const auto out = attention_aggregate<double>(h, random_matrix(gen, M, D), random_vector(gen, M, 4.0));
    REQUIRE(std::abs(out.weights.sum() - 1.0) < 1e-6);
    REQUIRE(out.weights.minCoeff() >= 0.0);
    VecD explicit_sum = VecD::Zero(D);
    for (int j = 0; j < J; ++j) explicit_sum += out.weights[j] * h.row(j).transpose();
    REQUIRE((explicit_sum - out.pooled).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("identical instances get uniform weights") {
  testing::Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int J = gen.integer(2, 16);
    const MatD row = random_matrix(gen, 1, 5);
    MatD h(J, 5);
    for (int j = 0; j < J; ++j) h.row(j) = row;
    const auto out = attention_aggregate<double>(h, random_matrix(gen, 7, 5), random_vector(gen, 7));
    for (int j = 0; j < J; ++j) CHECK(std::abs(out.weights[j] - 1.0 / J) < 1e-12);
  }
}

TEST_CASE("softmax ignores a constant shift") {
  testing::Gen gen(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const VecD s = random_vector(gen, gen.integer(1, 10), 5.0);
    const VecD shifted = (s.array() + gen.real(-50, 50)).matrix();
    REQUIRE((softmax<double>(s) - softmax<double>(shifted)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("permuting instances permutes the weights") {
  testing::Gen gen(5);
  const MatD h = random_matrix(gen, 6, 4);
  const MatD V = random_matrix(gen, 3, 4);
  const VecD w = random_vector(gen, 3);
  const auto a = attention_aggregate<double>(h, V, w);
  const int perm[6] = {3, 0, 5, 1, 4, 2};
  MatD hp(6, 4);
  for (int j = 0; j < 6; ++j) hp.row(j) = h.row(perm[j]);
  const auto b = attention_aggregate<double>(hp, V, w);
  for (int j = 0; j < 6; ++j) CHECK(std::abs(b.weights[j] - a.weights[perm[j]]) < 1e-12);
  CHECK((a.pooled - b.pooled).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("mean pooling fallback") {
  testing::Gen gen(6);
  const MatD h = random_matrix(gen, 4, 3);
  const auto out = mean_aggregate<double>(h);
  for (int j = 0; j < 4; ++j) CHECK(out.weights[j] == 0.25);
  const VecD mean = h.colwise().mean().transpose();
  CHECK((out.pooled - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match central differences") {
  testing::Gen gen(7);
  const double step = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const int J = gen.integer(1, 6), D = gen.integer(1, 5), M = gen.integer(1, 5);
    MatD h = random_matrix(gen, J, D);
    MatD V = random_matrix(gen, M, D, 0.7);
    VecD w = random_vector(gen, M);
    const VecD c = random_vector(gen, D);
    const auto fwd = attention_aggregate<double>(h, V, w);
    const auto g = attention_backward<double>(h, V, w, fwd, c);

    double worst = 0.0;
    for (int i = 0; i < J; ++i) {
      for (int j = 0; j < D; ++j) {
        const double keep = h(i, j);
        h(i, j) = keep + step;
        const double up = probe_loss(h, V, w, c);
        h(i, j) = keep - step;
        const double down = probe_loss(h, V, w, c);
        h(i, j) = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * step), g.features(i, j)));
      }
    }
    for (int i = 0; i < M; ++i) {
      for (int j = 0; j < D; ++j) {
        const double keep = V(i, j);
        V(i, j) = keep + step;
        const double up = probe_loss(h, V, w, c);
        V(i, j) = keep - step;
        const double down = probe_loss(h, V, w, c);
        V(i, j) = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * step), g.V(i, j)));
      }
      const double keep = w[i];
      w[i] = keep + step;
      const double up = probe_loss(h, V, w, c);
      w[i] = keep - step;
      const double down = probe_loss(h, V, w, c);
      w[i] = keep;
      worst = std::max(worst, rel_err((up - down) / (2 * step), g.w[i]));
    }
    REQUIRE(worst < 1e-4);
  }
}
