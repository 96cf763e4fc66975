#include "mohone/error.hpp"
#include "mohone/retrofit.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mohone;
using namespace mohone::testing;

namespace {

RetrofitProblem two_entity() {
  RowMatrix q_hat(2, 1);
  q_hat << 0.0, 2.0;
  return RetrofitProblem::with_unit_alpha(q_hat, {{{1, 1.0}}, {{0, 1.0}}});
}

RetrofitProblem random_problem(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pn(2, 50), pd(1, 8);
  std::uniform_real_distribution<double> unif(-1.0, 1.0), pos(0.1, 2.0);
  const int n = pn(rng), d = pd(rng);
  RowMatrix q_hat(n, d);
  for (Eigen::Index i = 0; i < q_hat.size(); ++i) q_hat.data()[i] = unif(rng);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n - 1), 1 + rng() % 5);
  RowMatrix f(n, 4);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = unif(rng);
  auto p = RetrofitProblem::with_unit_alpha(q_hat, build_neighbor_sets(f, k));
  for (Eigen::Index i = 0; i < n; ++i) p.alpha[i] = pos(rng);
  return p;
}

/// Solves (alpha_i + sum_j beta_ij) q_i - sum_j beta_ij q_j = alpha_i q_hat_i densely.
RowMatrix dense_solve(const RetrofitProblem& p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd b(n, p.q_hat.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = p.alpha[i];
    for (const auto& nb : p.neighbors[static_cast<std::size_t>(i)]) {
      a(i, i) += nb.beta;
      a(i, static_cast<Eigen::Index>(nb.index)) -= nb.beta;
    }
    b.row(i) = p.alpha[i] * p.q_hat.row(i);
  }
  return a.partialPivLu().solve(b);
}

/// The terms of the objective that involve q_i through its own row only.
double row_objective(const RetrofitProblem& p, const RowMatrix& q, std::size_t i) {
  const auto ii = static_cast<Eigen::Index>(i);
  double v = p.alpha[ii] * (q.row(ii) - p.q_hat.row(ii)).squaredNorm();
  for (const auto& nb : p.neighbors[i]) v += nb.beta * (q.row(ii) - q.row(static_cast<Eigen::Index>(nb.index))).squaredNorm();
  return v;
}

}  // namespace

TEST_CASE("neighbor sets") {
  SUBCASE("identical rows pick each other") {
    RowMatrix f(3, 2);
    f << 1, 2, 0, 1, 1, 2;
    const auto nb = build_neighbor_sets(f, 1);
    CHECK(nb[0][0].index == 2);
    CHECK(nb[2][0].index == 0);
    CHECK(nb[0][0].beta == 1.0);
  }
  SUBCASE("ties go to the lowest index") {
    const RowMatrix f = RowMatrix::Identity(5, 5);
    const auto nb = build_neighbor_sets(f, 1);
    CHECK(nb[0][0].index == 1);
    for (std::size_t i = 1; i < 5; ++i) CHECK(nb[i][0].index == 0);
    const auto nb2 = build_neighbor_sets(f, 3);
    CHECK(nb2[2].size() == 3);
    CHECK(nb2[2][0].index == 0);
    CHECK(nb2[2][1].index == 1);
    CHECK(nb2[2][2].index == 3);
    for (const auto& e : nb2[2]) CHECK(e.beta == doctest::Approx(1.0 / 3));
  }
  SUBCASE("separated clusters stay inside") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 0.05);
    const int per = 6;
    RowMatrix f(3 * per, 3);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < per; ++i)
        for (int d = 0; d < 3; ++d) f(c * per + i, d) = (d == c ? 1.0 : 0.0) + noise(rng);
    const auto nb = build_neighbor_sets(f, per - 1);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (const auto& e : nb[i]) CHECK(e.index / per == i / per);
  }
  SUBCASE("threads do not change the result") {
    RowMatrix f = RowMatrix::Random(40, 6);
    const auto a = build_neighbor_sets(f, 5, 1);
    const auto b = build_neighbor_sets(f, 5, 4);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) CHECK(a[i][j].index == b[i][j].index);
  }
  SUBCASE("k must leave room") { CHECK_THROWS_AS(build_neighbor_sets(RowMatrix::Identity(3, 3), 3), ConfigError); }
}

TEST_CASE("objective") {
  SUBCASE("empty neighbor sets at the prior") {
    const RowMatrix q = RowMatrix::Random(4, 3);
    const auto p = RetrofitProblem::with_unit_alpha(q, NeighborSets(4));
    CHECK(retrofit_objective(p, q) == 0.0);
  }
  SUBCASE("consensus prior") {
    RowMatrix q(3, 2);
    q << 1, 1, 1, 1, 1, 1;
    const auto p = RetrofitProblem::with_unit_alpha(q, {{{1, 0.5}, {2, 0.5}}, {{0, 1.0}}, {{1, 1.0}}});
    CHECK(retrofit_objective(p, q) == 0.0);
  }
  SUBCASE("two entities") {
    const auto p = two_entity();
    CHECK(retrofit_objective(p, p.q_hat) == 8.0);
  }
}

TEST_CASE("single sweep") {
  SUBCASE("no neighbors restores the prior") {
    const RowMatrix q_hat = RowMatrix::Random(5, 2);
    const auto p = RetrofitProblem::with_unit_alpha(q_hat, NeighborSets(5));
    RowMatrix q = RowMatrix::Zero(5, 2);
    retrofit_step(p, q);
    CHECK(q == q_hat);
  }
  SUBCASE("one neighbor averages with the prior") {
    RowMatrix q_hat(2, 2);
    q_hat << 0, 4, 2, 2;
    const auto p = RetrofitProblem::with_unit_alpha(q_hat, {{{1, 1.0}}, {}});
    RowMatrix q = q_hat;
    retrofit_step(p, q);
    CHECK(q(0, 0) == 1.0);
    CHECK(q(0, 1) == 3.0);
    CHECK(q.row(1) == q_hat.row(1));
  }
  SUBCASE("later rows see updated earlier rows") {
    auto p = two_entity();
    RowMatrix q = p.q_hat;
    retrofit_step(p, q);
    CHECK(q(0, 0) == 1.0);
    CHECK(q(1, 0) == 1.5);
  }
  SUBCASE("each row update minimizes that row's own terms") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_problem(rng);
      RowMatrix q = p.q_hat;
      retrofit_step(p, q);
      // The last row is updated last, so its terms are minimized in the final state.
      const std::size_t i = p.size() - 1;
      const double best = row_objective(p, q, i);
      for (int probe = 0; probe < 5; ++probe) {
        RowMatrix moved = q;
        moved.row(static_cast<Eigen::Index>(i)) += 1e-3 * RowMatrix::Random(1, q.cols());
        CHECK(row_objective(p, moved, i) >= best);
      }
    }
  }
}

TEST_CASE("two-entity fixed point") {
  auto p = two_entity();
  p.tol = 1e-8;
  p.max_iters = 40;
  const auto r = retrofit(p);
  CHECK(r.converged);
  CHECK(r.log.size() <= 40);
  CHECK(std::abs(r.q(0, 0) - 2.0 / 3) <= 1e-6);
  CHECK(std::abs(r.q(1, 0) - 4.0 / 3) <= 1e-6);
  // Objective trace: 1.75 after the first sweep, then towards 16/9 from below.
  CHECK(r.log[0].theta == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(r.log.back().theta == doctest::Approx(16.0 / 9).epsilon(1e-9));
  CHECK(r.log[1].theta < r.log.back().theta);
}

TEST_CASE("sweeps converge to the dense solution") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_problem(rng);
    p.tol = 0.0;
    p.max_iters = 2000;
    const auto r = retrofit(p);
    const RowMatrix oracle = dense_solve(p);
    CHECK((r.q - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    RowMatrix again = r.q;
    retrofit_step(p, again);
    CHECK((again - r.q).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("large alpha keeps the prior") {
  std::mt19937_64 rng(4);
  auto p = random_problem(rng);
  p.alpha.setConstant(1e9);
  const auto r = retrofit(p);
  CHECK((r.q - p.q_hat).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("empty neighbor sets converge after one sweep") {
  const RowMatrix q_hat = RowMatrix::Random(6, 3);
  const auto r = retrofit(RetrofitProblem::with_unit_alpha(q_hat, NeighborSets(6)));
  CHECK(r.q == q_hat);
  CHECK(r.log.size() == 1);
  CHECK(r.converged);
}

TEST_CASE("retrofit is deterministic") {
  std::mt19937_64 a(77), b(77);
  const auto pa = random_problem(a), pb = random_problem(b);
  CHECK(retrofit(pa).q == retrofit(pb).q);
}

TEST_CASE("validation") {
  auto p = two_entity();
  p.alpha[0] = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = two_entity();
  p.neighbors[0][0].index = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = two_entity();
  p.neighbors[1][0].beta = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = two_entity();
  CHECK_THROWS_AS(retrofit_objective(p, RowMatrix::Zero(3, 1)), DataError);
}

TEST_CASE("convergence log is JSON") {
  const auto path = std::filesystem::temp_directory_path() / "mohone_conv.json";
  const auto r = retrofit(two_entity());
  write_convergence_log(r.log, path);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"iter\"") != std::string::npos);
  CHECK(text.find("\"theta\"") != std::string::npos);
  CHECK(text.find("\"max_row_delta\"") != std::string::npos);
  std::filesystem::remove(path);
}
