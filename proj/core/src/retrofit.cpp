#include "mohone/retrofit.hpp"

#include "mohone/error.hpp"
#include "mohone/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mohone {

NeighborSets build_neighbor_sets(const RowMatrix& f, std::size_t k, unsigned threads) {
  const auto n = static_cast<std::size_t>(f.rows());
  if (k < 1 || k >= n) throw ConfigError("neighbor count k must satisfy 1 <= k < n (n = " + std::to_string(n) + ")");

  RowMatrix unit = f;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) unit.row(i) /= norm;
  }
  const double beta = 1.0 / static_cast<double>(k);
  NeighborSets out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = unit.row(static_cast<Eigen::Index>(i)).dot(unit.row(static_cast<Eigen::Index>(j)));
      sims.emplace_back(-s, j);
    }
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end());
    out[i].reserve(k);
    for (std::size_t r = 0; r < k; ++r) out[i].push_back({sims[r].second, beta});
  });
  return out;
}

RetrofitProblem RetrofitProblem::with_unit_alpha(RowMatrix q_hat, NeighborSets neighbors) {
  RetrofitProblem p;
  p.alpha = Eigen::VectorXd::Ones(q_hat.rows());
  p.q_hat = std::move(q_hat);
  p.neighbors = std::move(neighbors);
  return p;
}

void RetrofitProblem::validate() const {
  const std::size_t n = size();
  if (neighbors.size() != n || static_cast<std::size_t>(alpha.size()) != n) {
    throw ConfigError("retrofit problem: neighbor sets and alpha must have one entry per entity");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(alpha[static_cast<Eigen::Index>(i)] > 0.0)) throw ConfigError("retrofit alpha must be > 0 for every entity");
    for (const auto& nb : neighbors[i]) {
      if (nb.index >= n || nb.index == i) throw ConfigError("retrofit neighbor index invalid for entity " + std::to_string(i));
      if (!(nb.beta >= 0.0)) throw ConfigError("retrofit beta must be >= 0");
    }
  }
  if (max_iters < 1) throw ConfigError("retrofit max_iters must be >= 1");
  if (!(tol >= 0.0)) throw ConfigError("retrofit tol must be >= 0");
}

double retrofit_objective(const RetrofitProblem& problem, const RowMatrix& q) {
  if (q.rows() != problem.q_hat.rows() || q.cols() != problem.q_hat.cols()) {
    throw DataError("retrofit_objective: dimension mismatch");
  }
  double theta = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    theta += problem.alpha[i] * (q.row(i) - problem.q_hat.row(i)).squaredNorm();
    for (const auto& nb : problem.neighbors[static_cast<std::size_t>(i)]) {
      theta += nb.beta * (q.row(i) - q.row(static_cast<Eigen::Index>(nb.index))).squaredNorm();
    }
  }
  return theta;
}

double retrofit_step(const RetrofitProblem& problem, RowMatrix& q) {
  if (q.rows() != problem.q_hat.rows() || q.cols() != problem.q_hat.cols()) {
    throw DataError("retrofit_step: dimension mismatch");
  }
  Eigen::RowVectorXd acc(q.cols());
  double max_delta = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double a = problem.alpha[i];
    acc = a * problem.q_hat.row(i);
    double denom = a;
    for (const auto& nb : problem.neighbors[static_cast<std::size_t>(i)]) {
      acc += nb.beta * q.row(static_cast<Eigen::Index>(nb.index));
      denom += nb.beta;
    }
    if (!(denom > 0.0)) throw NumericError("retrofit denominator is zero for entity " + std::to_string(i));
    acc /= denom;
    const double old_norm = q.row(i).norm();
    const double delta = (acc - q.row(i)).norm() / std::max(old_norm, 1e-12);
    max_delta = std::max(max_delta, delta);
    q.row(i) = acc;
  }
  return max_delta;
}

RetrofitResult retrofit(const RetrofitProblem& problem) {
  problem.validate();
  RetrofitResult result;
  result.q = problem.q_hat;
  for (std::size_t it = 1; it <= problem.max_iters; ++it) {
    const double delta = retrofit_step(problem, result.q);
    result.log.push_back({it, retrofit_objective(problem, result.q), delta});
    if (delta < problem.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

void write_convergence_log(std::span<const RetrofitIteration> log, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : log) j.push_back({{"iter", e.iter}, {"theta", e.theta}, {"max_row_delta", e.max_row_delta}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mohone
