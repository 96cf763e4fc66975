#pragma once

#include "mohone/types.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace mohone {

struct Neighbor {
  std::size_t index;
  double beta;
};

using NeighborSets = std::vector<std::vector<Neighbor>>;

/// Omega_i = the k nearest rows of `f` to row i by cosine similarity, each with
/// beta = 1/k. Ties go to the lower index; zero rows have similarity 0 to everything.
NeighborSets build_neighbor_sets(const RowMatrix& f, std::size_t k, unsigned threads = 1);

/// Base embeddings plus the network constraints that pull them together.
struct RetrofitProblem {
  RowMatrix q_hat;
  NeighborSets neighbors;
  Eigen::VectorXd alpha;
  std::size_t max_iters = 10;
  /// Stop once the largest relative row change of a sweep falls below this.
  double tol = 1e-3;

  /// alpha = 1 everywhere.
  static RetrofitProblem with_unit_alpha(RowMatrix q_hat, NeighborSets neighbors);

  std::size_t size() const noexcept { return static_cast<std::size_t>(q_hat.rows()); }
  void validate() const;
};

/// sum_i alpha_i |q_i - q_hat_i|^2 + sum_{j in Omega_i} beta_ij |q_i - q_j|^2
double retrofit_objective(const RetrofitProblem& problem, const RowMatrix& q);

/// One Gauss-Seidel sweep in ascending index order:
/// q_i <- (sum_j beta_ij q_j + alpha_i q_hat_i) / (sum_j beta_ij + alpha_i).
/// Returns the largest relative row change.
double retrofit_step(const RetrofitProblem& problem, RowMatrix& q);

struct RetrofitIteration {
  std::size_t iter;
  double theta;
  double max_row_delta;
};

struct RetrofitResult {
  RowMatrix q;
  std::vector<RetrofitIteration> log;
  bool converged = false;
};

/// Starts from q_hat and sweeps until the relative change drops below tol or max_iters is hit.
RetrofitResult retrofit(const RetrofitProblem& problem);

/// JSON array of {iter, theta, max_row_delta}.
void write_convergence_log(std::span<const RetrofitIteration> log, const std::filesystem::path& path);

}  // namespace mohone
