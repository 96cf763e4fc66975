#pragma once

#include "mohone/graph.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace mohone {

enum class DiffusionMethod { kExact, kChebyshev };

DiffusionMethod parse_diffusion_method(std::string_view name);
std::string_view to_string(DiffusionMethod m);

struct HeatKernelConfig {
  double scale = 5.0;
  DiffusionMethod method = DiffusionMethod::kExact;
  int chebyshev_degree = 30;
  /// Raw entries below this are zeroed before column normalization.
  double clip_epsilon = 1e-12;
  /// Largest graph the dense eigendecomposition path accepts.
  std::size_t exact_node_cap = 5000;

  void validate() const;
};

/// Column-normalized heat kernel. Column j is the heat distribution from a unit
/// source at node j after time `scale`.
struct HeatDiffusionMatrix {
  Eigen::MatrixXd psi;
  double scale = 0.0;
  /// Whether exp(-sL) was symmetric (within 1e-9) before clipping and normalization.
  bool raw_symmetric = true;

  std::size_t size() const noexcept { return static_cast<std::size_t>(psi.rows()); }
};

/// exp(-sL) by dense eigendecomposition, before clipping or normalization.
Eigen::MatrixXd raw_heat_exact(const NormalizedLaplacian& lap, double scale,
                               std::size_t node_cap = 5000);

/// Chebyshev coefficients c_0..c_K of exp(-scale * lambda) on [0, lambda_max],
/// in the convention f(x) = c_0 / 2 + sum_k c_k T_k(x).
std::vector<double> chebyshev_heat_coefficients(double scale, double lambda_max, int degree);

/// Applies the degree-K Chebyshev approximation of exp(-sL) to the columns of `block`.
/// Cost is O(K * nnz(L)) per column.
Eigen::MatrixXd chebyshev_heat_apply(const NormalizedLaplacian& lap, double scale, int degree,
                                     double lambda_max, const Eigen::MatrixXd& block);

/// Raw Chebyshev approximation of exp(-sL) applied to a single unit source.
Eigen::VectorXd chebyshev_heat_column(const NormalizedLaplacian& lap, double scale, int degree,
                                      double lambda_max, NodeId source);

/// Raw Chebyshev approximation of the full exp(-sL).
Eigen::MatrixXd raw_heat_chebyshev(const NormalizedLaplacian& lap, double scale, int degree);

/// Zeroes entries below `clip_epsilon` (negatives included) and rescales every
/// column to sum to one. A column with no mass left becomes a point mass on its node.
HeatDiffusionMatrix normalize_heat_columns(Eigen::MatrixXd raw, double scale, double clip_epsilon);

HeatDiffusionMatrix heat_matrix_exact(const NormalizedLaplacian& lap, double scale,
                                      double clip_epsilon = 1e-12, std::size_t node_cap = 5000);
HeatDiffusionMatrix heat_matrix_chebyshev(const NormalizedLaplacian& lap, double scale, int degree,
                                          double clip_epsilon = 1e-12);
HeatDiffusionMatrix heat_matrix(const NormalizedLaplacian& lap, const HeatKernelConfig& cfg);

/// Upper estimate of the largest eigenvalue of L: power iteration, times 1.01, capped at 2.
double estimate_lambda_max(const NormalizedLaplacian& lap);

/// Histogram of one Psi column over equal-width bins on [0, 1], normalized to sum 1.
struct HeatSignature {
  NodeId node = 0;
  std::vector<double> histogram;
};

inline constexpr std::size_t kDefaultSignatureBins = 50;

HeatSignature heat_signature(const HeatDiffusionMatrix& psi, NodeId node,
                             std::size_t bins = kDefaultSignatureBins);
std::vector<HeatSignature> heat_signatures(const HeatDiffusionMatrix& psi,
                                           std::size_t bins = kDefaultSignatureBins,
                                           unsigned threads = 1);

/// Binary layout: "PSI1", u64 n, f64 scale, then n*n column-major f64.
void write_psi(const HeatDiffusionMatrix& psi, const std::filesystem::path& path);
HeatDiffusionMatrix read_psi(const std::filesystem::path& path);

/// JSON array of histogram arrays, one per node in id order.
void write_signatures(std::span<const HeatSignature> signatures, const std::filesystem::path& path);
std::vector<HeatSignature> read_signatures(const std::filesystem::path& path);

}  // namespace mohone
