#include "mohone/diffusion.hpp"

#include "mohone/error.hpp"
#include "mohone/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

namespace mohone {

DiffusionMethod parse_diffusion_method(std::string_view name) {
  if (name == "exact") return DiffusionMethod::kExact;
  if (name == "chebyshev") return DiffusionMethod::kChebyshev;
  throw ConfigError("unknown diffusion method '" + std::string(name) + "' (exact|chebyshev)");
}

std::string_view to_string(DiffusionMethod m) {
  return m == DiffusionMethod::kExact ? "exact" : "chebyshev";
}

void HeatKernelConfig::validate() const {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ConfigError("diffusion scale must be >= 0");
  if (chebyshev_degree < 1) throw ConfigError("chebyshev degree must be >= 1");
  if (!(clip_epsilon >= 0.0)) throw ConfigError("clip epsilon must be >= 0");
}

Eigen::MatrixXd raw_heat_exact(const NormalizedLaplacian& lap, double scale, std::size_t node_cap) {
  const auto n = static_cast<Eigen::Index>(lap.size());
  if (lap.size() > node_cap) {
    throw ConfigError("exact diffusion limited to " + std::to_string(node_cap) + " nodes (graph has " +
                      std::to_string(n) + "); use the chebyshev method");
  }
  if (scale == 0.0) return Eigen::MatrixXd::Identity(n, n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(lap.matrix));
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of the Laplacian failed");
  const Eigen::VectorXd g = (-scale * eig.eigenvalues().array()).exp().matrix();
  const Eigen::MatrixXd& u = eig.eigenvectors();
  return u * g.asDiagonal() * u.transpose();
}

std::vector<double> chebyshev_heat_coefficients(double scale, double lambda_max, int degree) {
  // Chebyshev-Gauss quadrature with enough nodes that aliasing is negligible.
  const int nodes = 4 * (degree + 1) + 64;
  std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1, 0.0);
  const double half = 0.5 * lambda_max;
  for (int j = 0; j < nodes; ++j) {
    const double theta = std::numbers::pi * (j + 0.5) / nodes;
    const double f = std::exp(-scale * half * (std::cos(theta) + 1.0));
    for (int k = 0; k <= degree; ++k) coeffs[static_cast<std::size_t>(k)] += f * std::cos(k * theta);
  }
  for (auto& c : coeffs) c *= 2.0 / nodes;
  return coeffs;
}

Eigen::MatrixXd chebyshev_heat_apply(const NormalizedLaplacian& lap, double scale, int degree,
                                     double lambda_max, const Eigen::MatrixXd& block) {
  if (degree < 1) throw ConfigError("chebyshev degree must be >= 1");
  if (scale == 0.0) return block;
  // A zero Laplacian has spectrum {0}; any positive domain keeps the map finite.
  const double domain = std::max(lambda_max, 1e-8);
  const auto coeffs = chebyshev_heat_coefficients(scale, domain, degree);

  // X = (2 / domain) L - I maps [0, domain] onto [-1, 1].
  const double a = 2.0 / domain;
  auto apply_x = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd { return a * (lap.matrix * v) - v; };

  Eigen::MatrixXd t_prev = block;
  Eigen::MatrixXd t_curr = apply_x(block);
  Eigen::MatrixXd out = 0.5 * coeffs[0] * t_prev + coeffs[1] * t_curr;
  for (int k = 2; k <= degree; ++k) {
    Eigen::MatrixXd t_next = 2.0 * apply_x(t_curr) - t_prev;
    out += coeffs[static_cast<std::size_t>(k)] * t_next;
    t_prev = std::move(t_curr);
    t_curr = std::move(t_next);
  }
  return out;
}

Eigen::VectorXd chebyshev_heat_column(const NormalizedLaplacian& lap, double scale, int degree,
                                      double lambda_max, NodeId source) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lap.size()), 1);
  e(source, 0) = 1.0;
  return chebyshev_heat_apply(lap, scale, degree, lambda_max, e).col(0);
}

Eigen::MatrixXd raw_heat_chebyshev(const NormalizedLaplacian& lap, double scale, int degree) {
  const auto n = static_cast<Eigen::Index>(lap.size());
  if (scale == 0.0) return Eigen::MatrixXd::Identity(n, n);
  return chebyshev_heat_apply(lap, scale, degree, estimate_lambda_max(lap), Eigen::MatrixXd::Identity(n, n));
}

HeatDiffusionMatrix normalize_heat_columns(Eigen::MatrixXd raw, double scale, double clip_epsilon) {
  HeatDiffusionMatrix out;
  out.scale = scale;
  out.raw_symmetric = raw.rows() == 0 || (raw - raw.transpose()).cwiseAbs().maxCoeff() <= 1e-9;
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    auto col = raw.col(j);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (!(col[i] >= clip_epsilon)) col[i] = 0.0;
      sum += col[i];
    }
    if (sum > 0.0) {
      col /= sum;
    } else {
      col.setZero();
      col[j] = 1.0;
    }
  }
  out.psi = std::move(raw);
  return out;
}

HeatDiffusionMatrix heat_matrix_exact(const NormalizedLaplacian& lap, double scale, double clip_epsilon,
                                      std::size_t node_cap) {
  return normalize_heat_columns(raw_heat_exact(lap, scale, node_cap), scale, clip_epsilon);
}

HeatDiffusionMatrix heat_matrix_chebyshev(const NormalizedLaplacian& lap, double scale, int degree,
                                          double clip_epsilon) {
  return normalize_heat_columns(raw_heat_chebyshev(lap, scale, degree), scale, clip_epsilon);
}

HeatDiffusionMatrix heat_matrix(const NormalizedLaplacian& lap, const HeatKernelConfig& cfg) {
  cfg.validate();
  if (cfg.method == DiffusionMethod::kExact) {
    return heat_matrix_exact(lap, cfg.scale, cfg.clip_epsilon, cfg.exact_node_cap);
  }
  return heat_matrix_chebyshev(lap, cfg.scale, cfg.chebyshev_degree, cfg.clip_epsilon);
}

double estimate_lambda_max(const NormalizedLaplacian& lap) {
  const auto n = static_cast<Eigen::Index>(lap.size());
  if (n == 0) return 0.0;
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = (i % 2 == 0 ? 1.0 : -1.0) * unif(rng);
  x.normalize();

  double estimate = 0.0;
  for (int iter = 0; iter < 2000; ++iter) {
    Eigen::VectorXd y = lap.matrix * x;
    const double rayleigh = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) {
      estimate = 0.0;
      break;
    }
    const bool converged = iter > 10 && std::abs(rayleigh - estimate) <= 1e-12 * std::max(1.0, rayleigh);
    estimate = std::max(estimate, rayleigh);
    if (converged) break;
    x = y / norm;
  }
  return std::clamp(1.01 * estimate, 0.0, 2.0);
}

HeatSignature heat_signature(const HeatDiffusionMatrix& psi, NodeId node, std::size_t bins) {
  if (bins < 2) throw ConfigError("signature needs at least 2 bins");
  if (node >= psi.size()) throw DataError("signature node out of range");
  HeatSignature sig{node, std::vector<double>(bins, 0.0)};
  const auto col = psi.psi.col(node);
  const double width = static_cast<double>(bins);
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    const double v = std::clamp(col[i], 0.0, 1.0);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(v * width));
    sig.histogram[b] += 1.0;
  }
  for (auto& h : sig.histogram) h /= static_cast<double>(col.size());
  return sig;
}

std::vector<HeatSignature> heat_signatures(const HeatDiffusionMatrix& psi, std::size_t bins, unsigned threads) {
  std::vector<HeatSignature> out(psi.size());
  parallel_for(psi.size(), threads, [&](std::size_t i) {
    out[i] = heat_signature(psi, static_cast<NodeId>(i), bins);
  });
  return out;
}

namespace {
constexpr char kPsiMagic[4] = {'P', 'S', 'I', '1'};
}

void write_psi(const HeatDiffusionMatrix& psi, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::uint64_t n = psi.size();
  out.write(kPsiMagic, 4);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&psi.scale), sizeof psi.scale);
  // Eigen::MatrixXd is column-major.
  out.write(reinterpret_cast<const char*>(psi.psi.data()),
            static_cast<std::streamsize>(n * n * sizeof(double)));
  if (!out) throw DataError("write failed for " + path.string());
}

HeatDiffusionMatrix read_psi(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  std::uint64_t n = 0;
  HeatDiffusionMatrix psi;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPsiMagic, 4) != 0) throw DataError(path.string() + ": not a PSI1 file");
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&psi.scale), sizeof psi.scale);
  if (!in || n > (1ULL << 20)) throw DataError(path.string() + ": bad PSI1 header");
  psi.psi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(psi.psi.data()), static_cast<std::streamsize>(n * n * sizeof(double)));
  if (!in) throw DataError(path.string() + ": truncated PSI1 payload");
  psi.raw_symmetric = (psi.psi - psi.psi.transpose()).cwiseAbs().maxCoeff() <= 1e-9;
  return psi;
}

void write_signatures(std::span<const HeatSignature> signatures, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : signatures) j.push_back(s.histogram);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

std::vector<HeatSignature> read_signatures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<HeatSignature> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back({static_cast<NodeId>(i), j[i].get<std::vector<double>>()});
  }
  return out;
}

}  // namespace mohone
