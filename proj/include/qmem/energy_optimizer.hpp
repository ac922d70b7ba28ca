#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmem/decoherence.hpp"

namespace qmem {

/// Hessian/16 and stationarity vector of the convex quadratic E -> Delta''(0),
/// whose gradient is 8 (2 R E + K).
struct RKMatrices {
  Eigen::MatrixXd R;
  Eigen::VectorXd K;
};

/// R = Mho^T (P (x) Sigma) Mho and
/// K = Mho^T col(Sigma (Atilde P + Re Lambda(0) / 2 + b mu0^T))
///     + (<Mho Sigma Mho^T, Re((beta . (Theta . mu0)_{.k}) (x) M^T Omega M)>)_k.
/// Neither depends on the energy vector.
RKMatrices rk_matrices(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights);

/// Solution of 2 R x + K = 0 for positive semidefinite R.
struct StationarySolution {
  Eigen::VectorXd x;       ///< unique, or the minimum-norm solution
  double residual = 0.0;   ///< |2 R x + K|
  bool unique = true;
  Eigen::Index null_dimension = 0;
};

/// Default eigenvalue/range tolerance 1e-10 trace(R) / n.
double default_stationarity_tol(const Eigen::MatrixXd& r);

/// Throws DomainError when K has a component outside range(R): the quadratic is
/// then unbounded below, which cannot happen for consistent inputs.
StationarySolution solve_stationarity(const Eigen::MatrixXd& r, const Eigen::VectorXd& k,
                                      std::optional<double> tol = std::nullopt);

struct OptimalityData {
  Eigen::MatrixXd R;
  Eigen::VectorXd K;
  Eigen::VectorXd E_star;
  double residual = 0.0;
  bool unique = true;
  Eigen::Index null_dimension = 0;
  bool zero_energy_optimal = false;  ///< |K| <= tol
};

OptimalityData optimal_energy(const Eigen::MatrixXd& r, const Eigen::VectorXd& k,
                              std::optional<double> tol = std::nullopt);

struct GradientReport {
  Eigen::VectorXd analytic;     ///< 8 (2 R E + K)
  Eigen::VectorXd numerical;    ///< central differences of Delta''(0)
  double max_abs_deviation = 0.0;
  double relative_deviation = 0.0;  ///< max_abs_deviation / max(|analytic|_inf, |numerical|_inf, 1e-12)
};

/// Compares the closed-form gradient of Delta''(0) in E with central finite
/// differences at step 1e-5 (1 + |E_probe|_inf).
GradientReport gradient_check(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                              const Eigen::VectorXd& e_probe);

struct TauComparison {
  Eigen::VectorXd E;
  double tau_hat = 0.0;
  std::optional<DecoherenceTime> tau;
  std::string tau_error;  ///< set when tau could not be determined
};

struct SuboptimalTauReport {
  double epsilon = 0.0;
  OptimalityData optimum;
  TauComparison at_optimum;
  std::vector<TauComparison> comparisons;
  bool tau_hat_maximal = true;  ///< tau_hat(E_star) >= tau_hat(E) for every comparison
};

SuboptimalTauReport suboptimal_tau_report(const SystemParams& sys, const InitialMoments& init,
                                          const WeightingSpec& weights, double epsilon,
                                          const std::vector<Eigen::VectorXd>& comparisons,
                                          const DecoherenceOptions& opts = {});

}  // namespace qmem
