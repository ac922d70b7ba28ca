#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qmem/tensor_algebra.hpp"

namespace qmem {

/// Ito matrix Omega = I_m + iJ of an m-dimensional quantum Wiener process in
/// the vacuum state, with J = I_{m/2} (x) [[0, 1], [-1, 0]].
struct ItoMatrix {
  Eigen::MatrixXcd omega;
  Eigen::MatrixXd j;
};

ItoMatrix ito_matrix(Eigen::Index m);

/// Energy and coupling parameters of an open system: H = E^T X, L = M X + N.
struct SystemParams {
  SystemParams(StructureConstants sc, Eigen::VectorXd energy, Eigen::MatrixXd coupling, Eigen::VectorXd offset,
               std::optional<Eigen::MatrixXd> feedthrough = std::nullopt);

  Eigen::Index n() const { return sc.n(); }
  Eigen::Index m() const { return M.rows(); }

  /// Same system with the energy vector replaced.
  SystemParams with_energy(Eigen::VectorXd energy) const;

  StructureConstants sc;
  Eigen::VectorXd E;
  Eigen::MatrixXd M;
  Eigen::VectorXd N;
  std::optional<Eigen::MatrixXd> D;
};

/// Throws InvalidInput unless D picks conjugate pairs of rows of an m x m
/// permutation matrix.
void validate_feedthrough(const Eigen::MatrixXd& d, Eigen::Index m);

struct CoefficientSet {
  Eigen::MatrixXd A0;
  Eigen::MatrixXd Atilde;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::optional<Eigen::MatrixXd> C;
  std::optional<Eigen::VectorXd> d;
  Eigen::MatrixXd Mho;
  Eigen::MatrixXcd Omega;
  Eigen::MatrixXd J;
};

/// Drift and output coefficients of the quasilinear QSDE
///   dX = (AX + b) dt + B(X) dW,  dY = (CX + d) dt + D dW.
CoefficientSet coefficients(const SystemParams& sys);

/// Averaged Ito matrix of the diffusion term at mean mu:
///   Lambda = 4 Mho^T ((alpha + beta . mu) (x) M^T Omega M) Mho.
/// Positive semidefiniteness relies on alpha + beta . mu being an admissible
/// second-moment matrix; that is checked where initial moments are built.
Eigen::MatrixXcd lambda_matrix(const SystemParams& sys, const Eigen::VectorXd& mu);

/// d/dt Lambda(mu(t)) at t = 0 along the mean dynamics mu' = A mu + b.
Eigen::MatrixXcd lambda_dot0(const SystemParams& sys, const CoefficientSet& coeffs, const Eigen::VectorXd& mu0);

/// Lambda as an affine map of the mean, precomputed for repeated evaluation
/// along trajectories: Lambda(mu) = base + sum_l mu_l slope_l.
class LambdaMap {
 public:
  explicit LambdaMap(const SystemParams& sys);

  Eigen::MatrixXcd operator()(const Eigen::VectorXd& mu) const;
  bool is_zero() const { return zero_; }

 private:
  Eigen::MatrixXcd base_;
  std::vector<Eigen::MatrixXcd> slopes_;
  bool zero_ = false;
};

}  // namespace qmem
