#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmem/tensor_algebra.hpp"

namespace qmem {

/// Explicit d x d Hermitian matrices standing in for the system variables.
struct Representation {
  Representation(std::vector<Eigen::MatrixXcd> variables, std::string label);

  Eigen::Index d() const { return variables.empty() ? 0 : variables.front().rows(); }
  Eigen::Index n() const { return static_cast<Eigen::Index>(variables.size()); }

  std::vector<Eigen::MatrixXcd> variables;
  std::string label;
};

/// (sigma_1, sigma_2, sigma_3) on C^2.
Representation qubit_representation();

/// Variables of the direct-coupled pair: (X1 (x) I, I (x) X2, X1_j X2_k) with the
/// product block in lexicographic (j, k) order.
Representation tensor_representation(const Representation& first, const Representation& second);

struct StructureFit {
  StructureConstants constants;
  double residual;  ///< max_{jk} || X_j X_k - alpha_jk I - sum_l beta_jkl X_l ||_F
};

/// Least-squares recovery of (alpha, beta) from a representation.
/// Throws RepresentationError when {I, X_1..X_n} is linearly dependent or the
/// pairwise products leave its span by more than `max_residual`.
StructureFit fit_structure_constants(const Representation& rep, double max_residual = 1e-10);

struct AlgebraReport {
  double product_residual = 0.0;     ///< max Frobenius defect of X_j X_k = alpha_jk + (beta . X)_jk
  double commutator_residual = 0.0;  ///< max Frobenius defect of [X_j, X_k] = 2i (Theta . X)_jk
  Eigen::Index product_pair[2] = {-1, -1};
  Eigen::Index commutator_pair[2] = {-1, -1};
  double tol = 0.0;
  bool pass = false;

  bool algebra_ok() const { return product_residual <= tol; }
  bool ccr_ok() const { return commutator_residual <= tol; }
  std::string describe() const;
};

AlgebraReport check_algebra(const Representation& rep, const StructureConstants& sc, double tol);

}  // namespace qmem
