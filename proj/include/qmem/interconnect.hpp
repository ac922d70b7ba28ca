#pragma once

#include <optional>

#include "qmem/dense_oracle.hpp"
#include "qmem/energy_optimizer.hpp"

namespace qmem {

/// Two open systems with a direct energy coupling H12 = E12^T (X1 (x) X2).
/// Joint variables are ordered (X1, X2, X1 (x) X2).
struct CompositeSystem {
  SystemParams sub1;
  SystemParams sub2;
  Representation representation;  ///< joint dense representation
  double fit_residual = 0.0;
  SystemParams joint;

  Eigen::Index n1() const { return sub1.n(); }
  Eigen::Index n2() const { return sub2.n(); }
  Eigen::Index n12() const { return sub1.n() * sub2.n(); }

  /// Offsets of the (X1, X2, X12) blocks in the joint vector.
  Eigen::Index offset1() const { return 0; }
  Eigen::Index offset2() const { return n1(); }
  Eigen::Index offset12() const { return n1() + n2(); }

  Eigen::VectorXd E1() const { return joint.E.segment(offset1(), n1()); }
  Eigen::VectorXd E2() const { return joint.E.segment(offset2(), n2()); }
  Eigen::VectorXd E12() const { return joint.E.segment(offset12(), n12()); }

  /// Same composite with the joint energy blocks replaced.
  CompositeSystem with_energies(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, const Eigen::VectorXd& e12) const;
};

/// Builds the composite from dense representations of each subsystem. The joint
/// structure constants are fitted from the tensor representation and checked
/// against it; the subsystem constants must agree with their representations.
CompositeSystem compose(const SystemParams& sub1, const Representation& rep1, const SystemParams& sub2,
                        const Representation& rep2, const Eigen::VectorXd& e12);

/// Qubit (x) qubit convenience overload.
CompositeSystem compose(const SystemParams& sub1, const SystemParams& sub2, const Eigen::VectorXd& e12);

/// Product-state initial means: mu0 = (mu1, mu2, mu1 (x) mu2).
InitialMoments composite_initial_moments(const CompositeSystem& cs, const Eigen::VectorXd& mu1,
                                         const Eigen::VectorXd& mu2);

/// Bottom block row of (R, K) for the joint system.
struct BlockOptimality {
  Eigen::MatrixXd R1;
  Eigen::MatrixXd R2;
  Eigen::MatrixXd R12;
  Eigen::VectorXd K12;
  std::optional<Eigen::VectorXd> Q;
  std::optional<Eigen::VectorXd> E12_star;
  double residual = 0.0;  ///< |2 R12 E12_star + Q|
  bool unique = true;
  Eigen::Index null_dimension = 0;
};

BlockOptimality partition_rk(const CompositeSystem& cs, const InitialMoments& init, const WeightingSpec& weights);

/// Q = K12 + 2 (R1 E1 + R2 E2) and the solution of 2 R12 E12 + Q = 0.
BlockOptimality optimal_direct_coupling(BlockOptimality blocks, const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                                        std::optional<double> tol = std::nullopt);

}  // namespace qmem
