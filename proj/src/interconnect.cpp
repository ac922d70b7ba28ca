#include "qmem/interconnect.hpp"

#include <unsupported/Eigen/KroneckerProduct>

namespace qmem {

namespace {

SystemParams joint_params(const SystemParams& s1, const SystemParams& s2, StructureConstants sc,
                          const Eigen::VectorXd& e12) {
  const auto n1 = s1.n(), n2 = s2.n(), m1 = s1.m(), m2 = s2.m();
  const auto n = n1 + n2 + n1 * n2;
  if (e12.size() != n1 * n2) throw InvalidInput("compose: direct coupling vector must have length n1 n2");
  Eigen::VectorXd e(n);
  e << s1.E, s2.E, e12;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(m1 + m2, n);
  m.block(0, 0, m1, n1) = s1.M;
  m.block(m1, n1, m2, n2) = s2.M;
  Eigen::VectorXd offs(m1 + m2);
  offs << s1.N, s2.N;
  return SystemParams(std::move(sc), std::move(e), std::move(m), std::move(offs));
}

void require_consistent(const SystemParams& s, const Representation& rep, const char* which) {
  const auto report = check_algebra(rep, s.sc, 1e-10);
  if (!report.pass) {
    throw RepresentationError(RepresentationError::Kind::NotInAffineSpan,
                              std::string("compose: ") + which + " constants disagree with its representation: " +
                                  report.describe());
  }
}

}  // namespace

CompositeSystem CompositeSystem::with_energies(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                                               const Eigen::VectorXd& e12) const {
  if (e1.size() != n1() || e2.size() != n2() || e12.size() != n12()) {
    throw InvalidInput("with_energies: block lengths must be (n1, n2, n1 n2)");
  }
  CompositeSystem out = *this;
  out.sub1.E = e1;
  out.sub2.E = e2;
  Eigen::VectorXd e(joint.n());
  e << e1, e2, e12;
  out.joint.E = e;
  return out;
}

CompositeSystem compose(const SystemParams& sub1, const Representation& rep1, const SystemParams& sub2,
                        const Representation& rep2, const Eigen::VectorXd& e12) {
  require_consistent(sub1, rep1, "subsystem 1");
  require_consistent(sub2, rep2, "subsystem 2");
  auto rep = tensor_representation(rep1, rep2);
  auto fit = fit_structure_constants(rep);
  const auto check = check_algebra(rep, fit.constants, 1e-10);
  if (!check.pass) {
    throw RepresentationError(RepresentationError::Kind::NotInAffineSpan, "compose: " + check.describe());
  }
  auto joint = joint_params(sub1, sub2, std::move(fit.constants), e12);
  return CompositeSystem{sub1, sub2, std::move(rep), fit.residual, std::move(joint)};
}

CompositeSystem compose(const SystemParams& sub1, const SystemParams& sub2, const Eigen::VectorXd& e12) {
  return compose(sub1, qubit_representation(), sub2, qubit_representation(), e12);
}

InitialMoments composite_initial_moments(const CompositeSystem& cs, const Eigen::VectorXd& mu1,
                                         const Eigen::VectorXd& mu2) {
  if (mu1.size() != cs.n1() || mu2.size() != cs.n2()) throw InvalidInput("composite_initial_moments: length mismatch");
  Eigen::VectorXd mu(cs.joint.n());
  mu << mu1, mu2, Eigen::kroneckerProduct(mu1, mu2).eval();
  return InitialMoments::from_mean(cs.joint.sc, std::move(mu));
}

BlockOptimality partition_rk(const CompositeSystem& cs, const InitialMoments& init, const WeightingSpec& weights) {
  const auto rk = rk_matrices(cs.joint, init, weights);
  const auto r0 = cs.offset12();
  BlockOptimality out;
  out.R1 = rk.R.block(r0, cs.offset1(), cs.n12(), cs.n1());
  out.R2 = rk.R.block(r0, cs.offset2(), cs.n12(), cs.n2());
  out.R12 = rk.R.block(r0, r0, cs.n12(), cs.n12());
  out.K12 = rk.K.segment(r0, cs.n12());
  return out;
}

BlockOptimality optimal_direct_coupling(BlockOptimality blocks, const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                                        std::optional<double> tol) {
  if (e1.size() != blocks.R1.cols() || e2.size() != blocks.R2.cols()) {
    throw InvalidInput("optimal_direct_coupling: individual energy vectors have wrong length");
  }
  blocks.Q = blocks.K12 + 2.0 * (blocks.R1 * e1 + blocks.R2 * e2);
  const auto sol = solve_stationarity(blocks.R12, *blocks.Q, tol);
  blocks.E12_star = sol.x;
  blocks.residual = sol.residual;
  blocks.unique = sol.unique;
  blocks.null_dimension = sol.null_dimension;
  return blocks;
}

}  // namespace qmem
