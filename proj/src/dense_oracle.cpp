#include "qmem/dense_oracle.hpp"

#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace qmem {

Representation::Representation(std::vector<Eigen::MatrixXcd> vars, std::string name)
    : variables(std::move(vars)), label(std::move(name)) {
  if (variables.empty()) throw InvalidInput("Representation '" + label + "': no variables");
  const auto d = variables.front().rows();
  for (std::size_t k = 0; k < variables.size(); ++k) {
    const auto& x = variables[k];
    if (x.rows() != d || x.cols() != d) throw InvalidInput("Representation '" + label + "': inconsistent shapes");
    if ((x - x.adjoint()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidInput("Representation '" + label + "': variable " + std::to_string(k + 1) + " is not Hermitian");
    }
  }
}

Representation qubit_representation() {
  const cplx i(0.0, 1.0);
  Eigen::MatrixXcd s1(2, 2), s2(2, 2), s3(2, 2);
  s1 << 0, 1, 1, 0;
  s2 << 0, -i, i, 0;
  s3 << 1, 0, 0, -1;
  return Representation({s1, s2, s3}, "qubit");
}

Representation tensor_representation(const Representation& first, const Representation& second) {
  const auto i1 = Eigen::MatrixXcd::Identity(first.d(), first.d());
  const auto i2 = Eigen::MatrixXcd::Identity(second.d(), second.d());
  std::vector<Eigen::MatrixXcd> vars;
  vars.reserve(static_cast<std::size_t>(first.n() + second.n() + first.n() * second.n()));
  for (const auto& x : first.variables) vars.emplace_back(Eigen::kroneckerProduct(x, i2));
  for (const auto& y : second.variables) vars.emplace_back(Eigen::kroneckerProduct(i1, y));
  for (const auto& x : first.variables) {
    for (const auto& y : second.variables) vars.emplace_back(Eigen::kroneckerProduct(x, y));
  }
  return Representation(std::move(vars), first.label + "(x)" + second.label);
}

namespace {

Eigen::MatrixXcd affine_combination(const Representation& rep, cplx constant, const Eigen::VectorXcd& coeffs) {
  Eigen::MatrixXcd out = constant * Eigen::MatrixXcd::Identity(rep.d(), rep.d());
  for (Eigen::Index l = 0; l < rep.n(); ++l) out += coeffs(l) * rep.variables[l];
  return out;
}

}  // namespace

StructureFit fit_structure_constants(const Representation& rep, double max_residual) {
  const auto n = rep.n();
  const auto d = rep.d();
  Eigen::MatrixXcd basis(d * d, n + 1);
  basis.col(0) = Eigen::MatrixXcd::Identity(d, d).reshaped();
  for (Eigen::Index l = 0; l < n; ++l) basis.col(l + 1) = rep.variables[l].reshaped();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(basis);
  qr.setThreshold(1e-10);
  if (qr.rank() < n + 1) {
    throw RepresentationError(RepresentationError::Kind::DegenerateBasis,
                              "fit_structure_constants: {I, X_1..X_n} is linearly dependent (rank " +
                                  std::to_string(qr.rank()) + " < " + std::to_string(n + 1) + ")");
  }

  Eigen::MatrixXd alpha(n, n);
  std::vector<Eigen::MatrixXcd> beta(static_cast<std::size_t>(n), Eigen::MatrixXcd::Zero(n, n));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::VectorXcd target = (rep.variables[j] * rep.variables[k]).reshaped();
      const Eigen::VectorXcd c = qr.solve(target);
      alpha(j, k) = c(0).real();
      for (Eigen::Index l = 0; l < n; ++l) beta[l](j, k) = c(l + 1);
    }
  }
  alpha = 0.5 * (alpha + alpha.transpose()).eval();
  for (auto& b : beta) b = (0.5 * (b + b.adjoint())).eval();

  // Residual of the projected (real symmetric, Hermitian) constants.
  double residual = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::VectorXcd c(n);
      for (Eigen::Index l = 0; l < n; ++l) c(l) = beta[l](j, k);
      const double r = (rep.variables[j] * rep.variables[k] - affine_combination(rep, alpha(j, k), c)).norm();
      residual = std::max(residual, r);
    }
  }
  if (residual > max_residual) {
    std::ostringstream os;
    os << "fit_structure_constants: products of '" << rep.label << "' are not representable in the affine span (residual "
       << residual << " > " << max_residual << ")";
    throw RepresentationError(RepresentationError::Kind::NotInAffineSpan, os.str());
  }
  return StructureFit{StructureConstants(alpha, std::move(beta)), residual};
}

std::string AlgebraReport::describe() const {
  std::ostringstream os;
  os << (algebra_ok() ? "algebra ok" : "algebra FAILED") << " (residual " << product_residual << "), "
     << (ccr_ok() ? "CCR ok" : "CCR FAILED") << " (residual " << commutator_residual << "), tol " << tol;
  return os.str();
}

AlgebraReport check_algebra(const Representation& rep, const StructureConstants& sc, double tol) {
  const auto n = rep.n();
  if (sc.n() != n) {
    throw InvalidInput("check_algebra: representation has " + std::to_string(n) + " variables, constants have " +
                       std::to_string(sc.n()));
  }
  AlgebraReport r;
  r.tol = tol;
  const cplx two_i(0.0, 2.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::VectorXcd bjk(n), tjk(n);
      for (Eigen::Index l = 0; l < n; ++l) {
        bjk(l) = sc.beta()(j, k, l);
        tjk(l) = two_i * sc.theta()(j, k, l);
      }
      const auto& xj = rep.variables[j];
      const auto& xk = rep.variables[k];
      const double p = (xj * xk - affine_combination(rep, sc.alpha()(j, k), bjk)).norm();
      const double c = (xj * xk - xk * xj - affine_combination(rep, 0.0, tjk)).norm();
      if (p > r.product_residual) {
        r.product_residual = p;
        r.product_pair[0] = j;
        r.product_pair[1] = k;
      }
      if (c > r.commutator_residual) {
        r.commutator_residual = c;
        r.commutator_pair[0] = j;
        r.commutator_pair[1] = k;
      }
    }
  }
  r.pass = r.algebra_ok() && r.ccr_ok();
  return r;
}

}  // namespace qmem
