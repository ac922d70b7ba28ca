#include "qmem/tensor_algebra.hpp"

#include <cmath>
#include <sstream>

namespace qmem {

Eigen::MatrixXd stack_mho(const SectionArray<double>& theta) {
  const auto n = theta.size();
  Eigen::MatrixXd mho(n * n, n);
  for (Eigen::Index l = 0; l < n; ++l) mho.block(l * n, 0, n, n) = theta.section(l);
  return mho;
}

Eigen::MatrixXcd mho_sandwich(const SectionArray<double>& theta, const Eigen::MatrixXcd& pi,
                              const Eigen::MatrixXcd& g) {
  const auto n = theta.size();
  if (pi.rows() != n || pi.cols() != n || g.rows() != n || g.cols() != n) {
    throw InvalidInput("mho_sandwich: operands must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  std::vector<Eigen::MatrixXcd> g_theta;
  g_theta.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) g_theta.emplace_back(g * theta.section(k).cast<cplx>());

  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
  Eigen::MatrixXcd row_sum(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    row_sum.setZero();
    bool any = false;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (pi(j, k) == cplx(0.0)) continue;
      row_sum += pi(j, k) * g_theta[k];
      any = true;
    }
    if (any) out += theta.section(j).transpose().cast<cplx>() * row_sum;
  }
  return out;
}

std::string StructureReport::describe() const {
  std::ostringstream os;
  os << (pass ? "structure ok" : "structure invalid") << " (tol " << tol << "): alpha asymmetry "
     << alpha_asymmetry;
  if (alpha_row >= 0) os << " at (" << alpha_row << "," << alpha_col << ")";
  os << "; beta non-Hermiticity " << beta_non_hermiticity;
  if (beta_section >= 0) os << " at section " << beta_section << " (" << beta_row << "," << beta_col << ")";
  os << "; Theta symmetry defect " << theta_symmetry_defect;
  if (theta_section >= 0) os << " at section " << theta_section << " (" << theta_row << "," << theta_col << ")";
  return os.str();
}

StructureReport validate_structure(const Eigen::MatrixXd& alpha, std::span<const Eigen::MatrixXcd> beta_sections,
                                   double tol) {
  const auto n = alpha.rows();
  if (alpha.cols() != n || static_cast<Eigen::Index>(beta_sections.size()) != n) {
    throw InvalidInput("validate_structure: alpha must be n x n with n beta sections");
  }
  StructureReport r;
  r.tol = tol;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = std::abs(alpha(j, k) - alpha(k, j));
      if (a > r.alpha_asymmetry) {
        r.alpha_asymmetry = a;
        r.alpha_row = j;
        r.alpha_col = k;
      }
    }
  }
  for (Eigen::Index l = 0; l < n; ++l) {
    const auto& b = beta_sections[static_cast<std::size_t>(l)];
    if (b.rows() != n || b.cols() != n) throw InvalidInput("validate_structure: beta section has wrong shape");
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double h = std::abs(b(j, k) - std::conj(b(k, j)));
        if (h > r.beta_non_hermiticity) {
          r.beta_non_hermiticity = h;
          r.beta_section = l;
          r.beta_row = j;
          r.beta_col = k;
        }
        const double t = std::abs(b(j, k).imag() + b(k, j).imag());
        if (t > r.theta_symmetry_defect) {
          r.theta_symmetry_defect = t;
          r.theta_section = l;
          r.theta_row = j;
          r.theta_col = k;
        }
      }
    }
  }
  r.pass = r.alpha_asymmetry <= tol && r.beta_non_hermiticity <= tol && r.theta_symmetry_defect <= tol;
  return r;
}

StructureReport validate_structure(const StructureConstants& sc, double tol) {
  return validate_structure(sc.alpha(), std::span<const Eigen::MatrixXcd>(sc.beta().sections()), tol);
}

StructureConstants::StructureConstants(const Eigen::MatrixXd& alpha, std::vector<Eigen::MatrixXcd> beta_sections) {
  const auto n = alpha.rows();
  if (n <= 0 || alpha.cols() != n) throw InvalidInput("StructureConstants: alpha must be a nonempty square matrix");
  if (!alpha.allFinite()) throw InvalidInput("StructureConstants: alpha has non-finite entries");
  for (const auto& b : beta_sections) {
    if (!b.allFinite()) throw InvalidInput("StructureConstants: beta has non-finite entries");
  }
  const auto report = validate_structure(alpha, beta_sections, kRepairTolerance);
  if (!report.pass) throw InvalidInput("StructureConstants: " + report.describe());

  alpha_ = 0.5 * (alpha + alpha.transpose());
  for (auto& b : beta_sections) b = (0.5 * (b + b.adjoint())).eval();
  beta_ = SectionArray<cplx>(std::move(beta_sections));
  theta_ = beta_.map([](const Eigen::MatrixXcd& b) { return Eigen::MatrixXd(b.imag()); });
  re_beta_ = beta_.map([](const Eigen::MatrixXcd& b) { return Eigen::MatrixXd(b.real()); });
  mho_ = stack_mho(theta_);
}

int levi_civita(int j, int k, int l) {
  if (j == k || k == l || j == l) return 0;
  // even permutations of (0, 1, 2) are cyclic shifts
  return ((k - j + 3) % 3 == 1) ? 1 : -1;
}

StructureConstants pauli_structure() {
  std::vector<Eigen::MatrixXcd> beta(3, Eigen::MatrixXcd::Zero(3, 3));
  for (int l = 0; l < 3; ++l) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) beta[l](j, k) = cplx(0.0, levi_civita(j, k, l));
    }
  }
  return StructureConstants(Eigen::MatrixXd::Identity(3, 3), std::move(beta));
}

}  // namespace qmem
