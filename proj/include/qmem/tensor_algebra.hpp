#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qmem/errors.hpp"

namespace qmem {

using cplx = std::complex<double>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A cubic n x n x n array gamma_{jkl} stored as its n sections gamma_l
/// (third index fixed). Slices with the first or second index fixed are
/// materialized on request.
template <typename Scalar>
class SectionArray {
 public:
  using Matrix = Mat<Scalar>;

  SectionArray() = default;

  explicit SectionArray(Eigen::Index n) : sections_(static_cast<std::size_t>(n), Matrix::Zero(n, n)) {}

  explicit SectionArray(std::vector<Matrix> sections) : sections_(std::move(sections)) {
    const auto n = size();
    for (const auto& s : sections_) {
      if (s.rows() != n || s.cols() != n) {
        throw InvalidInput("SectionArray: every section must be " + std::to_string(n) + "x" +
                           std::to_string(n));
      }
    }
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(sections_.size()); }

  Scalar operator()(Eigen::Index j, Eigen::Index k, Eigen::Index l) const { return sections_[l](j, k); }
  Scalar& operator()(Eigen::Index j, Eigen::Index k, Eigen::Index l) { return sections_[l](j, k); }

  /// gamma_l, the section with the third index fixed.
  const Matrix& section(Eigen::Index l) const { return sections_[static_cast<std::size_t>(l)]; }
  Matrix& section(Eigen::Index l) { return sections_[static_cast<std::size_t>(l)]; }

  const std::vector<Matrix>& sections() const { return sections_; }

  /// gamma_{.k.}: entry (j, l) is gamma_{jkl}.
  Matrix middle_slice(Eigen::Index k) const {
    const auto n = size();
    Matrix out(n, n);
    for (Eigen::Index l = 0; l < n; ++l) out.col(l) = sections_[l].col(k);
    return out;
  }

  /// gamma_{l..}: entry (k, p) is gamma_{lkp}.
  Matrix leading_slice(Eigen::Index l) const {
    const auto n = size();
    Matrix out(n, n);
    for (Eigen::Index p = 0; p < n; ++p) out.col(p) = sections_[p].row(l).transpose();
    return out;
  }

  template <typename F>
  auto map(F&& f) const {
    using R = typename std::decay_t<decltype(f(sections_.front()))>::Scalar;
    std::vector<Mat<R>> out;
    out.reserve(sections_.size());
    for (const auto& s : sections_) out.emplace_back(f(s));
    return SectionArray<R>(std::move(out));
  }

 private:
  std::vector<Matrix> sections_;
};

namespace detail {
template <typename A, typename B>
using Promote = typename Eigen::ScalarBinaryOpTraits<A, B>::ReturnType;

inline void require_length(Eigen::Index n, Eigen::Index len, const char* what) {
  if (len != n) {
    throw InvalidInput(std::string(what) + ": vector length " + std::to_string(len) + " does not match n = " +
                       std::to_string(n));
  }
}
}  // namespace detail

/// gamma . u = sum_l gamma_l u_l.
template <typename Scalar, typename Derived>
Mat<detail::Promote<Scalar, typename Derived::Scalar>> sections_dot(const SectionArray<Scalar>& gamma,
                                                                    const Eigen::MatrixBase<Derived>& u) {
  using R = detail::Promote<Scalar, typename Derived::Scalar>;
  const auto n = gamma.size();
  detail::require_length(n, u.size(), "sections_dot");
  Mat<R> out = Mat<R>::Zero(n, n);
  for (Eigen::Index l = 0; l < n; ++l) out += gamma.section(l).template cast<R>() * R(u(l));
  return out;
}

/// gamma <> u = [gamma_1 u, ..., gamma_n u].
template <typename Scalar, typename Derived>
Mat<detail::Promote<Scalar, typename Derived::Scalar>> sections_diamond(const SectionArray<Scalar>& gamma,
                                                                        const Eigen::MatrixBase<Derived>& u) {
  using R = detail::Promote<Scalar, typename Derived::Scalar>;
  const auto n = gamma.size();
  detail::require_length(n, u.size(), "sections_diamond");
  Mat<R> out(n, n);
  const auto uc = u.derived().template cast<R>().eval();
  for (Eigen::Index k = 0; k < n; ++k) out.col(k) = gamma.section(k).template cast<R>() * uc;
  return out;
}

/// The n^2 x n vertical stack of the sections Theta_1, ..., Theta_n, so that
/// col(Theta <> e) = Mho e.
Eigen::MatrixXd stack_mho(const SectionArray<double>& theta);

/// Column-stacking vectorization.
template <typename Derived>
auto vec(const Eigen::MatrixBase<Derived>& m) {
  return m.derived().reshaped().eval();
}

/// Frobenius inner product <a, b> = sum_jk a_jk b_jk for real matrices.
template <typename DA, typename DB>
double frobenius(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  return (a.derived().array() * b.derived().array()).sum();
}

/// sum_{j,k} pi_jk Theta_j^T g Theta_k, i.e. Mho^T (pi kron g) Mho without
/// forming the Kronecker product.
Eigen::MatrixXcd mho_sandwich(const SectionArray<double>& theta, const Eigen::MatrixXcd& pi,
                              const Eigen::MatrixXcd& g);

struct StructureReport {
  double alpha_asymmetry = 0.0;
  Eigen::Index alpha_row = -1, alpha_col = -1;
  double beta_non_hermiticity = 0.0;
  Eigen::Index beta_section = -1, beta_row = -1, beta_col = -1;
  double theta_symmetry_defect = 0.0;
  Eigen::Index theta_section = -1, theta_row = -1, theta_col = -1;
  double tol = 0.0;
  bool pass = false;

  std::string describe() const;
};

/// Structure constants (alpha, beta) of a set of self-adjoint variables with
/// X X^T = alpha + beta . X. Theta = Im beta is cached.
class StructureConstants {
 public:
  /// Defects up to 1e-12 are repaired by symmetrizing alpha and Hermitizing the
  /// beta sections; anything larger is rejected.
  StructureConstants(const Eigen::MatrixXd& alpha, std::vector<Eigen::MatrixXcd> beta_sections);

  Eigen::Index n() const { return alpha_.rows(); }
  const Eigen::MatrixXd& alpha() const { return alpha_; }
  const SectionArray<cplx>& beta() const { return beta_; }
  const SectionArray<double>& theta() const { return theta_; }
  const SectionArray<double>& re_beta() const { return re_beta_; }
  const Eigen::MatrixXd& mho() const { return mho_; }

  static constexpr double kRepairTolerance = 1e-12;

 private:
  Eigen::MatrixXd alpha_;
  SectionArray<cplx> beta_;
  SectionArray<double> theta_;
  SectionArray<double> re_beta_;
  Eigen::MatrixXd mho_;
};

/// Structure constants of the Pauli matrices: alpha = I_3, beta = i Theta with
/// Levi-Civita sections.
StructureConstants pauli_structure();

/// Levi-Civita symbol on {0, 1, 2}.
int levi_civita(int j, int k, int l);

StructureReport validate_structure(const Eigen::MatrixXd& alpha, std::span<const Eigen::MatrixXcd> beta_sections,
                                   double tol);
StructureReport validate_structure(const StructureConstants& sc, double tol);

}  // namespace qmem
