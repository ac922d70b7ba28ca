#include "qmem/system_model.hpp"

#include <set>

#include <unsupported/Eigen/KroneckerProduct>

namespace qmem {

ItoMatrix ito_matrix(Eigen::Index m) {
  if (m < 2 || m % 2 != 0) throw InvalidInput("ito_matrix: field dimension m must be even and >= 2, got " + std::to_string(m));
  Eigen::Matrix2d bj;
  bj << 0, 1, -1, 0;
  ItoMatrix out;
  out.j = Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(m / 2, m / 2), bj);
  out.omega = Eigen::MatrixXcd::Identity(m, m) + cplx(0.0, 1.0) * out.j.cast<cplx>();
  return out;
}

void validate_feedthrough(const Eigen::MatrixXd& d, Eigen::Index m) {
  const auto r = d.rows();
  if (d.cols() != m) throw InvalidInput("feedthrough D must have m = " + std::to_string(m) + " columns");
  if (r == 0 || r % 2 != 0 || r > m) throw InvalidInput("feedthrough D must have an even number r <= m of rows");
  std::set<Eigen::Index> used;
  std::vector<Eigen::Index> picked(static_cast<std::size_t>(r));
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index where = -1;
    for (Eigen::Index c = 0; c < m; ++c) {
      if (d(i, c) == 1.0 && where < 0) {
        where = c;
      } else if (d(i, c) != 0.0) {
        throw InvalidInput("feedthrough D row " + std::to_string(i + 1) + " is not a unit row");
      }
    }
    if (where < 0) throw InvalidInput("feedthrough D row " + std::to_string(i + 1) + " is zero");
    if (!used.insert(where).second) throw InvalidInput("feedthrough D repeats a field channel");
    picked[static_cast<std::size_t>(i)] = where;
  }
  for (Eigen::Index i = 0; i < r; i += 2) {
    const auto a = picked[static_cast<std::size_t>(i)];
    const auto b = picked[static_cast<std::size_t>(i + 1)];
    if (a % 2 != 0 || b != a + 1) {
      throw InvalidInput("feedthrough D rows " + std::to_string(i + 1) + "," + std::to_string(i + 2) +
                         " do not select a conjugate pair of channels");
    }
  }
}

SystemParams::SystemParams(StructureConstants constants, Eigen::VectorXd energy, Eigen::MatrixXd coupling,
                           Eigen::VectorXd offset, std::optional<Eigen::MatrixXd> feedthrough)
    : sc(std::move(constants)), E(std::move(energy)), M(std::move(coupling)), N(std::move(offset)),
      D(std::move(feedthrough)) {
  const auto n = sc.n();
  if (E.size() != n) throw InvalidInput("SystemParams: energy vector must have length n = " + std::to_string(n));
  if (M.cols() != n) throw InvalidInput("SystemParams: coupling matrix M must have n = " + std::to_string(n) + " columns");
  if (M.rows() < 2 || M.rows() % 2 != 0) throw InvalidInput("SystemParams: number of field channels m must be even and >= 2");
  if (N.size() != M.rows()) throw InvalidInput("SystemParams: coupling offset N must have length m");
  if (!E.allFinite() || !M.allFinite() || !N.allFinite()) throw InvalidInput("SystemParams: non-finite parameters");
  if (D) validate_feedthrough(*D, M.rows());
}

SystemParams SystemParams::with_energy(Eigen::VectorXd energy) const {
  SystemParams out = *this;
  if (energy.size() != n()) throw InvalidInput("with_energy: length mismatch");
  out.E = std::move(energy);
  return out;
}

CoefficientSet coefficients(const SystemParams& sys) {
  const auto n = sys.n();
  const auto& theta = sys.sc.theta();
  const auto& re_beta = sys.sc.re_beta();
  const auto ito = ito_matrix(sys.m());
  const Eigen::MatrixXd& J = ito.j;
  const Eigen::MatrixXd& M = sys.M;

  CoefficientSet c;
  c.Mho = sys.sc.mho();
  c.Omega = ito.omega;
  c.J = J;
  c.A0 = 2.0 * sections_diamond(theta, sys.E);

  c.Atilde = 2.0 * sections_diamond(theta, (M.transpose() * J * sys.N).eval());
  for (Eigen::Index l = 0; l < n; ++l) {
    c.Atilde += 2.0 * theta.section(l) * M.transpose() *
                (M * theta.leading_slice(l) + J * M * re_beta.leading_slice(l));
  }
  c.A = c.A0 + c.Atilde;
  c.b = -2.0 * c.Mho.transpose() * vec(M.transpose() * J * M * sys.sc.alpha());

  if (sys.D) {
    c.C = 2.0 * (*sys.D) * J * M;
    c.d = 2.0 * (*sys.D) * J * sys.N;
  }
  return c;
}

namespace {

Eigen::MatrixXcd field_gram(const SystemParams& sys) {
  const auto ito = ito_matrix(sys.m());
  const Eigen::MatrixXcd mc = sys.M.cast<cplx>();
  return mc.transpose() * ito.omega * mc;
}

}  // namespace

Eigen::MatrixXcd lambda_matrix(const SystemParams& sys, const Eigen::VectorXd& mu) {
  detail::require_length(sys.n(), mu.size(), "lambda_matrix");
  const Eigen::MatrixXcd pi = sys.sc.alpha().cast<cplx>() + sections_dot(sys.sc.beta(), mu);
  return 4.0 * mho_sandwich(sys.sc.theta(), pi, field_gram(sys));
}

Eigen::MatrixXcd lambda_dot0(const SystemParams& sys, const CoefficientSet& coeffs, const Eigen::VectorXd& mu0) {
  detail::require_length(sys.n(), mu0.size(), "lambda_dot0");
  const Eigen::VectorXd rate = coeffs.A * mu0 + coeffs.b;
  return 4.0 * mho_sandwich(sys.sc.theta(), sections_dot(sys.sc.beta(), rate), field_gram(sys));
}

LambdaMap::LambdaMap(const SystemParams& sys) {
  const auto n = sys.n();
  const Eigen::MatrixXcd g = field_gram(sys);
  zero_ = sys.M.isZero(0.0);
  base_ = 4.0 * mho_sandwich(sys.sc.theta(), sys.sc.alpha().cast<cplx>(), g);
  slopes_.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index l = 0; l < n; ++l) {
    slopes_.emplace_back(4.0 * mho_sandwich(sys.sc.theta(), sys.sc.beta().section(l), g));
  }
}

Eigen::MatrixXcd LambdaMap::operator()(const Eigen::VectorXd& mu) const {
  Eigen::MatrixXcd out = base_;
  for (std::size_t l = 0; l < slopes_.size(); ++l) {
    const double w = mu(static_cast<Eigen::Index>(l));
    if (w != 0.0) out += w * slopes_[l];
  }
  return out;
}

}  // namespace qmem
