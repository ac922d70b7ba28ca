#include "qmem/energy_optimizer.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace qmem {

RKMatrices rk_matrices(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights) {
  const auto n = sys.n();
  const auto& theta = sys.sc.theta();
  const Eigen::MatrixXd& s = weights.Sigma;
  if (s.rows() != n) throw InvalidInput("rk_matrices: weighting matrix must be n x n");
  const auto c = coefficients(sys);
  const Eigen::MatrixXd& mho = c.Mho;

  RKMatrices out;
  out.R = mho_sandwich(theta, init.P.cast<cplx>(), s.cast<cplx>()).real();
  out.R = (0.5 * (out.R + out.R.transpose())).eval();

  const Eigen::MatrixXd re_lambda0 = lambda_matrix(sys, init.mu0).real();
  const Eigen::MatrixXd inner = s * (c.Atilde * init.P + 0.5 * re_lambda0 + c.b * init.mu0.transpose());
  out.K = mho.transpose() * vec(inner);

  if (!init.mu0.isZero(0.0) && !sys.M.isZero(0.0)) {
    const Eigen::MatrixXcd mc = sys.M.cast<cplx>();
    const Eigen::MatrixXcd g = mc.transpose() * c.Omega * mc;
    const Eigen::MatrixXd pairing = mho * s * mho.transpose();
    const Eigen::MatrixXd theta_mu = sections_dot(theta, init.mu0);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::MatrixXcd bk = sections_dot(sys.sc.beta(), theta_mu.col(k));
      const Eigen::MatrixXd kron = Eigen::kroneckerProduct(bk, g).eval().real();
      out.K(k) += frobenius(pairing, kron);
    }
  }
  return out;
}

double default_stationarity_tol(const Eigen::MatrixXd& r) {
  const double tr = r.trace();
  return 1e-10 * std::max(tr, 0.0) / static_cast<double>(std::max<Eigen::Index>(1, r.rows())) + 1e-300;
}

StationarySolution solve_stationarity(const Eigen::MatrixXd& r, const Eigen::VectorXd& k, std::optional<double> tol) {
  if (r.rows() != r.cols() || r.rows() != k.size()) throw InvalidInput("solve_stationarity: shape mismatch");
  const double t = tol.value_or(default_stationarity_tol(r));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (r + r.transpose()));
  const auto& lam = es.eigenvalues();
  if (lam.minCoeff() < -std::max(t, 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff()))) {
    throw InvalidInput("solve_stationarity: R is not positive semidefinite");
  }
  StationarySolution sol;
  const Eigen::VectorXd kq = es.eigenvectors().transpose() * k;
  Eigen::VectorXd xq = Eigen::VectorXd::Zero(k.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > t) {
      xq(i) = -0.5 * kq(i) / lam(i);
    } else {
      ++sol.null_dimension;
    }
  }
  sol.unique = sol.null_dimension == 0;
  sol.x = es.eigenvectors() * xq;
  sol.residual = (2.0 * r * sol.x + k).norm();
  if (sol.residual > std::max(t, 1e-10) * std::max(1.0, k.norm())) {
    std::ostringstream os;
    os << "stationarity 2 R x + K = 0 has no solution: K leaves range(R) (residual " << sol.residual
       << "), inconsistent inputs";
    throw DomainError(os.str());
  }
  return sol;
}

OptimalityData optimal_energy(const Eigen::MatrixXd& r, const Eigen::VectorXd& k, std::optional<double> tol) {
  const double t = tol.value_or(default_stationarity_tol(r));
  const auto sol = solve_stationarity(r, k, t);
  OptimalityData out;
  out.R = r;
  out.K = k;
  out.E_star = sol.x;
  out.residual = sol.residual;
  out.unique = sol.unique;
  out.null_dimension = sol.null_dimension;
  out.zero_energy_optimal = k.norm() <= std::max(t, 1e-12);
  return out;
}

GradientReport gradient_check(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                              const Eigen::VectorXd& e_probe) {
  const auto n = sys.n();
  detail::require_length(n, e_probe.size(), "gradient_check");
  const auto rk = rk_matrices(sys, init, weights);
  GradientReport rep;
  rep.analytic = 8.0 * (2.0 * rk.R * e_probe + rk.K);
  rep.numerical.resize(n);
  const double h = 1e-5 * (1.0 + e_probe.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXd ep = e_probe, em = e_probe;
    ep(k) += h;
    em(k) -= h;
    const double fp = delta_derivatives0(sys.with_energy(ep), init, weights).second;
    const double fm = delta_derivatives0(sys.with_energy(em), init, weights).second;
    rep.numerical(k) = (fp - fm) / (2.0 * h);
  }
  rep.max_abs_deviation = (rep.analytic - rep.numerical).cwiseAbs().maxCoeff();
  const double scale =
      std::max({rep.analytic.cwiseAbs().maxCoeff(), rep.numerical.cwiseAbs().maxCoeff(), 1e-12});
  rep.relative_deviation = rep.max_abs_deviation / scale;
  return rep;
}

namespace {

TauComparison evaluate_at(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                          double epsilon, const Eigen::VectorXd& e, const DecoherenceOptions& opts) {
  TauComparison out;
  out.E = e;
  const auto at = sys.with_energy(e);
  out.tau_hat = tau_hat(tau_expansion(at, init, weights), epsilon);
  try {
    out.tau = decoherence_time(at, init, weights, epsilon, opts);
  } catch (const DomainError& err) {
    out.tau_error = err.what();
  }
  return out;
}

}  // namespace

SuboptimalTauReport suboptimal_tau_report(const SystemParams& sys, const InitialMoments& init,
                                          const WeightingSpec& weights, double epsilon,
                                          const std::vector<Eigen::VectorXd>& comparisons,
                                          const DecoherenceOptions& opts) {
  SuboptimalTauReport rep;
  rep.epsilon = epsilon;
  const auto rk = rk_matrices(sys, init, weights);
  rep.optimum = optimal_energy(rk.R, rk.K);
  rep.at_optimum = evaluate_at(sys, init, weights, epsilon, rep.optimum.E_star, opts);
  for (const auto& e : comparisons) {
    detail::require_length(sys.n(), e.size(), "suboptimal_tau_report comparison");
    rep.comparisons.push_back(evaluate_at(sys, init, weights, epsilon, e, opts));
    const double slack = 1e-12 * std::max(1.0, std::abs(rep.at_optimum.tau_hat));
    if (rep.comparisons.back().tau_hat > rep.at_optimum.tau_hat + slack) rep.tau_hat_maximal = false;
  }
  return rep;
}

}  // namespace qmem
