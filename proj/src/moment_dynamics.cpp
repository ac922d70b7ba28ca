#include "qmem/moment_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace qmem {

double admissibility_margin(const StructureConstants& sc, const Eigen::VectorXd& mu) {
  detail::require_length(sc.n(), mu.size(), "admissibility_margin");
  const Eigen::MatrixXcd pi = sc.alpha().cast<cplx>() + sections_dot(sc.beta(), mu);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(pi, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

InitialMoments InitialMoments::from_mean(const StructureConstants& sc, Eigen::VectorXd mu0) {
  detail::require_length(sc.n(), mu0.size(), "InitialMoments");
  if (!mu0.allFinite()) throw InvalidInput("InitialMoments: non-finite mean");
  const double margin = admissibility_margin(sc, mu0);
  if (margin < -1e-10) {
    std::ostringstream os;
    os << "initial mean is not admissible: alpha + beta . mu0 has eigenvalue " << margin
       << " < 0, so it cannot be a second-moment matrix";
    throw DomainError(os.str());
  }
  InitialMoments init;
  init.P = sc.alpha() + sections_dot(sc.re_beta(), mu0);
  init.Pi = init.P.cast<cplx>() + cplx(0.0, 1.0) * sections_dot(sc.theta(), mu0).cast<cplx>();
  init.mu0 = std::move(mu0);
  return init;
}

WeightingSpec WeightingSpec::from_sigma(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw InvalidInput("weighting matrix must be square");
  if (!sigma.allFinite()) throw InvalidInput("weighting matrix has non-finite entries");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
    throw InvalidInput("weighting matrix must be symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const auto& lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  if (lam.minCoeff() < -1e-10 * scale) throw InvalidInput("weighting matrix must be positive semidefinite");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = lam.size() - 1; i >= 0; --i) {
    if (lam(i) > 1e-12 * scale) keep.push_back(i);
  }
  WeightingSpec w;
  w.Sigma = sym;
  w.F.resize(static_cast<Eigen::Index>(keep.size()), sym.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    w.F.row(static_cast<Eigen::Index>(r)) = std::sqrt(lam(keep[r])) * es.eigenvectors().col(keep[r]).transpose();
  }
  return w;
}

WeightingSpec WeightingSpec::from_factor(const Eigen::MatrixXd& f) {
  if (f.rows() == 0 || f.cols() == 0 || !f.allFinite()) throw InvalidInput("weighting factor F must be finite and nonempty");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(f);
  if (lu.rank() != f.rows()) throw InvalidInput("weighting factor F must have full row rank");
  WeightingSpec w;
  w.F = f;
  w.Sigma = f.transpose() * f;
  return w;
}

WeightingSpec WeightingSpec::identity(Eigen::Index n) {
  WeightingSpec w;
  w.Sigma = Eigen::MatrixXd::Identity(n, n);
  w.F = w.Sigma;
  return w;
}

double WeightingSpec::reference(const InitialMoments& init) const { return frobenius(Sigma, init.P); }

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) { return a.exp(); }

Eigen::MatrixXd psi_matrix(const Eigen::MatrixXd& a, double t) {
  if (t < 0.0) throw InvalidInput("psi_matrix: t must be nonnegative");
  const auto n = a.rows();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  aug.topLeftCorner(n, n) = t * a;
  aug.topRightCorner(n, n) = t * Eigen::MatrixXd::Identity(n, n);
  return expm(aug).topRightCorner(n, n);
}

double spectral_abscissa(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Eigen::MatrixXd& a, double margin) { return spectral_abscissa(a) < -margin; }

std::vector<Eigen::VectorXd> mean_trajectory(const CoefficientSet& coeffs, const InitialMoments& init,
                                             const std::vector<double>& grid) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(grid.size());
  for (double t : grid) out.emplace_back(expm(t * coeffs.A) * init.mu0 + psi_matrix(coeffs.A, t) * coeffs.b);
  return out;
}

std::optional<Eigen::VectorXd> mean_limit(const CoefficientSet& coeffs) {
  if (!is_hurwitz(coeffs.A)) return std::nullopt;
  return Eigen::VectorXd(-coeffs.A.partialPivLu().solve(coeffs.b));
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const auto n = a.rows();
  const auto id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd op = Eigen::kroneckerProduct(id, a) + Eigen::kroneckerProduct(a, id);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(op);
  if (!lu.isInvertible()) throw DomainError("solve_lyapunov: A and -A share an eigenvalue");
  const Eigen::VectorXd p = lu.solve(-vec(q));
  Eigen::MatrixXd out = p.reshaped(n, n);
  return 0.5 * (out + out.transpose());
}

double default_lyapunov_step(const Eigen::MatrixXd& a) {
  const double norm2 = a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
  return 0.01 / std::max(1.0, norm2);
}

namespace {

void require_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidInput("time grid is empty");
  if (grid.front() != 0.0) throw InvalidInput("time grid must start at t = 0");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1]) || !std::isfinite(grid[k])) throw InvalidInput("time grid must be strictly increasing and finite");
  }
}

}  // namespace

DeviationPropagator::DeviationPropagator(const SystemParams& sys, const InitialMoments& init,
                                         const WeightingSpec& weights) {
  const auto c = coefficients(sys);
  const auto n = sys.n();
  if (weights.Sigma.rows() != n || init.mu0.size() != n) throw InvalidInput("weights and initial moments must match n");
  LambdaMap lambda(sys);
  const bool noiseless = lambda.is_zero();
  model_ = std::make_shared<const Model>(
      Model{c.A, c.b, weights.Sigma, init.P, init.mu0, weights.reference(init), std::move(lambda), noiseless});
  exp_t_ = Eigen::MatrixXd::Identity(n, n);
  psi_t_ = Eigen::MatrixXd::Zero(n, n);
  mu_ = init.mu0;
  v_ = Eigen::MatrixXcd::Zero(n, n);
}

const DeviationPropagator::StepCache& DeviationPropagator::cache_for(double h) {
  if (cache_.h != h) {
    const auto& a = model_->a;
    cache_.h = h;
    cache_.exp_h = expm(h * a);
    cache_.exp_half = expm(0.5 * h * a);
    cache_.psi_h = psi_matrix(a, h);
    cache_.psi_half = psi_matrix(a, 0.5 * h);
  }
  return cache_;
}

void DeviationPropagator::advance(double h) {
  if (!(h > 0.0)) throw InvalidInput("DeviationPropagator::advance: step must be positive");
  const Model& m = *model_;
  const auto& c = cache_for(h);
  const Eigen::VectorXd mu_half = c.exp_half * mu_ + c.psi_half * m.b;
  const Eigen::VectorXd mu_next = c.exp_h * mu_ + c.psi_h * m.b;

  if (!m.noiseless) {
    const Eigen::MatrixXcd ac = m.a.cast<cplx>();
    auto rhs = [&](const Eigen::MatrixXcd& v, const Eigen::MatrixXcd& lam) -> Eigen::MatrixXcd {
      return ac * v + v * ac.transpose() + lam;
    };
    const Eigen::MatrixXcd l0 = m.lambda(mu_);
    const Eigen::MatrixXcd lh = m.lambda(mu_half);
    const Eigen::MatrixXcd l1 = m.lambda(mu_next);
    const Eigen::MatrixXcd k1 = rhs(v_, l0);
    const Eigen::MatrixXcd k2 = rhs(v_ + 0.5 * h * k1, lh);
    const Eigen::MatrixXcd k3 = rhs(v_ + 0.5 * h * k2, lh);
    const Eigen::MatrixXcd k4 = rhs(v_ + h * k3, l1);
    v_ += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    v_ = (0.5 * (v_ + v_.adjoint())).eval();
  }

  psi_t_ += exp_t_ * c.psi_h;
  exp_t_ = (c.exp_h * exp_t_).eval();
  mu_ = mu_next;
  t_ += h;
}

double DeviationPropagator::delta() const {
  const Model& m = *model_;
  const auto n = m.a.rows();
  const Eigen::MatrixXd shift = exp_t_ - Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd drift = psi_t_ * m.b;
  double value = frobenius(m.sigma, shift * m.p * shift.transpose()) + 2.0 * drift.dot(m.sigma * shift * m.mu0) +
                 drift.dot(m.sigma * drift) + frobenius(m.sigma, Eigen::MatrixXd(v_.real()));
  if (value < 0.0) {
    if (value < -1e-10 * std::max(1.0, m.ref)) {
      std::ostringstream os;
      os << "mean-square deviation became negative (" << value << ") at t = " << t_;
      throw IntegrationError(os.str());
    }
    value = 0.0;
  }
  return value;
}

namespace {

// Drives a propagator across the grid, calling visit() at every node.
template <typename Visit>
void march_grid(DeviationPropagator& prop, const std::vector<double>& grid, double h_max, Visit&& visit) {
  visit(prop);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double span = grid[k] - grid[k - 1];
    const auto steps = static_cast<long>(std::ceil(span / h_max - 1e-12));
    const double h = span / static_cast<double>(std::max(1L, steps));
    for (long s = 0; s < std::max(1L, steps); ++s) prop.advance(h);
    visit(prop);
  }
}

}  // namespace

std::vector<Eigen::MatrixXcd> second_moment_V(const SystemParams& sys, const InitialMoments& init,
                                              const std::vector<double>& grid) {
  require_grid(grid);
  const auto c = coefficients(sys);
  DeviationPropagator prop(sys, init, WeightingSpec::identity(sys.n()));
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(grid.size());
  march_grid(prop, grid, default_lyapunov_step(c.A), [&](const DeviationPropagator& p) { out.push_back(p.second_moment()); });
  return out;
}

MomentTrajectory simulate(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                          const std::vector<double>& grid) {
  require_grid(grid);
  const auto c = coefficients(sys);
  DeviationPropagator prop(sys, init, weights);
  MomentTrajectory traj;
  march_grid(prop, grid, default_lyapunov_step(c.A), [&](const DeviationPropagator& p) {
    traj.t.push_back(p.time());
    traj.mu.push_back(p.mean());
    traj.V.push_back(p.second_moment());
    traj.delta.push_back(p.delta());
  });
  traj.t = grid;
  return traj;
}

std::vector<double> deviation_delta(const SystemParams& sys, const InitialMoments& init,
                                    const WeightingSpec& weights, const std::vector<double>& grid) {
  return simulate(sys, init, weights, grid).delta;
}

DeltaDerivatives delta_derivatives0(const SystemParams& sys, const InitialMoments& init,
                                    const WeightingSpec& weights) {
  const auto c = coefficients(sys);
  const Eigen::MatrixXd& s = weights.Sigma;
  const Eigen::MatrixXd re_lambda = lambda_matrix(sys, init.mu0).real();
  const Eigen::MatrixXd re_lambda_dot = lambda_dot0(sys, c, init.mu0).real();
  const Eigen::MatrixXd& a = c.A;

  DeltaDerivatives d;
  d.first = frobenius(s, re_lambda);
  const Eigen::MatrixXd inner = 2.0 * a * init.P * a.transpose() +
                                2.0 * a * (re_lambda + 2.0 * init.mu0 * c.b.transpose()) + re_lambda_dot;
  d.second = frobenius(s, inner) + 2.0 * c.b.dot(s * c.b);
  return d;
}

std::optional<SteadyState> steady_state(const SystemParams& sys, const InitialMoments& init,
                                        const WeightingSpec& weights) {
  const auto c = coefficients(sys);
  auto mu_inf = mean_limit(c);
  if (!mu_inf) return std::nullopt;
  SteadyState ss;
  ss.mu_inf = *mu_inf;
  ss.Lambda_inf = lambda_matrix(sys, ss.mu_inf);
  ss.P_inf = solve_lyapunov(c.A, ss.Lambda_inf.real());
  const Eigen::MatrixXd& s = weights.Sigma;
  ss.delta_inf = weights.reference(init) - 2.0 * ss.mu_inf.dot(s * init.mu0) + ss.mu_inf.dot(s * ss.mu_inf) +
                 frobenius(s, ss.P_inf);
  return ss;
}

}  // namespace qmem
