// Independent reference computations for the unit and acceptance tests.
// Nothing here calls into the library's formulas: products are triple loops,
// Kronecker identities are materialized, and the QSDE coefficients, diffusion
// and mean-square deviation are recovered from a dense Heisenberg-picture
// generator acting on explicit operators.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "qmem/interconnect.hpp"

namespace oracle {

using cplx = std::complex<double>;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline double max_abs(const MatrixXcd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
inline double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// (gamma . u)_{jk} = sum_l gamma_{jkl} u_l, one scalar at a time.
inline MatrixXcd loops_dot(const std::vector<MatrixXcd>& gamma, const VectorXcd& u) {
  const auto n = static_cast<Index>(gamma.size());
  MatrixXcd out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      cplx s = 0.0;
      for (Index l = 0; l < n; ++l) s += gamma[l](j, k) * u(l);
      out(j, k) = s;
    }
  }
  return out;
}

// (gamma <> u)_{jk} = (gamma_k u)_j = sum_l gamma_{jlk} u_l.
inline MatrixXcd loops_diamond(const std::vector<MatrixXcd>& gamma, const VectorXcd& u) {
  const auto n = static_cast<Index>(gamma.size());
  MatrixXcd out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      cplx s = 0.0;
      for (Index l = 0; l < n; ++l) s += gamma[k](j, l) * u(l);
      out(j, k) = s;
    }
  }
  return out;
}

// The three antisymmetric Pauli sections written out by hand.
inline MatrixXd pauli_theta_section(int l) {
  MatrixXd t(3, 3);
  switch (l) {
    case 0: t << 0, 0, 0, 0, 0, 1, 0, -1, 0; break;
    case 1: t << 0, 0, -1, 0, 0, 0, 1, 0, 0; break;
    default: t << 0, 1, 0, -1, 0, 0, 0, 0, 0; break;
  }
  return t;
}

inline MatrixXd stacked(const std::vector<MatrixXd>& sections) {
  const auto n = static_cast<Index>(sections.size());
  MatrixXd out(n * n, n);
  for (Index l = 0; l < n; ++l) out.middleRows(l * n, n) = sections[l];
  return out;
}

// Mho^T (pi (x) g) Mho with the Kronecker product materialized.
inline MatrixXcd kron_sandwich(const MatrixXd& mho, const MatrixXcd& pi, const MatrixXcd& g) {
  const MatrixXcd big = Eigen::kroneckerProduct(pi, g);
  return mho.transpose().cast<cplx>() * big * mho.cast<cplx>();
}

inline MatrixXd ito_j(Index m) {
  MatrixXd j = MatrixXd::Zero(m, m);
  for (Index p = 0; p + 1 < m; p += 2) {
    j(p, p + 1) = 1.0;
    j(p + 1, p) = -1.0;
  }
  return j;
}

// 4 Mho^T ((alpha + beta . mu) (x) M^T Omega M) Mho, Kronecker route.
inline MatrixXcd kron_lambda(const qmem::SystemParams& sys, const VectorXd& mu) {
  const auto& sc = sys.sc;
  const auto n = sc.n();
  MatrixXcd pi = sc.alpha().cast<cplx>();
  for (Index l = 0; l < n; ++l) pi += sc.beta().section(l) * mu(l);
  const MatrixXcd omega = MatrixXcd::Identity(sys.m(), sys.m()) + cplx(0, 1) * ito_j(sys.m()).cast<cplx>();
  const MatrixXcd g = sys.M.transpose().cast<cplx>() * omega * sys.M.cast<cplx>();
  std::vector<MatrixXd> theta;
  for (Index l = 0; l < n; ++l) theta.push_back(sc.beta().section(l).imag());
  return 4.0 * kron_sandwich(stacked(theta), pi, g);
}

// Matrix exponential by Taylor series with scaling and squaring.
inline MatrixXd taylor_expm(const MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::ldexp(1.0, s) > 0.25) ++s;
  const MatrixXd x = a / std::ldexp(1.0, s);
  MatrixXd term = MatrixXd::Identity(a.rows(), a.cols());
  MatrixXd sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * x / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

// mu(t) = e^{tA} mu0 + int_0^t e^{sA} b ds from one augmented exponential.
inline VectorXd mean_at(const MatrixXd& a, const VectorXd& b, const VectorXd& mu0, double t) {
  const auto n = a.rows();
  MatrixXd aug = MatrixXd::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = a;
  aug.topRightCorner(n, 1) = b;
  VectorXd z(n + 1);
  z << mu0, 1.0;
  return (taylor_expm(t * aug) * z).head(n);
}

// V(t) = int_0^t e^{(t-s)A} Lambda(mu(s)) e^{(t-s)A^T} ds by composite Simpson.
inline MatrixXcd simpson_V(const MatrixXd& a, const VectorXd& b, const VectorXd& mu0,
                           const std::function<MatrixXcd(const VectorXd&)>& lambda, double t, int panels) {
  if (panels % 2) ++panels;
  const double h = t / panels;
  const auto n = a.rows();
  MatrixXcd acc = MatrixXcd::Zero(n, n);
  for (int i = 0; i <= panels; ++i) {
    const double s = i * h;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const MatrixXcd e = taylor_expm((t - s) * a).cast<cplx>();
    acc += w * (e * lambda(mean_at(a, b, mu0, s)) * e.transpose());
  }
  return acc * (h / 3.0);
}

// Heisenberg-picture generator of the open system on explicit operators:
//   G(Y) = i[H, Y] + 1/2 sum_jk Omega_jk ([L_j, Y] L_k + L_j [Y, L_k])
// with H = E^T X and L = M X + N.
class DenseModel {
 public:
  DenseModel(const qmem::Representation& rep, const qmem::SystemParams& sys) : x_(rep.variables) {
    d_ = rep.d();
    const auto n = rep.n();
    const auto m = sys.m();
    h_ = MatrixXcd::Zero(d_, d_);
    for (Index l = 0; l < n; ++l) h_ += sys.E(l) * x_[l];
    for (Index k = 0; k < m; ++k) {
      MatrixXcd lk = sys.N(k) * MatrixXcd::Identity(d_, d_);
      for (Index l = 0; l < n; ++l) lk += sys.M(k, l) * x_[l];
      l_.push_back(lk);
    }
    omega_ = MatrixXcd::Identity(m, m) + cplx(0, 1) * ito_j(m).cast<cplx>();

    basis_.resize(d_ * d_, n + 1);
    basis_.col(0) = MatrixXcd::Identity(d_, d_).reshaped();
    for (Index l = 0; l < n; ++l) basis_.col(l + 1) = x_[l].reshaped();
    qr_ = basis_.colPivHouseholderQr();

    super_.resize(d_ * d_, d_ * d_);
    for (Index i = 0; i < d_ * d_; ++i) {
      MatrixXcd y = MatrixXcd::Zero(d_, d_);
      y(i % d_, i / d_) = 1.0;
      super_.col(i) = generator(y).reshaped();
    }
  }

  MatrixXcd generator(const MatrixXcd& y) const {
    const cplx i(0, 1);
    MatrixXcd g = i * (h_ * y - y * h_);
    const auto m = static_cast<Index>(l_.size());
    for (Index j = 0; j < m; ++j) {
      for (Index k = 0; k < m; ++k) {
        if (omega_(j, k) == cplx(0.0)) continue;
        g += 0.5 * omega_(j, k) * ((l_[j] * y - y * l_[j]) * l_[k] + l_[j] * (y * l_[k] - l_[k] * y));
      }
    }
    return g;
  }

  // Coefficients c with y = c_0 I + sum_l c_l X_l.
  VectorXcd affine_coordinates(const MatrixXcd& y) const { return qr_.solve(MatrixXcd(y.reshaped())); }

  // Drift G(X) = A X + b read off the generator.
  void drift(MatrixXd& a, VectorXd& b) const {
    const auto n = static_cast<Index>(x_.size());
    a.resize(n, n);
    b.resize(n);
    for (Index l = 0; l < n; ++l) {
      const VectorXcd c = affine_coordinates(generator(x_[l]));
      b(l) = c(0).real();
      a.row(l) = c.tail(n).real().transpose();
    }
  }

  // Ito correction G(X_j X_k) - G(X_j) X_k - X_j G(X_k), averaged at mean mu.
  MatrixXcd lambda(const VectorXd& mu) const {
    const auto n = static_cast<Index>(x_.size());
    MatrixXcd out(n, n);
    for (Index j = 0; j < n; ++j) {
      const MatrixXcd gj = generator(x_[j]);
      for (Index k = 0; k < n; ++k) {
        const MatrixXcd corr = generator(x_[j] * x_[k]) - gj * x_[k] - x_[j] * generator(x_[k]);
        const VectorXcd c = affine_coordinates(corr);
        out(j, k) = c(0) + (c.tail(n).array() * mu.cast<cplx>().array()).sum();
      }
    }
    return out;
  }

  // E[(X(t) - X(0))^T Sigma (X(t) - X(0))] in the state rho with vacuum fields,
  // using the semigroup e^{tG} and E[X_j(t) X_k(0)] = tr(e^{tG}(X_j) X_k rho).
  double delta(const MatrixXcd& rho, const MatrixXd& sigma, double t) const {
    const MatrixXcd semigroup = complex_expm(t * super_);
    auto evolve = [&](const MatrixXcd& y) -> MatrixXcd {
      return (semigroup * VectorXcd(y.reshaped())).reshaped(d_, d_);
    };
    const auto n = static_cast<Index>(x_.size());
    std::vector<MatrixXcd> xt;
    for (Index j = 0; j < n; ++j) xt.push_back(evolve(x_[j]));
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) {
      for (Index k = 0; k < n; ++k) {
        if (sigma(j, k) == 0.0) continue;
        const MatrixXcd jk = x_[j] * x_[k];
        const double now = (evolve(jk) * rho).trace().real();
        const double cross = (xt[j] * x_[k] * rho).trace().real();
        const double start = (jk * rho).trace().real();
        acc += sigma(j, k) * (now - 2.0 * cross + start);
      }
    }
    return acc;
  }

  // Mean of the variables in the state rho.
  VectorXd mean(const MatrixXcd& rho) const {
    VectorXd mu(static_cast<Index>(x_.size()));
    for (std::size_t l = 0; l < x_.size(); ++l) mu(static_cast<Index>(l)) = (x_[l] * rho).trace().real();
    return mu;
  }

  static MatrixXcd complex_expm(const MatrixXcd& a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::ldexp(1.0, s) > 0.25) ++s;
    const MatrixXcd x = a / std::ldexp(1.0, s);
    MatrixXcd term = MatrixXcd::Identity(a.rows(), a.cols());
    MatrixXcd sum = term;
    for (int k = 1; k < 30; ++k) {
      term = term * x / static_cast<double>(k);
      sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
  }

 private:
  std::vector<MatrixXcd> x_;
  Index d_ = 0;
  MatrixXcd h_;
  std::vector<MatrixXcd> l_;
  MatrixXcd omega_;
  MatrixXcd basis_;
  Eigen::ColPivHouseholderQR<MatrixXcd> qr_;
  MatrixXcd super_;
};

// Qubit state with Bloch vector r, |r| <= 1.
inline MatrixXcd bloch_state(const VectorXd& r) {
  const auto rep = qmem::qubit_representation();
  MatrixXcd rho = 0.5 * MatrixXcd::Identity(2, 2);
  for (Index l = 0; l < 3; ++l) rho += 0.5 * r(l) * rep.variables[l];
  return rho;
}

// First t on a uniform scan of [a, b] with f(t) > level, refined by linear
// interpolation between the bracketing nodes; NaN when the scan never crosses.
inline double scan_first_crossing(const std::function<double(double)>& f, double level, double a, double b,
                                  double step) {
  double t_prev = a;
  double f_prev = f(a);
  if (f_prev > level) return a;
  const auto count = static_cast<long>(std::ceil((b - a) / step));
  for (long i = 1; i <= count; ++i) {
    const double t = std::min(b, a + i * step);
    const double v = f(t);
    if (v > level) return t_prev + (level - f_prev) / (v - f_prev) * (t - t_prev);
    t_prev = t;
    f_prev = v;
  }
  return std::nan("");
}

inline VectorXd central_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// Random Pauli-structured instances used by property tests.
struct Instance {
  qmem::SystemParams sys;
  qmem::InitialMoments init;
  qmem::WeightingSpec weights;
  VectorXd bloch;  ///< mu0, which doubles as the Bloch vector of a matching qubit state
};

inline Instance random_pauli_instance(std::mt19937& rng, bool with_offset = true, double mean_radius = 0.8) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto gauss = [&](Index r, Index c) {
    MatrixXd m(r, c);
    for (Index i = 0; i < m.size(); ++i) m(i) = g(rng);
    return m;
  };
  const VectorXd e = gauss(3, 1);
  const MatrixXd m = 0.7 * gauss(2, 3);
  const VectorXd nn = with_offset ? VectorXd(0.5 * gauss(2, 1)) : VectorXd(VectorXd::Zero(2));
  VectorXd mu = gauss(3, 1);
  mu *= mean_radius * u(rng) / std::max(1e-12, mu.norm());
  const MatrixXd f = gauss(3, 3) + 2.0 * MatrixXd::Identity(3, 3);
  qmem::SystemParams sys(qmem::pauli_structure(), e, m, nn);
  auto init = qmem::InitialMoments::from_mean(sys.sc, mu);
  return Instance{std::move(sys), std::move(init), qmem::WeightingSpec::from_factor(f), mu};
}

// The worked example: Pauli, E = 0, N = 0, M = [[1,0,0],[0,1,0]], mu0 = 0, Sigma = I.
inline qmem::SystemParams worked_system() {
  MatrixXd m(2, 3);
  m << 1, 0, 0, 0, 1, 0;
  return qmem::SystemParams(qmem::pauli_structure(), VectorXd::Zero(3), m, VectorXd::Zero(2));
}

}  // namespace oracle
