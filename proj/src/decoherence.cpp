#include "qmem/decoherence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qmem {

double require_nontrivial_reference(const InitialMoments& init, const WeightingSpec& weights) {
  const double ref = weights.reference(init);
  if (!(ref > 1e-14 * std::max(1.0, weights.Sigma.cwiseAbs().maxCoeff()))) {
    std::ostringstream os;
    os << "trivial reference: |F sqrt(P)|^2 = " << ref << " (condition F sqrt(P) != 0 violated)";
    throw DomainError(os.str());
  }
  return ref;
}

DecoherenceExpansion tau_expansion(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights) {
  DecoherenceExpansion e;
  e.ref_norm = require_nontrivial_reference(init, weights);
  const auto d = delta_derivatives0(sys, init, weights);
  if (!(d.first > 1e-14)) {
    std::ostringstream os;
    os << "zero noise rate: Delta'(0) = <Sigma, Re Lambda(0)> = " << d.first
       << " (condition <Sigma, Re Lambda(0)> > 0 violated)";
    throw DomainError(os.str());
  }
  e.delta_dot0 = d.first;
  e.delta_ddot0 = d.second;
  e.tau_prime0 = e.ref_norm / d.first;
  e.tau_second0 = -d.second * e.tau_prime0 * e.tau_prime0 / d.first;
  return e;
}

DecoherenceTime decoherence_time(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                                 double epsilon, const DecoherenceOptions& opts) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("decoherence_time: epsilon must be positive");
  if (!(opts.horizon > 0.0) || !(opts.settle > 0.0) || opts.margin < 0.0 || opts.margin >= 1.0) {
    throw InvalidInput("decoherence_time: invalid horizon/settle/margin");
  }
  const double ref = require_nontrivial_reference(init, weights);
  const auto c = coefficients(sys);

  DecoherenceTime out;
  out.epsilon = epsilon;
  out.threshold = epsilon * ref;

  // Isolated system with zero Hamiltonian: X(t) = X(0) exactly.
  if (c.A.isZero(0.0) && c.b.isZero(0.0) && sys.M.isZero(0.0)) {
    out.infinite = true;
    return out;
  }

  const double a_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(c.A).singularValues()(0);
  const double time_scale = 1.0 / std::max(1.0, a_norm);
  const double step = opts.step.value_or(1e-3 * time_scale);
  const double tol = opts.tol.value_or(1e-9 * time_scale);
  if (!(step > 0.0) || !(tol > 0.0)) throw InvalidInput("decoherence_time: step and tol must be positive");

  std::optional<double> settle_time;
  std::optional<double> delta_inf;
  const double abscissa = spectral_abscissa(c.A);
  if (abscissa < -1e-10) {
    const auto ss = steady_state(sys, init, weights);
    delta_inf = ss->delta_inf;
    settle_time = opts.settle / std::abs(abscissa);
  }

  DeviationPropagator lo(sys, init, weights);
  double sup = 0.0;
  while (lo.time() < opts.horizon) {
    const double h = std::min(step, opts.horizon - lo.time());
    DeviationPropagator hi = lo;
    hi.advance(h);
    const double dh = hi.delta();
    sup = std::max(sup, dh);
    if (dh > out.threshold) {
      // Bisect on (lo, hi]; every probe restarts from the lower state with one step.
      double t_hi = hi.time();
      while (t_hi - lo.time() > tol) {
        const double mid_h = 0.5 * (t_hi - lo.time());
        DeviationPropagator mid = lo;
        mid.advance(mid_h);
        if (mid.time() <= lo.time() || mid.time() >= t_hi) break;
        if (mid.delta() > out.threshold) {
          t_hi = mid.time();
        } else {
          lo = std::move(mid);
        }
      }
      out.t_lo = lo.time();
      out.t_hi = t_hi;
      out.value = t_hi;
      out.sup_delta = sup;
      return out;
    }
    lo = std::move(hi);
    if (settle_time && lo.time() >= *settle_time && *delta_inf <= (1.0 - opts.margin) * out.threshold) {
      out.infinite = true;
      out.sup_delta = sup;
      out.t_lo = lo.time();
      return out;
    }
  }
  std::ostringstream os;
  os << "no threshold crossing up to horizon " << opts.horizon << " and no steady-state certificate (sup Delta = " << sup
     << ", threshold = " << out.threshold << ")";
  throw InconclusiveError(os.str(), sup, opts.horizon);
}

}  // namespace qmem
