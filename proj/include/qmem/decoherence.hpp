#pragma once

#include <limits>
#include <optional>

#include "qmem/moment_dynamics.hpp"

namespace qmem {

/// Second-order expansion of the decoherence time around epsilon = 0.
struct DecoherenceExpansion {
  double delta_dot0;
  double delta_ddot0;
  double tau_prime0;   ///< ref_norm / delta_dot0
  double tau_second0;  ///< -delta_ddot0 tau_prime0^2 / delta_dot0
  double ref_norm;     ///< |F sqrt(P)|^2
};

/// tau(eps) = inf{t >= 0 : Delta(t) > eps |F sqrt(P)|^2}.
struct DecoherenceTime {
  double epsilon = 0.0;
  double threshold = 0.0;
  bool infinite = false;
  double value = std::numeric_limits<double>::infinity();
  double t_lo = 0.0;  ///< last time known to satisfy Delta <= threshold
  double t_hi = 0.0;  ///< first time known to exceed it
  double sup_delta = 0.0;
};

/// Marching and refinement controls. Unset values take their defaults from the
/// system: step 1e-3 / max(1, |A|_2), tol 1e-9 / max(1, |A|_2).
struct DecoherenceOptions {
  std::optional<double> step;
  std::optional<double> tol;
  double horizon = 1e4;
  double settle = 20.0;
  double margin = 1e-6;
};

/// No crossing found up to the horizon and no steady-state certificate.
class InconclusiveError : public DomainError {
 public:
  InconclusiveError(const std::string& what, double sup_delta, double horizon)
      : DomainError(what), sup_delta_(sup_delta), horizon_(horizon) {}
  double sup_delta() const noexcept { return sup_delta_; }
  double horizon() const noexcept { return horizon_; }

 private:
  double sup_delta_;
  double horizon_;
};

/// First up-crossing of the threshold by forward marching plus bisection.
/// Returns an infinite time only when Delta vanishes identically (isolated
/// system with zero Hamiltonian) or when A is Hurwitz, the march has passed
/// settle / |Re lambda_max| and Delta_inf sits below the threshold by `margin`.
DecoherenceTime decoherence_time(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                                 double epsilon, const DecoherenceOptions& opts = {});

/// Throws DomainError if |F sqrt(P)| = 0 or Delta'(0) <= 1e-14.
DecoherenceExpansion tau_expansion(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights);

/// tau'(0) eps + tau''(0) eps^2 / 2.
inline double tau_hat(const DecoherenceExpansion& e, double epsilon) {
  return e.tau_prime0 * epsilon + 0.5 * e.tau_second0 * epsilon * epsilon;
}

/// Throws DomainError unless <Sigma, P> > 0.
double require_nontrivial_reference(const InitialMoments& init, const WeightingSpec& weights);

}  // namespace qmem
