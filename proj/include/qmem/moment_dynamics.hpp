#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qmem/system_model.hpp"

namespace qmem {

/// Mean and second moments of the initial system variables:
/// Pi = E[X(0) X(0)^T] = alpha + beta . mu0, P = Re Pi.
struct InitialMoments {
  /// Throws DomainError when Pi(mu0) is not positive semidefinite to -1e-10.
  static InitialMoments from_mean(const StructureConstants& sc, Eigen::VectorXd mu0);

  Eigen::VectorXd mu0;
  Eigen::MatrixXd P;
  Eigen::MatrixXcd Pi;
};

/// Smallest eigenvalue of alpha + beta . mu.
double admissibility_margin(const StructureConstants& sc, const Eigen::VectorXd& mu);

/// Weighting Sigma = F^T F of the mean-square deviation.
struct WeightingSpec {
  static WeightingSpec from_sigma(const Eigen::MatrixXd& sigma);
  static WeightingSpec from_factor(const Eigen::MatrixXd& f);
  static WeightingSpec identity(Eigen::Index n);

  Eigen::Index nu() const { return F.rows(); }

  /// E[X(0)^T Sigma X(0)] = <Sigma, P> = |F sqrt(P)|^2.
  double reference(const InitialMoments& init) const;

  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd F;
};

struct MomentTrajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXcd> V;
  std::vector<double> delta;
};

/// Matrix exponential (scaling and squaring with Pade approximants).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

/// psi(t) = int_0^t e^{sA} ds, valid for singular A; evaluated as the upper-right
/// block of exp(t [[A, I], [0, 0]]).
Eigen::MatrixXd psi_matrix(const Eigen::MatrixXd& a, double t);

/// Largest real part over the spectrum of A.
double spectral_abscissa(const Eigen::MatrixXd& a);
bool is_hurwitz(const Eigen::MatrixXd& a, double margin = 1e-10);

/// mu(t) = e^{tA} mu0 + psi(t) b on every grid node.
std::vector<Eigen::VectorXd> mean_trajectory(const CoefficientSet& coeffs, const InitialMoments& init,
                                             const std::vector<double>& grid);

/// -A^{-1} b, or nullopt when A is not Hurwitz.
std::optional<Eigen::VectorXd> mean_limit(const CoefficientSet& coeffs);

/// Solves A P + P A^T + Q = 0 by vectorization.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

/// Second moments V(t) of the noise response, integrated from the Lyapunov ODE
/// V' = AV + VA^T + Lambda(mu(t)), V(0) = 0, with fixed-step RK4.
std::vector<Eigen::MatrixXcd> second_moment_V(const SystemParams& sys, const InitialMoments& init,
                                              const std::vector<double>& grid);

/// Full moment trajectory, including the weighted mean-square deviation
/// Delta(t) = E[(X(t) - X(0))^T Sigma (X(t) - X(0))].
MomentTrajectory simulate(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights,
                          const std::vector<double>& grid);

std::vector<double> deviation_delta(const SystemParams& sys, const InitialMoments& init,
                                    const WeightingSpec& weights, const std::vector<double>& grid);

struct DeltaDerivatives {
  double first;   ///< Delta'(0) = <Sigma, Re Lambda(0)>
  double second;  ///< Delta''(0)
};

DeltaDerivatives delta_derivatives0(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights);

struct SteadyState {
  Eigen::VectorXd mu_inf;
  Eigen::MatrixXcd Lambda_inf;
  Eigen::MatrixXd P_inf;  ///< controllability Gramian of (A, sqrt(Re Lambda_inf))
  double delta_inf;
};

/// Limits as t -> infinity; nullopt when A is not Hurwitz.
std::optional<SteadyState> steady_state(const SystemParams& sys, const InitialMoments& init,
                                        const WeightingSpec& weights);

/// Default RK4 step for the Lyapunov ODE: 0.01 / max(1, |A|_2).
double default_lyapunov_step(const Eigen::MatrixXd& a);

/// Marches (mu, V, Delta) forward in time. The affine and homogeneous parts are
/// propagated with exact exponentials, V with one RK4 step per advance().
/// Copies are cheap and independent, which the first-crossing search relies on.
class DeviationPropagator {
 public:
  DeviationPropagator(const SystemParams& sys, const InitialMoments& init, const WeightingSpec& weights);

  void advance(double h);

  double time() const { return t_; }
  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXcd& second_moment() const { return v_; }

  /// Delta at the current time; roundoff negatives above -1e-10 * max(1, ref)
  /// are clipped to 0, larger ones throw IntegrationError.
  double delta() const;

 private:
  struct StepCache {
    double h = -1.0;
    Eigen::MatrixXd exp_h, exp_half, psi_h, psi_half;
  };
  const StepCache& cache_for(double h);

  struct Model {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd p;
    Eigen::VectorXd mu0;
    double ref;
    LambdaMap lambda;
    bool noiseless;
  };

  std::shared_ptr<const Model> model_;

  double t_ = 0.0;
  Eigen::MatrixXd exp_t_;
  Eigen::MatrixXd psi_t_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXcd v_;
  StepCache cache_;
};

}  // namespace qmem
