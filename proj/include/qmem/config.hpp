#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmem/interconnect.hpp"

namespace qmem {

/// Config error located at a JSON path such as "system.M[1]".
class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : InvalidInput(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct InlineStructure {
  Eigen::MatrixXd alpha;
  std::vector<Eigen::MatrixXd> beta_re;
  std::vector<Eigen::MatrixXd> beta_im;
};

struct SubsystemConfig {
  std::optional<InlineStructure> structure;  ///< nullopt means the "pauli" preset
  Eigen::VectorXd energy;
  Eigen::MatrixXd M;
  Eigen::VectorXd N;
  std::optional<Eigen::MatrixXd> D;

  StructureConstants constants() const;
  SystemParams params() const;
};

struct CompositeConfig {
  SubsystemConfig sub1;
  SubsystemConfig sub2;
  Eigen::VectorXd E12;
};

enum class WeightKind { Identity, Sigma, Factor };

struct SweepConfig {
  enum class Over { Epsilon, Gain } over = Over::Epsilon;
  std::vector<double> values;
  double epsilon = 0.01;  ///< fidelity level for gain sweeps
};

struct AnalysisConfig {
  std::vector<double> grid;  ///< explicit nodes starting at 0
  std::vector<double> eps{0.01};
  DecoherenceOptions decoherence;
  std::vector<Eigen::VectorXd> comparisons;
  std::optional<SweepConfig> sweep;
  std::optional<Eigen::VectorXd> e1, e2;
};

struct RunConfig {
  std::optional<SubsystemConfig> system;
  std::optional<CompositeConfig> composite;
  std::optional<Eigen::VectorXd> mu0;
  std::optional<Eigen::VectorXd> mu1, mu2;  ///< composite product-state means
  WeightKind weight_kind = WeightKind::Identity;
  Eigen::MatrixXd weight_matrix;
  AnalysisConfig analysis;
  std::string output = "-";
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_file(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Values built from a config, ready for the analysis modules.
struct Problem {
  std::optional<CompositeSystem> composite;
  SystemParams system;  ///< the joint system for composites
  InitialMoments init;
  WeightingSpec weights;
};

Problem build_problem(const RunConfig& cfg);

/// Command-line overrides applied on top of the config.
struct CommandOverrides {
  std::optional<std::vector<double>> eps;
  std::optional<double> step, tol, horizon, settle, margin;
  std::optional<std::string> out;
  std::optional<Eigen::VectorXd> e1, e2;
  unsigned threads = 0;  ///< 0: hardware concurrency
};

void apply_overrides(RunConfig& cfg, const CommandOverrides& ov);

/// Exit status: 0 success, 1 domain error, 2 config error.
enum ExitCode : int { kExitOk = 0, kExitDomain = 1, kExitConfig = 2 };

/// Runs validate | simulate | tau | optimize-energy | optimize-coupling | sweep.
/// Results go to cfg.output ("-" for `out`), diagnostics to `err`.
int run_command(const RunConfig& cfg, const std::string& command, std::ostream& out, std::ostream& err,
                unsigned threads = 0);

/// "%.17g" formatting used for all numeric output.
std::string format_number(double x);

}  // namespace qmem
