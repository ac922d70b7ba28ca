#include "qmem/config.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace qmem {

using nlohmann::json;

std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// parsing

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

Eigen::VectorXd get_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], index(path, i));
  return v;
}

Eigen::MatrixXd get_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a nonempty array of rows");
  const auto rows = j.size();
  std::size_t cols = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array()) throw ConfigError(index(path, r), "expected a row array");
    if (r == 0) cols = j[r].size();
    if (j[r].size() != cols) throw ConfigError(index(path, r), "row length differs from row 0");
  }
  if (cols == 0) throw ConfigError(path, "rows are empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_number(j[r][c], index(index(path, r), c));
    }
  }
  return m;
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key), "missing required field");
  return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError(join(path, it.key()), "unknown field");
    }
  }
}

InlineStructure parse_structure(const json& j, const std::string& path) {
  reject_unknown(j, {"alpha", "beta"}, path);
  InlineStructure s;
  s.alpha = get_matrix(require(j, "alpha", path), join(path, "alpha"));
  const auto& beta = require(j, "beta", path);
  const auto bpath = join(path, "beta");
  if (!beta.is_array()) throw ConfigError(bpath, "expected an array of {re, im} sections");
  for (std::size_t l = 0; l < beta.size(); ++l) {
    const auto lpath = index(bpath, l);
    if (!beta[l].is_object()) throw ConfigError(lpath, "expected an object with re and im");
    reject_unknown(beta[l], {"re", "im"}, lpath);
    s.beta_re.push_back(get_matrix(require(beta[l], "re", lpath), join(lpath, "re")));
    s.beta_im.push_back(get_matrix(require(beta[l], "im", lpath), join(lpath, "im")));
  }
  return s;
}

SubsystemConfig parse_subsystem(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, {"structure", "energy", "M", "N", "D"}, path);
  SubsystemConfig s;
  const auto& st = require(j, "structure", path);
  if (st.is_string()) {
    if (st.get<std::string>() != "pauli") throw ConfigError(join(path, "structure"), "unknown preset (only \"pauli\")");
  } else {
    s.structure = parse_structure(st, join(path, "structure"));
  }
  s.energy = get_vector(require(j, "energy", path), join(path, "energy"));
  s.M = get_matrix(require(j, "M", path), join(path, "M"));
  s.N = j.contains("N") ? get_vector(j["N"], join(path, "N")) : Eigen::VectorXd::Zero(s.M.rows());
  if (j.contains("D")) s.D = get_matrix(j["D"], join(path, "D"));

  // Surface shape errors with their location instead of deep inside the model.
  try {
    (void)s.params();
  } catch (const InvalidInput& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

std::vector<double> parse_grid(const json& j, const std::string& path) {
  std::vector<double> grid;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) grid.push_back(get_number(j[i], index(path, i)));
  } else if (j.is_object()) {
    reject_unknown(j, {"t_end", "steps"}, path);
    const double t_end = get_number(require(j, "t_end", path), join(path, "t_end"));
    const auto& sj = require(j, "steps", path);
    if (!sj.is_number_integer() || sj.get<long>() < 1) throw ConfigError(join(path, "steps"), "expected a positive integer");
    const long steps = sj.get<long>();
    if (!(t_end > 0.0)) throw ConfigError(join(path, "t_end"), "must be positive");
    for (long k = 0; k <= steps; ++k) grid.push_back(t_end * static_cast<double>(k) / static_cast<double>(steps));
  } else {
    throw ConfigError(path, "expected an array of times or {t_end, steps}");
  }
  if (grid.empty() || grid.front() != 0.0) throw ConfigError(path, "grid must start at 0");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw ConfigError(index(path, k), "grid must be strictly increasing");
  }
  return grid;
}

AnalysisConfig parse_analysis(const json& j, const std::string& path) {
  AnalysisConfig a;
  a.grid = parse_grid(json{{"t_end", 1.0}, {"steps", 100}}, path);
  if (j.is_null()) return a;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown(j, {"grid", "eps", "step", "tol", "horizon", "settle", "margin", "comparisons", "sweep", "e1", "e2"},
                 path);
  if (j.contains("grid")) a.grid = parse_grid(j["grid"], join(path, "grid"));
  if (j.contains("eps")) {
    const auto v = get_vector(j["eps"], join(path, "eps"));
    a.eps.assign(v.begin(), v.end());
    for (std::size_t i = 0; i < a.eps.size(); ++i) {
      if (!(a.eps[i] > 0.0)) throw ConfigError(index(join(path, "eps"), i), "fidelity level must be positive");
    }
  }
  auto positive = [&](const char* key) {
    const double v = get_number(j[key], join(path, key));
    if (!(v > 0.0)) throw ConfigError(join(path, key), "must be positive");
    return v;
  };
  if (j.contains("step")) a.decoherence.step = positive("step");
  if (j.contains("tol")) a.decoherence.tol = positive("tol");
  if (j.contains("horizon")) a.decoherence.horizon = positive("horizon");
  if (j.contains("settle")) a.decoherence.settle = positive("settle");
  if (j.contains("margin")) {
    a.decoherence.margin = get_number(j["margin"], join(path, "margin"));
    if (a.decoherence.margin < 0.0 || a.decoherence.margin >= 1.0) throw ConfigError(join(path, "margin"), "must lie in [0, 1)");
  }
  if (j.contains("comparisons")) {
    const auto& c = j["comparisons"];
    const auto cpath = join(path, "comparisons");
    if (!c.is_array()) throw ConfigError(cpath, "expected an array of energy vectors");
    for (std::size_t i = 0; i < c.size(); ++i) a.comparisons.push_back(get_vector(c[i], index(cpath, i)));
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    const auto spath = join(path, "sweep");
    reject_unknown(s, {"over", "values", "eps"}, spath);
    SweepConfig sw;
    const auto& over = require(s, "over", spath);
    if (over == "eps") {
      sw.over = SweepConfig::Over::Epsilon;
    } else if (over == "gain") {
      sw.over = SweepConfig::Over::Gain;
    } else {
      throw ConfigError(join(spath, "over"), "expected \"eps\" or \"gain\"");
    }
    const auto v = get_vector(require(s, "values", spath), join(spath, "values"));
    sw.values.assign(v.begin(), v.end());
    if (sw.values.empty()) throw ConfigError(join(spath, "values"), "must not be empty");
    if (s.contains("eps")) sw.epsilon = get_number(s["eps"], join(spath, "eps"));
    if (!(sw.epsilon > 0.0)) throw ConfigError(join(spath, "eps"), "must be positive");
    a.sweep = sw;
  }
  if (j.contains("e1")) a.e1 = get_vector(j["e1"], join(path, "e1"));
  if (j.contains("e2")) a.e2 = get_vector(j["e2"], join(path, "e2"));
  return a;
}

}  // namespace

StructureConstants SubsystemConfig::constants() const {
  if (!structure) return pauli_structure();
  const auto& s = *structure;
  const auto n = s.alpha.rows();
  if (s.alpha.cols() != n) throw InvalidInput("structure.alpha must be square");
  if (static_cast<Eigen::Index>(s.beta_re.size()) != n) throw InvalidInput("structure.beta must have n sections");
  std::vector<Eigen::MatrixXcd> beta;
  for (std::size_t l = 0; l < s.beta_re.size(); ++l) {
    if (s.beta_re[l].rows() != n || s.beta_re[l].cols() != n || s.beta_im[l].rows() != n || s.beta_im[l].cols() != n) {
      throw InvalidInput("structure.beta[" + std::to_string(l) + "] must be n x n");
    }
    Eigen::MatrixXcd b(n, n);
    b.real() = s.beta_re[l];
    b.imag() = s.beta_im[l];
    beta.push_back(std::move(b));
  }
  return StructureConstants(s.alpha, std::move(beta));
}

SystemParams SubsystemConfig::params() const { return SystemParams(constants(), energy, M, N, D); }

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  reject_unknown(doc, {"system", "composite", "init", "weights", "analysis", "output"}, "");
  RunConfig cfg;
  const bool has_system = doc.contains("system");
  const bool has_composite = doc.contains("composite");
  if (has_system == has_composite) throw ConfigError("", "exactly one of \"system\" or \"composite\" is required");
  Eigen::Index n = 0;
  if (has_system) {
    cfg.system = parse_subsystem(doc["system"], "system");
    n = cfg.system->M.cols();
  } else {
    const auto& c = doc["composite"];
    reject_unknown(c, {"sub1", "sub2", "E12"}, "composite");
    CompositeConfig cc{parse_subsystem(require(c, "sub1", "composite"), "composite.sub1"),
                       parse_subsystem(require(c, "sub2", "composite"), "composite.sub2"), {}};
    if (cc.sub1.structure || cc.sub2.structure) {
      throw ConfigError("composite", "subsystems need a dense representation; only the \"pauli\" preset ships one");
    }
    const auto n12 = cc.sub1.M.cols() * cc.sub2.M.cols();
    cc.E12 = c.contains("E12") ? get_vector(c["E12"], "composite.E12") : Eigen::VectorXd::Zero(n12);
    if (cc.E12.size() != n12) throw ConfigError("composite.E12", "expected length n1 n2 = " + std::to_string(n12));
    n = cc.sub1.M.cols() + cc.sub2.M.cols() + n12;
    cfg.composite = std::move(cc);
  }

  if (doc.contains("init")) {
    const auto& ij = doc["init"];
    reject_unknown(ij, {"mu0", "mu1", "mu2"}, "init");
    if (ij.contains("mu0")) {
      cfg.mu0 = get_vector(ij["mu0"], "init.mu0");
      if (cfg.mu0->size() != n) throw ConfigError("init.mu0", "expected length " + std::to_string(n));
    }
    if (ij.contains("mu1") || ij.contains("mu2")) {
      if (!cfg.composite) throw ConfigError("init", "mu1/mu2 apply only to composite systems");
      if (cfg.mu0) throw ConfigError("init", "give either mu0 or mu1/mu2");
      cfg.mu1 = get_vector(require(ij, "mu1", "init"), "init.mu1");
      cfg.mu2 = get_vector(require(ij, "mu2", "init"), "init.mu2");
      if (cfg.mu1->size() != cfg.composite->sub1.M.cols()) throw ConfigError("init.mu1", "length mismatch");
      if (cfg.mu2->size() != cfg.composite->sub2.M.cols()) throw ConfigError("init.mu2", "length mismatch");
    }
  }

  if (doc.contains("weights")) {
    const auto& w = doc["weights"];
    if (w.is_string()) {
      if (w.get<std::string>() != "identity") throw ConfigError("weights", "unknown preset (only \"identity\")");
    } else if (w.is_object() && w.size() == 1 && w.contains("Sigma")) {
      cfg.weight_kind = WeightKind::Sigma;
      cfg.weight_matrix = get_matrix(w["Sigma"], "weights.Sigma");
      if (cfg.weight_matrix.rows() != n || cfg.weight_matrix.cols() != n) {
        throw ConfigError("weights.Sigma", "expected " + std::to_string(n) + "x" + std::to_string(n));
      }
    } else if (w.is_object() && w.size() == 1 && w.contains("F")) {
      cfg.weight_kind = WeightKind::Factor;
      cfg.weight_matrix = get_matrix(w["F"], "weights.F");
      if (cfg.weight_matrix.cols() != n) throw ConfigError("weights.F", "expected " + std::to_string(n) + " columns");
    } else {
      throw ConfigError("weights", "expected \"identity\", {\"Sigma\": ...} or {\"F\": ...}");
    }
  }

  cfg.analysis = parse_analysis(doc.contains("analysis") ? doc["analysis"] : json(), "analysis");
  for (std::size_t i = 0; i < cfg.analysis.comparisons.size(); ++i) {
    if (cfg.analysis.comparisons[i].size() != n) {
      throw ConfigError(index("analysis.comparisons", i), "expected length " + std::to_string(n));
    }
  }

  if (doc.contains("output")) {
    const auto& o = doc["output"];
    reject_unknown(o, {"path"}, "output");
    if (o.contains("path")) {
      if (!o["path"].is_string()) throw ConfigError("output.path", "expected a string");
      cfg.output = o["path"].get<std::string>();
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// serialization

namespace {

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.begin(), v.end())); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Eigen::VectorXd row = m.row(r).transpose();
    rows.push_back(vector_json(row));
  }
  return rows;
}

json subsystem_json(const SubsystemConfig& s) {
  json j;
  if (s.structure) {
    json beta = json::array();
    for (std::size_t l = 0; l < s.structure->beta_re.size(); ++l) {
      beta.push_back({{"re", matrix_json(s.structure->beta_re[l])}, {"im", matrix_json(s.structure->beta_im[l])}});
    }
    j["structure"] = {{"alpha", matrix_json(s.structure->alpha)}, {"beta", beta}};
  } else {
    j["structure"] = "pauli";
  }
  j["energy"] = vector_json(s.energy);
  j["M"] = matrix_json(s.M);
  j["N"] = vector_json(s.N);
  if (s.D) j["D"] = matrix_json(*s.D);
  return j;
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json doc;
  if (cfg.system) doc["system"] = subsystem_json(*cfg.system);
  if (cfg.composite) {
    doc["composite"] = {{"sub1", subsystem_json(cfg.composite->sub1)},
                        {"sub2", subsystem_json(cfg.composite->sub2)},
                        {"E12", vector_json(cfg.composite->E12)}};
  }
  json init = json::object();
  if (cfg.mu0) init["mu0"] = vector_json(*cfg.mu0);
  if (cfg.mu1) init["mu1"] = vector_json(*cfg.mu1);
  if (cfg.mu2) init["mu2"] = vector_json(*cfg.mu2);
  doc["init"] = init;
  switch (cfg.weight_kind) {
    case WeightKind::Identity: doc["weights"] = "identity"; break;
    case WeightKind::Sigma: doc["weights"] = {{"Sigma", matrix_json(cfg.weight_matrix)}}; break;
    case WeightKind::Factor: doc["weights"] = {{"F", matrix_json(cfg.weight_matrix)}}; break;
  }
  const auto& a = cfg.analysis;
  json an;
  an["grid"] = a.grid;
  an["eps"] = a.eps;
  if (a.decoherence.step) an["step"] = *a.decoherence.step;
  if (a.decoherence.tol) an["tol"] = *a.decoherence.tol;
  an["horizon"] = a.decoherence.horizon;
  an["settle"] = a.decoherence.settle;
  an["margin"] = a.decoherence.margin;
  if (!a.comparisons.empty()) {
    json c = json::array();
    for (const auto& e : a.comparisons) c.push_back(vector_json(e));
    an["comparisons"] = c;
  }
  if (a.sweep) {
    an["sweep"] = {{"over", a.sweep->over == SweepConfig::Over::Epsilon ? "eps" : "gain"},
                   {"values", a.sweep->values},
                   {"eps", a.sweep->epsilon}};
  }
  if (a.e1) an["e1"] = vector_json(*a.e1);
  if (a.e2) an["e2"] = vector_json(*a.e2);
  doc["analysis"] = an;
  doc["output"] = {{"path", cfg.output}};
  return doc;
}

// ---------------------------------------------------------------------------
// problem assembly

Problem build_problem(const RunConfig& cfg) {
  std::optional<CompositeSystem> composite;
  std::optional<SystemParams> system;
  if (cfg.system) {
    system = cfg.system->params();
  } else {
    composite = compose(cfg.composite->sub1.params(), cfg.composite->sub2.params(), cfg.composite->E12);
    system = composite->joint;
  }
  const auto n = system->n();
  std::optional<InitialMoments> init;
  if (cfg.mu1) {
    init = composite_initial_moments(*composite, *cfg.mu1, *cfg.mu2);
  } else {
    init = InitialMoments::from_mean(system->sc, cfg.mu0.value_or(Eigen::VectorXd::Zero(n)));
  }
  WeightingSpec weights = WeightingSpec::identity(n);
  if (cfg.weight_kind == WeightKind::Sigma) weights = WeightingSpec::from_sigma(cfg.weight_matrix);
  if (cfg.weight_kind == WeightKind::Factor) weights = WeightingSpec::from_factor(cfg.weight_matrix);
  return Problem{std::move(composite), std::move(*system), std::move(*init), std::move(weights)};
}

void apply_overrides(RunConfig& cfg, const CommandOverrides& ov) {
  auto& a = cfg.analysis;
  if (ov.eps) {
    if (ov.eps->empty()) throw ConfigError("--eps", "empty list");
    for (double e : *ov.eps) {
      if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("--eps", "fidelity levels must be positive");
    }
    a.eps = *ov.eps;
  }
  auto positive = [](std::optional<double> v, const char* flag) {
    if (v && !(*v > 0.0)) throw ConfigError(flag, "must be positive");
    return v;
  };
  if (ov.step) a.decoherence.step = positive(ov.step, "--step");
  if (ov.tol) a.decoherence.tol = positive(ov.tol, "--tol");
  if (ov.horizon) a.decoherence.horizon = *positive(ov.horizon, "--horizon");
  if (ov.settle) a.decoherence.settle = *positive(ov.settle, "--settle");
  if (ov.margin) {
    if (*ov.margin < 0.0 || *ov.margin >= 1.0) throw ConfigError("--margin", "must lie in [0, 1)");
    a.decoherence.margin = *ov.margin;
  }
  if (ov.out) cfg.output = *ov.out;
  if (ov.e1) a.e1 = ov.e1;
  if (ov.e2) a.e2 = ov.e2;
}

// ---------------------------------------------------------------------------
// commands

namespace {

json tau_json(const DecoherenceTime& t, double tau_hat_value) {
  json j;
  j["eps"] = t.epsilon;
  j["threshold"] = t.threshold;
  if (t.infinite) {
    j["tau"] = "inf";
  } else {
    j["tau"] = t.value;
    j["bracket"] = {t.t_lo, t.t_hi};
  }
  j["sup_delta_marched"] = t.sup_delta;
  if (std::isfinite(tau_hat_value)) j["tau_hat"] = tau_hat_value;
  return j;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  bool ok = true;
  auto report_structure = [&](const SubsystemConfig& s, const std::string& label) {
    const auto sc = s.constants();
    const auto rep = validate_structure(sc, 1e-12);
    out << label << " structure: " << rep.describe() << "\n";
    ok = ok && rep.pass;
    if (!s.structure) {
      const auto alg = check_algebra(qubit_representation(), sc, 1e-12);
      out << label << " representation: " << alg.describe() << "\n";
      ok = ok && alg.pass;
    }
  };
  if (cfg.system) {
    report_structure(*cfg.system, "system");
  } else {
    report_structure(cfg.composite->sub1, "sub1");
    report_structure(cfg.composite->sub2, "sub2");
  }
  const auto problem = build_problem(cfg);
  if (problem.composite) {
    const auto alg = check_algebra(problem.composite->representation, problem.system.sc, 1e-10);
    out << "composite representation (n = " << problem.system.n() << ", fit residual "
        << format_number(problem.composite->fit_residual) << "): " << alg.describe() << "\n";
    ok = ok && alg.pass;
  }
  out << "system: n = " << problem.system.n() << ", m = " << problem.system.m() << "\n";
  out << "initial mean: admissible (min eigenvalue of alpha + beta . mu0 = "
      << format_number(admissibility_margin(problem.system.sc, problem.init.mu0)) << ")\n";
  out << (ok ? "algebra ok, CCR ok" : "validation FAILED") << "\n";
  return ok ? kExitOk : kExitDomain;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const auto p = build_problem(cfg);
  const auto traj = simulate(p.system, p.init, p.weights, cfg.analysis.grid);
  const auto n = p.system.n();
  out << "t";
  for (Eigen::Index k = 1; k <= n; ++k) out << ",mu_" << k;
  out << ",Delta";
  for (Eigen::Index k = 1; k <= n; ++k) out << ",ReV_" << k << k;
  out << "\n";
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    out << format_number(traj.t[i]);
    for (Eigen::Index k = 0; k < n; ++k) out << "," << format_number(traj.mu[i](k));
    out << "," << format_number(traj.delta[i]);
    for (Eigen::Index k = 0; k < n; ++k) out << "," << format_number(traj.V[i](k, k).real());
    out << "\n";
  }
  return kExitOk;
}

int cmd_tau(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto p = build_problem(cfg);
  json doc;
  doc["ref_norm"] = require_nontrivial_reference(p.init, p.weights);
  std::optional<DecoherenceExpansion> exp;
  try {
    exp = tau_expansion(p.system, p.init, p.weights);
    doc["expansion"] = {{"delta_dot0", exp->delta_dot0},
                        {"delta_ddot0", exp->delta_ddot0},
                        {"tau_prime0", exp->tau_prime0},
                        {"tau_second0", exp->tau_second0}};
  } catch (const DomainError& e) {
    doc["expansion_error"] = e.what();
  }
  json results = json::array();
  int status = kExitOk;
  for (double eps : cfg.analysis.eps) {
    const double th = exp ? tau_hat(*exp, eps) : std::nan("");
    try {
      results.push_back(tau_json(decoherence_time(p.system, p.init, p.weights, eps, cfg.analysis.decoherence), th));
    } catch (const DomainError& e) {
      err << "tau(eps = " << format_number(eps) << "): " << e.what() << "\n";
      json j{{"eps", eps}, {"error", e.what()}};
      if (std::isfinite(th)) j["tau_hat"] = th;
      results.push_back(j);
      status = kExitDomain;
    }
  }
  doc["results"] = results;
  out << doc.dump(2) << "\n";
  return status;
}

int cmd_optimize_energy(const RunConfig& cfg, std::ostream& out) {
  const auto p = build_problem(cfg);
  const auto rk = rk_matrices(p.system, p.init, p.weights);
  const auto opt = optimal_energy(rk.R, rk.K);
  const auto grad = gradient_check(p.system, p.init, p.weights, opt.E_star);
  json doc;
  doc["R"] = matrix_json(opt.R);
  doc["K"] = vector_json(opt.K);
  doc["E_star"] = vector_json(opt.E_star);
  doc["residual"] = opt.residual;
  doc["unique"] = opt.unique;
  doc["null_dimension"] = opt.null_dimension;
  doc["zero_energy_optimal"] = opt.zero_energy_optimal;
  doc["gradient_at_optimum"] = {{"analytic", vector_json(grad.analytic)},
                                {"finite_difference", vector_json(grad.numerical)},
                                {"max_abs_deviation", grad.max_abs_deviation}};
  if (!cfg.analysis.comparisons.empty()) {
    const double eps = cfg.analysis.eps.front();
    const auto rep = suboptimal_tau_report(p.system, p.init, p.weights, eps, cfg.analysis.comparisons,
                                           cfg.analysis.decoherence);
    auto entry = [](const TauComparison& c) {
      json j{{"E", vector_json(c.E)}, {"tau_hat", c.tau_hat}};
      if (c.tau) {
        j["tau"] = c.tau->infinite ? json("inf") : json(c.tau->value);
      } else {
        j["tau_error"] = c.tau_error;
      }
      return j;
    };
    json cmp = json::array();
    for (const auto& c : rep.comparisons) cmp.push_back(entry(c));
    doc["comparison"] = {{"eps", eps}, {"optimum", entry(rep.at_optimum)}, {"others", cmp},
                         {"tau_hat_maximal_at_optimum", rep.tau_hat_maximal}};
  }
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_optimize_coupling(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.composite) throw ConfigError("composite", "optimize-coupling needs a composite system");
  const auto p = build_problem(cfg);
  const auto& cs = *p.composite;
  const Eigen::VectorXd e1 = cfg.analysis.e1.value_or(cs.E1());
  const Eigen::VectorXd e2 = cfg.analysis.e2.value_or(cs.E2());
  if (e1.size() != cs.n1()) throw ConfigError("e1", "expected length " + std::to_string(cs.n1()));
  if (e2.size() != cs.n2()) throw ConfigError("e2", "expected length " + std::to_string(cs.n2()));
  const auto blocks = optimal_direct_coupling(partition_rk(cs, p.init, p.weights), e1, e2);
  json doc;
  doc["e1"] = vector_json(e1);
  doc["e2"] = vector_json(e2);
  doc["Q"] = vector_json(*blocks.Q);
  doc["E12_star"] = vector_json(*blocks.E12_star);
  doc["residual"] = blocks.residual;
  doc["unique"] = blocks.unique;
  doc["null_dimension"] = blocks.null_dimension;
  out << doc.dump(2) << "\n";
  return kExitOk;
}

struct SweepRow {
  double x = 0.0;
  double tau = std::nan("");
  double t_lo = std::nan(""), t_hi = std::nan("");
  double tau_hat = std::nan("");
  std::string error;
};

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err, unsigned threads) {
  const auto p = build_problem(cfg);
  SweepConfig sw = cfg.analysis.sweep.value_or(SweepConfig{SweepConfig::Over::Epsilon, cfg.analysis.eps, 0.01});
  std::vector<SweepRow> rows(sw.values.size());

  auto evaluate = [&](std::size_t i) {
    SweepRow row;
    row.x = sw.values[i];
    try {
      SystemParams sys = p.system;
      double eps = row.x;
      if (sw.over == SweepConfig::Over::Gain) {
        sys.M *= row.x;
        eps = sw.epsilon;
      }
      try {
        row.tau_hat = tau_hat(tau_expansion(sys, p.init, p.weights), eps);
      } catch (const DomainError&) {
      }
      const auto t = decoherence_time(sys, p.init, p.weights, eps, cfg.analysis.decoherence);
      row.tau = t.infinite ? std::numeric_limits<double>::infinity() : t.value;
      if (!t.infinite) {
        row.t_lo = t.t_lo;
        row.t_hi = t.t_hi;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows[i] = std::move(row);
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(threads == 0 ? hw : threads, static_cast<unsigned>(rows.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::max(1u, workers); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) evaluate(i);
    });
  }
  for (auto& t : pool) t.join();

  out << (sw.over == SweepConfig::Over::Epsilon ? "eps" : "gain") << ",tau,tau_lo,tau_hi,tau_hat\n";
  int status = kExitOk;
  for (const auto& r : rows) {
    out << format_number(r.x) << "," << format_number(r.tau) << "," << format_number(r.t_lo) << ","
        << format_number(r.t_hi) << "," << format_number(r.tau_hat) << "\n";
    if (!r.error.empty()) {
      err << "sweep point " << format_number(r.x) << ": " << r.error << "\n";
      status = kExitDomain;
    }
  }
  return status;
}

}  // namespace

int run_command(const RunConfig& cfg, const std::string& command, std::ostream& out, std::ostream& err,
                unsigned threads) {
  std::ofstream file;
  std::ostream* sink = &out;
  if (!cfg.output.empty() && cfg.output != "-") {
    file.open(cfg.output);
    if (!file) {
      err << "error: cannot open output '" << cfg.output << "'\n";
      return kExitConfig;
    }
    sink = &file;
  }
  try {
    if (command == "validate") return cmd_validate(cfg, *sink);
    if (command == "simulate") return cmd_simulate(cfg, *sink);
    if (command == "tau") return cmd_tau(cfg, *sink, err);
    if (command == "optimize-energy") return cmd_optimize_energy(cfg, *sink);
    if (command == "optimize-coupling") return cmd_optimize_coupling(cfg, *sink);
    if (command == "sweep") return cmd_sweep(cfg, *sink, err, threads);
    err << "error: unknown command '" << command << "'\n";
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const RepresentationError& e) {
    err << "representation error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IntegrationError& e) {
    err << "integration error: " << e.what() << "\n";
    return kExitDomain;
  }
}

}  // namespace qmem
