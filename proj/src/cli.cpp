#include "fjm/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>

#include "fjm/error.hpp"
#include "fjm/estep.hpp"
#include "fjm/io.hpp"
#include "fjm/mcem.hpp"
#include "fjm/scores.hpp"
#include "fjm/selection.hpp"
#include "fjm/simulate.hpp"
#include "fjm/twostep.hpp"

namespace fjm {

using Json = nlohmann::json;

Json default_config() {
  return {
      {"command", nullptr},
      {"longitudinal", nullptr},
      {"survival", nullptr},
      {"columns", Json::object()},
      {"out", "."},
      {"tau", 1.0},
      {"strict", true},
      {"rescale", false},
      {"c", "auto"},
      {"order", 4},
      {"method", "mcem"},
      {"init", "twostep"},
      {"L0", 2},
      {"L1", 2},
      {"grid_L0", {1, 2, 3}},
      {"grid_L1", {1, 2, 3}},
      {"pve_prune", false},
      {"pve_threshold", 0.9},
      {"require_converged", true},
      {"burnin", 20},
      {"Q_burnin", 500},
      {"Q_main", 10000},
      {"likelihood_Q", 10000},
      {"delta0", 0.001},
      {"delta1", 0.005},
      {"delta2", 0.001},
      {"delta3", 1e-7},
      {"max_iter", 1000},
      {"patience", 3},
      {"information", "louis"},
      {"damping", true},
      {"gamma_mask", "full"},
      {"grid_size", 101},
      {"seed", nullptr},
      {"threads", 0},
      {"case", "case2"},
      {"n", nullptr},
      {"bundle", ""},
      {"fit", nullptr},
  };
}

namespace {

[[noreturn]] void usage(const std::string& msg) { throw Error(Errc::Usage, msg); }

bool compatible(const Json& def, const Json& v, const std::string& key) {
  if (v.is_null() || def.is_null()) return true;
  if (key == "c") return v.is_string() || v.is_number_integer() || v.is_number_unsigned();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer() || def.is_number_unsigned()) return v.is_number_integer() || v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

}  // namespace

Json merge_config(const Json& base, const Json& overrides) {
  if (!overrides.is_object()) usage("config must be a JSON object");
  Json out = base;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (!base.contains(it.key())) usage("unknown config key '" + it.key() + "'");
    if (!compatible(base.at(it.key()), it.value(), it.key())) usage("config key '" + it.key() + "' has the wrong type");
    out[it.key()] = it.value();
  }
  return out;
}

std::string config_hash(const Json& config) {
  Json c = config;
  c.erase("threads");
  c.erase("out");
  return fnv1a_hex(c.dump());
}

std::vector<int> gamma_mask_by_name(const std::string& name, int P, int L0, int L1, int J) {
  std::vector<int> m(P + L0 + J * L1, 1);
  if (name == "full") return m;
  if (name == "shared-only") {
    for (int k = P + L0; k < static_cast<int>(m.size()); ++k) m[k] = 0;
  } else if (name == "specific-only") {
    for (int k = P; k < P + L0; ++k) m[k] = 0;
  } else if (name == "covariates-only") {
    for (int k = P; k < static_cast<int>(m.size()); ++k) m[k] = 0;
  } else {
    usage("unknown gamma mask '" + name + "'");
  }
  return m;
}

namespace {

// -------------------------------------------------------------------------
// helpers
// -------------------------------------------------------------------------

Json parse_value(const std::string& key, const std::string& raw, const Json& def) {
  try {
    if (key == "c") {
      if (raw == "auto") return raw;
      return std::stoi(raw);
    }
    if (def.is_boolean()) {
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      usage("--" + key + " expects true or false");
    }
    if (def.is_array()) {
      Json a = Json::array();
      std::stringstream ss(raw);
      std::string item;
      while (std::getline(ss, item, ',')) a.push_back(std::stoi(item));
      return a;
    }
    if (def.is_number_integer() || def.is_number_unsigned() || key == "n") return std::stoll(raw);
    if (key == "seed") return std::stoull(raw);
    if (def.is_number()) return std::stod(raw);
    return raw;
  } catch (const std::logic_error&) {
    usage("invalid value '" + raw + "' for --" + key);
  }
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& ch : f)
    if (ch == '_') ch = '-';
  return "--" + f;
}

struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> raw;
  std::string config_path;
};

void add_keys(Command& cmd, const std::vector<std::string>& keys) {
  static const std::map<std::string, std::string> alias = {
      {"longitudinal", ",--long"}, {"survival", ",--surv"}, {"case", ""}};
  for (const std::string& k : keys) {
    std::string names = flag_name(k);
    auto a = alias.find(k);
    if (a != alias.end()) names += a->second;
    cmd.app->add_option(names, cmd.raw[k], "see README (config key '" + k + "')");
  }
}

Json effective_config(const Command& cmd, const std::string& name) {
  Json cfg = default_config();
  if (!cmd.config_path.empty()) {
    std::ifstream in(cmd.config_path);
    if (!in) throw Error(Errc::Io, "cannot open config " + cmd.config_path);
    Json file;
    try {
      in >> file;
    } catch (const std::exception& e) {
      usage("config " + cmd.config_path + " is not valid JSON");
    }
    cfg = merge_config(cfg, file);
  }
  for (const auto& [key, value] : cmd.raw)
    if (cmd.app->count(flag_name(key)) > 0) cfg[key] = parse_value(key, value, default_config().at(key));
  cfg["command"] = name;
  if (cfg["seed"].is_null()) {
    if (const char* env = std::getenv("FJM_SEED")) {
      try {
        cfg["seed"] = std::stoull(env);
      } catch (const std::logic_error&) {
        usage("FJM_SEED is not an unsigned integer");
      }
    } else {
      cfg["seed"] = 1;
    }
  }
  return cfg;
}

std::uint64_t seed_of(const Json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

std::filesystem::path out_dir(const Json& cfg) {
  std::filesystem::path p = cfg.at("out").get<std::string>();
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error(Errc::Io, "cannot create output directory " + p.string());
  return p;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(Errc::Io, "cannot write " + p.string());
  f.precision(17);
  return f;
}

void write_json(const std::filesystem::path& p, const Json& j) {
  std::ofstream f = open_out(p);
  f << j.dump(2) << '\n';
}

JoinedData load_data(const Json& cfg) {
  if (cfg.at("longitudinal").is_null() || cfg.at("survival").is_null())
    usage("--longitudinal and --survival are required");
  IngestOptions io;
  io.tau = cfg.at("tau").get<double>();
  io.strict = cfg.at("strict").get<bool>();
  for (auto it = cfg.at("columns").begin(); it != cfg.at("columns").end(); ++it)
    io.schema[it.key()] = it.value().get<std::string>();
  const LongitudinalDataset lon = ingest_longitudinal(cfg.at("longitudinal").get<std::string>(), io);
  const SurvivalDataset sur = ingest_survival(cfg.at("survival").get<std::string>(), io);
  JoinOptions jo;
  jo.strict = io.strict;
  jo.rescale = cfg.at("rescale").get<bool>();
  JoinedData data = join_with_survival(lon, sur, jo);
  if (!lon.dropped.empty())
    std::cerr << "fjm: dropped " << lon.dropped.size() << " malformed longitudinal rows\n";
  if (data.dropped_after_event)
    std::cerr << "fjm: dropped " << data.dropped_after_event << " observations after the event time\n";
  return data;
}

BasisConfig basis_of(const Json& cfg, const JoinedData& data) {
  BasisConfig b;
  b.order = cfg.at("order").get<int>();
  b.tau = data.tau;
  const Json& c = cfg.at("c");
  if (c.is_string()) {
    if (c.get<std::string>() != "auto") usage("--c must be an integer or 'auto'");
    b.c = default_c(static_cast<long long>(data.total_grid_points()));
  } else {
    b.c = c.get<int>();
  }
  if (b.c < b.order) usage("basis dimension c must be at least the spline order");
  return b;
}

EmConfig em_of(const Json& cfg) {
  EmConfig em;
  em.burnin = cfg.at("burnin").get<int>();
  em.Q_burnin = cfg.at("Q_burnin").get<int>();
  em.Q_main = cfg.at("Q_main").get<int>();
  em.likelihood_Q = cfg.at("likelihood_Q").get<int>();
  em.delta0 = cfg.at("delta0").get<double>();
  em.delta1 = cfg.at("delta1").get<double>();
  em.delta2 = cfg.at("delta2").get<double>();
  em.delta3 = cfg.at("delta3").get<double>();
  em.max_iter = cfg.at("max_iter").get<int>();
  em.patience = cfg.at("patience").get<int>();
  em.seed = seed_of(cfg);
  const std::string info = cfg.at("information").get<std::string>();
  if (info == "louis")
    em.information = InformationKind::Louis;
  else if (info == "risk-set")
    em.information = InformationKind::RiskSet;
  else
    usage("--information must be louis or risk-set");
  em.damping = cfg.at("damping").get<bool>();
  if (em.Q_burnin < 1 || em.Q_main < 1 || em.likelihood_Q < 1 || em.max_iter < 1 || em.burnin < 0 ||
      em.patience < 1)
    usage("Monte Carlo sizes and iteration limits must be positive");
  if (em.burnin >= em.max_iter) usage("burn-in must be shorter than max_iter");
  return em;
}

Eigen::VectorXi mask_of(const Json& cfg, int P, int L0, int L1, int J) {
  const std::vector<int> m = gamma_mask_by_name(cfg.at("gamma_mask").get<std::string>(), P, L0, L1, J);
  return Eigen::Map<const Eigen::VectorXi>(m.data(), static_cast<Eigen::Index>(m.size()));
}

Json coefficient_table(const ModelParams& p) {
  Json rows = Json::array();
  std::vector<std::string> terms;
  for (int k = 1; k <= p.P(); ++k) terms.push_back("z" + std::to_string(k));
  for (const auto& s : score_labels(p.L0(), p.L1(), p.J())) terms.push_back(s);
  const Eigen::VectorXd g = p.cox.stacked();
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto at = [](const Eigen::VectorXd& v, std::size_t i) {
      return static_cast<Eigen::Index>(i) < v.size() && std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr);
    };
    rows.push_back({{"term", terms[k]}, {"estimate", g(k)}, {"se", at(p.cox.se, k)}, {"p_value", at(p.cox.p_values, k)}});
  }
  return rows;
}

ModelParams load_fit_params(const Json& cfg) {
  if (cfg.at("fit").is_null()) usage("--fit (a fit.json file) is required");
  const std::string path = cfg.at("fit").get<std::string>();
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception&) {
    usage(path + " is not valid JSON");
  }
  if (!j.contains("params")) usage(path + " has no 'params' entry");
  return params_from_json(j.at("params"));
}

void check_compatible(const ModelParams& p, const JoinedData& data) {
  if (p.J() != data.J) throw Error(Errc::DimensionMismatch, "fitted model and data differ in the number of outcomes");
  if (p.P() != data.P) throw Error(Errc::DimensionMismatch, "fitted model and data differ in the number of covariates");
  if (std::abs(p.basis.tau - data.tau) > 1e-12 * std::max(1.0, data.tau))
    throw Error(Errc::DimensionMismatch, "fitted model and data use different domains");
}

// -------------------------------------------------------------------------
// commands
// -------------------------------------------------------------------------

int cmd_simulate(const Json& cfg) {
  if (cfg.at("n").is_null()) usage("--n is required");
  const int n = cfg.at("n").get<int>();
  if (n < 1) usage("--n must be positive");
  const std::uint64_t seed = seed_of(cfg);
  const std::string which = cfg.at("case").get<std::string>();
  SimSpec spec;
  if (which == "case2") {
    spec = case2_spec(n, seed);
  } else if (which == "case1") {
    spec = case1_spec(n, seed, cfg.at("bundle").get<std::string>());
  } else {
    std::ifstream in(which);
    if (!in) usage("--case must be case1, case2 or a spec JSON path");
    Json j;
    try {
      in >> j;
    } catch (const std::exception&) {
      usage(which + " is not valid JSON");
    }
    spec = spec_from_json(j);
    spec.n = n;
    spec.seed = seed;
  }
  const SimData sim = generate(spec);
  const std::string hash = config_hash(cfg);
  const auto dir = out_dir(cfg);
  {
    std::ofstream f = open_out(dir / "longitudinal.csv");
    write_hash_line(f, hash);
    emit_csv(f, sim.longitudinal);
  }
  {
    std::ofstream f = open_out(dir / "survival.csv");
    write_hash_line(f, hash);
    emit_csv(f, sim.survival);
  }
  Json truth = truth_to_json(spec, sim.truth);
  truth["config_hash"] = hash;
  write_json(dir / "truth.json", truth);
  Json sj = spec_to_json(spec);
  sj["config_hash"] = hash;
  write_json(dir / "spec.json", sj);
  std::printf("censoring rate %.4f, mean observations %.4f\n", sim.truth.censoring_rate, sim.truth.mean_observations);
  return 0;
}

void write_fit_outputs(const std::filesystem::path& dir, const Json& cfg, const std::string& method,
                       const JoinedData& data, const ModelParams& p, const FitReport& rep,
                       const std::vector<Eigen::VectorXd>& scores) {
  const std::string hash = config_hash(cfg);
  Json fj;
  fj["config_hash"] = hash;
  fj["method"] = method;
  fj["seed"] = seed_of(cfg);
  fj["n"] = data.n();
  fj["params"] = params_to_json(p);
  fj["coefficients"] = coefficient_table(p);
  fj["report"] = report_to_json(rep);
  fj["timing"] = timing_to_json(rep);
  write_json(dir / "fit.json", fj);
  {
    std::ofstream f = open_out(dir / "coefficients.csv");
    write_coefficients_csv(f, p, hash);
  }
  {
    std::ofstream f = open_out(dir / "baseline_hazard.csv");
    write_baseline_csv(f, p.h0, hash);
  }
  {
    std::ofstream f = open_out(dir / "fitted_curves.csv");
    write_fitted_curves_csv(f, data, p, scores, cfg.at("grid_size").get<int>(), hash);
  }
  {
    std::ofstream f = open_out(dir / "scores.csv");
    write_scores_csv(f, data, p, scores, hash);
  }
  {
    std::ofstream f = open_out(dir / "trace.csv");
    write_trace_csv(f, rep.trace, hash);
  }
}

int cmd_fit(const Json& cfg) {
  const JoinedData data = load_data(cfg);
  const BasisConfig basis = basis_of(cfg, data);
  const int L0 = cfg.at("L0").get<int>(), L1 = cfg.at("L1").get<int>();
  const Eigen::VectorXi mask = mask_of(cfg, data.P, L0, L1, data.J);
  const std::string method = cfg.at("method").get<std::string>();
  const auto dir = out_dir(cfg);
  const std::string hash = config_hash(cfg);

  if (method == "two-step") {
    const auto t0 = std::chrono::steady_clock::now();
    const TwoStepFit ts = fit_two_step(data, L0, L1, basis, mask);
    const ModelParams p = init_from_two_step(ts);
    FitReport rep;
    rep.seed = seed_of(cfg);
    rep.neg2_loglik = neg2_loglik(data, p, cfg.at("likelihood_Q").get<int>(), rep.seed);
    rep.loglik = -0.5 * rep.neg2_loglik;
    rep.df = degrees_of_freedom(p.J(), p.c(), L0, L1, p.P());
    rep.aic = aic(rep.neg2_loglik, rep.df);
    rep.bic = bic(rep.neg2_loglik, rep.df, data.n());
    rep.converged = true;
    rep.stop_reason = "two-step";
    rep.info_path = p.cox.info_path;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_fit_outputs(dir, cfg, method, data, p, rep, ts.scores);
    std::printf("two-step fit: -2 loglik %.6f, BIC %.6f\n", rep.neg2_loglik, rep.bic);
    return 0;
  }
  if (method != "mcem") usage("--method must be mcem or two-step");

  ModelParams init;
  const std::string init_from = cfg.at("init").get<std::string>();
  if (init_from == "twostep" || init_from == "two-step") {
    init = init_from_two_step(fit_two_step(data, L0, L1, basis, mask));
  } else {
    Json c2 = cfg;
    c2["fit"] = init_from;
    init = load_fit_params(c2);
    check_compatible(init, data);
  }
  EmConfig em = em_of(cfg);
  em.gamma_mask = mask;

  std::vector<TraceRow> trace;
  auto on_row = [&](const TraceRow& r) {
    trace.push_back(r);
    std::fprintf(stderr, "iter %4d  Q %5d  loglik %.6f  rel-change %.3g  abs-change %.3g\n", r.iteration, r.Q,
                 r.loglik, r.max_rel_change, r.max_abs_change);
  };
  FitResult fr;
  try {
    fr = fit(data, init, em, on_row);
  } catch (const Error&) {
    std::ofstream f = open_out(dir / "trace.csv");
    write_trace_csv(f, trace, hash);
    throw;
  }
  write_fit_outputs(dir, cfg, method, data, fr.params, fr.report, fr.posterior_means);
  if (!fr.report.converged)
    std::fprintf(stderr, "fjm: MaxIterationsReached: returning the best parameters after %d iterations\n",
                 fr.report.iterations);
  std::printf("mcem fit: -2 loglik %.6f, BIC %.6f, %d iterations (%s)\n", fr.report.neg2_loglik, fr.report.bic,
              fr.report.iterations, fr.report.stop_reason.c_str());
  return 0;
}

Json cell_json(const GridCell& c) {
  return {{"L0", c.L0},
          {"L1", c.L1},
          {"loglik", c.neg2_loglik},
          {"df", c.df},
          {"AIC", c.aic},
          {"BIC", c.bic},
          {"converged", c.converged},
          {"iterations", c.iterations},
          {"message", c.message}};
}

int cmd_select(const Json& cfg) {
  const JoinedData data = load_data(cfg);
  SelectOptions so;
  so.L0 = cfg.at("grid_L0").get<std::vector<int>>();
  so.L1 = cfg.at("grid_L1").get<std::vector<int>>();
  so.basis = basis_of(cfg, data);
  so.em = em_of(cfg);
  so.pve_prune = cfg.at("pve_prune").get<bool>();
  so.pve_threshold = cfg.at("pve_threshold").get<double>();
  so.require_converged = cfg.at("require_converged").get<bool>();
  const std::string mask_name = cfg.at("gamma_mask").get<std::string>();
  gamma_mask_by_name(mask_name, 0, 0, 0, 0);  // validate early
  so.gamma_mask = [&](int L0, int L1) { return mask_of(cfg, data.P, L0, L1, data.J); };
  const SelectionGrid grid = select_ranks(data, so, [](const GridCell& c) {
    std::fprintf(stderr, "cell (%d, %d): -2 loglik %.6f  BIC %.6f  %s\n", c.L0, c.L1, c.neg2_loglik, c.bic,
                 c.message.c_str());
  });
  const std::string hash = config_hash(cfg);
  const auto dir = out_dir(cfg);
  {
    std::ofstream f = open_out(dir / "grid.csv");
    write_grid_csv(f, grid, hash);
  }
  Json best = {{"config_hash", hash},
               {"AIC", cell_json(grid.cells[grid.best_aic])},
               {"BIC", cell_json(grid.cells[grid.best_bic])},
               {"used_unconverged", grid.used_unconverged}};
  write_json(dir / "best.json", best);
  std::printf("BIC selects (%d, %d); AIC selects (%d, %d)\n", grid.cells[grid.best_bic].L0,
              grid.cells[grid.best_bic].L1, grid.cells[grid.best_aic].L0, grid.cells[grid.best_aic].L1);
  return 0;
}

int cmd_predict(const Json& cfg) {
  const ModelParams p = load_fit_params(cfg);
  const JoinedData data = load_data(cfg);
  check_compatible(p, data);
  const OrthonormalBasis basis(p.basis);
  const std::vector<SubjectDesign> designs = build_designs(data.subjects, basis);
  EStepOptions eo;
  eo.Q = cfg.at("Q_main").get<int>();
  eo.seed = seed_of(cfg);
  eo.keep_sample = false;
  const PosteriorMoments post = e_step(data.subjects, designs, p, eo);
  std::vector<Eigen::VectorXd> scores(data.subjects.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = post.subjects[i].Eb;
  const double ll = marginal_loglik(data.subjects, designs, p, cfg.at("likelihood_Q").get<int>(), eo.seed).loglik;

  const std::string hash = config_hash(cfg);
  const auto dir = out_dir(cfg);
  {
    std::ofstream f = open_out(dir / "scores.csv");
    write_scores_csv(f, data, p, scores, hash);
  }
  {
    std::ofstream f = open_out(dir / "fitted_curves.csv");
    write_fitted_curves_csv(f, data, p, scores, cfg.at("grid_size").get<int>(), hash);
  }
  write_json(dir / "predict.json", {{"config_hash", hash}, {"n", data.n()}, {"loglik", ll}, {"neg2_loglik", -2 * ll}});
  std::printf("predicted %d subjects, -2 loglik %.6f\n", data.n(), -2 * ll);
  return 0;
}

int cmd_concordance(const Json& cfg) {
  const ModelParams p = load_fit_params(cfg);
  const JoinedData data = load_data(cfg);
  check_compatible(p, data);
  const OrthonormalBasis basis(p.basis);
  const std::vector<SubjectDesign> designs = build_designs(data.subjects, basis);
  std::vector<double> risk, times;
  std::vector<int> events;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const SubjectView& s = data.subjects[i];
    const GaussianConditional g = conditional_moments(s, designs[i], p);
    double r = p.K() ? g.mean.dot(p.cox.gamma_eta) : 0.0;
    if (p.P()) r += s.z.dot(p.cox.gamma_z);
    risk.push_back(r);
    times.push_back(s.T);
    events.push_back(s.delta);
  }
  const double C = concordance(risk, times, events);
  std::printf("%.4f\n", C);
  if (cfg.at("out").get<std::string>() != ".") {
    const auto dir = out_dir(cfg);
    write_json(dir / "concordance.json", {{"config_hash", config_hash(cfg)}, {"concordance", C}, {"n", data.n()}});
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Functional joint model: simulation, MCEM fitting, rank selection"};
  app.require_subcommand(1);

  const std::vector<std::string> common = {"seed", "threads", "out"};
  const std::vector<std::string> data_keys = {"longitudinal", "survival", "tau", "strict", "rescale"};
  const std::vector<std::string> em_keys = {"c",        "order",        "burnin", "Q_burnin", "Q_main",
                                            "likelihood_Q", "delta0",   "delta1", "delta2",   "delta3",
                                            "max_iter", "patience",     "information", "damping", "gamma_mask",
                                            "grid_size"};

  std::map<std::string, Command> cmds;
  auto make = [&](const std::string& name, const std::string& help, std::vector<std::vector<std::string>> groups) {
    Command& c = cmds[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "JSON run configuration");
    for (const auto& g : groups) add_keys(c, g);
  };
  make("simulate", "generate a simulation case", {common, {"case", "n", "bundle"}});
  make("fit", "fit the joint model (mcem) or the two-step estimator",
       {common, data_keys, em_keys, {"method", "init", "L0", "L1"}});
  make("select", "rank selection over an (L0, L1) grid",
       {common, data_keys, em_keys, {"grid_L0", "grid_L1", "pve_prune", "pve_threshold", "require_converged"}});
  make("predict", "posterior scores for subjects under frozen parameters",
       {common, data_keys, {"fit", "Q_main", "likelihood_Q", "grid_size"}});
  make("concordance", "Harrell's C of a fitted model on a dataset", {common, data_keys, {"fit"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    for (auto& [name, cmd] : cmds) {
      if (!cmd.app->parsed()) continue;
      const Json cfg = effective_config(cmd, name);
      const int threads = cfg.at("threads").get<int>();
      if (threads > 0) omp_set_num_threads(threads);
      if (name == "simulate") return cmd_simulate(cfg);
      if (name == "fit") return cmd_fit(cfg);
      if (name == "select") return cmd_select(cfg);
      if (name == "predict") return cmd_predict(cfg);
      if (name == "concordance") return cmd_concordance(cfg);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fjm: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fjm: %s\n", e.what());
    return 3;
  }
  return 1;
}

}  // namespace fjm
