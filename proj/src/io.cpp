#include "fjm/io.hpp"

#include <cmath>
#include <cstdio>

#include "fjm/error.hpp"

namespace fjm {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

Json number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

double from_number(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw Error(Errc::Usage, "expected a number in JSON input");
  return j.get<double>();
}

}  // namespace

Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(number(v(k)));
  return a;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    a.push_back(row);
  }
  return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::Usage, "expected a JSON array");
  Eigen::VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v(k) = from_number(j[k]);
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::Usage, "expected a nested JSON array");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw Error(Errc::Usage, "ragged matrix in JSON input");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = from_number(j[r][c]);
  }
  return m;
}

Json params_to_json(const ModelParams& p) {
  Json j;
  j["basis"] = {{"c", p.basis.c}, {"order", p.basis.order}, {"tau", p.basis.tau}};
  j["J"] = p.J();
  j["L0"] = p.L0();
  j["L1"] = p.L1();
  j["P"] = p.P();
  j["alpha"] = to_json(p.alpha);
  j["beta"] = to_json(p.beta);
  j["theta0"] = to_json(p.theta0);
  j["theta1"] = to_json(p.theta1);
  j["d0"] = to_json(p.d0);
  j["d1"] = to_json(p.d1);
  j["sigma2"] = to_json(p.sigma2);
  j["gamma_z"] = to_json(p.cox.gamma_z);
  j["gamma_eta"] = to_json(p.cox.gamma_eta);
  j["se"] = to_json(p.cox.se);
  j["p_values"] = to_json(p.cox.p_values);
  j["information"] = p.cox.info_path;
  j["baseline_hazard"] = {{"times", p.h0.times}, {"jumps", p.h0.jumps}};
  return j;
}

ModelParams params_from_json(const Json& j) {
  try {
    ModelParams p;
    p.basis.c = j.at("basis").at("c").get<int>();
    p.basis.order = j.at("basis").at("order").get<int>();
    p.basis.tau = j.at("basis").at("tau").get<double>();
    const int L0 = j.at("L0").get<int>(), L1 = j.at("L1").get<int>();
    p.alpha = matrix_from_json(j.at("alpha"));
    p.beta = vector_from_json(j.at("beta"));
    p.theta0 = matrix_from_json(j.at("theta0"));
    p.theta1 = matrix_from_json(j.at("theta1"));
    if (L0 == 0) p.theta0 = Eigen::MatrixXd::Zero(p.basis.c, 0);
    if (L1 == 0) p.theta1 = Eigen::MatrixXd::Zero(p.basis.c, 0);
    p.d0 = vector_from_json(j.at("d0"));
    p.d1 = vector_from_json(j.at("d1"));
    p.sigma2 = vector_from_json(j.at("sigma2"));
    p.cox.gamma_z = vector_from_json(j.at("gamma_z"));
    p.cox.gamma_eta = vector_from_json(j.at("gamma_eta"));
    if (j.contains("se")) p.cox.se = vector_from_json(j.at("se"));
    if (j.contains("p_values")) p.cox.p_values = vector_from_json(j.at("p_values"));
    if (j.contains("information")) p.cox.info_path = j.at("information").get<std::string>();
    p.h0.times = j.at("baseline_hazard").at("times").get<std::vector<double>>();
    p.h0.jumps = j.at("baseline_hazard").at("jumps").get<std::vector<double>>();
    p.h0.cum.resize(p.h0.jumps.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < p.h0.jumps.size(); ++k) p.h0.cum[k] = acc += p.h0.jumps[k];
    const std::string bad = check_invariants(p, 1e-6);
    if (!bad.empty()) throw Error(Errc::Usage, "parameter file violates invariants: " + bad);
    return p;
  } catch (const Json::exception& e) {
    throw Error(Errc::Usage, std::string("malformed parameter JSON: ") + e.what());
  }
}

Json report_to_json(const FitReport& r) {
  Json j;
  j["loglik"] = number(r.loglik);
  j["neg2_loglik"] = number(r.neg2_loglik);
  j["df"] = r.df;
  j["aic"] = number(r.aic);
  j["bic"] = number(r.bic);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stop_reason"] = r.stop_reason;
  j["information"] = r.info_path;
  j["seed"] = r.seed;
  Json trace = Json::array();
  for (const TraceRow& t : r.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"Q", t.Q},
                     {"loglik", number(t.loglik)},
                     {"rel_loglik_change", number(t.rel_loglik_change)},
                     {"max_rel_change", number(t.max_rel_change)},
                     {"max_abs_change", number(t.max_abs_change)},
                     {"min_ess", number(t.min_ess)}});
  j["trace"] = trace;
  return j;
}

Json timing_to_json(const FitReport& r) {
  Json per = Json::array();
  for (const TraceRow& t : r.trace) per.push_back(t.seconds);
  return {{"total_seconds", r.seconds}, {"iteration_seconds", per}};
}

namespace {

Json curve_to_json(const Curve& c) {
  switch (c.kind) {
    case CurveKind::Sin:
      return {{"kind", "sin"}, {"a", c.a}, {"f", c.f}};
    case CurveKind::Cos:
      return {{"kind", "cos"}, {"a", c.a}, {"f", c.f}};
    case CurveKind::Poly:
      return {{"kind", "poly"}, {"coef", c.coef}};
    case CurveKind::Spline:
      return {{"kind", "spline"},
              {"c", c.spline->c()},
              {"order", c.spline->config().order},
              {"tau", c.spline->tau()},
              {"coef", c.coef}};
  }
  return {};
}

Curve curve_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sin") return Curve::sin(j.at("a").get<double>(), j.at("f").get<double>());
  if (kind == "cos") return Curve::cos(j.at("a").get<double>(), j.at("f").get<double>());
  if (kind == "poly") return Curve::poly(j.at("coef").get<std::vector<double>>());
  if (kind == "spline") {
    BasisConfig cfg;
    cfg.c = j.at("c").get<int>();
    cfg.order = j.at("order").get<int>();
    cfg.tau = j.at("tau").get<double>();
    const std::vector<double> coef = j.at("coef").get<std::vector<double>>();
    return Curve::bspline(std::make_shared<const OrthonormalBasis>(cfg),
                          Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size())));
  }
  throw Error(Errc::Usage, "unknown curve kind '" + kind + "'");
}

Json curves_to_json(const std::vector<Curve>& cs) {
  Json a = Json::array();
  for (const Curve& c : cs) a.push_back(curve_to_json(c));
  return a;
}

std::vector<Curve> curves_from_json(const Json& j) {
  std::vector<Curve> out;
  for (const auto& c : j) out.push_back(curve_from_json(c));
  return out;
}

}  // namespace

Json spec_to_json(const SimSpec& s) {
  Json g1 = Json::array();
  for (const auto& g : s.gamma1) g1.push_back(to_json(g));
  return {{"name", s.name},
          {"n", s.n},
          {"grid", s.grid},
          {"mu", curves_to_json(s.mu)},
          {"phi", curves_to_json(s.phi)},
          {"psi", curves_to_json(s.psi)},
          {"d0", to_json(s.d0)},
          {"d1", to_json(s.d1)},
          {"beta", to_json(s.beta)},
          {"sigma2", to_json(s.sigma2)},
          {"gamma0", to_json(s.gamma0)},
          {"gamma1", g1},
          {"gamma_z", to_json(s.gamma_z)},
          {"h0", s.h0},
          {"c0", number(s.c0)},
          {"tau", s.tau},
          {"seed", s.seed}};
}

SimSpec spec_from_json(const Json& j) {
  try {
    SimSpec s;
    s.name = j.value("name", std::string("custom"));
    s.n = j.at("n").get<int>();
    s.grid = j.at("grid").get<std::vector<double>>();
    s.mu = curves_from_json(j.at("mu"));
    s.phi = curves_from_json(j.at("phi"));
    s.psi = curves_from_json(j.at("psi"));
    s.d0 = vector_from_json(j.at("d0"));
    s.d1 = vector_from_json(j.at("d1"));
    s.beta = vector_from_json(j.at("beta"));
    s.sigma2 = vector_from_json(j.at("sigma2"));
    s.gamma0 = vector_from_json(j.at("gamma0"));
    for (const auto& g : j.at("gamma1")) s.gamma1.push_back(vector_from_json(g));
    s.gamma_z = j.contains("gamma_z") ? vector_from_json(j.at("gamma_z")) : Eigen::VectorXd::Zero(0);
    s.h0 = j.value("h0", 1.0);
    s.tau = j.value("tau", 1.0);
    s.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("c0") && !j.at("c0").is_null()) s.c0 = j.at("c0").get<double>();
    validate(s);
    return s;
  } catch (const Json::exception& e) {
    throw Error(Errc::Usage, std::string("malformed simulation spec: ") + e.what());
  }
}

Json truth_to_json(const SimSpec& spec, const SimTruth& t) {
  Json scores = Json::array();
  for (const auto& b : t.scores) scores.push_back(to_json(b));
  return {{"case", spec.name},
          {"n", spec.n},
          {"seed", spec.seed},
          {"c0", number(t.c0)},
          {"censoring_rate", t.censoring_rate},
          {"mean_observations", t.mean_observations},
          {"gamma_eta", to_json(spec.gamma_eta())},
          {"eta", t.eta},
          {"scores", scores}};
}

void write_hash_line(std::ostream& out, const std::string& hash) { out << "# config-hash: " << hash << '\n'; }

void write_coefficients_csv(std::ostream& out, const ModelParams& p, const std::string& hash) {
  write_hash_line(out, hash);
  out << "term,estimate,se,p_value\n";
  std::vector<std::string> terms;
  for (int k = 1; k <= p.P(); ++k) terms.push_back("z" + std::to_string(k));
  for (const auto& s : score_labels(p.L0(), p.L1(), p.J())) terms.push_back(s);
  const Eigen::VectorXd g = p.cox.stacked();
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double se = p.cox.se.size() > static_cast<Eigen::Index>(k) ? p.cox.se(k) : std::nan("");
    const double pv = p.cox.p_values.size() > static_cast<Eigen::Index>(k) ? p.cox.p_values(k) : std::nan("");
    out << terms[k] << ',' << format_number(g(k)) << ',' << format_number(se) << ',' << format_number(pv) << '\n';
  }
}

void write_baseline_csv(std::ostream& out, const BaselineHazard& h0, const std::string& hash) {
  write_hash_line(out, hash);
  out << "time,jump,cumulative\n";
  for (std::size_t k = 0; k < h0.size(); ++k)
    out << format_number(h0.times[k]) << ',' << format_number(h0.jumps[k]) << ',' << format_number(h0.cum[k]) << '\n';
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace, const std::string& hash) {
  write_hash_line(out, hash);
  out << "iteration,Q,loglik,rel_loglik_change,max_rel_change,max_abs_change,min_ess,inner_sweeps,halvings,"
         "information,seconds\n";
  for (const TraceRow& t : trace)
    out << t.iteration << ',' << t.Q << ',' << format_number(t.loglik) << ',' << format_number(t.rel_loglik_change)
        << ',' << format_number(t.max_rel_change) << ',' << format_number(t.max_abs_change) << ','
        << format_number(t.min_ess) << ',' << t.inner_sweeps << ',' << t.halvings << ',' << t.info_path << ','
        << format_number(t.seconds) << '\n';
}

std::vector<double> uniform_grid(double a, double b, int size) {
  std::vector<double> g(size);
  for (int k = 0; k < size; ++k) g[k] = size == 1 ? a : a + (b - a) * k / (size - 1);
  return g;
}

void write_fitted_curves_csv(std::ostream& out, const JoinedData& data, const ModelParams& p,
                             const std::vector<Eigen::VectorXd>& scores, int grid_size, const std::string& hash) {
  const OrthonormalBasis basis(p.basis);
  const std::vector<double> grid = uniform_grid(0.0, p.basis.tau, grid_size);
  const Eigen::MatrixXd mu = mean_curves(p, basis, grid);  // J x G
  const Eigen::MatrixXd Phi = eigenfunctions(p.theta0, basis, grid);
  const Eigen::MatrixXd Psi = eigenfunctions(p.theta1, basis, grid);
  const int L0 = p.L0(), L1 = p.L1();
  write_hash_line(out, hash);
  out << "subject,outcome,time,value\n";
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const Eigen::VectorXd& b = scores[i];
    const Eigen::VectorXd shared = L0 ? Eigen::VectorXd(Phi * b.head(L0)) : Eigen::VectorXd::Zero(grid.size());
    for (int j = 0; j < p.J(); ++j) {
      const Eigen::VectorXd spec =
          L1 ? Eigen::VectorXd(Psi * b.segment(L0 + j * L1, L1)) : Eigen::VectorXd::Zero(grid.size());
      for (std::size_t g = 0; g < grid.size(); ++g)
        out << data.subjects[i].id << ',' << j + 1 << ',' << format_number(grid[g]) << ','
            << format_number(mu(j, g) + p.beta(j) * (shared(g) + spec(g))) << '\n';
    }
  }
}

void write_scores_csv(std::ostream& out, const JoinedData& data, const ModelParams& p,
                      const std::vector<Eigen::VectorXd>& scores, const std::string& hash) {
  write_hash_line(out, hash);
  out << "subject,block,index,value\n";
  for (std::size_t i = 0; i < data.subjects.size(); ++i)
    for (int k = 0; k < p.K(); ++k) {
      const int block = k < p.L0() ? 0 : 1 + (k - p.L0()) / std::max(p.L1(), 1);
      const int index = k < p.L0() ? k + 1 : (k - p.L0()) % std::max(p.L1(), 1) + 1;
      out << data.subjects[i].id << ',' << block << ',' << index << ',' << format_number(scores[i](k)) << '\n';
    }
}

void write_grid_csv(std::ostream& out, const SelectionGrid& grid, const std::string& hash) {
  write_hash_line(out, hash);
  out << "L0,L1,loglik,df,AIC,BIC,converged\n";
  for (const GridCell& c : grid.cells)
    out << c.L0 << ',' << c.L1 << ',' << format_number(c.neg2_loglik) << ',' << c.df << ',' << format_number(c.aic)
        << ',' << format_number(c.bic) << ',' << (c.converged ? 1 : 0) << '\n';
}

}  // namespace fjm
