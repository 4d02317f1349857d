#include "fjm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "fjm/error.hpp"

namespace fjm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool skip_line(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t.front() == '#';
}

// Reads the header line (skipping comments) and resolves required columns.
struct Header {
  std::vector<std::string> names;
  std::size_t line_no = 0;
};

Header read_header(std::istream& in) {
  Header h;
  std::string line;
  while (std::getline(in, line)) {
    ++h.line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (h.line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    if (skip_line(line)) continue;
    h.names = split_csv(line);
    return h;
  }
  throw Error(Errc::EmptyDataset, "no header line");
}

std::size_t column(const Header& h, const ColumnSchema& schema, const std::string& canonical) {
  const auto it = schema.find(canonical);
  const std::string& name = it == schema.end() ? canonical : it->second;
  const auto pos = std::find(h.names.begin(), h.names.end(), name);
  if (pos == h.names.end()) throw Error(Errc::MissingColumn, "column '" + name + "' not found");
  return static_cast<std::size_t>(pos - h.names.begin());
}

}  // namespace

// -------------------------------------------------------------------------
// LongitudinalDataset
// -------------------------------------------------------------------------

LongitudinalDataset LongitudinalDataset::from_rows(const std::vector<std::int64_t>& subject_ids,
                                                   const std::vector<int>& outcomes_one_based,
                                                   const std::vector<double>& times,
                                                   const std::vector<double>& values, double tau) {
  const std::size_t rows = subject_ids.size();
  if (outcomes_one_based.size() != rows || times.size() != rows || values.size() != rows)
    throw Error(Errc::DimensionMismatch, "column lengths differ");
  if (rows == 0) throw Error(Errc::EmptyDataset, "no longitudinal rows");
  if (!(tau > 0.0)) throw Error(Errc::TimeOutOfDomain, "tau must be positive");

  LongitudinalDataset d;
  d.tau_ = tau;
  std::set<std::int64_t> ids(subject_ids.begin(), subject_ids.end());
  d.ids_.assign(ids.begin(), ids.end());
  for (std::size_t k = 0; k < d.ids_.size(); ++k) d.index_[d.ids_[k]] = static_cast<int>(k);

  d.records_.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(times[r] >= 0.0 && times[r] <= tau)) {
      throw Error(Errc::TimeOutOfDomain, "time " + format_number(times[r]) + " outside [0, " +
                                             format_number(tau) + "] for subject " +
                                             std::to_string(subject_ids[r]));
    }
    if (outcomes_one_based[r] < 1) throw Error(Errc::NonNumericValue, "outcome index must be >= 1");
    d.J_ = std::max(d.J_, outcomes_one_based[r]);
    d.records_.push_back({d.index_.at(subject_ids[r]), outcomes_one_based[r] - 1, times[r], values[r]});
  }
  std::stable_sort(d.records_.begin(), d.records_.end(), [](const Observation& a, const Observation& b) {
    if (a.subject != b.subject) return a.subject < b.subject;
    if (a.outcome != b.outcome) return a.outcome < b.outcome;
    return a.time < b.time;
  });
  return d;
}

int LongitudinalDataset::index_of(std::int64_t id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

// -------------------------------------------------------------------------
// SurvivalDataset
// -------------------------------------------------------------------------

SurvivalDataset::SurvivalDataset(std::vector<SurvivalRecord> records) : records_(std::move(records)) {
  if (records_.empty()) throw Error(Errc::EmptyDataset, "no survival rows");
  P_ = static_cast<int>(records_.front().z.size());
  for (std::size_t k = 0; k < records_.size(); ++k) {
    const auto& r = records_[k];
    if (static_cast<int>(r.z.size()) != P_) throw Error(Errc::DimensionMismatch, "covariate lengths differ");
    if (!(r.time > 0.0)) throw Error(Errc::InsufficientData, "survival time must be positive for subject " + std::to_string(r.id));
    if (r.event != 0 && r.event != 1) throw Error(Errc::NonNumericValue, "event indicator must be 0 or 1");
    if (!index_.emplace(r.id, static_cast<int>(k)).second)
      throw Error(Errc::SubjectMismatch, "duplicate survival row for subject " + std::to_string(r.id));
  }
}

const SurvivalRecord* SurvivalDataset::find(std::int64_t id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

// -------------------------------------------------------------------------
// SubjectView / join
// -------------------------------------------------------------------------

int SubjectView::n_observed() const {
  int total = 0;
  for (const auto& o : observed) total += static_cast<int>(o.size());
  return total;
}

Eigen::VectorXd SubjectView::outcome_values(int outcome) const {
  const auto& idx = observed[outcome];
  Eigen::VectorXd v(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) v(k) = values(outcome, idx[k]);
  return v;
}

std::size_t JoinedData::total_grid_points() const {
  std::size_t total = 0;
  for (const auto& s : subjects) total += s.times.size();
  return total;
}

std::size_t JoinedData::total_observations() const {
  std::size_t total = 0;
  for (const auto& s : subjects) total += static_cast<std::size_t>(s.n_observed());
  return total;
}

JoinedData join_with_survival(const LongitudinalDataset& longitudinal, const SurvivalDataset& survival,
                              const JoinOptions& options) {
  if (longitudinal.n() != survival.n())
    throw Error(Errc::SubjectMismatch, "longitudinal has " + std::to_string(longitudinal.n()) +
                                           " subjects, survival has " + std::to_string(survival.n()));
  const double scale = options.rescale ? 1.0 / longitudinal.tau() : 1.0;

  JoinedData out;
  out.J = longitudinal.J();
  out.P = survival.P();
  out.tau = longitudinal.tau() * scale;
  out.subjects.resize(longitudinal.n());

  const auto& recs = longitudinal.records();
  std::size_t r = 0;
  for (int i = 0; i < longitudinal.n(); ++i) {
    const std::int64_t id = longitudinal.subject_ids()[i];
    const SurvivalRecord* s = survival.find(id);
    if (!s) throw Error(Errc::SubjectMismatch, "subject " + std::to_string(id) + " has no survival row");
    if (s->time > longitudinal.tau() * (1.0 + 1e-12))
      throw Error(Errc::TimeOutOfDomain, "survival time exceeds tau for subject " + std::to_string(id));

    SubjectView& v = out.subjects[i];
    v.id = id;
    v.index = i;
    v.T = s->time * scale;
    v.delta = s->event;
    v.z = s->z;

    std::vector<Observation> kept;
    for (; r < recs.size() && recs[r].subject == i; ++r) {
      Observation o = recs[r];
      o.time *= scale;
      if (o.time > v.T) {
        if (options.strict)
          throw Error(Errc::ObservationAfterEvent, "subject " + std::to_string(id) + " observed at t=" +
                                                       format_number(o.time) + " after T=" + format_number(v.T));
        ++out.dropped_after_event;
        continue;
      }
      kept.push_back(o);
    }

    std::vector<double> grid;
    grid.reserve(kept.size());
    for (const auto& o : kept) grid.push_back(o.time);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    v.times = grid;

    const int m = static_cast<int>(grid.size());
    v.values = Eigen::MatrixXd::Constant(out.J, m, std::numeric_limits<double>::quiet_NaN());
    v.present = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(out.J, m, false);
    v.observed.assign(out.J, {});
    for (const auto& o : kept) {
      const int k = static_cast<int>(std::lower_bound(grid.begin(), grid.end(), o.time) - grid.begin());
      // A repeated (outcome, time) pair keeps the last value.
      v.values(o.outcome, k) = o.value;
      v.present(o.outcome, k) = true;
    }
    for (int j = 0; j < out.J; ++j)
      for (int k = 0; k < m; ++k)
        if (v.present(j, k)) v.observed[j].push_back(k);
  }
  return out;
}

// -------------------------------------------------------------------------
// CSV
// -------------------------------------------------------------------------

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

LongitudinalDataset parse_longitudinal(std::istream& in, const IngestOptions& options) {
  const Header h = read_header(in);
  const std::size_t cs = column(h, options.schema, "subject");
  const std::size_t co = column(h, options.schema, "outcome");
  const std::size_t ct = column(h, options.schema, "time");
  const std::size_t cv = column(h, options.schema, "value");
  const std::size_t need = std::max({cs, co, ct, cv}) + 1;

  std::vector<std::int64_t> ids;
  std::vector<int> outcomes;
  std::vector<double> times, values;
  std::vector<DroppedRow> dropped;

  std::string line;
  std::size_t line_no = h.line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    const auto f = split_csv(line);
    std::int64_t id = 0, outcome = 0;
    double t = 0, y = 0;
    std::string reason;
    if (f.size() < need) reason = "too few fields";
    else if (!parse_int(f[cs], id)) reason = "subject is not an integer";
    else if (!parse_int(f[co], outcome) || outcome < 1) reason = "outcome is not a positive integer";
    else if (!parse_double(f[ct], t)) reason = "time is not numeric";
    else if (!parse_double(f[cv], y)) reason = "value is not numeric";
    if (!reason.empty()) {
      if (options.strict) throw Error(Errc::NonNumericValue, "line " + std::to_string(line_no) + ": " + reason);
      dropped.push_back({line_no, reason});
      continue;
    }
    ids.push_back(id);
    outcomes.push_back(static_cast<int>(outcome));
    times.push_back(t);
    values.push_back(y);
  }
  auto d = LongitudinalDataset::from_rows(ids, outcomes, times, values, options.tau);
  d.dropped = std::move(dropped);
  return d;
}

LongitudinalDataset ingest_longitudinal(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return parse_longitudinal(in, options);
}

SurvivalDataset parse_survival(std::istream& in, const IngestOptions& options) {
  const Header h = read_header(in);
  const std::size_t cs = column(h, options.schema, "subject");
  const std::size_t ct = column(h, options.schema, "time");
  const std::size_t ce = column(h, options.schema, "event");
  std::vector<std::size_t> cz;
  for (int p = 1;; ++p) {
    const std::string name = "z" + std::to_string(p);
    const auto it = options.schema.find(name);
    const std::string& col = it == options.schema.end() ? name : it->second;
    const auto pos = std::find(h.names.begin(), h.names.end(), col);
    if (pos == h.names.end()) break;
    cz.push_back(static_cast<std::size_t>(pos - h.names.begin()));
  }
  std::size_t need = std::max({cs, ct, ce}) + 1;
  for (auto c : cz) need = std::max(need, c + 1);

  std::vector<SurvivalRecord> records;
  std::string line;
  std::size_t line_no = h.line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    const auto f = split_csv(line);
    SurvivalRecord rec;
    std::int64_t ev = 0;
    std::string reason;
    if (f.size() < need) reason = "too few fields";
    else if (!parse_int(f[cs], rec.id)) reason = "subject is not an integer";
    else if (!parse_double(f[ct], rec.time)) reason = "time is not numeric";
    else if (!parse_int(f[ce], ev) || (ev != 0 && ev != 1)) reason = "event is not 0/1";
    rec.z.resize(static_cast<Eigen::Index>(cz.size()));
    for (std::size_t p = 0; reason.empty() && p < cz.size(); ++p)
      if (!parse_double(f[cz[p]], rec.z(static_cast<Eigen::Index>(p)))) reason = "covariate is not numeric";
    if (reason.empty() && !(rec.time <= options.tau)) {
      throw Error(Errc::TimeOutOfDomain, "line " + std::to_string(line_no) + ": survival time beyond tau");
    }
    if (!reason.empty()) {
      if (options.strict) throw Error(Errc::NonNumericValue, "line " + std::to_string(line_no) + ": " + reason);
      continue;
    }
    rec.event = static_cast<int>(ev);
    records.push_back(std::move(rec));
  }
  return SurvivalDataset(std::move(records));
}

SurvivalDataset ingest_survival(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return parse_survival(in, options);
}

void emit_csv(std::ostream& out, const LongitudinalDataset& data) {
  out << "subject,outcome,time,value\n";
  for (const auto& r : data.records()) {
    out << data.subject_ids()[r.subject] << ',' << (r.outcome + 1) << ',' << format_number(r.time) << ','
        << format_number(r.value) << '\n';
  }
}

void emit_csv(std::ostream& out, const SurvivalDataset& data) {
  out << "subject,time,event";
  for (int p = 1; p <= data.P(); ++p) out << ",z" << p;
  out << '\n';
  for (const auto& r : data.records()) {
    out << r.id << ',' << format_number(r.time) << ',' << r.event;
    for (Eigen::Index p = 0; p < r.z.size(); ++p) out << ',' << format_number(r.z(p));
    out << '\n';
  }
}

LongitudinalDataset to_longitudinal(const JoinedData& data) {
  std::vector<std::int64_t> ids;
  std::vector<int> outcomes;
  std::vector<double> times, values;
  for (const auto& s : data.subjects) {
    for (int j = 0; j < s.J(); ++j) {
      for (int k : s.observed[j]) {
        ids.push_back(s.id);
        outcomes.push_back(j + 1);
        times.push_back(s.times[k]);
        values.push_back(s.values(j, k));
      }
    }
  }
  return LongitudinalDataset::from_rows(ids, outcomes, times, values, data.tau);
}

SurvivalDataset to_survival(const JoinedData& data) {
  std::vector<SurvivalRecord> recs;
  recs.reserve(data.subjects.size());
  for (const auto& s : data.subjects) recs.push_back({s.id, s.T, s.delta, s.z});
  return SurvivalDataset(std::move(recs));
}

}  // namespace fjm
