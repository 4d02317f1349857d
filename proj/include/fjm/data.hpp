#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fjm {

/// One longitudinal measurement. `subject` is the dense index 0..n-1 and
/// `outcome` is zero-based internally (files use 1..J).
struct Observation {
  int subject = 0;
  int outcome = 0;
  double time = 0.0;
  double value = 0.0;
};

struct DroppedRow {
  std::size_t line = 0;
  std::string reason;
};

class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;

  /// Builds a validated dataset from raw rows keyed by external subject ids.
  /// Throws TimeOutOfDomain, EmptyDataset.
  static LongitudinalDataset from_rows(const std::vector<std::int64_t>& subject_ids,
                                       const std::vector<int>& outcomes_one_based,
                                       const std::vector<double>& times,
                                       const std::vector<double>& values, double tau);

  int n() const { return static_cast<int>(ids_.size()); }
  int J() const { return J_; }
  double tau() const { return tau_; }
  const std::vector<Observation>& records() const { return records_; }
  const std::vector<std::int64_t>& subject_ids() const { return ids_; }
  /// Dense index of an external id, or -1.
  int index_of(std::int64_t id) const;
  std::size_t size() const { return records_.size(); }

  std::vector<DroppedRow> dropped;

 private:
  std::vector<Observation> records_;  // sorted by (subject, outcome, time)
  std::vector<std::int64_t> ids_;     // dense index -> external id
  std::map<std::int64_t, int> index_;
  int J_ = 0;
  double tau_ = 1.0;
};

struct SurvivalRecord {
  std::int64_t id = 0;
  double time = 0.0;
  int event = 0;
  Eigen::VectorXd z;
};

class SurvivalDataset {
 public:
  /// Throws DimensionMismatch, InsufficientData (T <= 0), NonNumericValue
  /// (event not in {0,1}), EmptyDataset.
  explicit SurvivalDataset(std::vector<SurvivalRecord> records);
  SurvivalDataset() = default;

  int n() const { return static_cast<int>(records_.size()); }
  int P() const { return P_; }
  const std::vector<SurvivalRecord>& records() const { return records_; }
  const SurvivalRecord* find(std::int64_t id) const;

 private:
  std::vector<SurvivalRecord> records_;
  std::map<std::int64_t, int> index_;
  int P_ = 0;
};

/// A subject on its union observation grid. Outcome j at grid point k is
/// present iff present(j, k); absent entries of `values` hold NaN and never
/// enter a likelihood.
struct SubjectView {
  std::int64_t id = 0;
  int index = 0;
  std::vector<double> times;
  Eigen::MatrixXd values;  // J x m
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> present;
  std::vector<std::vector<int>> observed;  // per outcome: grid indices
  double T = 0.0;
  int delta = 0;
  Eigen::VectorXd z;

  int m() const { return static_cast<int>(times.size()); }
  int J() const { return static_cast<int>(observed.size()); }
  int n_observed() const;
  int n_observed(int outcome) const { return static_cast<int>(observed[outcome].size()); }
  /// Values of one outcome at its observed grid points.
  Eigen::VectorXd outcome_values(int outcome) const;
};

struct JoinOptions {
  bool strict = true;    // throw ObservationAfterEvent instead of dropping
  bool rescale = false;  // map [0, tau] affinely onto [0, 1]
};

struct JoinedData {
  std::vector<SubjectView> subjects;
  int J = 0;
  int P = 0;
  double tau = 1.0;
  std::size_t dropped_after_event = 0;

  int n() const { return static_cast<int>(subjects.size()); }
  std::size_t total_grid_points() const;
  std::size_t total_observations() const;
};

JoinedData join_with_survival(const LongitudinalDataset& longitudinal,
                              const SurvivalDataset& survival, const JoinOptions& options = {});

// -------------------------------------------------------------------------
// CSV ingestion / emission
// -------------------------------------------------------------------------

/// Maps canonical column names (subject, outcome, time, value / subject,
/// time, event) to the header names used in a particular file.
using ColumnSchema = std::map<std::string, std::string>;

struct IngestOptions {
  double tau = 1.0;
  bool strict = true;  // malformed rows throw instead of being dropped
  ColumnSchema schema;
};

LongitudinalDataset ingest_longitudinal(const std::string& path, const IngestOptions& options);
LongitudinalDataset parse_longitudinal(std::istream& in, const IngestOptions& options);
SurvivalDataset ingest_survival(const std::string& path, const IngestOptions& options);
SurvivalDataset parse_survival(std::istream& in, const IngestOptions& options);

/// Shortest round-trip representation (17 significant digits).
std::string format_number(double x);

void emit_csv(std::ostream& out, const LongitudinalDataset& data);
void emit_csv(std::ostream& out, const SurvivalDataset& data);

/// Reconstructs the two flat datasets from joined subjects (used by the
/// simulator and for re-emission after rescaling).
LongitudinalDataset to_longitudinal(const JoinedData& data);
SurvivalDataset to_survival(const JoinedData& data);

}  // namespace fjm
