#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/errors.hpp"
#include "spillover_did/table.hpp"

namespace spillover_did {

// Unit x time panel. Observations are stored sorted by (unit, period) and the
// dataset is immutable after construction, so it can be shared freely across
// parallel workers.
class PanelDataset {
 public:
  static constexpr int kNeverTreated = std::numeric_limits<int>::max();

  // --- level tables ---
  int n_units() const { return static_cast<int>(unit_ids_.size()); }
  int n_periods() const { return static_cast<int>(periods_.size()); }
  long n_obs() const { return static_cast<long>(outcome_.size()); }

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::string& unit_id(int u) const { return unit_ids_[u]; }
  const std::vector<int>& periods() const { return periods_; }
  int period_value(int p) const { return periods_[p]; }

  int unit_index(const std::string& id) const {
    auto it = unit_lookup_.find(id);
    return it == unit_lookup_.end() ? -1 : it->second;
  }
  int period_index(int time) const {
    auto it = period_lookup_.find(time);
    return it == period_lookup_.end() ? -1 : it->second;
  }

  // --- observations (index into n_obs arrays) ---
  int unit_of(long i) const { return unit_[i]; }
  int period_of(long i) const { return period_[i]; }
  int time_of(long i) const { return periods_[period_[i]]; }
  double outcome(long i) const { return outcome_[i]; }
  bool treated(long i) const { return treated_[i] != 0; }
  const std::vector<double>& outcomes() const { return outcome_; }

  // First period (raw time value) in which the unit is treated, or
  // kNeverTreated. Derived from the observed treatment path.
  int treat_start(int u) const { return treat_start_[u]; }
  bool ever_treated(int u) const { return treat_start_[u] != kNeverTreated; }
  bool treated_at(int u, int period_idx) const {
    return treat_start_[u] != kNeverTreated &&
           periods_[period_idx] >= treat_start_[u];
  }

  // Observation lookup; -1 when the (unit, period) pair is absent.
  long find(int u, int period_idx) const {
    long lo = unit_begin_[u], hi = unit_begin_[u + 1];
    for (long i = lo; i < hi; ++i)
      if (period_[i] == period_idx) return i;
    return -1;
  }
  long unit_obs_begin(int u) const { return unit_begin_[u]; }
  long unit_obs_end(int u) const { return unit_begin_[u + 1]; }

  // --- covariates ---
  int n_covariates() const { return static_cast<int>(covariate_names_.size()); }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }
  double covariate(long i, int c) const { return covariates_(i, c); }
  const Eigen::MatrixXd& covariates() const { return covariates_; }

 private:
  friend class PanelBuilder;

  std::vector<std::string> unit_ids_;
  std::unordered_map<std::string, int> unit_lookup_;
  std::vector<int> periods_;
  std::unordered_map<int, int> period_lookup_;

  std::vector<int> unit_;
  std::vector<int> period_;
  std::vector<double> outcome_;
  std::vector<std::uint8_t> treated_;
  std::vector<int> treat_start_;
  std::vector<long> unit_begin_;

  Eigen::MatrixXd covariates_;
  std::vector<std::string> covariate_names_;
};

// Incremental construction used by the loader, the simulation engine, and the
// bootstrap. Validates the panel invariants on build().
class PanelBuilder {
 public:
  explicit PanelBuilder(std::vector<std::string> covariate_names = {})
      : covariate_names_(std::move(covariate_names)) {}

  int add_unit(const std::string& id) {
    auto it = unit_lookup_.find(id);
    if (it != unit_lookup_.end()) return it->second;
    int idx = static_cast<int>(unit_ids_.size());
    unit_ids_.push_back(id);
    unit_lookup_.emplace(id, idx);
    return idx;
  }

  void add_observation(int unit, int time, double outcome, bool treated,
                       const std::vector<double>& covariates = {}) {
    if (!std::isfinite(outcome))
      fail(errc::invalid_argument,
           "outcome must be finite (unit " + unit_ids_[unit] + ", period " +
               std::to_string(time) + ")");
    if (covariates.size() != covariate_names_.size())
      fail(errc::invalid_argument, "covariate row length mismatch");
    rows_.push_back(Row{unit, time, outcome, treated, covariates});
  }

  PanelDataset build() {
    PanelDataset p;
    p.unit_ids_ = unit_ids_;
    p.unit_lookup_ = unit_lookup_;

    std::map<int, int> period_map;
    for (const auto& r : rows_) period_map[r.time] = 0;
    int pi = 0;
    for (auto& kv : period_map) kv.second = pi++;
    p.periods_.reserve(period_map.size());
    for (const auto& kv : period_map) {
      p.period_lookup_.emplace(kv.first, static_cast<int>(p.periods_.size()));
      p.periods_.push_back(kv.first);
    }

    std::sort(rows_.begin(), rows_.end(), [&](const Row& a, const Row& b) {
      if (a.unit != b.unit) return a.unit < b.unit;
      return a.time < b.time;
    });

    const long n = static_cast<long>(rows_.size());
    p.unit_.resize(n);
    p.period_.resize(n);
    p.outcome_.resize(n);
    p.treated_.resize(n);
    p.covariate_names_ = covariate_names_;
    p.covariates_.resize(n, static_cast<Eigen::Index>(covariate_names_.size()));

    for (long i = 0; i < n; ++i) {
      const Row& r = rows_[i];
      if (i > 0 && rows_[i - 1].unit == r.unit && rows_[i - 1].time == r.time)
        fail(errc::duplicate_key, "duplicate (unit, time) pair: (" +
                                      unit_ids_[r.unit] + ", " +
                                      std::to_string(r.time) + ")");
      p.unit_[i] = r.unit;
      p.period_[i] = period_map[r.time];
      p.outcome_[i] = r.outcome;
      p.treated_[i] = r.treated ? 1 : 0;
      for (size_t c = 0; c < r.covariates.size(); ++c)
        p.covariates_(i, static_cast<Eigen::Index>(c)) = r.covariates[c];
    }

    const int n_units = static_cast<int>(unit_ids_.size());
    p.unit_begin_.assign(n_units + 1, 0);
    for (long i = 0; i < n; ++i) p.unit_begin_[p.unit_[i] + 1]++;
    for (int u = 0; u < n_units; ++u) p.unit_begin_[u + 1] += p.unit_begin_[u];

    // Treatment must be absorbing within each unit.
    p.treat_start_.assign(n_units, PanelDataset::kNeverTreated);
    for (int u = 0; u < n_units; ++u) {
      bool on = false;
      for (long i = p.unit_begin_[u]; i < p.unit_begin_[u + 1]; ++i) {
        if (p.treated_[i]) {
          if (!on) p.treat_start_[u] = p.periods_[p.period_[i]];
          on = true;
        } else if (on) {
          fail(errc::non_absorbing_treatment,
               "treatment switches off for unit " + unit_ids_[u] +
                   " at period " + std::to_string(p.periods_[p.period_[i]]));
        }
      }
    }
    return p;
  }

 private:
  struct Row {
    int unit;
    int time;
    double outcome;
    bool treated;
    std::vector<double> covariates;
  };
  std::vector<std::string> unit_ids_;
  std::unordered_map<std::string, int> unit_lookup_;
  std::vector<std::string> covariate_names_;
  std::vector<Row> rows_;
};

// ---------------------------------------------------------------------------
// Loading from delimiter-separated text
// ---------------------------------------------------------------------------

struct PanelSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  // Exactly one of the two treatment encodings is used: a per-row 0/1
  // indicator column, or a per-unit adoption period column (missing/NA means
  // never treated). Both normalize to the same internal D_it.
  std::string treat = "treated";
  bool treat_is_start_period = false;
  std::vector<std::string> covariates;
  char delimiter = ',';
};

struct LoadReport {
  long rows_read = 0;
  std::vector<long> rejected_missing_outcome;    // 1-based data row numbers
  std::vector<long> rejected_missing_covariate;  // 1-based data row numbers
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == delim) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline bool is_missing(const std::string& s) {
  if (s.empty()) return true;
  return s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

// Strict decimal parse; no locale-dependent formats.
inline bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

inline bool parse_int(const std::string& s, int* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  *out = static_cast<int>(v);
  return true;
}

}  // namespace detail

inline PanelDataset load_panel(std::istream& in, const PanelSchema& schema,
                               LoadReport* report = nullptr) {
  std::string header_line;
  if (!std::getline(in, header_line))
    fail(errc::io_error, "empty input: no header row");
  const auto header = detail::split_line(header_line, schema.delimiter);

  auto column = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    fail(errc::missing_column, "column '" + name + "' not found in header");
    return -1;
  };

  const int c_unit = column(schema.unit);
  const int c_time = column(schema.time);
  const int c_outcome = column(schema.outcome);
  const int c_treat = column(schema.treat);
  std::vector<int> c_cov;
  for (const auto& name : schema.covariates) c_cov.push_back(column(name));

  PanelBuilder builder(schema.covariates);
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  struct PendingStart {
    int unit;
    long row;
    bool never;
    int start;
  };
  std::unordered_map<int, int> start_of_unit;  // treat_is_start_period mode
  std::vector<std::tuple<int, int, double, std::vector<double>, long>> pending;

  std::string line;
  long row_no = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row_no;
    rep.rows_read = row_no;
    const auto fields = detail::split_line(line, schema.delimiter);
    if (static_cast<int>(fields.size()) <= std::max({c_unit, c_time, c_outcome, c_treat}))
      fail(errc::io_error, "row " + std::to_string(row_no) + ": too few fields");

    const std::string& unit_id = fields[c_unit];
    int time = 0;
    if (!detail::parse_int(fields[c_time], &time))
      fail(errc::io_error, "row " + std::to_string(row_no) +
                               ": cannot parse period '" + fields[c_time] + "'");

    if (detail::is_missing(fields[c_outcome])) {
      rep.rejected_missing_outcome.push_back(row_no);
      continue;
    }
    double outcome = 0;
    if (!detail::parse_double(fields[c_outcome], &outcome) ||
        !std::isfinite(outcome))
      fail(errc::io_error, "row " + std::to_string(row_no) +
                               ": cannot parse outcome '" + fields[c_outcome] +
                               "'");

    std::vector<double> cov(c_cov.size());
    bool missing_cov = false;
    for (size_t c = 0; c < c_cov.size(); ++c) {
      const std::string& f = fields[c_cov[c]];
      if (detail::is_missing(f) || !detail::parse_double(f, &cov[c]) ||
          !std::isfinite(cov[c])) {
        missing_cov = true;
        break;
      }
    }
    if (missing_cov) {
      rep.rejected_missing_covariate.push_back(row_no);
      continue;
    }

    const int u = builder.add_unit(unit_id);
    if (schema.treat_is_start_period) {
      int start = PanelDataset::kNeverTreated;
      if (!detail::is_missing(fields[c_treat])) {
        if (!detail::parse_int(fields[c_treat], &start))
          fail(errc::io_error, "row " + std::to_string(row_no) +
                                   ": cannot parse adoption period '" +
                                   fields[c_treat] + "'");
      }
      auto it = start_of_unit.find(u);
      if (it == start_of_unit.end()) {
        start_of_unit.emplace(u, start);
      } else if (it->second != start) {
        fail(errc::invalid_argument,
             "row " + std::to_string(row_no) + ": unit '" + unit_id +
                 "' has inconsistent adoption periods");
      }
      pending.emplace_back(u, time, outcome, std::move(cov), row_no);
    } else {
      double d = 0;
      if (!detail::parse_double(fields[c_treat], &d) || (d != 0.0 && d != 1.0))
        fail(errc::io_error, "row " + std::to_string(row_no) +
                                 ": treatment must be 0 or 1, got '" +
                                 fields[c_treat] + "'");
      builder.add_observation(u, time, outcome, d == 1.0, cov);
    }
  }

  if (schema.treat_is_start_period) {
    for (auto& [u, time, outcome, cov, row] : pending) {
      const int start = start_of_unit[u];
      builder.add_observation(u, time, outcome, time >= start, cov);
    }
  }
  return builder.build();
}

// Round-trip companion of load_panel: emits the per-row 0/1 treatment form.
inline void write_panel(std::ostream& os, const PanelDataset& panel,
                        char delimiter = ',') {
  os << "unit" << delimiter << "time" << delimiter << "outcome" << delimiter
     << "treated";
  for (const auto& c : panel.covariate_names()) os << delimiter << c;
  os << '\n';
  for (long i = 0; i < panel.n_obs(); ++i) {
    os << panel.unit_id(panel.unit_of(i)) << delimiter << panel.time_of(i)
       << delimiter << format_double(panel.outcome(i), 17) << delimiter
       << (panel.treated(i) ? 1 : 0);
    for (int c = 0; c < panel.n_covariates(); ++c)
      os << delimiter << format_double(panel.covariate(i, c), 17);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Balance report
// ---------------------------------------------------------------------------

struct BalanceReport {
  bool balanced = true;
  std::vector<std::pair<int, long>> units_per_period;  // (time, count)
};

inline BalanceReport validate_balance(const PanelDataset& panel) {
  BalanceReport rep;
  rep.units_per_period.reserve(panel.n_periods());
  std::vector<long> counts(panel.n_periods(), 0);
  for (long i = 0; i < panel.n_obs(); ++i) counts[panel.period_of(i)]++;
  for (int p = 0; p < panel.n_periods(); ++p) {
    rep.units_per_period.emplace_back(panel.period_value(p), counts[p]);
    if (counts[p] != panel.n_units()) rep.balanced = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// First-difference view (two-period cross section)
// ---------------------------------------------------------------------------

struct FirstDifferenceView {
  const PanelDataset* panel = nullptr;
  int base_period = 0;
  int end_period = 0;
  std::vector<int> unit;              // panel unit indices, one row per unit
  std::vector<double> delta_outcome;  // Y_end - Y_base
  std::vector<std::uint8_t> treated;  // D_i at the end period
  Eigen::MatrixXd baseline_covariates;
  std::vector<std::string> covariate_names;
  std::vector<int> dropped_units;  // units lacking either endpoint
};

inline FirstDifferenceView first_difference(const PanelDataset& panel,
                                            int base_period, int end_period) {
  const int pb = panel.period_index(base_period);
  const int pe = panel.period_index(end_period);
  if (pb < 0 || pe < 0)
    fail(errc::invalid_argument, "first_difference: period not present");

  FirstDifferenceView v;
  v.panel = &panel;
  v.base_period = base_period;
  v.end_period = end_period;
  v.covariate_names = panel.covariate_names();
  std::vector<std::array<long, 2>> kept;
  for (int u = 0; u < panel.n_units(); ++u) {
    const long ib = panel.find(u, pb);
    const long ie = panel.find(u, pe);
    if (ib < 0 || ie < 0) {
      v.dropped_units.push_back(u);
      continue;
    }
    kept.push_back({ib, ie});
    v.unit.push_back(u);
  }
  if (v.unit.empty())
    fail(errc::empty_result, "first_difference: no unit has both periods");

  const long n = static_cast<long>(v.unit.size());
  v.delta_outcome.resize(n);
  v.treated.resize(n);
  v.baseline_covariates.resize(n, panel.n_covariates());
  for (long r = 0; r < n; ++r) {
    const long ib = kept[r][0], ie = kept[r][1];
    v.delta_outcome[r] = panel.outcome(ie) - panel.outcome(ib);
    v.treated[r] = panel.treated(ie) ? 1 : 0;
    for (int c = 0; c < panel.n_covariates(); ++c)
      v.baseline_covariates(r, c) = panel.covariate(ib, c);
  }
  return v;
}

// Pre/post averaged variant of the two-period view: outcomes are averaged
// over periods before and from `first_post_period` onwards. Covariates are
// taken from the earliest pre period present for each unit.
inline FirstDifferenceView first_difference_averaged(const PanelDataset& panel,
                                                     int first_post_period) {
  FirstDifferenceView v;
  v.panel = &panel;
  v.base_period = panel.periods().front();
  v.end_period = panel.periods().back();
  v.covariate_names = panel.covariate_names();

  std::vector<double> pre_sum, post_sum;
  for (int u = 0; u < panel.n_units(); ++u) {
    double pre = 0, post = 0;
    long n_pre = 0, n_post = 0;
    long first_pre_obs = -1;
    bool treated_post = false;
    for (long i = panel.unit_obs_begin(u); i < panel.unit_obs_end(u); ++i) {
      if (panel.time_of(i) < first_post_period) {
        pre += panel.outcome(i);
        if (n_pre == 0) first_pre_obs = i;
        ++n_pre;
      } else {
        post += panel.outcome(i);
        ++n_post;
        treated_post = treated_post || panel.treated(i);
      }
    }
    if (n_pre == 0 || n_post == 0) {
      v.dropped_units.push_back(u);
      continue;
    }
    v.unit.push_back(u);
    v.delta_outcome.push_back(post / n_post - pre / n_pre);
    v.treated.push_back(treated_post ? 1 : 0);
    pre_sum.push_back(static_cast<double>(first_pre_obs));
  }
  if (v.unit.empty())
    fail(errc::empty_result,
         "first_difference_averaged: no unit has both pre and post periods");

  const long n = static_cast<long>(v.unit.size());
  v.baseline_covariates.resize(n, panel.n_covariates());
  for (long r = 0; r < n; ++r) {
    const long ib = static_cast<long>(pre_sum[r]);
    for (int c = 0; c < panel.n_covariates(); ++c)
      v.baseline_covariates(r, c) = panel.covariate(ib, c);
  }
  return v;
}

}  // namespace spillover_did
