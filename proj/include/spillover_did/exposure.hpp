#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/errors.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/spatial.hpp"
#include "spillover_did/table.hpp"

namespace spillover_did {

// Exposure mapping families. Distance thresholds follow two documented
// conventions: "within" style thresholds are strict (d < dbar), while ring
// upper edges are inclusive, i.e. ring k covers (c_{k-1}, c_k]. The spillover
// indicator S uses the inclusive form d <= dbar so that ring dummies spanning
// (0, dbar] sum to S exactly.
struct ExposureSpec {
  enum class Kind {
    within_indicator,  // 1{d_nearest < dbar}
    within_count,      // #{treated j != i : d(i,j) < dbar}
    decay,             // exp(-alpha * d_nearest) * 1{d_nearest < cutoff}
    decay_count,       // sum_j treated exp(-alpha * d(i,j)), no cutoff
    rings,             // nearest-treated distance bin dummies
    rings_additive,    // treated counts per distance bin
  };

  Kind kind = Kind::within_indicator;
  double dbar = 0.0;
  double alpha = 0.0;
  double cutoff = kInfDistance;
  std::vector<double> cuts;

  static ExposureSpec WithinIndicator(double dbar) {
    ExposureSpec s;
    s.kind = Kind::within_indicator;
    s.dbar = dbar;
    s.validate();
    return s;
  }
  static ExposureSpec WithinCount(double dbar) {
    ExposureSpec s;
    s.kind = Kind::within_count;
    s.dbar = dbar;
    s.validate();
    return s;
  }
  static ExposureSpec Decay(double alpha, double cutoff) {
    ExposureSpec s;
    s.kind = Kind::decay;
    s.alpha = alpha;
    s.cutoff = cutoff;
    s.validate();
    return s;
  }
  static ExposureSpec DecayCount(double alpha) {
    ExposureSpec s;
    s.kind = Kind::decay_count;
    s.alpha = alpha;
    s.validate();
    return s;
  }
  static ExposureSpec Rings(std::vector<double> cuts) {
    ExposureSpec s;
    s.kind = Kind::rings;
    s.cuts = std::move(cuts);
    s.validate();
    return s;
  }
  static ExposureSpec RingsAdditive(std::vector<double> cuts) {
    ExposureSpec s;
    s.kind = Kind::rings_additive;
    s.cuts = std::move(cuts);
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
      case Kind::within_indicator:
      case Kind::within_count:
        if (!(dbar > 0)) fail(errc::invalid_argument, "exposure: dbar must be > 0");
        break;
      case Kind::decay:
        if (!(alpha > 0)) fail(errc::invalid_argument, "exposure: alpha must be > 0");
        if (!(cutoff > 0)) fail(errc::invalid_argument, "exposure: cutoff must be > 0");
        break;
      case Kind::decay_count:
        if (!(alpha > 0)) fail(errc::invalid_argument, "exposure: alpha must be > 0");
        break;
      case Kind::rings:
      case Kind::rings_additive:
        if (cuts.size() < 2)
          fail(errc::invalid_argument, "exposure: rings need at least two cuts");
        if (!(cuts.front() >= 0))
          fail(errc::invalid_argument, "exposure: first cut must be >= 0");
        for (size_t k = 1; k < cuts.size(); ++k)
          if (!(cuts[k] > cuts[k - 1]))
            fail(errc::invalid_argument, "exposure: cuts must be strictly increasing");
        break;
    }
  }

  bool is_scalar() const {
    return kind != Kind::rings && kind != Kind::rings_additive;
  }

  int n_features() const {
    return is_scalar() ? 1 : static_cast<int>(cuts.size()) - 1;
  }

  // The radius that defines the spillover indicator S (d <= outer). The
  // additive decay mapping has unbounded support, so any unit with another
  // treated unit present counts as exposed.
  double outer_radius() const {
    switch (kind) {
      case Kind::within_indicator:
      case Kind::within_count:
        return dbar;
      case Kind::decay:
        return cutoff;
      case Kind::decay_count:
        return kInfDistance;
      case Kind::rings:
      case Kind::rings_additive:
        return cuts.back();
    }
    return kInfDistance;
  }

  // Ring containing d under the (c_{k-1}, c_k] convention, or -1.
  int ring_of(double d) const {
    if (!std::isfinite(d)) return -1;
    if (cuts.empty()) return -1;
    if (d <= cuts.front() || d > cuts.back()) return -1;
    const auto it = std::lower_bound(cuts.begin(), cuts.end(), d);
    return static_cast<int>(it - cuts.begin()) - 1;
  }

  std::string ring_label(int k) const {
    return "(" + format_double(cuts[k], 10) + "," +
           format_double(cuts[k + 1], 10) + "]";
  }

  std::vector<std::string> feature_names() const {
    if (is_scalar()) return {"h"};
    std::vector<std::string> names;
    for (int k = 0; k < n_features(); ++k)
      names.push_back("ring_" + ring_label(k));
    return names;
  }

  std::string describe() const {
    switch (kind) {
      case Kind::within_indicator:
        return "within(" + format_double(dbar, 10) + ")";
      case Kind::within_count:
        return "within_count(" + format_double(dbar, 10) + ")";
      case Kind::decay:
        return "decay(" + format_double(alpha, 10) + "," +
               format_double(cutoff, 10) + ")";
      case Kind::decay_count:
        return "decay_count(" + format_double(alpha, 10) + ")";
      case Kind::rings:
      case Kind::rings_additive: {
        std::string s = kind == Kind::rings ? "rings(" : "rings_additive(";
        for (size_t k = 0; k < cuts.size(); ++k) {
          if (k) s += ",";
          s += format_double(cuts[k], 10);
        }
        return s + ")";
      }
    }
    return "?";
  }
};

// Whether exposure at period t is computed from the units treated in t
// (default, consistent with no treatment implying no exposure) or from the
// ever-treated set.
enum class TreatedSetMode { contemporaneous, ever_treated };

// Per-observation exposure values, aligned with the panel's observation
// order. `features` holds h (one column for scalar mappings, one column per
// ring otherwise); S is the spillover indicator; ring_index locates the
// nearest treated distance among the cuts (ring specs only).
struct ExposureMatrix {
  ExposureSpec spec;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd features;            // n_obs x n_features
  std::vector<std::uint8_t> spillover; // S_it
  std::vector<int> ring_index;         // -1 when none
  std::vector<double> nearest_treated; // +inf when no other treated unit

  int n_features() const { return static_cast<int>(features.cols()); }
  bool exposed(long obs) const { return spillover[obs] != 0; }
};

inline ExposureMatrix compute_exposure(
    const PanelDataset& panel, const DistanceProvider& distances,
    const ExposureSpec& spec,
    TreatedSetMode mode = TreatedSetMode::contemporaneous) {
  spec.validate();
  if (distances.size() != panel.n_units())
    fail(errc::missing_coordinates,
         "distance provider does not cover every panel unit");

  const int n_units = panel.n_units();
  const long n_obs = panel.n_obs();
  const int n_feat = spec.n_features();

  ExposureMatrix em;
  em.spec = spec;
  em.feature_names = spec.feature_names();
  em.features = Eigen::MatrixXd::Zero(n_obs, n_feat);
  em.spillover.assign(n_obs, 0);
  em.ring_index.assign(n_obs, -1);
  em.nearest_treated.assign(n_obs, kInfDistance);

  // Running state per unit, updated as units adopt treatment.
  std::vector<double> d_near(n_units, kInfDistance);
  std::vector<double> count_within(n_units, 0.0);
  std::vector<double> decay_sum(n_units, 0.0);
  Eigen::MatrixXd annulus;
  if (spec.kind == ExposureSpec::Kind::rings_additive)
    annulus = Eigen::MatrixXd::Zero(n_units, n_feat);

  auto absorb_adopter = [&](int a) {
    for (int i = 0; i < n_units; ++i) {
      if (i == a) continue;
      const double d = distances.between(i, a);
      if (d < d_near[i]) d_near[i] = d;
      switch (spec.kind) {
        case ExposureSpec::Kind::within_count:
          if (d < spec.dbar) count_within[i] += 1.0;
          break;
        case ExposureSpec::Kind::decay_count:
          decay_sum[i] += std::exp(-spec.alpha * d);
          break;
        case ExposureSpec::Kind::rings_additive: {
          const int r = spec.ring_of(d);
          if (r >= 0) annulus(i, r) += 1.0;
          break;
        }
        default:
          break;
      }
    }
  };

  // Group observations by period (observation order is unit-major).
  std::vector<std::vector<long>> obs_by_period(panel.n_periods());
  for (long i = 0; i < n_obs; ++i) obs_by_period[panel.period_of(i)].push_back(i);

  const double outer = spec.outer_radius();

  std::vector<int> by_start;
  for (int u = 0; u < n_units; ++u)
    if (panel.ever_treated(u)) by_start.push_back(u);
  std::sort(by_start.begin(), by_start.end(), [&](int a, int b) {
    if (panel.treat_start(a) != panel.treat_start(b))
      return panel.treat_start(a) < panel.treat_start(b);
    return a < b;
  });
  size_t cursor = 0;

  if (mode == TreatedSetMode::ever_treated)
    while (cursor < by_start.size()) absorb_adopter(by_start[cursor++]);

  for (int p = 0; p < panel.n_periods(); ++p) {
    if (mode == TreatedSetMode::contemporaneous) {
      const int t = panel.period_value(p);
      while (cursor < by_start.size() &&
             panel.treat_start(by_start[cursor]) <= t)
        absorb_adopter(by_start[cursor++]);
    }

    for (long i : obs_by_period[p]) {
      const int u = panel.unit_of(i);
      const double d = d_near[u];
      em.nearest_treated[i] = d;
      em.spillover[i] = (std::isfinite(d) && d <= outer) ? 1 : 0;
      switch (spec.kind) {
        case ExposureSpec::Kind::within_indicator:
          em.features(i, 0) = (std::isfinite(d) && d < spec.dbar) ? 1.0 : 0.0;
          break;
        case ExposureSpec::Kind::within_count:
          em.features(i, 0) = count_within[u];
          break;
        case ExposureSpec::Kind::decay:
          em.features(i, 0) = (std::isfinite(d) && d < spec.cutoff)
                                  ? std::exp(-spec.alpha * d)
                                  : 0.0;
          break;
        case ExposureSpec::Kind::decay_count:
          em.features(i, 0) = decay_sum[u];
          break;
        case ExposureSpec::Kind::rings: {
          const int r = spec.ring_of(d);
          em.ring_index[i] = r;
          if (r >= 0) em.features(i, r) = 1.0;
          break;
        }
        case ExposureSpec::Kind::rings_additive: {
          em.ring_index[i] = spec.ring_of(d);
          em.features.row(i) = annulus.row(u);
          break;
        }
      }
    }
  }
  return em;
}

// Per-unit first exposed period and per-observation relative time
// k = t - first period with S = 1. Undefined entries use sentinels.
struct SpilloverEventTime {
  static constexpr int kUndefined = std::numeric_limits<int>::min();
  std::vector<int> first_exposed_time;  // per unit, kUndefined when never
  std::vector<int> rel_time;            // per obs, kUndefined when never
};

inline SpilloverEventTime spillover_event_time(const PanelDataset& panel,
                                               const ExposureMatrix& em) {
  SpilloverEventTime out;
  out.first_exposed_time.assign(panel.n_units(), SpilloverEventTime::kUndefined);
  out.rel_time.assign(panel.n_obs(), SpilloverEventTime::kUndefined);
  for (int u = 0; u < panel.n_units(); ++u) {
    for (long i = panel.unit_obs_begin(u); i < panel.unit_obs_end(u); ++i) {
      if (em.spillover[i]) {
        out.first_exposed_time[u] = panel.time_of(i);
        break;
      }
    }
  }
  for (long i = 0; i < panel.n_obs(); ++i) {
    const int first = out.first_exposed_time[panel.unit_of(i)];
    if (first != SpilloverEventTime::kUndefined)
      out.rel_time[i] = panel.time_of(i) - first;
  }
  return out;
}

// Tidy audit export: unit, time, feature columns, S, ring_index, nearest.
inline void write_exposure(std::ostream& os, const PanelDataset& panel,
                           const ExposureMatrix& em, char delimiter = ',') {
  os << "unit" << delimiter << "time";
  for (const auto& name : em.feature_names) os << delimiter << csv_quote(name);
  os << delimiter << "S" << delimiter << "ring_index" << delimiter
     << "nearest_treated\n";
  for (long i = 0; i < panel.n_obs(); ++i) {
    os << panel.unit_id(panel.unit_of(i)) << delimiter << panel.time_of(i);
    for (int c = 0; c < em.n_features(); ++c)
      os << delimiter << format_double(em.features(i, c));
    os << delimiter << (em.spillover[i] ? 1 : 0) << delimiter
       << em.ring_index[i] << delimiter;
    if (std::isfinite(em.nearest_treated[i]))
      os << format_double(em.nearest_treated[i]);
    else
      os << "inf";
    os << '\n';
  }
}

}  // namespace spillover_did
