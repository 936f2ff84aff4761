#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/errors.hpp"
#include "spillover_did/exposure.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/regression.hpp"
#include "spillover_did/rng.hpp"
#include "spillover_did/table.hpp"

namespace spillover_did {

// ---------------------------------------------------------------------------
// Event-study frame
// ---------------------------------------------------------------------------

struct EventWindow {
  std::optional<int> k_min;
  std::optional<int> k_max;
  bool bin_ends = false;  // clamp out-of-window periods into the endpoints
};

// Relative-time bookkeeping: K_it counts periods since treatment turns on
// (-1 the year before, 0 the adoption year); the spillover analog counts from
// the first period with S_it = 1.
struct EventStudyFrame {
  static constexpr int kUndefined = std::numeric_limits<int>::min();

  int k_min = 0;
  int k_max = 0;
  bool binned = false;
  std::vector<int> rel_time;        // per obs; kUndefined for never-treated
  std::vector<int> rel_time_spill;  // per obs; kUndefined for never-exposed

  int clamp(int k) const {
    if (binned) return std::min(std::max(k, k_min), k_max);
    return k;
  }
  bool in_window(int k) const { return clamp(k) >= k_min && clamp(k) <= k_max; }
};

inline EventStudyFrame build_event_frame(const PanelDataset& panel,
                                         const ExposureMatrix& em,
                                         const EventWindow& window = {}) {
  EventStudyFrame f;
  f.rel_time.assign(panel.n_obs(), EventStudyFrame::kUndefined);
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (long i = 0; i < panel.n_obs(); ++i) {
    const int u = panel.unit_of(i);
    if (!panel.ever_treated(u)) continue;
    const int k = panel.time_of(i) - panel.treat_start(u);
    f.rel_time[i] = k;
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  if (lo > hi) {
    lo = 0;
    hi = 0;
  }
  f.k_min = window.k_min.value_or(lo);
  f.k_max = window.k_max.value_or(hi);
  f.binned = window.bin_ends;
  f.rel_time_spill = spillover_event_time(panel, em).rel_time;
  return f;
}

// ---------------------------------------------------------------------------
// Two-stage estimation
// ---------------------------------------------------------------------------

// Second-stage variable blocks. Event-study blocks expand into one dummy per
// relative period; `pre_trends` adds not-yet-treated dummies for k < 0.
struct SecondStageMenu {
  bool total = false;
  bool total_event = false;
  bool direct = false;
  bool direct_event = false;
  bool spill_control = false;
  bool spill_control_event = false;
  bool spill_control_rings = false;
  bool spill_treated = false;  // D*S block; off unless explicitly requested
  bool pre_trends = false;

  static SecondStageMenu Total() {
    SecondStageMenu m;
    m.total = true;
    return m;
  }
  static SecondStageMenu EventStudy() {
    SecondStageMenu m;
    m.total_event = true;
    m.pre_trends = true;
    return m;
  }
};

struct TwoStageFit {
  // First stage: unobserved-outcome model fitted on clean observations
  // (D_it = 0, S_it = 0) only.
  std::vector<double> unit_effects;  // NaN when the unit has no clean obs
  std::vector<double> time_effects;  // NaN when the period has no clean obs
  std::vector<double> y_tilde;       // NaN when not imputable
  std::vector<std::uint8_t> imputable;
  long n_clean = 0;
  long n_excluded_exposed_controls = 0;
  long n_non_imputable = 0;
  std::vector<int> unidentified_units;
  int first_stage_iterations = 0;

  // Second stage.
  RegressionFit second;
  std::vector<int> term_rel_time;  // per coefficient; INT_MIN when not an
                                   // event-study term
  std::vector<std::string> term_group;
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

}  // namespace detail

// Stage 1: estimate unit and time effects on the clean subsample and
// residualize every observation that both effects cover. Observations whose
// unit or period never appears in the clean subsample (or sits in a different
// connected component) are flagged non-imputable and excluded from stage 2.
inline TwoStageFit first_stage(const PanelDataset& panel,
                               const ExposureMatrix& em, double tol = 1e-10,
                               int max_iter = 100000) {
  const long n = panel.n_obs();
  if (static_cast<long>(em.spillover.size()) != n)
    fail(errc::invalid_argument, "exposure matrix does not match panel");

  TwoStageFit fit;
  const int nu = panel.n_units();
  const int np = panel.n_periods();

  std::vector<char> clean(n, 0);
  for (long i = 0; i < n; ++i) {
    const bool d = panel.treated(i);
    const bool s = em.spillover[i] != 0;
    clean[i] = (!d && !s) ? 1 : 0;
    if (!d && s) fit.n_excluded_exposed_controls++;
    if (clean[i]) fit.n_clean++;
  }
  if (fit.n_clean == 0)
    fail(errc::no_unexposed_controls,
         "first stage has no untreated, unexposed observations");

  // Connectivity of the unit/period bipartite graph on clean observations.
  detail::UnionFind dsu(nu + np);
  std::vector<long> unit_clean(nu, 0), period_clean(np, 0);
  for (long i = 0; i < n; ++i) {
    if (!clean[i]) continue;
    unit_clean[panel.unit_of(i)]++;
    period_clean[panel.period_of(i)]++;
    dsu.unite(panel.unit_of(i), nu + panel.period_of(i));
  }
  for (int u = 0; u < nu; ++u)
    if (unit_clean[u] == 0) fit.unidentified_units.push_back(u);

  // Alternating means on the clean subsample.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mu(nu, 0.0), lam(np, 0.0);
  int it = 0;
  for (; it < max_iter; ++it) {
    std::vector<double> mu_new(nu, 0.0);
    for (long i = 0; i < n; ++i)
      if (clean[i]) mu_new[panel.unit_of(i)] += panel.outcome(i) - lam[panel.period_of(i)];
    for (int u = 0; u < nu; ++u)
      if (unit_clean[u]) mu_new[u] /= static_cast<double>(unit_clean[u]);
    std::vector<double> lam_new(np, 0.0);
    for (long i = 0; i < n; ++i)
      if (clean[i]) lam_new[panel.period_of(i)] += panel.outcome(i) - mu_new[panel.unit_of(i)];
    for (int p = 0; p < np; ++p)
      if (period_clean[p]) lam_new[p] /= static_cast<double>(period_clean[p]);
    double delta = 0.0;
    for (int p = 0; p < np; ++p) delta = std::max(delta, std::abs(lam_new[p] - lam[p]));
    for (int u = 0; u < nu; ++u) delta = std::max(delta, std::abs(mu_new[u] - mu[u]));
    mu = std::move(mu_new);
    lam = std::move(lam_new);
    if (delta < tol) break;
  }
  if (it == max_iter)
    fail(errc::non_convergence, "first stage did not converge");
  fit.first_stage_iterations = it + 1;

  fit.unit_effects.assign(nu, nan);
  fit.time_effects.assign(np, nan);
  for (int u = 0; u < nu; ++u)
    if (unit_clean[u]) fit.unit_effects[u] = mu[u];
  for (int p = 0; p < np; ++p)
    if (period_clean[p]) fit.time_effects[p] = lam[p];

  fit.y_tilde.assign(n, nan);
  fit.imputable.assign(n, 0);
  for (long i = 0; i < n; ++i) {
    const int u = panel.unit_of(i);
    const int p = panel.period_of(i);
    if (unit_clean[u] == 0 || period_clean[p] == 0 ||
        dsu.find(u) != dsu.find(nu + p)) {
      fit.n_non_imputable++;
      continue;
    }
    fit.imputable[i] = 1;
    fit.y_tilde[i] = panel.outcome(i) - mu[u] - lam[p];
  }
  return fit;
}

// Stage 2: regress the residualized outcome on the selected treatment and
// spillover dummies. No constant and no fixed effects; coefficients are
// averages of y_tilde over the dummy cells relative to the imputed
// counterfactual. Empty cells are dropped with a warning.
inline void second_stage(TwoStageFit& fit, const PanelDataset& panel,
                         const ExposureMatrix& em, const EventStudyFrame& frame,
                         const SecondStageMenu& menu) {
  const long n = panel.n_obs();
  std::vector<long> rows;
  rows.reserve(n);
  for (long i = 0; i < n; ++i)
    if (fit.imputable[i]) rows.push_back(i);
  const long m = static_cast<long>(rows.size());
  if (m == 0) fail(errc::empty_result, "second stage has no imputable rows");

  struct Col {
    std::string name;
    std::string group;
    int rel_time;
    Eigen::VectorXd values;
  };
  std::vector<Col> cols;
  auto add = [&](const std::string& name, const std::string& group, int k) -> Eigen::VectorXd& {
    cols.push_back({name, group, k, Eigen::VectorXd::Zero(m)});
    return cols.back().values;
  };
  auto klabel = [](int k) { return "[" + std::to_string(k) + "]"; };

  const int undef = EventStudyFrame::kUndefined;

  if (menu.total) {
    auto& v = add("total", "treatment", undef);
    for (long r = 0; r < m; ++r) v(r) = panel.treated(rows[r]) ? 1.0 : 0.0;
  }
  if (menu.total_event) {
    for (int k = std::max(0, frame.k_min); k <= frame.k_max; ++k) {
      auto& v = add("total" + klabel(k), "treatment", k);
      for (long r = 0; r < m; ++r) {
        const long i = rows[r];
        if (!panel.treated(i) || frame.rel_time[i] == undef) continue;
        const int kk = frame.clamp(frame.rel_time[i]);
        if (kk == k) v(r) = 1.0;
      }
    }
  }
  if (menu.direct) {
    auto& v = add("direct", "treatment", undef);
    for (long r = 0; r < m; ++r) {
      const long i = rows[r];
      v(r) = (panel.treated(i) && !em.spillover[i]) ? 1.0 : 0.0;
    }
  }
  if (menu.direct_event) {
    for (int k = std::max(0, frame.k_min); k <= frame.k_max; ++k) {
      auto& v = add("direct" + klabel(k), "treatment", k);
      for (long r = 0; r < m; ++r) {
        const long i = rows[r];
        if (!panel.treated(i) || em.spillover[i] || frame.rel_time[i] == undef)
          continue;
        if (frame.clamp(frame.rel_time[i]) == k) v(r) = 1.0;
      }
    }
  }
  if (menu.pre_trends) {
    for (int k = frame.k_min; k < 0; ++k) {
      auto& v = add("pre" + klabel(k), "pretrend", k);
      for (long r = 0; r < m; ++r) {
        const long i = rows[r];
        if (frame.rel_time[i] == undef || panel.treated(i)) continue;
        if (frame.clamp(frame.rel_time[i]) == k) v(r) = 1.0;
      }
    }
  }
  if (menu.spill_control) {
    auto& v = add("spill_control", "spillover_control", undef);
    for (long r = 0; r < m; ++r) {
      const long i = rows[r];
      v(r) = (!panel.treated(i) && em.spillover[i]) ? 1.0 : 0.0;
    }
  }
  if (menu.spill_control_event) {
    int hi = 0;
    for (long r = 0; r < m; ++r)
      if (frame.rel_time_spill[rows[r]] != undef)
        hi = std::max(hi, frame.clamp(frame.rel_time_spill[rows[r]]));
    for (int k = 0; k <= hi; ++k) {
      auto& v = add("spill_control" + klabel(k), "spillover_control", k);
      for (long r = 0; r < m; ++r) {
        const long i = rows[r];
        if (panel.treated(i) || !em.spillover[i]) continue;
        if (frame.rel_time_spill[i] == undef) continue;
        if (frame.clamp(frame.rel_time_spill[i]) == k) v(r) = 1.0;
      }
    }
  }
  if (menu.spill_control_rings) {
    if (em.spec.kind != ExposureSpec::Kind::rings &&
        em.spec.kind != ExposureSpec::Kind::rings_additive)
      fail(errc::invalid_argument,
           "spill_control_rings requires a rings exposure spec");
    for (int c = 0; c < em.n_features(); ++c) {
      auto& v = add("spill_ring_" + em.spec.ring_label(c), "spillover_control",
                    undef);
      for (long r = 0; r < m; ++r) {
        const long i = rows[r];
        if (!panel.treated(i)) v(r) = em.features(i, c);
      }
    }
  }
  if (menu.spill_treated) {
    auto& v = add("spill_treated", "spillover_treated", undef);
    for (long r = 0; r < m; ++r) {
      const long i = rows[r];
      v(r) = (panel.treated(i) && em.spillover[i]) ? 1.0 : 0.0;
    }
  }
  if (cols.empty())
    fail(errc::invalid_argument, "second stage menu selects no variables");

  DesignMatrix d;
  d.y.resize(m);
  d.unit.resize(m);
  d.time.resize(m);
  for (long r = 0; r < m; ++r) {
    d.y(r) = fit.y_tilde[rows[r]];
    d.unit[r] = panel.unit_of(rows[r]);
    d.time[r] = panel.period_of(rows[r]);
  }
  d.X.resize(m, static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    d.names.push_back(cols[c].name);
    d.X.col(static_cast<Eigen::Index>(c)) = cols[c].values;
  }

  const auto dropped = drop_zero_columns(d);
  OlsOptions opt;
  opt.vcov = VcovSpec::ClusterByUnit();
  fit.second = ols_fit(d, opt);
  for (const auto& name : dropped)
    fit.second.warnings.push_back("empty cell dropped: " + name);
  fit.second.notes.push_back(
      "second-stage standard errors ignore first-stage estimation; use the "
      "cluster bootstrap for inference");

  fit.term_rel_time.clear();
  fit.term_group.clear();
  for (const auto& name : fit.second.names) {
    for (const auto& col : cols) {
      if (col.name == name) {
        fit.term_rel_time.push_back(col.rel_time);
        fit.term_group.push_back(col.group);
        break;
      }
    }
  }
}

inline TwoStageFit two_stage_estimate(const PanelDataset& panel,
                                      const ExposureMatrix& em,
                                      const EventStudyFrame& frame,
                                      const SecondStageMenu& menu) {
  TwoStageFit fit = first_stage(panel, em);
  second_stage(fit, panel, em, frame, menu);
  return fit;
}

inline CoefficientTable tidy(const TwoStageFit& fit, bool include_vcov = false) {
  CoefficientTable t;
  for (size_t i = 0; i < fit.second.names.size(); ++i) {
    CoefRow row;
    row.term = fit.second.names[i];
    row.estimate = fit.second.coef(static_cast<Eigen::Index>(i));
    row.std_error = fit.second.se(static_cast<int>(i));
    row.group = fit.term_group[i];
    if (fit.term_rel_time[i] != EventStudyFrame::kUndefined)
      row.relative_time = fit.term_rel_time[i];
    t.rows.push_back(row);
  }
  if (include_vcov) t.vcov = fit.second.vcov;
  t.notes = fit.second.notes;
  for (const auto& w : fit.second.warnings) t.notes.push_back("warning: " + w);
  return t;
}

// ---------------------------------------------------------------------------
// Cluster bootstrap
// ---------------------------------------------------------------------------

struct BootstrapResult {
  std::vector<std::string> names;
  Eigen::VectorXd estimate;     // point estimates from the original sample
  Eigen::MatrixXd vcov;
  Eigen::VectorXd ci_lower;     // percentile 2.5%
  Eigen::VectorXd ci_upper;     // percentile 97.5%
  int n_success = 0;
  int n_failed = 0;

  double se(int i) const { return std::sqrt(std::max(0.0, vcov(i, i))); }
};

// Nonparametric bootstrap resampling whole unit histories with replacement;
// both stages are re-run per replication. Replication r draws from the
// stream f(seed, r), so results are deterministic for a given seed and
// independent of the parallelism degree.
inline BootstrapResult bootstrap_vcov(const PanelDataset& panel,
                                      const ExposureMatrix& em,
                                      const EventWindow& window,
                                      const SecondStageMenu& menu, int B,
                                      std::uint64_t seed, int n_threads = 1) {
  if (B < 2) fail(errc::invalid_argument, "bootstrap needs B >= 2");

  const EventStudyFrame base_frame = build_event_frame(panel, em, window);
  const TwoStageFit base = two_stage_estimate(panel, em, base_frame, menu);

  BootstrapResult out;
  out.names = base.second.names;
  out.estimate = base.second.coef;
  const int k = static_cast<int>(out.names.size());
  const int nu = panel.n_units();

  std::vector<Eigen::VectorXd> draws(B);
  std::vector<char> ok(B, 0);

  auto run_rep = [&](int r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    PanelBuilder builder(panel.covariate_names());
    std::vector<long> gather;
    gather.reserve(panel.n_obs());
    for (int d = 0; d < nu; ++d) {
      const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(nu)));
      const int nid = builder.add_unit(panel.unit_id(u) + "#" + std::to_string(d));
      std::vector<double> cov(panel.n_covariates());
      for (long i = panel.unit_obs_begin(u); i < panel.unit_obs_end(u); ++i) {
        for (int c = 0; c < panel.n_covariates(); ++c) cov[c] = panel.covariate(i, c);
        builder.add_observation(nid, panel.time_of(i), panel.outcome(i),
                                panel.treated(i), cov);
        gather.push_back(i);
      }
    }
    PanelDataset resampled = builder.build();

    // Exposure and event times travel with the unit histories; they are not
    // recomputed from the resampled geography.
    ExposureMatrix rem;
    rem.spec = em.spec;
    rem.feature_names = em.feature_names;
    const long rn = resampled.n_obs();
    rem.features.resize(rn, em.features.cols());
    rem.spillover.resize(rn);
    rem.ring_index.resize(rn);
    rem.nearest_treated.resize(rn);
    EventStudyFrame rframe;
    rframe.k_min = base_frame.k_min;
    rframe.k_max = base_frame.k_max;
    rframe.binned = base_frame.binned;
    rframe.rel_time.resize(rn);
    rframe.rel_time_spill.resize(rn);
    for (long j = 0; j < rn; ++j) {
      const long i = gather[j];
      rem.features.row(j) = em.features.row(i);
      rem.spillover[j] = em.spillover[i];
      rem.ring_index[j] = em.ring_index[i];
      rem.nearest_treated[j] = em.nearest_treated[i];
      rframe.rel_time[j] = base_frame.rel_time[i];
      rframe.rel_time_spill[j] = base_frame.rel_time_spill[i];
    }

    try {
      const TwoStageFit rep = two_stage_estimate(resampled, rem, rframe, menu);
      Eigen::VectorXd v(k);
      for (int c = 0; c < k; ++c) {
        const int idx = rep.second.index_of(out.names[c]);
        if (idx < 0) return;  // cell lost in the resample: failed replication
        v(c) = rep.second.coef(idx);
      }
      draws[r] = std::move(v);
      ok[r] = 1;
    } catch (const Error&) {
      // failed replication (rank deficiency, empty stage, ...)
    }
  };

  if (n_threads <= 1) {
    for (int r = 0; r < B; ++r) run_rep(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w]() {
        for (int r = w; r < B; r += n_threads) run_rep(r);
      });
    for (auto& th : pool) th.join();
  }

  for (int r = 0; r < B; ++r) (ok[r] ? out.n_success : out.n_failed)++;
  if (out.n_failed > B / 10)
    fail(errc::too_many_failures,
         "bootstrap: " + std::to_string(out.n_failed) + " of " +
             std::to_string(B) + " replications failed");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < B; ++r)
    if (ok[r]) mean += draws[r];
  mean /= static_cast<double>(out.n_success);
  out.vcov = Eigen::MatrixXd::Zero(k, k);
  for (int r = 0; r < B; ++r)
    if (ok[r]) {
      const Eigen::VectorXd c = draws[r] - mean;
      out.vcov += c * c.transpose();
    }
  out.vcov /= static_cast<double>(out.n_success - 1);

  out.ci_lower.resize(k);
  out.ci_upper.resize(k);
  std::vector<double> col;
  col.reserve(out.n_success);
  for (int c = 0; c < k; ++c) {
    col.clear();
    for (int r = 0; r < B; ++r)
      if (ok[r]) col.push_back(draws[r](c));
    std::sort(col.begin(), col.end());
    const auto quantile = [&](double q) {
      const double pos = q * (static_cast<double>(col.size()) - 1);
      const size_t lo = static_cast<size_t>(pos);
      const size_t hi = std::min(lo + 1, col.size() - 1);
      const double w = pos - static_cast<double>(lo);
      return (1 - w) * col[lo] + w * col[hi];
    };
    out.ci_lower(c) = quantile(0.025);
    out.ci_upper(c) = quantile(0.975);
  }
  return out;
}

}  // namespace spillover_did
