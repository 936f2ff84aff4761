#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/did.hpp"
#include "spillover_did/errors.hpp"
#include "spillover_did/exposure.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/regression.hpp"
#include "spillover_did/rng.hpp"
#include "spillover_did/spatial.hpp"

namespace spillover_did {

// ---------------------------------------------------------------------------
// Data-generating process
// ---------------------------------------------------------------------------

struct GridGeometry {
  int rows = 25;
  int cols = 40;
  double spacing_miles = 10.0;
};

enum class Assignment { uniform_random, clustered };
enum class Timing { common, staggered };

// Panel DGP: y_it = lambda_t + mu_i + tau_it D_it
//                 + beta_c (1-D_it) h_it + beta_t D_it h_it + eps_it
// with tau_it = direct_effect + dynamic_slope * (K_it + 1), h_it computed
// from the contemporaneous treated set under `true_spec`, and
// lambda_t ~ N(0.2 t, 0.1^2), mu_i ~ N(6, 2^2), eps_it ~ N(0, 2^2) by
// default. When a normalization target is set, the spillover coefficient is
// rescaled per replication so the realized mean spillover across control
// observations (in periods with treatment on) equals the target.
struct DGPConfig {
  GridGeometry grid;
  std::optional<PointSet> user_points;

  int n_periods = 20;
  std::optional<int> treat_onset;  // default: n_periods / 2 + 1 (times 1-based)
  Timing timing = Timing::common;
  int adopt_min = 0, adopt_max = 0;  // staggered adoption window (times)

  double treated_fraction = 0.1;
  Assignment assignment = Assignment::uniform_random;

  ExposureSpec true_spec = ExposureSpec::WithinIndicator(40.0);

  double direct_effect = 2.0;
  double dynamic_slope = 0.0;
  double beta_spill_control = 0.0;
  std::optional<double> normalize_control_mean;  // e.g. -0.263
  double beta_spill_treated = 0.0;
  std::optional<double> normalize_treated_mean;

  double lambda_trend = 0.2, lambda_sd = 0.1;
  double mu_mean = 6.0, mu_sd = 2.0;
  double eps_sd = 2.0;

  std::uint64_t seed = 1;

  int onset() const { return treat_onset.value_or(n_periods / 2 + 1); }

  void validate() const {
    if (!(treated_fraction > 0) || !(treated_fraction < 1))
      fail(errc::invalid_argument, "treated fraction must be in (0, 1)");
    if (lambda_sd < 0 || mu_sd < 0 || eps_sd < 0)
      fail(errc::invalid_argument, "variances must be non-negative");
    if (n_periods < 2) fail(errc::invalid_argument, "need at least two periods");
    true_spec.validate();
  }
};

struct EffectOracle {
  double tau_direct = 0.0;
  double tau_total = 0.0;
  double tau_spill_control = 0.0;  // mean over control obs in active periods
  double tau_spill_treated = 0.0;  // mean over treated obs
  double beta_control = 0.0;
  double beta_treated = 0.0;

  // Switching effect at exposure h for this DGP's potential-outcome function.
  double tau_switch(double h) const {
    return tau_direct + (beta_treated - beta_control) * h;
  }
};

struct GeneratedPanel {
  PanelDataset panel;
  PointSet points;
  ExposureMatrix true_exposure;
  EffectOracle oracle;
};

namespace detail {

inline PointSet grid_points(const GridGeometry& g) {
  PointSet pts(Metric::planar);
  int idx = 0;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      pts.add("u" + std::to_string(idx++), c * g.spacing_miles,
              r * g.spacing_miles);
  return pts;
}

inline std::vector<int> draw_treated(const PointSet& pts, int n_treated,
                                     Assignment assignment, Rng& rng) {
  const int n = pts.size();
  std::vector<int> treated;
  if (assignment == Assignment::uniform_random) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = 0; i < n_treated; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
      std::swap(perm[i], perm[j]);
      treated.push_back(perm[i]);
    }
    std::sort(treated.begin(), treated.end());
    return treated;
  }
  // Clustered: seed unit plus contiguous nearest-neighbor growth.
  const int seed_unit = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  std::vector<char> in(n, 0);
  std::vector<double> dist_to_cluster(n, kInfDistance);
  treated.push_back(seed_unit);
  in[seed_unit] = 1;
  for (int i = 0; i < n; ++i)
    if (!in[i]) dist_to_cluster[i] = pts.distance(i, seed_unit);
  while (static_cast<int>(treated.size()) < n_treated) {
    int pick = -1;
    double best = kInfDistance;
    for (int i = 0; i < n; ++i)
      if (!in[i] && dist_to_cluster[i] < best) {
        best = dist_to_cluster[i];
        pick = i;
      }
    treated.push_back(pick);
    in[pick] = 1;
    for (int i = 0; i < n; ++i)
      if (!in[i])
        dist_to_cluster[i] = std::min(dist_to_cluster[i], pts.distance(i, pick));
  }
  std::sort(treated.begin(), treated.end());
  return treated;
}

}  // namespace detail

// Deterministic per (config.seed, replication); the same pair regenerates the
// identical panel bit for bit.
inline GeneratedPanel generate_panel(const DGPConfig& config, int replication) {
  config.validate();
  Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(replication));

  PointSet pts = config.user_points ? *config.user_points
                                    : detail::grid_points(config.grid);
  const int n = pts.size();
  const int n_treated =
      std::max(1, static_cast<int>(std::lround(config.treated_fraction * n)));
  if (n_treated >= n)
    fail(errc::invalid_argument, "treated fraction leaves no control units");

  const std::vector<int> treated =
      detail::draw_treated(pts, n_treated, config.assignment, rng);
  std::vector<char> is_treated(n, 0);
  for (int u : treated) is_treated[u] = 1;

  const int onset = config.onset();
  std::vector<int> start(n, PanelDataset::kNeverTreated);
  if (config.timing == Timing::common) {
    for (int u : treated) start[u] = onset;
  } else {
    const int lo = config.adopt_min, hi = config.adopt_max;
    if (hi < lo) fail(errc::invalid_argument, "staggered adoption window empty");
    for (int u : treated)
      start[u] = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Panel skeleton (zero outcomes) fixes the observation order so the true
  // exposure aligns with the final panel.
  PanelBuilder skeleton;
  for (int u = 0; u < n; ++u) skeleton.add_unit(pts.id(u));
  for (int u = 0; u < n; ++u)
    for (int t = 1; t <= config.n_periods; ++t)
      skeleton.add_observation(u, t, 0.0, t >= start[u]);
  PanelDataset shape = skeleton.build();
  PointDistance dist(shape, pts);
  ExposureMatrix em = compute_exposure(shape, dist, config.true_spec);

  // Exposure enters the outcome through the sum of features; for scalar
  // mappings this is h itself, for ring mappings the sum of the dummies or
  // per-ring counts.
  auto h_of = [&](long obs) { return em.features.row(obs).sum(); };

  // Normalization of the spillover coefficients against realized exposure.
  // Control means are taken over observations in "active" periods (from the
  // first adoption onwards); earlier periods carry no exposure by
  // construction and would only dilute the mean with zeros.
  int first_active = std::numeric_limits<int>::max();
  for (int u = 0; u < n; ++u)
    if (start[u] != PanelDataset::kNeverTreated)
      first_active = std::min(first_active, start[u]);
  double beta_c = config.beta_spill_control;
  double beta_t = config.beta_spill_treated;
  double mean_h_control = 0, mean_h_treated = 0;
  long n_control_active = 0, n_treated_obs = 0;
  for (long i = 0; i < shape.n_obs(); ++i) {
    if (shape.time_of(i) < first_active) continue;
    if (shape.treated(i)) {
      mean_h_treated += h_of(i);
      ++n_treated_obs;
    } else {
      mean_h_control += h_of(i);
      ++n_control_active;
    }
  }
  if (n_control_active > 0) mean_h_control /= static_cast<double>(n_control_active);
  if (n_treated_obs > 0) mean_h_treated /= static_cast<double>(n_treated_obs);
  if (config.normalize_control_mean) {
    if (*config.normalize_control_mean == 0.0) {
      beta_c = 0.0;
    } else {
      if (mean_h_control == 0.0)
        fail(errc::degenerate_geometry,
             "no exposed control units: spillover normalization undefined");
      beta_c = *config.normalize_control_mean / mean_h_control;
    }
  }
  if (config.normalize_treated_mean) {
    if (*config.normalize_treated_mean == 0.0) {
      beta_t = 0.0;
    } else {
      if (mean_h_treated == 0.0)
        fail(errc::degenerate_geometry,
             "no exposed treated units: spillover normalization undefined");
      beta_t = *config.normalize_treated_mean / mean_h_treated;
    }
  }

  // Outcome draws in a fixed order: lambda_t, mu_i, then eps along the
  // observation order.
  std::vector<double> lambda(config.n_periods + 1, 0.0);
  for (int t = 1; t <= config.n_periods; ++t)
    lambda[t] = rng.normal(config.lambda_trend * t, config.lambda_sd);
  std::vector<double> mu(n);
  for (int u = 0; u < n; ++u) mu[u] = rng.normal(config.mu_mean, config.mu_sd);

  PanelBuilder builder;
  for (int u = 0; u < n; ++u) builder.add_unit(pts.id(u));
  double sum_tau_treated = 0;
  for (long i = 0; i < shape.n_obs(); ++i) {
    const int u = shape.unit_of(i);
    const int t = shape.time_of(i);
    const bool d = shape.treated(i);
    const double h = h_of(i);
    double y = lambda[t] + mu[u] + rng.normal(0.0, config.eps_sd);
    if (d) {
      const int k = t - start[u];
      const double tau_it =
          config.direct_effect + config.dynamic_slope * (k + 1);
      y += tau_it + beta_t * h;
      sum_tau_treated += tau_it;
    } else {
      y += beta_c * h;
    }
    builder.add_observation(u, t, y, d);
  }

  GeneratedPanel out{builder.build(), std::move(pts), std::move(em), {}};
  out.oracle.beta_control = beta_c;
  out.oracle.beta_treated = beta_t;
  out.oracle.tau_direct =
      n_treated_obs > 0 ? sum_tau_treated / static_cast<double>(n_treated_obs) : 0.0;
  out.oracle.tau_spill_control = beta_c * mean_h_control;
  out.oracle.tau_spill_treated = beta_t * mean_h_treated;
  out.oracle.tau_total = out.oracle.tau_direct + out.oracle.tau_spill_treated;
  return out;
}

// ---------------------------------------------------------------------------
// Spillover prediction accuracy (share of spillovers explained)
// ---------------------------------------------------------------------------

// 1 - sum (true - predicted)^2 / sum true^2 over control units; 1 for perfect
// prediction, 0 for predicting all zeros.
inline double mspe_share(const Eigen::VectorXd& true_spill,
                         const Eigen::VectorXd& predicted) {
  if (true_spill.size() != predicted.size())
    fail(errc::invalid_argument, "mspe_share: misaligned vectors");
  const double denom = true_spill.squaredNorm();
  if (denom == 0.0)
    fail(errc::zero_denominator,
         "mspe_share: no true spillovers, share undefined");
  return 1.0 - (true_spill - predicted).squaredNorm() / denom;
}

// ---------------------------------------------------------------------------
// Misspecification grid
// ---------------------------------------------------------------------------

struct GridCell {
  std::string dgp;
  std::string spec;
  double mean_bias = 0.0;
  double mse = 0.0;
  double mean_mspe = 0.0;
  double sd_tau = 0.0;
  double mc_se = 0.0;
  int n_success = 0;
  int n_failed = 0;
};

struct SimulationReport {
  int n_sims = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> dgp_names;
  std::vector<std::string> spec_names;
  std::vector<GridCell> cells;  // spec-major: cells[s * n_dgps + d]

  const GridCell& cell(const std::string& spec, const std::string& dgp) const {
    for (const auto& c : cells)
      if (c.spec == spec && c.dgp == dgp) return c;
    fail(errc::invalid_argument, "no grid cell (" + spec + ", " + dgp + ")");
    return cells.front();
  }

  void write_csv(std::ostream& os) const {
    os << "dgp,spec,bias,mse,mspe,n_sims,seed,mc_se,n_failed\n";
    for (const auto& c : cells)
      os << csv_quote(c.dgp) << ',' << csv_quote(c.spec) << ','
         << format_double(c.mean_bias) << ',' << format_double(c.mse) << ','
         << format_double(c.mean_mspe) << ',' << c.n_success << ',' << seed
         << ',' << format_double(c.mc_se) << ',' << c.n_failed << '\n';
  }

  // Human-readable layout: one row per estimator spec, one column per DGP,
  // bias with MSE in brackets (or the MSPE share).
  void format_table(std::ostream& os, bool mspe = false) const {
    os << (mspe ? "share of spillovers predicted" : "mean bias [mse]") << "\n";
    size_t w = 12;
    for (const auto& s : spec_names) w = std::max(w, s.size() + 2);
    os << std::string(w, ' ');
    for (const auto& d : dgp_names) {
      std::string h = d;
      h.resize(16, ' ');
      os << h;
    }
    os << '\n';
    for (const auto& s : spec_names) {
      std::string label = s;
      label.resize(w, ' ');
      os << label;
      for (const auto& d : dgp_names) {
        const auto& c = cell(s, d);
        char buf[64];
        if (mspe)
          std::snprintf(buf, sizeof(buf), "%-16.3f", c.mean_mspe);
        else
          std::snprintf(buf, sizeof(buf), "%6.3f [%5.3f]  ", c.mean_bias, c.mse);
        os << buf;
      }
      os << '\n';
    }
  }
};

// One estimator row of the grid: nullopt is the plain TWFE row.
using SpecRow = std::pair<std::string, std::optional<ExposureSpec>>;
using DgpColumn = std::pair<std::string, DGPConfig>;

namespace detail {

struct CellDraw {
  double tau = 0.0;
  double mspe = 0.0;
  bool ok = false;
};

// Estimate y = tau D + theta' (1-D) h~ + mu_i + lambda_t for one spec row and
// return tau_hat and the predicted-spillover accuracy over control units.
inline CellDraw run_cell(const GeneratedPanel& gp,
                         const std::optional<ExposureSpec>& spec) {
  CellDraw out;
  const PanelDataset& panel = gp.panel;
  const long n = panel.n_obs();

  DesignMatrix d;
  d.unit.resize(n);
  d.time.resize(n);
  d.y.resize(n);
  Eigen::VectorXd D(n);
  for (long i = 0; i < n; ++i) {
    d.unit[i] = panel.unit_of(i);
    d.time[i] = panel.period_of(i);
    d.y(i) = panel.outcome(i);
    D(i) = panel.treated(i) ? 1.0 : 0.0;
  }

  ExposureMatrix em;
  int n_spill = 0;
  if (spec) {
    PointDistance dist(panel, gp.points);
    em = compute_exposure(panel, dist, *spec);
    n_spill = em.n_features();
  }

  d.X.resize(n, 1 + n_spill);
  d.names.push_back("tau");
  d.X.col(0) = D;
  for (int c = 0; c < n_spill; ++c) {
    d.names.push_back("theta_" + em.feature_names[c]);
    d.X.col(1 + c) = ((1.0 - D.array()) * em.features.col(c).array()).matrix();
  }
  drop_zero_columns(d);

  OlsOptions opt;
  opt.fe = {true, true};
  RegressionFit fit = ols_fit(d, opt);
  out.tau = fit.coef_of("tau");

  // Predicted vs true spillovers on the end-period control cross section.
  const int pe = panel.n_periods() - 1;
  std::vector<double> truth, pred;
  for (int u = 0; u < panel.n_units(); ++u) {
    const long i = panel.find(u, pe);
    if (i < 0 || panel.treated(i)) continue;
    truth.push_back(gp.oracle.beta_control * gp.true_exposure.features.row(i).sum());
    double p = 0.0;
    for (int c = 0; c < n_spill; ++c) {
      const int idx = fit.index_of("theta_" + em.feature_names[c]);
      if (idx >= 0) p += fit.coef(idx) * em.features(i, c);
    }
    pred.push_back(p);
  }
  Eigen::VectorXd tv = Eigen::Map<Eigen::VectorXd>(truth.data(), truth.size());
  Eigen::VectorXd pv = Eigen::Map<Eigen::VectorXd>(pred.data(), pred.size());
  out.mspe = mspe_share(tv, pv);
  out.ok = true;
  return out;
}

}  // namespace detail

// Bias / MSE / MSPE over the (DGP column) x (estimator spec row) grid.
// Deterministic given the seed regardless of the parallelism degree:
// replication r of column c draws from stream f(seed, c, r) and results are
// reduced in fixed order. Per-cell estimation failures are counted, never
// fatal.
inline SimulationReport run_grid(const std::vector<DgpColumn>& dgps,
                                 const std::vector<SpecRow>& specs, int n_sims,
                                 std::uint64_t seed, int n_threads = 1) {
  if (n_sims < 1) fail(errc::invalid_argument, "n_sims must be >= 1");
  SimulationReport report;
  report.n_sims = n_sims;
  report.seed = seed;
  for (const auto& d : dgps) report.dgp_names.push_back(d.first);
  for (const auto& s : specs) report.spec_names.push_back(s.first);

  const int nd = static_cast<int>(dgps.size());
  const int ns = static_cast<int>(specs.size());
  std::vector<detail::CellDraw> draws(
      static_cast<size_t>(n_sims) * nd * ns);
  std::vector<double> tau_true(static_cast<size_t>(n_sims) * nd, 0.0);

  auto run_rep = [&](int r) {
    for (int c = 0; c < nd; ++c) {
      DGPConfig config = dgps[c].second;
      config.seed = Rng::stream(seed, static_cast<std::uint64_t>(c)).next_u64();
      GeneratedPanel gp = generate_panel(config, r);
      tau_true[static_cast<size_t>(r) * nd + c] = gp.oracle.tau_total;
      for (int s = 0; s < ns; ++s) {
        detail::CellDraw& slot =
            draws[(static_cast<size_t>(r) * nd + c) * ns + s];
        try {
          slot = detail::run_cell(gp, specs[s].second);
        } catch (const Error&) {
          slot.ok = false;
        }
      }
    }
  };

  if (n_threads <= 1) {
    for (int r = 0; r < n_sims; ++r) run_rep(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w]() {
        for (int r = w; r < n_sims; r += n_threads) run_rep(r);
      });
    for (auto& th : pool) th.join();
  }

  // Fixed-order reduction.
  report.cells.resize(static_cast<size_t>(ns) * nd);
  for (int s = 0; s < ns; ++s)
    for (int c = 0; c < nd; ++c) {
      GridCell& cell = report.cells[static_cast<size_t>(s) * nd + c];
      cell.spec = specs[s].first;
      cell.dgp = dgps[c].first;
      double sum = 0, sum2 = 0, sum_mspe = 0;
      for (int r = 0; r < n_sims; ++r) {
        const auto& slot = draws[(static_cast<size_t>(r) * nd + c) * ns + s];
        if (!slot.ok) {
          cell.n_failed++;
          continue;
        }
        const double bias = slot.tau - tau_true[static_cast<size_t>(r) * nd + c];
        sum += bias;
        sum2 += bias * bias;
        sum_mspe += slot.mspe;
        cell.n_success++;
      }
      if (cell.n_success > 0) {
        cell.mean_bias = sum / cell.n_success;
        cell.mse = sum2 / cell.n_success;
        cell.mean_mspe = sum_mspe / cell.n_success;
        const double var =
            cell.n_success > 1
                ? (sum2 - sum * sum / cell.n_success) / (cell.n_success - 1)
                : 0.0;
        cell.sd_tau = std::sqrt(std::max(0.0, var));
        cell.mc_se = cell.sd_tau / std::sqrt(static_cast<double>(cell.n_success));
      }
    }
  return report;
}

// The misspecification study's configuration: six DGP columns and ten
// estimator rows over a planar grid geometry with a clustered treated region.
inline std::vector<DgpColumn> appendix_dgps(
    const DGPConfig& base = [] {
      DGPConfig c;
      c.assignment = Assignment::clustered;
      c.normalize_control_mean = -0.263;
      return c;
    }()) {
  std::vector<DgpColumn> out;
  auto with = [&](const std::string& name, const ExposureSpec& spec) {
    DGPConfig c = base;
    c.true_spec = spec;
    out.emplace_back(name, c);
  };
  with("within40", ExposureSpec::WithinIndicator(40));
  with("within80", ExposureSpec::WithinIndicator(80));
  with("within40_additive", ExposureSpec::WithinCount(40));
  with("within80_additive", ExposureSpec::WithinCount(80));
  with("decay", ExposureSpec::Decay(0.02, 80));
  with("decay_additive", ExposureSpec::DecayCount(0.02));
  return out;
}

inline std::vector<SpecRow> appendix_specs() {
  std::vector<SpecRow> out;
  out.emplace_back("twfe", std::nullopt);
  out.emplace_back("within40", ExposureSpec::WithinIndicator(40));
  out.emplace_back("within80", ExposureSpec::WithinIndicator(80));
  out.emplace_back("within40_additive", ExposureSpec::WithinCount(40));
  out.emplace_back("within80_additive", ExposureSpec::WithinCount(80));
  out.emplace_back("decay", ExposureSpec::Decay(0.02, 80));
  out.emplace_back("decay_additive", ExposureSpec::DecayCount(0.02));
  out.emplace_back("rings3", ExposureSpec::Rings({0, 20, 30, 40}));
  out.emplace_back("rings5", ExposureSpec::Rings({0, 20, 30, 40, 60, 80}));
  out.emplace_back("rings5_additive",
                   ExposureSpec::RingsAdditive({0, 20, 30, 40, 60, 80}));
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition oracle
// ---------------------------------------------------------------------------

struct OracleCheckReport {
  int n_sims = 0;
  int n_failed = 0;  // replications without enough clean units
  // Mean deviation of each estimator from its per-replication oracle target,
  // with the Monte Carlo standard error of that mean.
  double did_delta = 0, did_mc_se = 0;
  double total_delta = 0, total_mc_se = 0;
  double direct_delta = 0, direct_mc_se = 0;
  bool did_pass = false, total_pass = false, direct_pass = false;
  bool all_pass() const { return did_pass && total_pass && direct_pass; }
};

// Verifies on simulated data that the classical DiD converges to
// tau_direct + tau_spill(1) - tau_spill(0) and that the total/direct
// group-means estimators converge to tau_total/tau_direct, within 3 Monte
// Carlo standard errors.
inline OracleCheckReport oracle_decomposition_check(const DGPConfig& config,
                                                    int n_sims,
                                                    int n_threads = 1) {
  if (config.timing != Timing::common)
    fail(errc::invalid_argument,
         "oracle_decomposition_check requires common treatment timing");
  OracleCheckReport rep;
  rep.n_sims = n_sims;

  std::vector<double> d_did(n_sims), d_total(n_sims), d_direct(n_sims);
  std::vector<char> ok(n_sims, 0);
  auto run_rep = [&](int r) {
    const GeneratedPanel gp = generate_panel(config, r);
    const auto fd = first_difference_averaged(gp.panel, config.onset());
    const double did = did_means(fd);

    // Group-means analogs of the identification results, using the true S.
    const int pe = gp.panel.n_periods() - 1;
    double sum_t = 0, sum_t0 = 0, sum_c0 = 0;
    long n_t = 0, n_t0 = 0, n_c0 = 0;
    for (size_t rr = 0; rr < fd.unit.size(); ++rr) {
      const long obs = gp.panel.find(fd.unit[rr], pe);
      const bool s = gp.true_exposure.spillover[obs] != 0;
      if (fd.treated[rr]) {
        sum_t += fd.delta_outcome[rr];
        ++n_t;
        if (!s) {
          sum_t0 += fd.delta_outcome[rr];
          ++n_t0;
        }
      } else if (!s) {
        sum_c0 += fd.delta_outcome[rr];
        ++n_c0;
      }
    }
    if (n_t == 0 || n_t0 == 0 || n_c0 == 0)
      fail(errc::empty_group, "oracle check: insufficient clean units");
    const double total_hat = sum_t / n_t - sum_c0 / n_c0;
    const double direct_hat = sum_t0 / n_t0 - sum_c0 / n_c0;

    const EffectOracle& o = gp.oracle;
    d_did[r] = did - (o.tau_direct + o.tau_spill_treated - o.tau_spill_control);
    d_total[r] = total_hat - o.tau_total;
    d_direct[r] = direct_hat - o.tau_direct;
    ok[r] = 1;
  };
  auto run_rep_guarded = [&](int r) {
    try {
      run_rep(r);
    } catch (const Error&) {
      // e.g. a draw without clean treated units; reported, not fatal
    }
  };

  if (n_threads <= 1) {
    for (int r = 0; r < n_sims; ++r) run_rep_guarded(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w]() {
        for (int r = w; r < n_sims; r += n_threads) run_rep_guarded(r);
      });
    for (auto& th : pool) th.join();
  }

  int n_ok = 0;
  for (int r = 0; r < n_sims; ++r) n_ok += ok[r] ? 1 : 0;
  rep.n_failed = n_sims - n_ok;
  if (n_ok < 2)
    fail(errc::too_many_failures,
         "oracle check: nearly every replication lacked clean units");

  auto summarize = [&](const std::vector<double>& d, double& mean, double& se,
                       bool& pass) {
    double s = 0;
    for (int r = 0; r < n_sims; ++r)
      if (ok[r]) s += d[r];
    mean = s / n_ok;
    double var = 0;
    for (int r = 0; r < n_sims; ++r)
      if (ok[r]) var += (d[r] - mean) * (d[r] - mean);
    se = std::sqrt(var / (n_ok - 1) / n_ok);
    pass = std::abs(mean) <= 3.0 * se;
  };
  summarize(d_did, rep.did_delta, rep.did_mc_se, rep.did_pass);
  summarize(d_total, rep.total_delta, rep.total_mc_se, rep.total_pass);
  summarize(d_direct, rep.direct_delta, rep.direct_mc_se, rep.direct_pass);
  return rep;
}

}  // namespace spillover_did
