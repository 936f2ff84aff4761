#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/errors.hpp"
#include "spillover_did/exposure.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/regression.hpp"
#include "spillover_did/table.hpp"

namespace spillover_did {

namespace detail {

// Two-period estimators assume treatment turns on between the two periods,
// i.e. D_it = D_i * 1{t = end}.
inline void require_two_periods(const PanelDataset& panel) {
  if (panel.n_periods() != 2)
    fail(errc::invalid_argument, "estimator requires exactly two periods");
  for (long i = 0; i < panel.n_obs(); ++i)
    if (panel.period_of(i) == 0 && panel.treated(i))
      fail(errc::invalid_argument,
           "unit '" + panel.unit_id(panel.unit_of(i)) +
               "' is treated in the base period; two-period estimators require "
               "treatment to turn on between the periods");
}

}  // namespace detail

// Classical difference-in-differences by group means:
// (mean dY | D = 1) - (mean dY | D = 0).
inline double did_means(const FirstDifferenceView& fd) {
  double sum_t = 0, sum_c = 0;
  long n_t = 0, n_c = 0;
  for (size_t r = 0; r < fd.unit.size(); ++r) {
    if (fd.treated[r]) {
      sum_t += fd.delta_outcome[r];
      ++n_t;
    } else {
      sum_c += fd.delta_outcome[r];
      ++n_c;
    }
  }
  if (n_t == 0 || n_c == 0)
    fail(errc::empty_group, "did_means: treated or control group is empty");
  return sum_t / n_t - sum_c / n_c;
}

inline double did_means(const PanelDataset& panel) {
  detail::require_two_periods(panel);
  return did_means(
      first_difference(panel, panel.periods()[0], panel.periods()[1]));
}

// Sample analogs of the identification results: the total effect compares all
// treated units against unexposed controls, the direct effect restricts the
// treated side to unexposed treated units. S is the unit's spillover
// indicator at the end period.
inline double total_effect_means(const PanelDataset& panel,
                                 const ExposureMatrix& em) {
  detail::require_two_periods(panel);
  const auto fd =
      first_difference(panel, panel.periods()[0], panel.periods()[1]);
  double sum_t = 0, sum_c0 = 0;
  long n_t = 0, n_c0 = 0;
  for (size_t r = 0; r < fd.unit.size(); ++r) {
    const long obs = panel.find(fd.unit[r], 1);
    const bool s = em.spillover[obs] != 0;
    if (fd.treated[r]) {
      sum_t += fd.delta_outcome[r];
      ++n_t;
    } else if (!s) {
      sum_c0 += fd.delta_outcome[r];
      ++n_c0;
    }
  }
  if (n_t == 0) fail(errc::empty_group, "total_effect_means: no treated units");
  if (n_c0 == 0)
    fail(errc::no_unexposed_controls,
         "total_effect_means: no unexposed control units");
  return sum_t / n_t - sum_c0 / n_c0;
}

inline double direct_effect_means(const PanelDataset& panel,
                                  const ExposureMatrix& em) {
  detail::require_two_periods(panel);
  const auto fd =
      first_difference(panel, panel.periods()[0], panel.periods()[1]);
  double sum_t0 = 0, sum_c0 = 0;
  long n_t0 = 0, n_c0 = 0;
  for (size_t r = 0; r < fd.unit.size(); ++r) {
    const long obs = panel.find(fd.unit[r], 1);
    const bool s = em.spillover[obs] != 0;
    if (s) continue;
    if (fd.treated[r]) {
      sum_t0 += fd.delta_outcome[r];
      ++n_t0;
    } else {
      sum_c0 += fd.delta_outcome[r];
      ++n_c0;
    }
  }
  if (n_t0 == 0)
    fail(errc::no_unexposed_treated,
         "direct_effect_means: no unexposed treated units");
  if (n_c0 == 0)
    fail(errc::no_unexposed_controls,
         "direct_effect_means: no unexposed control units");
  return sum_t0 / n_t0 - sum_c0 / n_c0;
}

// ---------------------------------------------------------------------------
// Regression estimators
// ---------------------------------------------------------------------------

struct DidSpec {
  enum class Estimand { classic, total, direct, total_rings, direct_rings };
  Estimand estimand = Estimand::total;
  VcovSpec vcov;
  // Covariates (by name) are supported in two-period panels only, entering as
  // baseline values interacted with the post-period dummy.
  std::vector<std::string> covariates;
};

namespace detail {

inline bool period_has_treatment(const PanelDataset& panel, int p) {
  for (int u = 0; u < panel.n_units(); ++u)
    if (panel.treated_at(u, p)) return true;
  return false;
}

}  // namespace detail

// Two-way fixed-effects estimators with spillover terms built from the
// exposure matrix: tau on D_it, gamma0 on (1-D)S, gamma1 on D*S, and ring
// coefficients delta per distance bin. Ring dummies with no members are
// dropped with a warning.
inline RegressionFit estimate(const PanelDataset& panel,
                              const ExposureMatrix& em, const DidSpec& spec,
                              const DistanceProvider* distances = nullptr) {
  using E = DidSpec::Estimand;
  const long n = panel.n_obs();
  if (static_cast<long>(em.spillover.size()) != n)
    fail(errc::invalid_argument, "exposure matrix does not match panel");

  const bool rings = spec.estimand == E::total_rings || spec.estimand == E::direct_rings;
  if (rings && em.spec.kind != ExposureSpec::Kind::rings)
    fail(errc::invalid_argument, "rings estimand requires a rings exposure spec");

  // Identification checks in periods with treatment on.
  if (spec.estimand != E::classic) {
    bool clean_control = false, clean_treated = false;
    for (long i = 0; i < n; ++i) {
      if (!detail::period_has_treatment(panel, panel.period_of(i))) continue;
      if (!panel.treated(i) && !em.spillover[i]) clean_control = true;
      if (panel.treated(i) && !em.spillover[i]) clean_treated = true;
    }
    if (!clean_control)
      fail(errc::no_unexposed_controls,
           "no control units beyond the spillover distance");
    if ((spec.estimand == E::direct || spec.estimand == E::direct_rings) &&
        !clean_treated)
      fail(errc::no_unexposed_treated,
           "no treated units beyond the spillover distance");
  }

  if (!spec.covariates.empty()) detail::require_two_periods(panel);

  DesignMatrix d;
  d.unit.resize(n);
  d.time.resize(n);
  d.y.resize(n);
  for (long i = 0; i < n; ++i) {
    d.unit[i] = panel.unit_of(i);
    d.time[i] = panel.period_of(i);
    d.y(i) = panel.outcome(i);
  }

  std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
  Eigen::VectorXd D(n), S(n);
  for (long i = 0; i < n; ++i) {
    D(i) = panel.treated(i) ? 1.0 : 0.0;
    S(i) = em.spillover[i] ? 1.0 : 0.0;
  }
  cols.emplace_back("tau", D);

  switch (spec.estimand) {
    case E::classic:
      break;
    case E::total:
      cols.emplace_back("gamma0", ((1.0 - D.array()) * S.array()).matrix());
      break;
    case E::direct:
      cols.emplace_back("gamma0", ((1.0 - D.array()) * S.array()).matrix());
      cols.emplace_back("gamma1", (D.array() * S.array()).matrix());
      break;
    case E::total_rings:
    case E::direct_rings: {
      for (int r = 0; r < em.n_features(); ++r) {
        Eigen::VectorXd col =
            ((1.0 - D.array()) * em.features.col(r).array()).matrix();
        cols.emplace_back("delta_" + em.spec.ring_label(r), col);
      }
      if (spec.estimand == E::direct_rings) {
        for (int r = 0; r < em.n_features(); ++r) {
          Eigen::VectorXd col = (D.array() * em.features.col(r).array()).matrix();
          cols.emplace_back("gamma_" + em.spec.ring_label(r), col);
        }
      }
      break;
    }
  }

  for (const auto& name : spec.covariates) {
    int c = -1;
    for (int j = 0; j < panel.n_covariates(); ++j)
      if (panel.covariate_names()[j] == name) c = j;
    if (c < 0) fail(errc::missing_column, "covariate '" + name + "' not in panel");
    // Baseline value interacted with the post-period dummy.
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
    for (long i = 0; i < n; ++i) {
      if (panel.period_of(i) != 1) continue;
      const long base = panel.find(panel.unit_of(i), 0);
      if (base >= 0) col(i) = panel.covariate(base, c);
    }
    cols.emplace_back("beta_" + name, col);
  }

  d.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    d.names.push_back(cols[c].first);
    d.X.col(static_cast<Eigen::Index>(c)) = cols[c].second;
  }

  const auto dropped = drop_zero_columns(d);

  OlsOptions opt;
  opt.fe = {true, true};
  opt.vcov = spec.vcov;
  if (opt.vcov.kind == VcovKind::conley && !(opt.vcov.cutoff > 0))
    opt.vcov.cutoff = em.spec.outer_radius();
  opt.distances = distances;
  RegressionFit fit = ols_fit(d, opt);
  for (const auto& name : dropped)
    fit.warnings.push_back("empty ring dropped: " + name);
  if (spec.estimand == E::direct || spec.estimand == E::direct_rings)
    fit.notes.push_back(
        "tau is the direct effect among unexposed treated units; extending it "
        "to all treated units assumes the direct effect does not vary with "
        "exposure");
  return fit;
}

// Difference-in-differences on the subsample of units with exposure within
// `tol` of `h_star` (scalar exposure mappings only). A negative tol selects
// the default: 0 for indicator/count mappings, 5% of the exposure standard
// deviation for continuous ones.
inline RegressionFit estimate_switching(const PanelDataset& panel,
                                        const ExposureMatrix& em,
                                        double h_star, double tol,
                                        const VcovSpec& vcov,
                                        const DistanceProvider* distances = nullptr) {
  detail::require_two_periods(panel);
  if (!em.spec.is_scalar())
    fail(errc::invalid_argument,
         "switching estimand requires a scalar exposure mapping");

  const auto fd =
      first_difference(panel, panel.periods()[0], panel.periods()[1]);
  std::vector<double> h(fd.unit.size());
  for (size_t r = 0; r < fd.unit.size(); ++r)
    h[r] = em.features(panel.find(fd.unit[r], 1), 0);

  if (tol < 0) {
    const bool continuous = em.spec.kind == ExposureSpec::Kind::decay ||
                            em.spec.kind == ExposureSpec::Kind::decay_count;
    if (!continuous) {
      tol = 0.0;
    } else {
      double mean = 0;
      for (double v : h) mean += v;
      mean /= static_cast<double>(h.size());
      double var = 0;
      for (double v : h) var += (v - mean) * (v - mean);
      var /= static_cast<double>(h.size());
      tol = 0.05 * std::sqrt(var);
    }
  }

  std::vector<long> rows;
  long n_t = 0, n_c = 0;
  for (size_t r = 0; r < fd.unit.size(); ++r) {
    if (std::abs(h[r] - h_star) <= tol) {
      rows.push_back(static_cast<long>(r));
      (fd.treated[r] ? n_t : n_c)++;
    }
  }
  if (n_t == 0 || n_c == 0)
    fail(errc::empty_subsample,
         "switching subsample has no " +
             std::string(n_t == 0 ? "treated" : "control") +
             " units at exposure " + format_double(h_star) + " (tol " +
             format_double(tol) + ")");

  DesignMatrix d;
  const long m = static_cast<long>(rows.size());
  d.X.resize(m, 2);
  d.y.resize(m);
  d.unit.resize(m);
  d.time.assign(m, 0);
  d.names = {"const", "tau"};
  for (long i = 0; i < m; ++i) {
    const long r = rows[i];
    d.X(i, 0) = 1.0;
    d.X(i, 1) = fd.treated[r] ? 1.0 : 0.0;
    d.y(i) = fd.delta_outcome[r];
    d.unit[i] = fd.unit[r];
  }

  OlsOptions opt;
  opt.vcov = vcov;
  opt.distances = distances;
  RegressionFit fit = ols_fit(d, opt);
  fit.notes.push_back("switching subsample: " + std::to_string(n_t) +
                      " treated, " + std::to_string(n_c) +
                      " control units at h* = " + format_double(h_star) +
                      ", tol = " + format_double(tol));
  return fit;
}

// Cross-sectional first-difference regression with distance-bin spillover
// dummies and baseline covariates: dY on {const, D, (1-D) x ring bins,
// covariates}. The exposure matrix must be a rings mapping; its bins are read
// at the view's end period.
inline RegressionFit first_difference_regression(
    const FirstDifferenceView& fd, const ExposureMatrix& em,
    const std::vector<std::string>& covariates, const VcovSpec& vcov,
    const DistanceProvider* distances = nullptr) {
  if (em.spec.kind != ExposureSpec::Kind::rings)
    fail(errc::invalid_argument,
         "first_difference_regression requires a rings exposure spec");
  const PanelDataset& panel = *fd.panel;
  const int pe = panel.period_index(fd.end_period);

  const long m = static_cast<long>(fd.unit.size());
  DesignMatrix d;
  d.y.resize(m);
  d.unit.resize(m);
  d.time.assign(m, 0);

  std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(m), D(m);
  for (long r = 0; r < m; ++r) D(r) = fd.treated[r] ? 1.0 : 0.0;
  cols.emplace_back("const", ones);
  cols.emplace_back("tau", D);
  for (int k = 0; k < em.n_features(); ++k) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(m);
    for (long r = 0; r < m; ++r) {
      if (fd.treated[r]) continue;
      const long obs = panel.find(fd.unit[r], pe);
      col(r) = em.features(obs, k);
    }
    cols.emplace_back("delta_" + em.spec.ring_label(k), col);
  }
  for (const auto& name : covariates) {
    int c = -1;
    for (size_t j = 0; j < fd.covariate_names.size(); ++j)
      if (fd.covariate_names[j] == name) c = static_cast<int>(j);
    if (c < 0)
      fail(errc::missing_column, "covariate '" + name + "' not in panel");
    cols.emplace_back("beta_" + name, fd.baseline_covariates.col(c));
  }

  d.X.resize(m, static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    d.names.push_back(cols[c].first);
    d.X.col(static_cast<Eigen::Index>(c)) = cols[c].second;
  }
  for (long r = 0; r < m; ++r) {
    d.y(r) = fd.delta_outcome[r];
    d.unit[r] = fd.unit[r];
  }

  const auto dropped = drop_zero_columns(d);
  OlsOptions opt;
  opt.vcov = vcov;
  if (opt.vcov.kind == VcovKind::conley && !(opt.vcov.cutoff > 0))
    opt.vcov.cutoff = em.spec.outer_radius();
  opt.distances = distances;
  RegressionFit fit = ols_fit(d, opt);
  for (const auto& name : dropped)
    fit.warnings.push_back("empty ring dropped: " + name);
  return fit;
}

// Tidy coefficient table for the estimators above.
inline CoefficientTable tidy(const RegressionFit& fit,
                             bool include_vcov = false) {
  CoefficientTable t;
  for (size_t i = 0; i < fit.names.size(); ++i) {
    CoefRow row;
    row.term = fit.names[i];
    row.estimate = fit.coef(static_cast<Eigen::Index>(i));
    row.std_error = fit.se(static_cast<int>(i));
    const std::string& name = fit.names[i];
    if (name == "tau")
      row.group = "treatment";
    else if (name == "gamma0" || name.rfind("delta_", 0) == 0)
      row.group = "spillover_control";
    else if (name == "gamma1" || name.rfind("gamma_", 0) == 0)
      row.group = "spillover_treated";
    else if (name == "const")
      row.group = "intercept";
    else if (name.rfind("beta_", 0) == 0)
      row.group = "covariate";
    else
      row.group = "other";
    t.rows.push_back(row);
  }
  if (include_vcov) t.vcov = fit.vcov;
  t.notes = fit.notes;
  for (const auto& w : fit.warnings) t.notes.push_back("warning: " + w);
  return t;
}

}  // namespace spillover_did
