#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spillover_did/errors.hpp"
#include "spillover_did/spatial.hpp"

namespace spillover_did {

// Regression design with panel row keys. Columns are named; the response is
// separate. Unit/time entries index the source panel's level tables.
struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> unit;
  std::vector<int> time;

  long n() const { return X.rows(); }
  int k() const { return static_cast<int>(X.cols()); }
};

// Removes columns that are identically zero (e.g. ring dummies with no
// members); returns the dropped names in original order.
inline std::vector<std::string> drop_zero_columns(DesignMatrix& d) {
  std::vector<int> keep;
  std::vector<std::string> dropped;
  for (int c = 0; c < d.k(); ++c) {
    if (d.X.col(c).cwiseAbs().maxCoeff() == 0.0)
      dropped.push_back(d.names[c]);
    else
      keep.push_back(c);
  }
  if (dropped.empty()) return dropped;
  Eigen::MatrixXd X(d.X.rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<std::string> names;
  for (size_t i = 0; i < keep.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = d.X.col(keep[i]);
    names.push_back(d.names[keep[i]]);
  }
  d.X = std::move(X);
  d.names = std::move(names);
  return dropped;
}

struct FixedEffectsSpec {
  bool unit = false;
  bool time = false;
  bool any() const { return unit || time; }
};

enum class VcovKind { iid, hc1, cluster_by_unit, conley };
enum class ConleyKernel { uniform, bartlett };

struct VcovSpec {
  VcovKind kind = VcovKind::iid;
  double cutoff = 0.0;  // miles; required for conley
  ConleyKernel kernel = ConleyKernel::uniform;

  static VcovSpec IID() { return {}; }
  static VcovSpec HC1() { return {VcovKind::hc1, 0.0, ConleyKernel::uniform}; }
  static VcovSpec ClusterByUnit() {
    return {VcovKind::cluster_by_unit, 0.0, ConleyKernel::uniform};
  }
  static VcovSpec Conley(double cutoff,
                         ConleyKernel kernel = ConleyKernel::uniform) {
    if (!(cutoff > 0)) fail(errc::invalid_argument, "conley cutoff must be > 0");
    return {VcovKind::conley, cutoff, kernel};
  }
};

namespace detail {

struct GroupIndex {
  std::vector<int> group_of;      // per row
  std::vector<long> group_count;  // per group
  int n_groups = 0;
};

inline GroupIndex make_groups(const std::vector<int>& labels) {
  GroupIndex g;
  g.group_of = labels;
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  g.n_groups = max_label + 1;
  g.group_count.assign(g.n_groups, 0);
  for (int l : labels) g.group_count[l]++;
  return g;
}

inline void demean_by(Eigen::MatrixXd& M, const GroupIndex& g) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g.n_groups, M.cols());
  for (long i = 0; i < M.rows(); ++i) sums.row(g.group_of[i]) += M.row(i);
  for (int grp = 0; grp < g.n_groups; ++grp)
    if (g.group_count[grp] > 0) sums.row(grp) /= static_cast<double>(g.group_count[grp]);
  for (long i = 0; i < M.rows(); ++i) M.row(i) -= sums.row(g.group_of[i]);
}

inline double max_abs_group_mean(const Eigen::MatrixXd& M, const GroupIndex& g) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g.n_groups, M.cols());
  for (long i = 0; i < M.rows(); ++i) sums.row(g.group_of[i]) += M.row(i);
  double worst = 0.0;
  for (int grp = 0; grp < g.n_groups; ++grp)
    if (g.group_count[grp] > 0)
      worst = std::max(worst, (sums.row(grp) / static_cast<double>(g.group_count[grp]))
                                  .cwiseAbs()
                                  .maxCoeff());
  return worst;
}

inline int count_present(const std::vector<int>& labels) {
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  std::vector<char> seen(max_label + 1, 0);
  int n = 0;
  for (int l : labels)
    if (!seen[l]) {
      seen[l] = 1;
      ++n;
    }
  return n;
}

}  // namespace detail

struct AbsorbResult {
  DesignMatrix demeaned;
  int iterations = 0;
};

// Within transformation by alternating projections. Columns and response are
// demeaned by unit and/or time groups until the largest within-group mean
// falls below `tol`; on balanced panels with both effects a single cycle is
// exact. Coefficients on the demeaned data equal explicit-dummy OLS.
inline AbsorbResult absorb_fixed_effects(const DesignMatrix& design,
                                         FixedEffectsSpec fe,
                                         double tol = 1e-10,
                                         int max_iter = 2000) {
  AbsorbResult res;
  res.demeaned = design;
  if (!fe.any()) return res;

  Eigen::MatrixXd M(design.n(), design.k() + 1);
  M.leftCols(design.k()) = design.X;
  M.col(design.k()) = design.y;

  if (fe.unit && !fe.time) {
    detail::demean_by(M, detail::make_groups(design.unit));
    res.iterations = 1;
  } else if (fe.time && !fe.unit) {
    detail::demean_by(M, detail::make_groups(design.time));
    res.iterations = 1;
  } else {
    const auto gu = detail::make_groups(design.unit);
    const auto gt = detail::make_groups(design.time);
    int it = 0;
    for (; it < max_iter; ++it) {
      detail::demean_by(M, gu);
      detail::demean_by(M, gt);
      if (detail::max_abs_group_mean(M, gu) < tol) break;
    }
    res.iterations = it + 1;
    if (it == max_iter)
      fail(errc::non_convergence,
           "fixed-effect absorption did not converge in " +
               std::to_string(max_iter) + " iterations");
  }

  res.demeaned.X = M.leftCols(design.k());
  res.demeaned.y = M.col(design.k());
  return res;
}

struct RegressionFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd residuals;
  long n = 0;
  long dof = 0;
  double rss = 0.0;
  bool psd_clipped = false;
  int absorb_iterations = 0;

  // Absorbed effects, filled when requested. Time effects are normalized to
  // mean zero over period levels; only the sum mu_i + lambda_t is identified.
  std::vector<double> unit_effects;
  std::vector<double> time_effects;

  std::vector<std::string> warnings;
  std::vector<std::string> notes;

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  bool has_term(const std::string& name) const { return index_of(name) >= 0; }
  double coef_of(const std::string& name) const {
    const int i = index_of(name);
    if (i < 0) fail(errc::invalid_argument, "no coefficient named '" + name + "'");
    return coef(i);
  }
  double se_of(const std::string& name) const {
    const int i = index_of(name);
    if (i < 0) fail(errc::invalid_argument, "no coefficient named '" + name + "'");
    return std::sqrt(std::max(0.0, vcov(i, i)));
  }
  double se(int i) const { return std::sqrt(std::max(0.0, vcov(i, i))); }
};

// Projection of a symmetric matrix onto the positive semidefinite cone
// (negative eigenvalues floored at zero); Frobenius-minimal among PSD
// matrices. Input is returned unchanged when already PSD.
inline Eigen::MatrixXd clip_psd(const Eigen::MatrixXd& V,
                                bool* clipped = nullptr) {
  Eigen::MatrixXd S = 0.5 * (V + V.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success)
    fail(errc::non_convergence, "eigendecomposition failed in clip_psd");
  if (eig.eigenvalues().minCoeff() >= 0.0) {
    if (clipped) *clipped = false;
    return S;
  }
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  if (clipped) *clipped = true;
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

struct OlsOptions {
  FixedEffectsSpec fe;
  VcovSpec vcov;
  const DistanceProvider* distances = nullptr;  // required for conley
  bool recover_fixed_effects = false;
  bool dof_correct = true;  // HC1-style n/(n-k) correction, k incl. absorbed
  double absorb_tol = 1e-10;
  int absorb_max_iter = 2000;
};

// Least squares via column-pivoted Householder QR (no normal-equations
// squaring), with optional two-way fixed-effect absorption and the variance
// estimators used by the estimation modules.
inline RegressionFit ols_fit(const DesignMatrix& design,
                             const OlsOptions& opt = {}) {
  if (design.X.rows() != design.y.rows() || design.X.rows() == 0)
    fail(errc::invalid_argument, "ols_fit: empty or misaligned design");
  if (design.k() == 0) fail(errc::invalid_argument, "ols_fit: no regressors");

  AbsorbResult absorbed = absorb_fixed_effects(design, opt.fe, opt.absorb_tol,
                                               opt.absorb_max_iter);
  const Eigen::MatrixXd& X = absorbed.demeaned.X;
  const Eigen::VectorXd& y = absorbed.demeaned.y;
  const long n = X.rows();
  const int k = static_cast<int>(X.cols());

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  qr.setThreshold(1e-10);
  qr.compute(X);
  if (qr.rank() < k) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (int j = qr.rank(); j < k; ++j) {
      if (!cols.empty()) cols += ", ";
      cols += design.names[perm[j]];
    }
    fail(errc::rank_deficient,
         "design is rank deficient after absorption; collinear columns: " + cols);
  }

  RegressionFit fit;
  fit.names = design.names;
  fit.coef = qr.solve(y);
  fit.residuals = y - X * fit.coef;
  fit.n = n;
  fit.rss = fit.residuals.squaredNorm();
  fit.absorb_iterations = absorbed.iterations;

  // Degrees of freedom account for absorbed fixed-effect parameters.
  long n_absorbed = 0;
  const int nu = detail::count_present(design.unit);
  const int np = detail::count_present(design.time);
  if (opt.fe.unit && opt.fe.time)
    n_absorbed = nu + np - 1;
  else if (opt.fe.unit)
    n_absorbed = nu;
  else if (opt.fe.time)
    n_absorbed = np;
  fit.dof = n - k - n_absorbed;
  if (fit.dof < 0) fit.dof = 0;
  if (fit.dof == 0)
    fit.warnings.push_back(
        "saturated design: no residual degrees of freedom, standard errors "
        "are zero");

  // (X'X)^{-1} from the triangular factor: X P = Q R.
  const Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd bread = Rinv * Rinv.transpose();
  const Eigen::MatrixXd P = qr.colsPermutation();
  bread = P * bread * P.transpose();

  const double correction =
      (opt.dof_correct && fit.dof > 0)
          ? static_cast<double>(n) / static_cast<double>(fit.dof)
          : 1.0;

  switch (opt.vcov.kind) {
    case VcovKind::iid: {
      const double sigma2 =
          fit.dof > 0 ? fit.rss / static_cast<double>(opt.dof_correct ? fit.dof : n)
                      : 0.0;
      fit.vcov = sigma2 * bread;
      break;
    }
    case VcovKind::hc1: {
      Eigen::MatrixXd G = X.array().colwise() * fit.residuals.array();
      Eigen::MatrixXd meat = G.transpose() * G;
      fit.vcov = correction * bread * meat * bread;
      break;
    }
    case VcovKind::cluster_by_unit: {
      const auto gu = detail::make_groups(design.unit);
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(gu.n_groups, k);
      for (long i = 0; i < n; ++i)
        sums.row(gu.group_of[i]) += fit.residuals(i) * X.row(i);
      Eigen::MatrixXd meat = sums.transpose() * sums;
      fit.vcov = correction * bread * meat * bread;
      break;
    }
    case VcovKind::conley: {
      if (!opt.distances)
        fail(errc::missing_coordinates, "conley vcov requires coordinates");
      if (!(opt.vcov.cutoff > 0))
        fail(errc::invalid_argument, "conley vcov requires a positive cutoff");

      // Scores g_it = x_it * e_it. The meat sums (i) all within-unit pairs
      // across periods (serial component, weight 1) and (ii) same-period
      // cross-unit pairs within the cutoff, weighted by the kernel. Part (i)
      // plus own terms equals the by-unit cluster meat.
      const auto gu = detail::make_groups(design.unit);
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(gu.n_groups, k);
      Eigen::MatrixXd G(n, k);
      for (long i = 0; i < n; ++i) {
        G.row(i) = fit.residuals(i) * X.row(i);
        sums.row(gu.group_of[i]) += G.row(i);
      }
      Eigen::MatrixXd meat = sums.transpose() * sums;

      int max_time = 0;
      for (int t : design.time) max_time = std::max(max_time, t);
      std::vector<std::vector<long>> by_period(max_time + 1);
      for (long i = 0; i < n; ++i) by_period[design.time[i]].push_back(i);

      const double cutoff = opt.vcov.cutoff;
      for (const auto& rows : by_period) {
        for (size_t a = 0; a < rows.size(); ++a) {
          for (size_t b = a + 1; b < rows.size(); ++b) {
            const long ia = rows[a], ib = rows[b];
            if (design.unit[ia] == design.unit[ib]) continue;
            const double d = opt.distances->between(design.unit[ia], design.unit[ib]);
            if (!(d < cutoff)) continue;
            const double w = opt.vcov.kernel == ConleyKernel::uniform
                                 ? 1.0
                                 : 1.0 - d / cutoff;
            const Eigen::MatrixXd cross = w * G.row(ia).transpose() * G.row(ib);
            meat += cross + cross.transpose();
          }
        }
      }
      fit.vcov = correction * bread * meat * bread;
      if (opt.vcov.kernel == ConleyKernel::uniform) {
        fit.vcov = clip_psd(fit.vcov, &fit.psd_clipped);
        if (fit.psd_clipped)
          fit.warnings.push_back(
              "uniform-kernel conley vcov had negative eigenvalues; clipped "
              "to the nearest PSD matrix");
      }
      break;
    }
  }
  fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose()).eval();

  if (opt.recover_fixed_effects && opt.fe.any()) {
    // Decompose y - X beta into mu_i + lambda_t by alternating means.
    Eigen::VectorXd r = design.y - design.X * fit.coef;
    const auto gu = detail::make_groups(design.unit);
    const auto gt = detail::make_groups(design.time);
    std::vector<double> mu(gu.n_groups, 0.0), lam(gt.n_groups, 0.0);
    if (opt.fe.unit && opt.fe.time) {
      for (int it = 0; it < opt.absorb_max_iter; ++it) {
        std::vector<double> mu_new(gu.n_groups, 0.0);
        for (long i = 0; i < n; ++i)
          mu_new[gu.group_of[i]] += r(i) - lam[gt.group_of[i]];
        for (int g = 0; g < gu.n_groups; ++g)
          if (gu.group_count[g]) mu_new[g] /= static_cast<double>(gu.group_count[g]);
        std::vector<double> lam_new(gt.n_groups, 0.0);
        for (long i = 0; i < n; ++i)
          lam_new[gt.group_of[i]] += r(i) - mu_new[gu.group_of[i]];
        for (int g = 0; g < gt.n_groups; ++g)
          if (gt.group_count[g]) lam_new[g] /= static_cast<double>(gt.group_count[g]);
        double delta = 0.0;
        for (int g = 0; g < gt.n_groups; ++g)
          delta = std::max(delta, std::abs(lam_new[g] - lam[g]));
        mu = std::move(mu_new);
        lam = std::move(lam_new);
        if (delta < opt.absorb_tol) break;
      }
      double shift = 0.0;
      for (double l : lam) shift += l;
      shift /= static_cast<double>(lam.size());
      for (double& l : lam) l -= shift;
      for (double& m : mu) m += shift;
    } else if (opt.fe.unit) {
      for (long i = 0; i < n; ++i) mu[gu.group_of[i]] += r(i);
      for (int g = 0; g < gu.n_groups; ++g)
        if (gu.group_count[g]) mu[g] /= static_cast<double>(gu.group_count[g]);
    } else {
      for (long i = 0; i < n; ++i) lam[gt.group_of[i]] += r(i);
      for (int g = 0; g < gt.n_groups; ++g)
        if (gt.group_count[g]) lam[g] /= static_cast<double>(gt.group_count[g]);
    }
    fit.unit_effects = std::move(mu);
    fit.time_effects = std::move(lam);
  }
  return fit;
}

}  // namespace spillover_did
