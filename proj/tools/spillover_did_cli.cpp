// Batch command-line surface for the spillover-did library: estimation on
// user data, staggered two-stage estimation, exposure export, the
// DiD/total-effect decomposition view, and the simulation grid.

#include <cstdlib>
#include <limits>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spillover_did/did.hpp"
#include "spillover_did/exposure.hpp"
#include "spillover_did/montecarlo.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/regression.hpp"
#include "spillover_did/spatial.hpp"
#include "spillover_did/staggered.hpp"
#include "spillover_did/table.hpp"

namespace sd = spillover_did;

namespace {

int exit_code_for(sd::errc code) {
  switch (code) {
    case sd::errc::missing_column:
    case sd::errc::duplicate_key:
    case sd::errc::non_absorbing_treatment:
    case sd::errc::unknown_unit:
    case sd::errc::negative_radius:
    case sd::errc::invalid_coordinates:
    case sd::errc::missing_coordinates:
    case sd::errc::invalid_argument:
    case sd::errc::io_error:
      return 2;  // input/validation problem
    default:
      return 1;  // estimation problem
  }
}

struct DataFlags {
  std::string panel_path;
  std::string coords_path;
  std::string distances_path;
  std::string metric = "planar";
  std::string unit_col = "unit";
  std::string time_col = "time";
  std::string outcome_col = "outcome";
  std::string treat_col = "treated";
  bool treat_is_start = false;
  std::vector<std::string> covariates;
  std::string x_col, y_col;  // default depends on metric
  char delimiter = ',';
};

struct ExposureFlags {
  double dbar = 0;
  std::vector<double> rings;
  double decay_alpha = 0;
  double decay_cutoff = 0;
  bool additive = false;
  std::string ever_treated = "contemporaneous";
};

struct OutputFlags {
  std::string format = "csv";
  std::string out;
};

void add_data_flags(CLI::App* cmd, DataFlags* f, bool need_spatial = true) {
  cmd->add_option("--panel", f->panel_path, "panel data file (CSV)")->required();
  if (need_spatial) {
    cmd->add_option("--coords", f->coords_path,
                    "coordinates file: unit_id plus x,y (planar miles) or "
                    "lon,lat (degrees)");
    cmd->add_option("--distances", f->distances_path,
                    "precomputed long-form distances: unit_i,unit_j,distance");
    cmd->add_option("--metric", f->metric, "planar|haversine")
        ->check(CLI::IsMember({"planar", "haversine"}));
    cmd->add_option("--x-col", f->x_col, "x/longitude column name");
    cmd->add_option("--y-col", f->y_col, "y/latitude column name");
  }
  cmd->add_option("--unit-col", f->unit_col, "unit id column");
  cmd->add_option("--time-col", f->time_col, "period column (integer)");
  cmd->add_option("--outcome-col", f->outcome_col, "outcome column");
  cmd->add_option("--treat-col", f->treat_col, "0/1 treatment column");
  cmd->add_flag("--treat-start", f->treat_is_start,
                "treatment column holds the adoption period instead of 0/1");
  cmd->add_option("--covariates", f->covariates,
                  "covariate column names (repeat or comma-separate)")
      ->delimiter(',');
}

void add_exposure_flags(CLI::App* cmd, ExposureFlags* f) {
  cmd->add_option("--dbar", f->dbar, "spillover radius in miles (within mapping)");
  cmd->add_option("--rings", f->rings,
                  "ring cut points in miles, e.g. 0,20,30,40")
      ->delimiter(',');
  cmd->add_option("--decay-alpha", f->decay_alpha, "decay rate per mile");
  cmd->add_option("--decay-cutoff", f->decay_cutoff,
                  "decay support cutoff in miles (non-additive decay)");
  cmd->add_flag("--additive", f->additive,
                "count/sum over treated units instead of nearest-unit form");
  cmd->add_option("--treated-set", f->ever_treated,
                  "contemporaneous|ever-treated exposure set")
      ->check(CLI::IsMember({"contemporaneous", "ever-treated"}));
}

void add_output_flags(CLI::App* cmd, OutputFlags* f) {
  cmd->add_option("--format", f->format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--out", f->out, "output path (stdout when omitted)");
}

sd::ExposureSpec exposure_from_flags(const ExposureFlags& f) {
  const int chosen = (f.dbar > 0 ? 1 : 0) + (!f.rings.empty() ? 1 : 0) +
                     (f.decay_alpha > 0 ? 1 : 0);
  if (chosen != 1)
    sd::fail(sd::errc::invalid_argument,
             "choose exactly one of --dbar, --rings, --decay-alpha");
  if (f.dbar > 0)
    return f.additive ? sd::ExposureSpec::WithinCount(f.dbar)
                      : sd::ExposureSpec::WithinIndicator(f.dbar);
  if (!f.rings.empty())
    return f.additive ? sd::ExposureSpec::RingsAdditive(f.rings)
                      : sd::ExposureSpec::Rings(f.rings);
  if (f.additive) return sd::ExposureSpec::DecayCount(f.decay_alpha);
  if (!(f.decay_cutoff > 0))
    sd::fail(sd::errc::invalid_argument,
             "--decay-cutoff is required with non-additive --decay-alpha");
  return sd::ExposureSpec::Decay(f.decay_alpha, f.decay_cutoff);
}

struct LoadedData {
  sd::PanelDataset panel;
  sd::LoadReport report;
  std::optional<sd::PointSet> points;
  std::unique_ptr<sd::DistanceProvider> distances;
};

LoadedData load_data(const DataFlags& f, bool spatial_required) {
  LoadedData data;
  sd::PanelSchema schema;
  schema.unit = f.unit_col;
  schema.time = f.time_col;
  schema.outcome = f.outcome_col;
  schema.treat = f.treat_col;
  schema.treat_is_start_period = f.treat_is_start;
  schema.covariates = f.covariates;
  schema.delimiter = f.delimiter;

  std::ifstream panel_in(f.panel_path);
  if (!panel_in)
    sd::fail(sd::errc::io_error, "cannot open --panel file " + f.panel_path);
  data.panel = sd::load_panel(panel_in, schema, &data.report);

  if (!f.coords_path.empty() && !f.distances_path.empty())
    sd::fail(sd::errc::invalid_argument,
             "--coords and --distances are mutually exclusive");
  if (!f.coords_path.empty()) {
    std::ifstream in(f.coords_path);
    if (!in)
      sd::fail(sd::errc::io_error, "cannot open --coords file " + f.coords_path);
    const sd::Metric metric =
        f.metric == "haversine" ? sd::Metric::haversine : sd::Metric::planar;
    const std::string xc =
        !f.x_col.empty() ? f.x_col : (metric == sd::Metric::haversine ? "lon" : "x");
    const std::string yc =
        !f.y_col.empty() ? f.y_col : (metric == sd::Metric::haversine ? "lat" : "y");
    data.points = sd::load_points(in, metric, f.unit_col, xc, yc, f.delimiter);
    data.distances = std::make_unique<sd::PointDistance>(data.panel, *data.points);
  } else if (!f.distances_path.empty()) {
    std::ifstream in(f.distances_path);
    if (!in)
      sd::fail(sd::errc::io_error,
               "cannot open --distances file " + f.distances_path);
    data.distances = std::make_unique<sd::MatrixDistance>(
        sd::MatrixDistance::load(in, data.panel, f.delimiter));
  } else if (spatial_required) {
    sd::fail(sd::errc::missing_coordinates,
             "either --coords or --distances is required");
  }
  return data;
}

sd::VcovSpec vcov_from_flags(const std::string& vcov, double cutoff,
                             const std::string& kernel, bool have_distances,
                             double default_cutoff) {
  if (vcov == "iid") return sd::VcovSpec::IID();
  if (vcov == "hc1") return sd::VcovSpec::HC1();
  if (vcov == "cluster") return sd::VcovSpec::ClusterByUnit();
  if (vcov == "conley") {
    if (!have_distances)
      sd::fail(sd::errc::missing_coordinates,
               "--vcov conley requires coordinates (--coords or --distances)");
    double c = cutoff > 0 ? cutoff : default_cutoff;
    if (!(c > 0))
      sd::fail(sd::errc::invalid_argument,
               "--vcov conley requires --cutoff (no exposure radius to default to)");
    return sd::VcovSpec::Conley(c, kernel == "bartlett"
                                       ? sd::ConleyKernel::bartlett
                                       : sd::ConleyKernel::uniform);
  }
  sd::fail(sd::errc::invalid_argument, "unknown --vcov '" + vcov + "'");
  return {};
}

void emit(const sd::CoefficientTable& table, const OutputFlags& out) {
  std::ostringstream buffer;
  if (out.format == "json")
    buffer << table.to_json().dump(2) << '\n';
  else
    table.write_csv(buffer);
  if (out.out.empty()) {
    std::cout << buffer.str();
  } else {
    std::ofstream os(out.out, std::ios::binary);
    if (!os) sd::fail(sd::errc::io_error, "cannot write --out file " + out.out);
    os << buffer.str();
  }
}

int threads_from_env(int requested) {
  const char* env = std::getenv("SPILLOVER_DID_THREADS");
  if (!env) return requested;
  const int cap = std::atoi(env);
  if (cap >= 1 && cap < requested) return cap;
  return requested;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difference-in-differences estimation with spatial spillovers"};
  app.require_subcommand(1);

  // ---- estimate ----
  DataFlags est_data;
  ExposureFlags est_exp;
  OutputFlags est_out;
  std::string est_estimand = "total";
  std::string est_vcov = "iid", est_kernel = "uniform";
  double est_cutoff = 0, est_hstar = 0, est_tol = -1;
  int est_base = 0, est_end = 0;
  bool est_have_base = false, est_have_end = false, est_with_vcov = false;
  auto* estimate_cmd = app.add_subcommand(
      "estimate", "two-period estimators with spillover adjustment");
  add_data_flags(estimate_cmd, &est_data);
  add_exposure_flags(estimate_cmd, &est_exp);
  add_output_flags(estimate_cmd, &est_out);
  estimate_cmd
      ->add_option("--estimand", est_estimand,
                   "classic|total|direct|total-rings|direct-rings|switching|fd-rings")
      ->check(CLI::IsMember({"classic", "total", "direct", "total-rings",
                             "direct-rings", "switching", "fd-rings"}));
  estimate_cmd->add_option("--vcov", est_vcov, "iid|hc1|cluster|conley")
      ->check(CLI::IsMember({"iid", "hc1", "cluster", "conley"}));
  estimate_cmd->add_option("--cutoff", est_cutoff,
                           "conley cutoff in miles (defaults to the exposure radius)");
  estimate_cmd->add_option("--kernel", est_kernel, "uniform|bartlett")
      ->check(CLI::IsMember({"uniform", "bartlett"}));
  estimate_cmd->add_option("--h-star", est_hstar, "switching: target exposure");
  estimate_cmd->add_option("--tol", est_tol,
                           "switching: exposure tolerance (default 0 for "
                           "discrete, 5% of sd for continuous)");
  estimate_cmd->add_option("--base-period", est_base, "first-difference base period")
      ->each([&](const std::string&) { est_have_base = true; });
  estimate_cmd->add_option("--end-period", est_end, "first-difference end period")
      ->each([&](const std::string&) { est_have_end = true; });
  estimate_cmd->add_flag("--with-vcov", est_with_vcov,
                         "include the vcov matrix (JSON output only)");

  // ---- staggered ----
  DataFlags stg_data;
  ExposureFlags stg_exp;
  OutputFlags stg_out;
  std::vector<std::string> stg_menu{"total"};
  std::string stg_window;
  bool stg_bin = false, stg_with_vcov = false;
  int stg_bootstrap = 0, stg_threads = 1;
  std::uint64_t stg_seed = 0;
  bool stg_have_seed = false;
  auto* staggered_cmd = app.add_subcommand(
      "staggered", "two-stage imputation estimator under staggered adoption");
  add_data_flags(staggered_cmd, &stg_data);
  add_exposure_flags(staggered_cmd, &stg_exp);
  add_output_flags(staggered_cmd, &stg_out);
  staggered_cmd
      ->add_option("--menu", stg_menu,
                   "second-stage blocks: total,total-event,direct,direct-event,"
                   "spill-control,spill-control-event,spill-control-rings,"
                   "spill-treated,pre-trends")
      ->delimiter(',');
  staggered_cmd->add_option("--window", stg_window,
                            "event window kmin:kmax (default: full support)");
  staggered_cmd->add_flag("--bin-ends", stg_bin, "bin periods outside the window");
  staggered_cmd->add_option("--bootstrap", stg_bootstrap,
                            "cluster bootstrap replications (0: naive SEs)");
  staggered_cmd->add_option("--seed", stg_seed, "bootstrap seed")
      ->each([&](const std::string&) { stg_have_seed = true; });
  staggered_cmd->add_option("--threads", stg_threads, "bootstrap worker threads");
  staggered_cmd->add_flag("--with-vcov", stg_with_vcov,
                          "include the vcov matrix (JSON output only)");

  // ---- exposure ----
  DataFlags exp_data;
  ExposureFlags exp_exp;
  OutputFlags exp_out;
  auto* exposure_cmd =
      app.add_subcommand("exposure", "export the exposure matrix for audit");
  add_data_flags(exposure_cmd, &exp_data);
  add_exposure_flags(exposure_cmd, &exp_exp);
  exposure_cmd->add_option("--out", exp_out.out, "output path (stdout when omitted)");

  // ---- decompose ----
  DataFlags dec_data;
  ExposureFlags dec_exp;
  OutputFlags dec_out;
  std::string dec_vcov = "iid", dec_kernel = "uniform";
  double dec_cutoff = 0;
  auto* decompose_cmd = app.add_subcommand(
      "decompose",
      "classical DiD and total-effect estimates side by side; their "
      "difference estimates the spillover on controls");
  add_data_flags(decompose_cmd, &dec_data);
  add_exposure_flags(decompose_cmd, &dec_exp);
  add_output_flags(decompose_cmd, &dec_out);
  decompose_cmd->add_option("--vcov", dec_vcov, "iid|hc1|cluster|conley")
      ->check(CLI::IsMember({"iid", "hc1", "cluster", "conley"}));
  decompose_cmd->add_option("--cutoff", dec_cutoff, "conley cutoff in miles");
  decompose_cmd->add_option("--kernel", dec_kernel, "uniform|bartlett")
      ->check(CLI::IsMember({"uniform", "bartlett"}));

  // ---- simulate ----
  OutputFlags sim_out;
  std::string sim_grid = "appendix-c";
  int sim_nsims = 100, sim_rows = 25, sim_cols = 40, sim_periods = 20,
      sim_threads = 1;
  double sim_spacing = 10.0, sim_p = 0.1, sim_normalize = -0.263;
  std::string sim_assignment = "clustered";
  std::uint64_t sim_seed = 0;
  bool sim_table = false;
  auto* simulate_cmd = app.add_subcommand(
      "simulate", "misspecification grid over simulated data");
  simulate_cmd->add_option("--grid", sim_grid, "grid preset (appendix-c)")
      ->check(CLI::IsMember({"appendix-c"}));
  simulate_cmd->add_option("--n-sims", sim_nsims, "replications per cell");
  simulate_cmd->add_option("--seed", sim_seed, "simulation seed")->required();
  simulate_cmd->add_option("--rows", sim_rows, "grid rows");
  simulate_cmd->add_option("--cols", sim_cols, "grid columns");
  simulate_cmd->add_option("--spacing", sim_spacing, "grid spacing in miles");
  simulate_cmd->add_option("--p", sim_p, "treated fraction");
  simulate_cmd->add_option("--assignment", sim_assignment, "uniform|clustered")
      ->check(CLI::IsMember({"uniform", "clustered"}));
  simulate_cmd->add_option("--periods", sim_periods, "number of periods");
  simulate_cmd->add_option("--normalize", sim_normalize,
                           "mean control spillover target");
  simulate_cmd->add_option("--threads", sim_threads, "worker threads");
  simulate_cmd->add_flag("--table", sim_table,
                         "also print formatted bias/MSPE tables to stderr");
  add_output_flags(simulate_cmd, &sim_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate_cmd->parsed()) {
      const bool spatial_needed = true;
      LoadedData data = load_data(est_data, spatial_needed);
      const auto spec = exposure_from_flags(est_exp);
      const auto mode = est_exp.ever_treated == "ever-treated"
                            ? sd::TreatedSetMode::ever_treated
                            : sd::TreatedSetMode::contemporaneous;
      const auto em = sd::compute_exposure(data.panel, *data.distances, spec, mode);
      const auto vcov = vcov_from_flags(est_vcov, est_cutoff, est_kernel,
                                        data.distances != nullptr,
                                        spec.outer_radius());

      sd::RegressionFit fit;
      if (est_estimand == "switching") {
        fit = sd::estimate_switching(data.panel, em, est_hstar, est_tol, vcov,
                                     data.distances.get());
      } else if (est_estimand == "fd-rings") {
        const int base = est_have_base ? est_base : data.panel.periods().front();
        const int end = est_have_end ? est_end : data.panel.periods().back();
        const auto fd = sd::first_difference(data.panel, base, end);
        fit = sd::first_difference_regression(fd, em, est_data.covariates, vcov,
                                              data.distances.get());
      } else {
        sd::DidSpec did_spec;
        did_spec.vcov = vcov;
        did_spec.covariates = est_data.covariates;
        if (est_estimand == "classic")
          did_spec.estimand = sd::DidSpec::Estimand::classic;
        else if (est_estimand == "total")
          did_spec.estimand = sd::DidSpec::Estimand::total;
        else if (est_estimand == "direct")
          did_spec.estimand = sd::DidSpec::Estimand::direct;
        else if (est_estimand == "total-rings")
          did_spec.estimand = sd::DidSpec::Estimand::total_rings;
        else
          did_spec.estimand = sd::DidSpec::Estimand::direct_rings;
        fit = sd::estimate(data.panel, em, did_spec, data.distances.get());
      }
      emit(sd::tidy(fit, est_with_vcov && est_out.format == "json"), est_out);
      return 0;
    }

    if (staggered_cmd->parsed()) {
      LoadedData data = load_data(stg_data, true);
      const auto spec = exposure_from_flags(stg_exp);
      const auto mode = stg_exp.ever_treated == "ever-treated"
                            ? sd::TreatedSetMode::ever_treated
                            : sd::TreatedSetMode::contemporaneous;
      const auto em = sd::compute_exposure(data.panel, *data.distances, spec, mode);

      sd::SecondStageMenu menu;
      for (const auto& item : stg_menu) {
        if (item == "total") menu.total = true;
        else if (item == "total-event") menu.total_event = true;
        else if (item == "direct") menu.direct = true;
        else if (item == "direct-event") menu.direct_event = true;
        else if (item == "spill-control") menu.spill_control = true;
        else if (item == "spill-control-event") menu.spill_control_event = true;
        else if (item == "spill-control-rings") menu.spill_control_rings = true;
        else if (item == "spill-treated") menu.spill_treated = true;
        else if (item == "pre-trends") menu.pre_trends = true;
        else
          sd::fail(sd::errc::invalid_argument, "unknown --menu item '" + item + "'");
      }

      sd::EventWindow window;
      window.bin_ends = stg_bin;
      if (!stg_window.empty()) {
        const auto colon = stg_window.find(':');
        if (colon == std::string::npos)
          sd::fail(sd::errc::invalid_argument, "--window expects kmin:kmax");
        window.k_min = std::stoi(stg_window.substr(0, colon));
        window.k_max = std::stoi(stg_window.substr(colon + 1));
      }

      const auto frame = sd::build_event_frame(data.panel, em, window);
      auto fit = sd::two_stage_estimate(data.panel, em, frame, menu);
      auto table = sd::tidy(fit, stg_with_vcov && stg_out.format == "json");

      if (stg_bootstrap > 0) {
        if (!stg_have_seed)
          sd::fail(sd::errc::invalid_argument, "--bootstrap requires --seed");
        const int threads = threads_from_env(stg_threads);
        const auto boot = sd::bootstrap_vcov(data.panel, em, window, menu,
                                             stg_bootstrap, stg_seed, threads);
        for (auto& row : table.rows) {
          for (size_t c = 0; c < boot.names.size(); ++c) {
            if (boot.names[c] == row.term) {
              row.std_error = boot.se(static_cast<int>(c));
              break;
            }
          }
        }
        if (stg_with_vcov && stg_out.format == "json") table.vcov = boot.vcov;
        table.notes.push_back(
            "standard errors from a cluster (by unit) bootstrap with " +
            std::to_string(boot.n_success) + " successful replications (" +
            std::to_string(boot.n_failed) + " failed), seed " +
            std::to_string(stg_seed));
      }
      emit(table, stg_out);
      return 0;
    }

    if (exposure_cmd->parsed()) {
      LoadedData data = load_data(exp_data, true);
      const auto spec = exposure_from_flags(exp_exp);
      const auto mode = exp_exp.ever_treated == "ever-treated"
                            ? sd::TreatedSetMode::ever_treated
                            : sd::TreatedSetMode::contemporaneous;
      const auto em = sd::compute_exposure(data.panel, *data.distances, spec, mode);
      std::ostringstream buffer;
      sd::write_exposure(buffer, data.panel, em);
      if (exp_out.out.empty()) {
        std::cout << buffer.str();
      } else {
        std::ofstream os(exp_out.out, std::ios::binary);
        if (!os)
          sd::fail(sd::errc::io_error, "cannot write --out file " + exp_out.out);
        os << buffer.str();
      }
      return 0;
    }

    if (decompose_cmd->parsed()) {
      LoadedData data = load_data(dec_data, true);
      const auto spec = exposure_from_flags(dec_exp);
      const auto em = sd::compute_exposure(data.panel, *data.distances, spec);
      const auto vcov = vcov_from_flags(dec_vcov, dec_cutoff, dec_kernel,
                                        data.distances != nullptr,
                                        spec.outer_radius());
      sd::DidSpec classic;
      classic.estimand = sd::DidSpec::Estimand::classic;
      classic.vcov = vcov;
      sd::DidSpec total;
      total.estimand = sd::DidSpec::Estimand::total;
      total.vcov = vcov;
      const auto fit_classic = sd::estimate(data.panel, em, classic, data.distances.get());
      const auto fit_total = sd::estimate(data.panel, em, total, data.distances.get());

      sd::CoefficientTable table;
      table.rows.push_back({"tau_classic", fit_classic.coef_of("tau"),
                            fit_classic.se_of("tau"), "treatment", std::nullopt});
      table.rows.push_back({"tau_total", fit_total.coef_of("tau"),
                            fit_total.se_of("tau"), "treatment", std::nullopt});
      table.rows.push_back({"gamma0", fit_total.coef_of("gamma0"),
                            fit_total.se_of("gamma0"), "spillover_control",
                            std::nullopt});
      table.rows.push_back({"tau_spill_control_derived",
                            fit_total.coef_of("tau") - fit_classic.coef_of("tau"),
                            std::numeric_limits<double>::quiet_NaN(), "derived",
                            std::nullopt});
      table.notes.push_back(
          "tau_spill_control_derived = tau_total - tau_classic rearranges the "
          "DiD decomposition; it is a derived quantity without its own "
          "standard error");
      emit(table, dec_out);
      return 0;
    }

    if (simulate_cmd->parsed()) {
      sd::DGPConfig base;
      base.grid = {sim_rows, sim_cols, sim_spacing};
      base.n_periods = sim_periods;
      base.treated_fraction = sim_p;
      base.assignment = sim_assignment == "uniform" ? sd::Assignment::uniform_random
                                                    : sd::Assignment::clustered;
      base.normalize_control_mean = sim_normalize;
      const auto dgps = sd::appendix_dgps(base);
      const auto specs = sd::appendix_specs();
      const int threads = threads_from_env(sim_threads);
      const auto report = sd::run_grid(dgps, specs, sim_nsims, sim_seed, threads);

      std::ostringstream buffer;
      if (sim_out.format == "json") {
        nlohmann::json j;
        j["n_sims"] = report.n_sims;
        j["seed"] = report.seed;
        j["cells"] = nlohmann::json::array();
        for (const auto& c : report.cells)
          j["cells"].push_back({{"dgp", c.dgp},
                                {"spec", c.spec},
                                {"bias", c.mean_bias},
                                {"mse", c.mse},
                                {"mspe", c.mean_mspe},
                                {"mc_se", c.mc_se},
                                {"n_success", c.n_success},
                                {"n_failed", c.n_failed}});
        buffer << j.dump(2) << '\n';
      } else {
        report.write_csv(buffer);
      }
      if (sim_table) {
        report.format_table(std::cerr, false);
        report.format_table(std::cerr, true);
      }
      if (sim_out.out.empty()) {
        std::cout << buffer.str();
      } else {
        std::ofstream os(sim_out.out, std::ios::binary);
        if (!os)
          sd::fail(sd::errc::io_error, "cannot write --out file " + sim_out.out);
        os << buffer.str();
      }
      return 0;
    }
  } catch (const sd::Error& e) {
    std::cerr << "error: code=" << e.code_name() << " message=" << e.what()
              << std::endl;
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: code=Internal message=" << e.what() << std::endl;
    return 1;
  }
  return 0;
}
