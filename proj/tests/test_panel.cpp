#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "spillover_did/panel.hpp"

using namespace spillover_did;
using test_helpers::make_panel;
using test_helpers::Obs;

TEST_CASE("load_panel builds D_it from the 0/1 column") {
  std::istringstream in(
      "unit,time,outcome,treated\n"
      "A,0,1.0,0\n"
      "A,1,2.0,1\n"
      "B,0,1.0,0\n"
      "B,1,1.5,0\n");
  const auto panel = load_panel(in, PanelSchema{});
  REQUIRE(panel.n_units() == 2);
  REQUIRE(panel.n_periods() == 2);
  REQUIRE(panel.n_obs() == 4);
  const int a = panel.unit_index("A");
  const int b = panel.unit_index("B");
  REQUIRE(panel.treated(panel.find(a, 1)));
  REQUIRE_FALSE(panel.treated(panel.find(a, 0)));
  REQUIRE_FALSE(panel.treated(panel.find(b, 0)));
  REQUIRE_FALSE(panel.treated(panel.find(b, 1)));
  REQUIRE(panel.treat_start(a) == 1);
  REQUIRE(panel.treat_start(b) == PanelDataset::kNeverTreated);
}

TEST_CASE("load_panel rejects duplicate unit-time pairs") {
  std::istringstream in(
      "unit,time,outcome,treated\n"
      "A,0,1.0,0\nA,1,2.0,1\nB,0,1.0,0\nB,1,1.5,0\nA,0,9.0,0\n");
  try {
    load_panel(in, PanelSchema{});
    FAIL("expected DuplicateKey");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::duplicate_key);
  }
}

TEST_CASE("load_panel rejects treatment that switches off") {
  std::istringstream in(
      "unit,time,outcome,treated\n"
      "A,0,1.0,1\nA,1,2.0,0\n");
  try {
    load_panel(in, PanelSchema{});
    FAIL("expected NonAbsorbingTreatment");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::non_absorbing_treatment);
  }
}

TEST_CASE("load_panel reports a missing schema column") {
  std::istringstream in("unit,time,outcome\nA,0,1.0\n");
  try {
    load_panel(in, PanelSchema{});
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    REQUIRE(e.code() == errc::missing_column);
  }
}

TEST_CASE("rows with missing outcome or covariates are rejected and reported") {
  std::istringstream in(
      "unit,time,outcome,treated,x\n"
      "A,0,1.0,0,3.0\n"
      "A,1,NA,1,3.0\n"
      "B,0,1.0,0,\n"
      "B,1,1.5,0,2.0\n");
  PanelSchema schema;
  schema.covariates = {"x"};
  LoadReport report;
  const auto panel = load_panel(in, schema, &report);
  REQUIRE(panel.n_obs() == 2);
  REQUIRE(report.rejected_missing_outcome == std::vector<long>{2});
  REQUIRE(report.rejected_missing_covariate == std::vector<long>{3});
}

TEST_CASE("adoption-period treatment column normalizes to the same panel") {
  std::istringstream in_start(
      "unit,time,outcome,start\n"
      "A,0,1.0,1\nA,1,2.0,1\nB,0,1.0,NA\nB,1,1.5,NA\n");
  PanelSchema schema;
  schema.treat = "start";
  schema.treat_is_start_period = true;
  const auto from_start = load_panel(in_start, schema);

  const auto from_indicator = make_panel(
      {{"A", 0, 1.0, 0}, {"A", 1, 2.0, 1}, {"B", 0, 1.0, 0}, {"B", 1, 1.5, 0}});

  REQUIRE(from_start.n_obs() == from_indicator.n_obs());
  for (long i = 0; i < from_start.n_obs(); ++i) {
    REQUIRE(from_start.treated(i) == from_indicator.treated(i));
    REQUIRE(from_start.outcome(i) == from_indicator.outcome(i));
  }
}

TEST_CASE("validate_balance") {
  SECTION("complete 2x2 panel is balanced") {
    const auto panel = make_panel(
        {{"A", 0, 1, 0}, {"A", 1, 2, 1}, {"B", 0, 1, 0}, {"B", 1, 2, 0}});
    const auto rep = validate_balance(panel);
    REQUIRE(rep.balanced);
    REQUIRE(rep.units_per_period.size() == 2);
  }
  SECTION("missing period flips the flag and shows counts") {
    const auto panel =
        make_panel({{"A", 0, 1, 0}, {"A", 1, 2, 1}, {"B", 0, 1, 0}});
    const auto rep = validate_balance(panel);
    REQUIRE_FALSE(rep.balanced);
    REQUIRE(rep.units_per_period[0].second == 2);
    REQUIRE(rep.units_per_period[1].second == 1);
  }
  SECTION("empty panel is vacuously balanced") {
    PanelBuilder b;
    const auto panel = b.build();
    const auto rep = validate_balance(panel);
    REQUIRE(rep.balanced);
    REQUIRE(rep.units_per_period.empty());
  }
}

TEST_CASE("first_difference") {
  SECTION("computes per-unit deltas") {
    const auto panel = make_panel(
        {{"A", 0, 1, 0}, {"A", 1, 5, 1}, {"B", 0, 1, 0}, {"B", 1, 2, 0}});
    const auto fd = first_difference(panel, 0, 1);
    REQUIRE(fd.delta_outcome.size() == 2);
    REQUIRE(fd.delta_outcome[0] == Catch::Approx(4.0));
    REQUIRE(fd.delta_outcome[1] == Catch::Approx(1.0));
    REQUIRE(fd.treated[0] == 1);
    REQUIRE(fd.treated[1] == 0);
  }
  SECTION("units lacking a period are excluded and reported") {
    const auto panel =
        make_panel({{"A", 0, 1, 0}, {"A", 1, 5, 1}, {"B", 0, 1, 0}});
    const auto fd = first_difference(panel, 0, 1);
    REQUIRE(fd.unit.size() == 1);
    REQUIRE(fd.dropped_units.size() == 1);
    REQUIRE(panel.unit_id(fd.dropped_units[0]) == "B");
  }
  SECTION("base equal to end gives zero deltas") {
    const auto panel = make_panel({{"A", 0, 1, 0}, {"B", 0, 3, 0}});
    const auto fd = first_difference(panel, 0, 0);
    REQUIRE(fd.delta_outcome[0] == 0.0);
    REQUIRE(fd.delta_outcome[1] == 0.0);
  }
  SECTION("EmptyResult when no unit has both periods") {
    const auto panel = make_panel({{"A", 0, 1, 0}, {"B", 1, 3, 0}});
    try {
      first_difference(panel, 0, 1);
      FAIL("expected EmptyResult");
    } catch (const Error& e) {
      REQUIRE(e.code() == errc::empty_result);
    }
  }
}

TEST_CASE("first_difference is linear in the outcome") {
  Rng rng(42);
  const double a = 2.5, b = -1.25;
  PanelBuilder pb1, pb2, pbc;
  for (int u = 0; u < 30; ++u) {
    const auto name = test_helpers::unit_name(u);
    pb1.add_unit(name);
    pb2.add_unit(name);
    pbc.add_unit(name);
    for (int t = 0; t < 2; ++t) {
      const double y1 = rng.normal(0, 3), y2 = rng.normal(1, 2);
      const bool d = (u % 3 == 0) && t == 1;
      pb1.add_observation(u, t, y1, d);
      pb2.add_observation(u, t, y2, d);
      pbc.add_observation(u, t, a * y1 + b * y2, d);
    }
  }
  const auto p1 = pb1.build(), p2 = pb2.build(), pc = pbc.build();
  const auto f1 = first_difference(p1, 0, 1);
  const auto f2 = first_difference(p2, 0, 1);
  const auto fc = first_difference(pc, 0, 1);
  for (size_t r = 0; r < fc.unit.size(); ++r)
    REQUIRE(fc.delta_outcome[r] ==
            Catch::Approx(a * f1.delta_outcome[r] + b * f2.delta_outcome[r])
                .margin(1e-12));
}

TEST_CASE("pre/post averaging collapses a multi-period panel") {
  const auto panel = make_panel({{"A", 0, 1, 0},
                                 {"A", 1, 3, 0},
                                 {"A", 2, 10, 1},
                                 {"A", 3, 12, 1},
                                 {"B", 0, 0, 0},
                                 {"B", 1, 2, 0},
                                 {"B", 2, 3, 0},
                                 {"B", 3, 5, 0}});
  const auto fd = first_difference_averaged(panel, 2);
  // A: mean(10,12) - mean(1,3) = 9; B: mean(3,5) - mean(0,2) = 3.
  REQUIRE(fd.delta_outcome[0] == Catch::Approx(9.0));
  REQUIRE(fd.delta_outcome[1] == Catch::Approx(3.0));
  REQUIRE(fd.treated[0] == 1);
  REQUIRE(fd.treated[1] == 0);
}

TEST_CASE("write/load round trip is the identity") {
  Rng rng(7);
  PanelBuilder pb({"x1", "x2"});
  for (int u = 0; u < 17; ++u) {
    pb.add_unit(test_helpers::unit_name(u));
    for (int t = 0; t < 3; ++t) {
      if (u == 4 && t == 1) continue;  // hole in the panel
      pb.add_observation(u, t, rng.normal(0, 5), u % 5 == 0 && t >= 1,
                         {rng.uniform(), rng.uniform(-2, 2)});
    }
  }
  const auto panel = pb.build();

  std::ostringstream out;
  write_panel(out, panel);
  std::istringstream in(out.str());
  PanelSchema schema;
  schema.covariates = {"x1", "x2"};
  const auto reloaded = load_panel(in, schema);

  REQUIRE(reloaded.n_obs() == panel.n_obs());
  REQUIRE(reloaded.n_units() == panel.n_units());
  for (long i = 0; i < panel.n_obs(); ++i) {
    REQUIRE(reloaded.unit_id(reloaded.unit_of(i)) ==
            panel.unit_id(panel.unit_of(i)));
    REQUIRE(reloaded.time_of(i) == panel.time_of(i));
    REQUIRE(reloaded.outcome(i) == panel.outcome(i));
    REQUIRE(reloaded.treated(i) == panel.treated(i));
    REQUIRE(reloaded.covariate(i, 0) == panel.covariate(i, 0));
    REQUIRE(reloaded.covariate(i, 1) == panel.covariate(i, 1));
  }
}
