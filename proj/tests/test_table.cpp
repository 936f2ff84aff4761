#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "spillover_did/table.hpp"

using namespace spillover_did;

TEST_CASE("coefficient table CSV schema is stable") {
  CoefficientTable t;
  t.rows.push_back({"tau", 1.5, 0.25, "treatment", std::nullopt});
  t.rows.push_back({"delta_(0,20]", -0.5, 0.1, "spillover_control", std::nullopt});
  t.rows.push_back({"total[3]", 2.0, 0.3, "treatment", 3});
  std::ostringstream os;
  t.write_csv(os);
  const std::string expect =
      "term,estimate,std_error,group,relative_time\n"
      "tau,1.5,0.25,treatment,\n"
      "\"delta_(0,20]\",-0.5,0.1,spillover_control,\n"
      "total[3],2,0.3,treatment,3\n";
  REQUIRE(os.str() == expect);
}

TEST_CASE("JSON output nests the vcov") {
  CoefficientTable t;
  t.rows.push_back({"tau", 1.0, 0.5, "treatment", std::nullopt});
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = 0.25;
  t.vcov = v;
  const auto j = t.to_json();
  REQUIRE(j["coefficients"][0]["term"] == "tau");
  REQUIRE(j["coefficients"][0]["relative_time"].is_null());
  REQUIRE(j["vcov"][0][0] == Catch::Approx(0.25));
}
