#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace spillover_did {

// One row of the tidy coefficient output shared by all estimators.
// Column order is part of the output contract:
//   term, estimate, std_error, group, relative_time
struct CoefRow {
  std::string term;
  double estimate = 0.0;
  double std_error = 0.0;
  std::string group;
  std::optional<int> relative_time;
};

inline std::string format_double(double x, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

struct CoefficientTable {
  std::vector<CoefRow> rows;
  std::optional<Eigen::MatrixXd> vcov;  // aligned with rows; JSON output only
  std::vector<std::string> notes;

  void write_csv(std::ostream& os, int digits = 12) const {
    os << "term,estimate,std_error,group,relative_time\n";
    for (const auto& r : rows) {
      os << csv_quote(r.term) << ',' << format_double(r.estimate, digits)
         << ',' << format_double(r.std_error, digits) << ','
         << csv_quote(r.group) << ',';
      if (r.relative_time) os << *r.relative_time;
      os << '\n';
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["coefficients"] = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row;
      row["term"] = r.term;
      row["estimate"] = r.estimate;
      row["std_error"] = r.std_error;
      row["group"] = r.group;
      if (r.relative_time)
        row["relative_time"] = *r.relative_time;
      else
        row["relative_time"] = nullptr;
      j["coefficients"].push_back(row);
    }
    if (vcov) {
      nlohmann::json m = nlohmann::json::array();
      for (Eigen::Index i = 0; i < vcov->rows(); ++i) {
        nlohmann::json mrow = nlohmann::json::array();
        for (Eigen::Index k = 0; k < vcov->cols(); ++k) mrow.push_back((*vcov)(i, k));
        m.push_back(mrow);
      }
      j["vcov"] = m;
    }
    if (!notes.empty()) j["notes"] = notes;
    return j;
  }
};

}  // namespace spillover_did
