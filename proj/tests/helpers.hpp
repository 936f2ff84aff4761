#pragma once

#include <string>
#include <vector>

#include "spillover_did/panel.hpp"
#include "spillover_did/rng.hpp"
#include "spillover_did/spatial.hpp"

namespace test_helpers {

using spillover_did::PanelBuilder;
using spillover_did::PanelDataset;
using spillover_did::PointSet;
using spillover_did::Rng;

struct Obs {
  std::string unit;
  int time;
  double y;
  int d;
};

inline PanelDataset make_panel(const std::vector<Obs>& rows) {
  PanelBuilder b;
  for (const auto& r : rows) b.add_unit(r.unit);
  for (const auto& r : rows)
    b.add_observation(b.add_unit(r.unit), r.time, r.y, r.d != 0);
  return b.build();
}

inline std::string unit_name(int i) { return "u" + std::to_string(i); }

// Random planar cloud over a box, ids u0..u{n-1}.
inline PointSet random_cloud(int n, double width, double height, Rng& rng) {
  PointSet pts(spillover_did::Metric::planar);
  for (int i = 0; i < n; ++i)
    pts.add(unit_name(i), rng.uniform(0.0, width), rng.uniform(0.0, height));
  return pts;
}

}  // namespace test_helpers
