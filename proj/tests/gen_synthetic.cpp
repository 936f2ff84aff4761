// Writes the packaged synthetic dataset used by the CLI golden tests:
// a two-period panel over a planar grid with a clustered treated region and
// negative spillovers on nearby controls. Run manually from the repo root:
//   build/tests/gen_synthetic data/
#include <fstream>
#include <iostream>

#include "spillover_did/montecarlo.hpp"
#include "spillover_did/panel.hpp"
#include "spillover_did/table.hpp"

using namespace spillover_did;

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data/";

  DGPConfig config;
  config.grid = {12, 15, 12.0};  // 180 units
  config.n_periods = 2;
  config.treated_fraction = 0.1;
  config.assignment = Assignment::clustered;
  config.true_spec = ExposureSpec::WithinIndicator(50);
  config.normalize_control_mean = -1.0;
  config.seed = 20240801;

  const auto gp = generate_panel(config, 0);

  std::ofstream panel_out(dir + "synthetic_panel.csv", std::ios::binary);
  write_panel(panel_out, gp.panel);

  std::ofstream coords_out(dir + "synthetic_coords.csv", std::ios::binary);
  coords_out << "unit,x,y\n";
  for (int i = 0; i < gp.points.size(); ++i)
    coords_out << gp.points.id(i) << ',' << format_double(gp.points.x(i), 17)
               << ',' << format_double(gp.points.y(i), 17) << '\n';

  std::cout << "wrote " << dir << "synthetic_panel.csv ("
            << gp.panel.n_obs() << " rows) and " << dir
            << "synthetic_coords.csv (" << gp.points.size() << " units)\n";
  return 0;
}
