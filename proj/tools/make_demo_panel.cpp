// Writes a synthetic panel with the shape of the bundled demo: 24 controls,
// three treated units adopting at months 121, 70 and 126, 166 months, two
// latent factors and three covariates.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gscvol/dataio.hpp"
#include "gscvol/simulate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic demo panel"};
  std::string out = "demo_panel.csv";
  std::uint64_t seed = 2024;
  gscvol::sim::PanelSpec spec;
  spec.effect = 1.0;
  app.add_option("--out", out, "Output CSV path");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--effect", spec.effect, "Constant treatment effect");
  app.add_option("--noise", spec.noise_sd, "Idiosyncratic noise sd");
  app.add_option("--factors", spec.factors, "Number of latent factors");
  CLI11_PARSE(app, argc, argv);
  try {
    gscvol::save_panel(out, gscvol::sim::simulate_panel(spec, seed).panel);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
