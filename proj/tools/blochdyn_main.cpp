#include <iostream>

#include "CLI11.hpp"
#include "bloch/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"blochdyn: semiclassical Bloch electron dynamics with Berry-phase corrections"};
  app.require_subcommand(1);

  std::string config_path;
  std::string outdir = "out";
  bool check = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file (flat key = value)");
  app.add_option("--out", outdir, "output directory");
  app.add_flag("--check", check, "fail the process when acceptance thresholds are violated");
  app.add_option("--set", overrides, "override a config entry, e.g. --set band.cutoff=48")
      ->take_all();

  const std::vector<std::pair<std::string, std::string>> kinds = {
      {"bands", "tabulate the band, its momentum derivatives and the Berry connection"},
      {"perturb", "first and second order static corrections over the band grid"},
      {"verify-identities", "residuals of the band-state identity chain"},
      {"trajectory", "integrate corrected characteristics with transported jets"},
      {"evolve", "direct split-step solve of the two-scale equation"},
      {"prepare", "build single-band initial data"},
      {"reconstruct", "reconstruct the asymptotic field in the plane-wave family"},
      {"converge", "epsilon sweeps with fitted convergence orders"},
      {"special-case", "plane-wave/linear-potential flow against closed forms"},
  };
  for (const auto& [name, desc] : kinds) app.add_subcommand(name, desc)->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    bloch::Config cfg;
    if (!config_path.empty()) cfg = bloch::Config::parse_file(config_path);
    for (const std::string& kv : overrides) {
      size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("--set expects key=value, got '" + kv + "'");
      bloch::Config one = bloch::Config::parse_string(kv.substr(0, eq) + " = " +
                                                      kv.substr(eq + 1) + "\n");
      for (const auto& [k, v] : one.values()) cfg.set(k, v);
    }
    std::string kind = app.get_subcommands().front()->get_name();
    int rc = bloch::run_experiment(kind, cfg, outdir, check);
    if (rc != 0) std::cerr << kind << ": check thresholds violated\n";
    return rc;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
