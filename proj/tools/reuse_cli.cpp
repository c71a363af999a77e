#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "reuse/error.hpp"
#include "reuse/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"frozen vs mixed latent reuse experiments"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "run a preset and write report.json, tables/*.csv, manifest.json");
  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::uint64_t seed = 0;
  run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: config 'out' or ./out)");
  auto* preset_opt = run->add_option("--preset", preset, "override the config's preset");
  auto* seed_opt = run->add_option("--seed-override", seed, "override the root seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = reuse::load_config(config_path, preset_opt->count() ? std::optional<std::string>(preset) : std::nullopt,
                                        seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt);
    if (out_dir.empty()) out_dir = cfg.body.value("out", std::string("out"));
    const auto report = reuse::run(cfg);
    const auto files = reuse::write_report(report, out_dir);
    for (const auto& f : files) std::cout << out_dir << "/" << f << "\n";
  } catch (const reuse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == reuse::ErrorCode::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
