// vpe: command line front end for the localization experiments.
//
//   vpe localize        --config configs/square.json --out out/square
//   vpe sweep           --config configs/line_sweep.json
//   vpe calibrate-study --config configs/calibration.json
//   vpe formation       --config configs/formation_triangle.json
//   vpe oracle-check    --config configs/oracle_check.json
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 fragmentation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "vpe/error.hpp"
#include "vpe/experiment_config.hpp"
#include "vpe/experiments.hpp"

namespace {

int exit_code_for(vpe::ErrorCategory c) {
  switch (c) {
    case vpe::ErrorCategory::Config: return 2;
    case vpe::ErrorCategory::Numerical: return 3;
    case vpe::ErrorCategory::Fragmentation: return 4;
    case vpe::ErrorCategory::Other: return 1;
  }
  return 1;
}

std::string_view category_name(vpe::ErrorCategory c) {
  switch (c) {
    case vpe::ErrorCategory::Config: return "config";
    case vpe::ErrorCategory::Numerical: return "numerical";
    case vpe::ErrorCategory::Fragmentation: return "fragmentation";
    case vpe::ErrorCategory::Other: return "other";
  }
  return "other";
}

// one JSON line on stderr, and error.json in the output directory if possible
void report_error(const std::string& verb, const std::string& code, std::string_view category,
                  const std::string& message, const std::optional<std::string>& out_dir) {
  nlohmann::json rec = {{"command", verb}, {"error", code}, {"category", category},
                        {"message", message}};
  std::cerr << rec.dump() << "\n";
  if (!out_dir) return;
  std::error_code ec;
  std::filesystem::create_directories(*out_dir, ec);
  if (ec) return;
  std::ofstream f(std::filesystem::path(*out_dir) / "error.json");
  if (f) f << rec.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual particle exchange localization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> variant;
  std::optional<int> threads;
  bool long_run = false;

  const char* verbs[][2] = {
      {"localize", "localize one scenario and write error traces and plots"},
      {"sweep", "run localization over size factors and ranges, fit iterations"},
      {"calibrate-study", "compare centroid drift with and without calibration"},
      {"formation", "run the shape formation loop"},
      {"oracle-check", "check the chain bound and oracle equivalence"},
  };
  for (auto& v : verbs) {
    auto* sub = app.add_subcommand(v[0], v[1]);
    sub->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--variant", variant, "matrix or optical")
        ->check(CLI::IsMember({"matrix", "optical"}));
    sub->add_option("--threads", threads, "worker threads (0: all cores)");
    sub->add_flag("--long", long_run, "enable the size-factor-100 runs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  std::optional<std::string> err_dir = out_dir;
  try {
    vpe::ExperimentConfig cfg =
        config_path.empty() ? vpe::ExperimentConfig{} : vpe::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.sensor.rng_seed = *seed;
    }
    if (out_dir) cfg.out_dir = *out_dir;
    if (variant) cfg.variant = vpe::parse_variant(*variant);
    if (threads) cfg.threads = *threads;
    if (long_run) cfg.long_run = true;
    err_dir = cfg.out_dir;
    cfg.validate();

    vpe::CommandResult res;
    if (verb == "localize")
      res = cfg.long_run ? vpe::cmd_long(cfg) : vpe::cmd_localize(cfg);
    else if (verb == "sweep")
      res = vpe::cmd_sweep(cfg);
    else if (verb == "calibrate-study")
      res = vpe::cmd_calibration_study(cfg);
    else if (verb == "formation")
      res = vpe::cmd_formation(cfg);
    else
      res = vpe::cmd_oracle_check(cfg);

    for (const auto& line : res.lines) std::cout << line << "\n";
    std::cout << "config hash " << cfg.hash_hex() << ", outputs in " << cfg.out_dir << "\n";
    if (res.exit_code == 4) std::cerr << "swarm fragmented; see error.json\n";
    return res.exit_code;
  } catch (const vpe::Error& e) {
    report_error(verb, std::string(vpe::to_string(e.code())), category_name(e.category()), e.what(),
                 err_dir);
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    report_error(verb, "Internal", "other", e.what(), err_dir);
    return 1;
  }
}
