// Command line front end: multi-block decomposition runs, synthetic data
// generation, and plot re-rendering from an existing report.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "divas/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIngest = 3;
constexpr int kExitNumeric = 4;

int cmd_run(const std::string& config_path, long seed_override, const std::string& out_override) {
  divas::RunConfig cfg;
  try {
    cfg = divas::parse_run_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.output_dir = out_override;
    cfg.validate();
  } catch (const divas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const divas::PipelineResult result = divas::run_from_config(cfg);
    std::cout << "report: " << (std::filesystem::path(cfg.output_dir) / "report.json").string()
              << "\n";
    for (const auto& [c, s] : result.search.structures)
      std::cout << "  " << divas::to_string(c) << " rank " << s.rank() << "\n";
    return 0;
  } catch (const divas::IngestError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kExitIngest;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int cmd_synth(const std::string& preset, const std::string& out_dir, long seed) {
  try {
    divas::SynthSpec spec;
    if (preset == "paper-fig3")
      spec = divas::SynthSpec::three_block_preset(false, static_cast<std::uint64_t>(seed));
    else if (preset == "desk")
      spec = divas::SynthSpec::three_block_preset(true, static_cast<std::uint64_t>(seed));
    else {
      std::cerr << "config error: unknown preset '" << preset << "'\n";
      return kExitConfig;
    }
    const divas::SynthData data = divas::generate(spec);
    divas::write_synth_dataset(out_dir, data);
    std::cout << "wrote " << data.blocks.size() << " blocks and ground truth to " << out_dir
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int cmd_diagnose(const std::string& report_path) {
  try {
    std::ifstream in(report_path);
    if (!in) {
      std::cerr << "ingestion error: cannot open '" << report_path << "'\n";
      return kExitIngest;
    }
    const auto root = nlohmann::ordered_json::parse(in);
    const divas::DiagnosticsReport report = divas::report_from_json(root);
    const auto dir = std::filesystem::path(report_path).parent_path();
    divas::write_angle_panel_svg((dir / "angles_traits.svg").string(), report, false);
    divas::write_angle_panel_svg((dir / "angles_objects.svg").string(), report, true);
    divas::write_concentration_svg((dir / "concentration.svg").string(), report);
    for (std::size_t kb = 0; kb < report.qq.size(); ++kb)
      if (report.qq[kb].observed.size() > 0)
        divas::write_qq_svg((dir / ("qq_block" + std::to_string(kb + 1) + ".svg")).string(),
                            report.qq[kb]);
    std::cout << "plots rendered next to " << report_path << "\n";
    return 0;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return kExitIngest;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-block subspace decomposition"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset = "desk", report_path;
  long seed = -1;

  auto* run = app.add_subcommand("run", "decompose configured data blocks");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "override the output directory");

  long synth_seed = 0;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "generate a synthetic data set with ground truth");
  synth->add_option("--preset", preset, "paper-fig3 or desk")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* diagnose = app.add_subcommand("diagnose", "re-render plots from a report");
  diagnose->add_option("--report", report_path, "path to report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (run->parsed()) return cmd_run(config_path, seed, out_dir);
  if (synth->parsed()) return cmd_synth(preset, synth_out, synth_seed);
  if (diagnose->parsed()) return cmd_diagnose(report_path);
  return kExitConfig;
}
