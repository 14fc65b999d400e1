#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "divas/bootstrap.hpp"
#include "divas/diagnostics.hpp"
#include "divas/io.hpp"
#include "divas/noise.hpp"
#include "divas/plot.hpp"
#include "divas/reconstruct.hpp"
#include "divas/search.hpp"
#include "divas/shrinkage.hpp"
#include "divas/synth.hpp"

namespace divas {

struct BlockSource {
  std::string path;
  std::string name;
  bool trait_centered = false;
  bool object_centered = false;
  bool logit_transform = false;
};

struct RunConfig {
  std::vector<BlockSource> blocks;
  double xi = 1.0 - 2.0 / (1.0 + std::sqrt(5.0));
  int bootstrap_reps = 400;
  double bound_quantile = 0.95;
  double theta0_quantile = 0.05;
  double theta2_quantile = 0.95;
  CcpConfig ccp;
  Shrinker shrinker = Shrinker::optimal;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool emit_plots = false;
  bool desk_scale = false;
  int qq_traces = 100;  // 0 disables the envelope simulation
  int workers = 0;      // 0: hardware concurrency
  bool redraw_noise = false;
  bool stratified_impute = false;

  void validate() const {
    if (blocks.empty()) throw ConfigError("no blocks configured");
    if (!(xi > 0.0 && xi <= 0.5)) throw ConfigError("xi must be in (0, 0.5]");
    if (bootstrap_reps < 50) throw ConfigError("bootstrap_reps must be at least 50");
    for (double q : {bound_quantile, theta0_quantile, theta2_quantile})
      if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantiles must be in (0, 1)");
    if (qq_traces < 0) throw ConfigError("qq_traces must be nonnegative");
    try {
      ccp.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
};

inline std::string shrinker_name(Shrinker s) {
  switch (s) {
    case Shrinker::optimal: return "optimal";
    case Shrinker::soft: return "soft";
    case Shrinker::hard: return "hard";
  }
  return "optimal";
}

inline RunConfig parse_run_config(const std::string& path) {
  const auto kv = parse_key_values(path);
  static const std::set<std::string> known{
      "xi",           "bootstrap_reps", "bound_quantile", "theta0_quantile",
      "theta2_quantile", "ccp.tau0",    "ccp.mu",         "ccp.tau_max",
      "ccp.max_iter", "ccp.eps_slack",  "ccp.eps_angle",  "ccp.solver_tol",
      "seed",         "out_dir",        "emit_plots",     "desk_scale",
      "qq_traces",    "workers",        "redraw_noise",   "stratified_impute",
      "shrinker"};
  static const std::set<std::string> block_fields{"path", "name", "trait_centered",
                                                  "object_centered", "logit"};
  for (const auto& [key, value] : kv) {
    if (known.count(key)) continue;
    if (key.rfind("block.", 0) == 0) {
      const auto second = key.find('.', 6);
      if (second != std::string::npos && block_fields.count(key.substr(second + 1))) continue;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig cfg;
  cfg.xi = detail::config_double(kv, "xi", cfg.xi);
  cfg.bootstrap_reps = static_cast<int>(detail::config_long(kv, "bootstrap_reps", cfg.bootstrap_reps));
  cfg.bound_quantile = detail::config_double(kv, "bound_quantile", cfg.bound_quantile);
  cfg.theta0_quantile = detail::config_double(kv, "theta0_quantile", cfg.theta0_quantile);
  cfg.theta2_quantile = detail::config_double(kv, "theta2_quantile", cfg.theta2_quantile);
  cfg.ccp.tau0 = detail::config_double(kv, "ccp.tau0", cfg.ccp.tau0);
  cfg.ccp.mu = detail::config_double(kv, "ccp.mu", cfg.ccp.mu);
  cfg.ccp.tau_max = detail::config_double(kv, "ccp.tau_max", cfg.ccp.tau_max);
  cfg.ccp.max_iter = static_cast<int>(detail::config_long(kv, "ccp.max_iter", cfg.ccp.max_iter));
  cfg.ccp.eps_slack = detail::config_double(kv, "ccp.eps_slack", cfg.ccp.eps_slack);
  cfg.ccp.eps_angle = detail::config_double(kv, "ccp.eps_angle", cfg.ccp.eps_angle);
  cfg.ccp.solver_tol = detail::config_double(kv, "ccp.solver_tol", cfg.ccp.solver_tol);
  cfg.seed = static_cast<std::uint64_t>(detail::config_long(kv, "seed", 0));
  cfg.output_dir = kv.count("out_dir") ? kv.at("out_dir") : cfg.output_dir;
  cfg.emit_plots = detail::config_bool(kv, "emit_plots", cfg.emit_plots);
  cfg.desk_scale = detail::config_bool(kv, "desk_scale", cfg.desk_scale);
  cfg.qq_traces = static_cast<int>(detail::config_long(kv, "qq_traces", cfg.qq_traces));
  cfg.workers = static_cast<int>(detail::config_long(kv, "workers", cfg.workers));
  cfg.redraw_noise = detail::config_bool(kv, "redraw_noise", cfg.redraw_noise);
  cfg.stratified_impute = detail::config_bool(kv, "stratified_impute", cfg.stratified_impute);
  if (kv.count("shrinker")) {
    const std::string& s = kv.at("shrinker");
    if (s == "optimal") cfg.shrinker = Shrinker::optimal;
    else if (s == "soft") cfg.shrinker = Shrinker::soft;
    else if (s == "hard") cfg.shrinker = Shrinker::hard;
    else throw ConfigError("unknown shrinker '" + s + "'");
  }
  for (int k = 1;; ++k) {
    const std::string prefix = "block." + std::to_string(k) + ".";
    if (!kv.count(prefix + "path")) break;
    BlockSource b;
    b.path = kv.at(prefix + "path");
    b.name = kv.count(prefix + "name") ? kv.at(prefix + "name") : ("X" + std::to_string(k));
    b.trait_centered = detail::config_bool(kv, prefix + "trait_centered", false);
    b.object_centered = detail::config_bool(kv, prefix + "object_centered", false);
    b.logit_transform = detail::config_bool(kv, prefix + "logit", false);
    cfg.blocks.push_back(std::move(b));
  }
  cfg.validate();
  return cfg;
}

struct PreprocessInfo {
  Vector removed_trait_means;   // per trait (row), accumulated
  Vector removed_object_means;  // per object (column), accumulated
  bool logit_applied = false;
};

/// Logit transform, then trait-centering (rows sum to zero), then
/// object-centering (columns sum to zero), the centering pair swept twice so
/// both hold simultaneously. Removed means are recorded for the report.
inline PreprocessInfo preprocess_block(DataBlock& block, bool trait_center, bool object_center,
                                       bool logit) {
  Matrix& x = block.values;
  PreprocessInfo info;
  info.removed_trait_means = Vector::Zero(x.rows());
  info.removed_object_means = Vector::Zero(x.cols());
  if (logit) {
    for (Index j = 0; j < x.cols(); ++j)
      for (Index i = 0; i < x.rows(); ++i) {
        const double v = x(i, j);
        if (!(v > 0.0 && v < 1.0))
          throw IngestError("block '" + block.name + "': logit requires entries in (0, 1); entry (" +
                            std::to_string(i + 1) + ", " + std::to_string(j + 1) + ") is " +
                            std::to_string(v));
        x(i, j) = std::log(v / (1.0 - v));
      }
    info.logit_applied = true;
    block.logit_transformed = true;
  }
  for (int sweep = 0; sweep < 2; ++sweep) {
    if (trait_center) {
      const Vector row_means = x.rowwise().mean();
      x.colwise() -= row_means;
      info.removed_trait_means += row_means;
    }
    if (object_center) {
      const Eigen::RowVectorXd col_means = x.colwise().mean();
      x.rowwise() -= col_means;
      info.removed_object_means += col_means.transpose();
    }
  }
  block.trait_centered = trait_center;
  block.object_centered = object_center;
  block.validate();
  return info;
}

inline DataBlock ingest(const BlockSource& src) {
  DataBlock block = make_block(read_csv_matrix(src.path), src.name);
  if (block.traits() < 2 || block.objects() < 2)
    throw IngestError("block '" + src.name + "': need at least a 2x2 matrix");
  if (!block.values.allFinite()) throw IngestError("block '" + src.name + "': non-finite entries");
  preprocess_block(block, src.trait_centered, src.object_centered, src.logit_transform);
  return block;
}

struct PipelineResult {
  std::vector<SearchBlock> search_blocks;
  std::vector<Index> estimated_ranks;
  std::vector<double> sigma_hats;
  SearchResult search;
  Reconstruction recon;
  DiagnosticsReport report;
};

inline nlohmann::ordered_json config_echo_json(const RunConfig& cfg) {
  nlohmann::ordered_json echo;
  echo["seed"] = cfg.seed;
  echo["xi"] = cfg.xi;
  echo["bootstrap_reps"] = cfg.bootstrap_reps;
  echo["bound_quantile"] = cfg.bound_quantile;
  echo["theta0_quantile"] = cfg.theta0_quantile;
  echo["theta2_quantile"] = cfg.theta2_quantile;
  echo["shrinker"] = shrinker_name(cfg.shrinker);
  echo["ccp"] = {{"tau0", cfg.ccp.tau0},       {"mu", cfg.ccp.mu},
                 {"tau_max", cfg.ccp.tau_max}, {"max_iter", cfg.ccp.max_iter},
                 {"eps_slack", cfg.ccp.eps_slack}, {"eps_angle", cfg.ccp.eps_angle},
                 {"solver_tol", cfg.ccp.solver_tol}};
  echo["qq_traces"] = cfg.qq_traces;
  echo["workers"] = cfg.workers;
  echo["redraw_noise"] = cfg.redraw_noise;
  echo["stratified_impute"] = cfg.stratified_impute;
  echo["emit_plots"] = cfg.emit_plots;
  echo["desk_scale"] = cfg.desk_scale;
  echo["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : cfg.blocks) {
    echo["blocks"].push_back({{"path", b.path},
                              {"name", b.name},
                              {"trait_centered", b.trait_centered},
                              {"object_centered", b.object_centered},
                              {"logit", b.logit_transform}});
  }
  return echo;
}

/// Full pipeline on already-loaded blocks: extraction, imputation, bootstrap,
/// joint search, reconstruction, diagnostics. Fully determined by (config,
/// seed, blocks).
inline PipelineResult run_pipeline(const RunConfig& cfg, const std::vector<DataBlock>& blocks) {
  cfg.validate();
  require(blocks.size() == cfg.blocks.size() || cfg.blocks.empty(),
          "run_pipeline: block count does not match config");
  worker_count() = cfg.workers;

  PipelineResult out;
  Rng root(cfg.seed);
  std::vector<QQBlockData> qq;

  for (std::size_t kb = 0; kb < blocks.size(); ++kb) {
    const DataBlock& block = blocks[kb];
    const SignalEstimate est = extract_signal(block, cfg.shrinker);
    out.estimated_ranks.push_back(est.r_hat);
    out.sigma_hats.push_back(est.sigma_hat);

    QQBlockData qq_block;
    qq_block.name = block.name;

    if (est.empty()) {
      out.search_blocks.push_back(make_signal_free_block(block));
      qq.push_back(std::move(qq_block));
      continue;
    }

    Rng impute_rng = root.child(0x100 + kb);
    const ImputedNoise noise = impute_noise(block, est, impute_rng, cfg.stratified_impute);

    BootstrapConfig bcfg;
    bcfg.xi = cfg.xi;
    bcfg.replications = cfg.bootstrap_reps;
    bcfg.bound_quantile = cfg.bound_quantile;
    bcfg.theta0_quantile = cfg.theta0_quantile;
    bcfg.redraw_noise = cfg.redraw_noise;
    Rng boot_rng = root.child(0x200 + kb);
    BootstrapResult boot = rotational_bootstrap(block, est, noise, bcfg, boot_rng);

    qq_block.observed = observed_qq_eigenvalues(noise.values, est.sigma_hat);
    const MPLaw law{est.aspect_beta, 1.0};
    const Index m = qq_block.observed.size();
    qq_block.theoretical.resize(m);
    for (Index i = 0; i < m; ++i)
      qq_block.theoretical(i) = mp_quantile(law, (static_cast<double>(i) + 0.5) / static_cast<double>(m));
    if (cfg.qq_traces > 0) {
      Rng qq_rng = root.child(0x300 + kb);
      const QQEnvelope env = qq_envelope(est.aspect_beta, m, 1.0, cfg.qq_traces, qq_rng);
      qq_block.env_min = env.env_min;
      qq_block.env_max = env.env_max;
    }
    qq.push_back(std::move(qq_block));

    if (boot.bounds.filtered_rank == 0)
      out.search_blocks.push_back(make_signal_free_block(block));
    else
      out.search_blocks.push_back(make_search_block(block, est, std::move(boot)));
  }

  out.search = run_full_search(out.search_blocks, cfg.ccp);
  out.recon = reconstruct_blocks(blocks, out.search.structures);
  out.report = assemble_report(out.search_blocks, out.estimated_ranks, out.sigma_hats,
                               out.search.structures, out.recon, std::move(qq),
                               config_echo_json(cfg), cfg.theta2_quantile);
  return out;
}

namespace detail {

inline std::string collection_tag(const BlockCollection& c) {
  std::string s = "c";
  for (std::size_t i = 0; i < c.indices.size(); ++i) {
    if (i) s += "-";
    s += std::to_string(c.indices[i]);
  }
  return s;
}

}  // namespace detail

/// Writes report.json plus the per-collection CSV artifacts (components,
/// rotated scores and loadings, iteration traces, Q-Q data) and optional SVG
/// panels into the output directory.
inline void write_artifacts(const RunConfig& cfg, const std::vector<DataBlock>& blocks,
                            const PipelineResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const auto path_of = [&](const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
  };

  {
    std::ofstream out(path_of("report.json"));
    out << report_to_json(result.report).dump(2) << '\n';
  }

  for (const auto& [c, s] : result.search.structures) {
    const std::string tag = detail::collection_tag(c);
    write_csv_matrix(path_of("scores_" + tag + ".csv"), result.recon.rotated_scores.at(c));
    for (int k : c.indices) {
      write_csv_matrix(path_of("loadings_" + tag + "_block" + std::to_string(k) + ".csv"),
                       result.recon.rotated_loadings(c, k));
      const auto& dec = result.recon.blocks[static_cast<std::size_t>(k - 1)];
      write_csv_matrix(path_of("component_" + tag + "_block" + std::to_string(k) + ".csv"),
                       dec.component(c, result.search.structures));
    }
  }

  {
    std::ofstream out(path_of("traces.csv"));
    out << "collection,direction,iteration,accepted,early_stopped,max_angle_slack";
    for (std::size_t k = 1; k <= blocks.size(); ++k) out << ",angle_block" << k << ",bound_block" << k;
    out << '\n';
    char buf[40];
    for (const auto& [c, traces] : result.search.traces) {
      for (const auto& t : traces) {
        for (const auto& row : t.rows) {
          out << detail::collection_tag(c) << ',' << t.direction_index << ',' << row.iteration
              << ',' << (t.accepted ? 1 : 0) << ',' << (t.early_stopped ? 1 : 0);
          std::snprintf(buf, sizeof(buf), ",%.17g", row.max_angle_slack);
          out << buf;
          for (std::size_t k = 0; k < blocks.size(); ++k) {
            const auto& sb = result.search_blocks[k];
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", row.trait_angles[k],
                          sb.signal_free() ? 90.0 : sb.bounds.phi_hat);
            out << buf;
          }
          out << '\n';
        }
      }
    }
  }

  for (std::size_t kb = 0; kb < result.report.qq.size(); ++kb) {
    const QQBlockData& q = result.report.qq[kb];
    if (q.observed.size() == 0) continue;
    std::ofstream out(path_of("qq_block" + std::to_string(kb + 1) + ".csv"));
    out << "rank,observed,theoretical,env_min,env_max\n";
    char buf[140];
    for (Index i = 0; i < q.observed.size(); ++i) {
      const double emin = q.env_min.size() > 0 ? q.env_min(i) : std::nan("");
      const double emax = q.env_max.size() > 0 ? q.env_max(i) : std::nan("");
      std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long>(i + 1),
                    q.observed(i), q.theoretical(i), emin, emax);
      out << buf;
    }
  }

  if (cfg.emit_plots) {
    write_angle_panel_svg(path_of("angles_traits.svg"), result.report, false);
    write_angle_panel_svg(path_of("angles_objects.svg"), result.report, true);
    write_concentration_svg(path_of("concentration.svg"), result.report);
    for (std::size_t kb = 0; kb < result.report.qq.size(); ++kb)
      if (result.report.qq[kb].observed.size() > 0)
        write_qq_svg(path_of("qq_block" + std::to_string(kb + 1) + ".svg"), result.report.qq[kb]);
  }
}

/// File-driven entry point: ingest all configured blocks, run, write
/// artifacts. Returns the in-memory result for callers that keep going.
inline PipelineResult run_from_config(const RunConfig& cfg) {
  std::vector<DataBlock> blocks;
  blocks.reserve(cfg.blocks.size());
  for (const auto& src : cfg.blocks) blocks.push_back(ingest(src));
  PipelineResult result = run_pipeline(cfg, blocks);
  write_artifacts(cfg, blocks, result);
  return result;
}

/// Writes a generated data set as CSV blocks plus ground truth, a manifest,
/// and a ready-to-run config file.
inline void write_synth_dataset(const std::string& dir, const SynthData& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto path_of = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

  std::ofstream manifest(path_of("manifest.txt"));
  manifest << "objects = " << data.spec.objects << '\n';
  manifest << "blocks = " << data.blocks.size() << '\n';
  manifest << "seed = " << data.spec.seed << '\n';
  manifest << "noise_scale = " << data.spec.noise_scale << '\n';
  if (data.spec.pairwise_trait_angle)
    manifest << "pairwise_trait_angle = " << *data.spec.pairwise_trait_angle << '\n';
  for (std::size_t k = 0; k < data.blocks.size(); ++k) {
    const std::string file = "x" + std::to_string(k + 1) + ".csv";
    write_csv_matrix(path_of(file), data.blocks[k].values);
    manifest << "block." << (k + 1) << ".file = " << file << '\n';
    manifest << "block." << (k + 1) << ".traits = " << data.blocks[k].traits() << '\n';
  }
  for (const auto& [c, v] : data.scores) {
    const std::string tag = detail::collection_tag(c);
    manifest << "truth." << tag << ".rank = " << v.cols() << '\n';
    write_csv_matrix(path_of("truth_scores_" + tag + ".csv"), v);
    for (const auto& [k, l] : data.loadings.at(c))
      write_csv_matrix(path_of("truth_loadings_" + tag + "_block" + std::to_string(k) + ".csv"), l);
  }

  std::ofstream cfg(path_of("run.cfg"));
  cfg << "# generated alongside the synthetic data\n";
  cfg << "seed = " << data.spec.seed << "\n";
  cfg << "out_dir = " << (fs::path(dir) / "out").string() << "\n";
  for (std::size_t k = 0; k < data.blocks.size(); ++k) {
    cfg << "block." << (k + 1) << ".path = " << path_of("x" + std::to_string(k + 1) + ".csv") << "\n";
    cfg << "block." << (k + 1) << ".name = X" << (k + 1) << "\n";
  }
}

}  // namespace divas
