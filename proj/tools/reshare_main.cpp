#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reshare/error.hpp"
#include "reshare/pipeline.hpp"

namespace fs = std::filesystem;
using namespace reshare;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool seed = true) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory")->required();
  if (seed) cmd->add_option("--seed", c.seed, "Base seed");
  cmd->add_option("--set", c.overrides, "Override a config value, e.g. plv.epochs=20");
  cmd->add_flag("-q,--quiet", c.quiet, "No progress output");
}

pipeline::PipelineConfig resolve(const Common& c) {
  auto config = c.config.empty() ? pipeline::parse_config("{}", {}, c.overrides)
                                 : pipeline::load_config(c.config, c.overrides);
  if (c.seed) config.seed = *c.seed;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased modelling of hate-speech resharing"};
  app.require_subcommand(1);

  Common synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with its ground truth");
  add_common(synth, synth_opts);

  Common pipe_opts;
  bool resume = false;
  std::optional<std::size_t> runs;
  auto* pipe = app.add_subcommand("pipeline", "Propensity, PLV, outcomes and effect models, then report.txt");
  add_common(pipe, pipe_opts);
  pipe->add_flag("--resume", resume, "Skip stages whose outputs match the current config");
  pipe->add_option("--runs", runs, "Number of seeded runs")->check(CLI::PositiveNumber);

  Common sweep_opts;
  bool sweep_resume = false;
  std::vector<double> mus;
  auto* sweep = app.add_subcommand("mu-sweep", "Ranking metrics of BPRMF-V and BPRMF-F over smoothing exponents");
  add_common(sweep, sweep_opts);
  sweep->add_option("--mu", mus, "Smoothing exponents (default: config mu_list)");
  sweep->add_flag("--resume", sweep_resume, "Reuse the generated dataset when it matches");

  std::vector<std::string> inputs;
  std::string analyze_out;
  double eps = 0.5;
  std::size_t min_pts = 10;
  auto* analyze = app.add_subcommand("embed-analyze", "DBSCAN and silhouette on exported embeddings");
  analyze->add_option("--input", inputs, "plv_embeddings.csv files")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", analyze_out, "Output directory")->required();
  analyze->add_option("--eps", eps, "DBSCAN radius");
  analyze->add_option("--min-pts", min_pts, "DBSCAN minimum neighbourhood size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      auto config = resolve(synth_opts);
      auto sc = pipeline::synth_config(config);
      if (synth_opts.seed) sc.seed = *synth_opts.seed;
      const auto generated = pipeline::cmd_synth(sc, synth_opts.out);
      if (!synth_opts.quiet) {
        std::cerr << "wrote " << generated.data.graph.num_users() << " users, " << generated.data.graph.num_posts()
                  << " posts, " << generated.data.graph.num_edges() << " reshares to " << synth_opts.out << "\n";
      }
    } else if (*pipe) {
      auto config = resolve(pipe_opts);
      if (runs) config.runs = *runs;
      pipeline::RunOptions opts{resume, pipe_opts.quiet ? nullptr : &std::cerr};
      const auto result = pipeline::cmd_pipeline(config, pipe_opts.out, opts);
      if (!pipe_opts.quiet) std::cout << result.report;
    } else if (*sweep) {
      auto config = resolve(sweep_opts);
      if (mus.empty()) mus = config.mu_list;
      pipeline::RunOptions opts{sweep_resume, sweep_opts.quiet ? nullptr : &std::cerr};
      pipeline::cmd_mu_sweep(config, mus, sweep_opts.out, opts);
      if (!sweep_opts.quiet) std::cerr << "wrote " << (fs::path(sweep_opts.out) / "mu_sweep.csv").string() << "\n";
    } else if (*analyze) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      for (const auto& a : pipeline::cmd_embed_analyze(paths, analyze_out, eps, min_pts)) {
        std::cout << a.tag << ": " << a.n_points << " points, " << a.n_clusters << " clusters, " << a.n_noise
                  << " noise, silhouette " << (a.silhouette ? std::to_string(*a.silhouette) : std::string("n/a"))
                  << "\n";
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
