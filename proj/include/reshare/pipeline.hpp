#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reshare/dataset.hpp"
#include "reshare/effects.hpp"
#include "reshare/plv.hpp"
#include "reshare/propensity.hpp"
#include "reshare/synthgen.hpp"
#include "reshare/topics.hpp"

namespace reshare::pipeline {

struct PipelineConfig {
  std::optional<DatasetPaths> data;  // input CSVs; when absent the synth block is used
  synth::SynthConfig synth;
  bool synth_seed_set = false;  // otherwise the synth seed follows `seed`

  std::vector<PropensityScheme> variants = {PropensityScheme::Biased, PropensityScheme::Virality,
                                            PropensityScheme::Follower, PropensityScheme::Neural};
  PropensityScheme primary = PropensityScheme::Virality;
  double mu = kDefaultMu;
  double floor = kDefaultPropensityFloor;

  topics::LdaOptions lda;
  std::size_t min_df = 2;
  std::optional<std::filesystem::path> stopwords;

  plv::PlvHyper plv;
  effects::EbmHyper ebm;
  bool linear_baseline = true;
  bool base_model = true;
  std::vector<std::string> clusters;  // per-cluster effect models; empty: none
  bool all_clusters = false;          // "clusters": "all"

  double plv_split_ratio = 0.8;
  double effects_split_ratio = 0.8;
  std::uint64_t seed = 0;
  std::size_t runs = 1;
  std::vector<std::size_t> k_list = {20, 40, 60, 80};
  std::vector<double> mu_list = {0.1, 0.5, 1.0};
  std::size_t curve_grid = 100;
  bool svg = true;

  void validate() const;
};

/// Parses a JSON config document; unknown keys are rejected by name. Relative data paths are
/// resolved against `base_dir`. Each override is "dotted.key=value" with a JSON (or bare
/// string) value, applied before parsing. The result is validated.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {},
                            std::span<const std::string> overrides = {});
PipelineConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});
/// Canonical JSON of the resolved config (sorted keys).
std::string config_json(const PipelineConfig& config);

/// Synth block of a config document, with the top-level seed applied.
synth::SynthConfig synth_config(const PipelineConfig& config);

struct RunOptions {
  bool resume = false;
  std::ostream* log = nullptr;  // progress lines; null for silence
};

/// Model label used in reports: BPRMF, BPRMF-V, BPRMF-F, BPRMF-NN.
std::string variant_label(PropensityScheme scheme);

struct RunResult {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::map<std::string, double> rmse;  // effect model label -> test RMSE
  std::map<std::string, plv::RankingReport> ranking;
  std::vector<effects::Importance> importance;  // primary DF-EBM
  std::map<std::string, double> cluster_rmse;
  std::map<std::string, std::vector<effects::Importance>> cluster_importance;
};

struct PipelineResult {
  std::vector<RunResult> runs;
  std::size_t num_users = 0;
  std::size_t num_posts = 0;
  std::size_t num_hate_posts = 0;
  std::size_t num_edges = 0;
  std::size_t outcome_rows = 0;
  std::size_t excluded_users = 0;
  std::string report;  // contents of report.txt
};

/// Writes the synthetic dataset and truth files into `out`.
synth::SyntheticDataset cmd_synth(const synth::SynthConfig& config, const std::filesystem::path& out);

/// propensity -> topics -> plv -> outcomes -> effects for every run, then report.txt.
/// Stage failures are rethrown with the stage name prefixed.
PipelineResult cmd_pipeline(const PipelineConfig& config, const std::filesystem::path& out,
                            const RunOptions& options = {});

struct MuSweepRow {
  PropensityScheme scheme = PropensityScheme::Virality;
  double mu = 0.0;
  plv::RankingReport ranking;
};

/// Recall@k and NDCG@k of BPRMF-V and BPRMF-F for each mu; writes mu_sweep.csv and mu_sweep.txt.
std::vector<MuSweepRow> cmd_mu_sweep(const PipelineConfig& config, std::span<const double> mu_list,
                                     const std::filesystem::path& out, const RunOptions& options = {});

struct EmbeddingAnalysis {
  std::string tag;
  std::size_t n_points = 0;
  std::size_t n_clusters = 0;
  std::size_t n_noise = 0;
  std::optional<double> silhouette;  // absent with fewer than two clusters
};

/// DBSCAN plus silhouette on exported embedding files; writes embedding_analysis.csv.
std::vector<EmbeddingAnalysis> cmd_embed_analyze(std::span<const std::filesystem::path> inputs,
                                                 const std::filesystem::path& out, double eps = 0.5,
                                                 std::size_t min_pts = 10);

}  // namespace reshare::pipeline
