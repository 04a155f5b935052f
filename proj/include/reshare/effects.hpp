#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reshare/dataset.hpp"
#include "reshare/outcomes.hpp"

namespace reshare::effects {

/// Dense column-major design matrix with a target column.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<std::string> row_ids;
  std::vector<double> values;  // column j occupies [j * rows, (j + 1) * rows)
  std::vector<double> target;
  std::string target_name;

  std::size_t rows() const { return target.size(); }
  std::size_t cols() const { return names.size(); }
  std::span<const double> column(std::size_t j) const { return {values.data() + j * rows(), rows()}; }
  double at(std::size_t i, std::size_t j) const { return values[j * rows() + i]; }
  std::optional<std::size_t> column_index(std::string_view name) const;

  /// Builds a matrix from row-major feature rows.
  static FeatureMatrix from_rows(std::vector<std::string> names, std::span<const std::vector<double>> rows,
                                 std::vector<double> target);
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
};

using EmbeddingTable = std::map<std::string, std::vector<double>>;

/// Columns: the five attribute features, then x_0..x_{d-1} when `embeddings` is given (null
/// gives the attribute-only base model). Rows follow the outcome table. The target is Y_u, or
/// Y_uc when `cluster` names a cluster.
FeatureMatrix assemble_features(const UserAttributeTable& attrs, const EmbeddingTable* embeddings,
                                const OutcomeTable& outcomes, const std::optional<std::string>& cluster = std::nullopt);

struct EbmHyper {
  double learning_rate = 0.01;
  std::size_t max_bins = 512;
  std::size_t min_samples_leaf = 3;
  std::size_t max_rounds = 5000;
  std::size_t n_interactions = 10;
  std::size_t n_bags = 8;
  std::size_t early_stop_patience = 50;
  double early_stop_tol = 1e-5;  // relative improvement of out-of-bag MSE
  std::size_t max_leaves = 3;
  std::size_t interaction_bins = 32;
  std::size_t n_threads = 0;  // 0: one per hardware thread
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ModelKind { Ebm, Linear };

/// One additive term of a single feature. EBM terms are piecewise constant over bins; linear
/// terms are slope * (x - center).
struct ShapeFunction {
  std::string feature;
  std::vector<double> cuts;     // ascending; bin b holds cuts[b-1] < x <= cuts[b]
  std::vector<double> values;   // per bin, train-mean centered
  std::vector<double> stderrs;  // per bin, bag standard error
  std::vector<double> bin_x;    // mean train value per bin
  std::vector<double> weights;  // train occupancy fraction per bin
  double min_x = 0.0;
  double max_x = 0.0;
  bool binary = false;
  bool linear = false;
  double slope = 0.0;
  double center = 0.0;

  std::size_t bin_of(double x) const;
  double operator()(double x) const;
  double stderr_at(double x) const;
};

/// Centered piecewise-constant function of two features on a coarse grid.
struct PairTerm {
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<double> cuts_a;
  std::vector<double> cuts_b;
  std::vector<double> values;  // (cuts_a.size() + 1) x (cuts_b.size() + 1), row-major
  double strength = 0.0;       // variance explained at detection time

  double operator()(double xa, double xb) const;
};

struct EffectModel {
  ModelKind kind = ModelKind::Ebm;
  double intercept = 0.0;
  std::vector<std::string> feature_names;
  std::vector<ShapeFunction> shapes;  // one per feature, same order
  std::vector<PairTerm> pairs;
  std::vector<double> training_curve;  // in-bag RMSE of the first bag after each round
  std::vector<std::size_t> rounds;     // main-effect rounds kept per bag
  std::vector<std::string> warnings;
};

/// Cyclic binned gradient boosting (identity link) averaged over bootstrap bags, with
/// out-of-bag early stopping and optional boosted pair terms.
EffectModel fit_ebm(const FeatureMatrix& features, const EbmHyper& hyper);

struct LinearOptions {
  bool ridge_fallback = true;
  double ridge = 1e-8;  // relative to the mean column variance
};

/// Ordinary least squares with intercept. Zero-variance columns get slope 0.
EffectModel fit_linear(const FeatureMatrix& features, const LinearOptions& options = {});

std::vector<double> predict(const EffectModel& model, const FeatureMatrix& features);

/// Per-term contributions of one row: main terms in feature order, then pairs.
std::vector<double> term_contributions(const EffectModel& model, const FeatureMatrix& features, std::size_t row);

struct Importance {
  std::string term;
  double value = 0.0;
};

/// Mean absolute contribution over the rows of `train`, sorted descending.
std::vector<Importance> feature_importance(const EffectModel& model, const FeatureMatrix& train);

struct CurveRow {
  double x = 0.0;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// `grid` evenly spaced points over the train range (two rows for binary features);
/// bounds are value +- 2 bag standard errors.
std::vector<CurveRow> contribution_curve(const EffectModel& model, std::string_view feature, std::size_t grid = 100);

void write_importance(const std::filesystem::path& path, std::span<const Importance> rows);
void write_curve(const std::filesystem::path& path, std::span<const CurveRow> rows);
/// Minimal standalone SVG line chart of a curve with its bounds.
void write_curve_svg(const std::filesystem::path& path, std::span<const CurveRow> rows, std::string_view title);

}  // namespace reshare::effects
