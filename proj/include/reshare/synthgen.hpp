#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "reshare/dataset.hpp"

namespace reshare::synth {

enum class EffectShape { None, Linear, Step, UShape };

std::string_view to_string(EffectShape shape);
EffectShape parse_shape(std::string_view name);

/// Additive contribution of one attribute to the hate-reshare rate.
struct EffectTerm {
  std::string attribute;  // one of kAttributeNames
  EffectShape shape = EffectShape::None;
  double amplitude = 0.0;
};

/// The effect terms of a default run: U-shaped account age, step in followers, linear friends.
std::vector<EffectTerm> default_effects();

struct SynthConfig {
  std::size_t n_users = 1000;
  std::size_t n_posts = 400;
  std::size_t n_hate_posts = 120;
  std::size_t n_clusters = 4;

  double exposure_exponent = 1.0;   // theta_h = (pop_h / max pop)^exposure_exponent
  double popularity_sd = 1.0;       // log-scale spread of post popularity
  double cluster_popularity_sd = 0.5;
  bool follower_weighted = false;   // popularity from the author's followers instead of noise
  double appeal_sd = 0.0;           // per-post interest multiplier spread (0: interest is cluster-only)
  double affinity_concentration = 0.3;
  double affinity_floor = 0.02;

  double mean_shares = 30.0;        // expected reshares per user (hate + normal)
  double activity_sd = 0.5;
  double base_rate = 0.3336;        // average hate share of a user's reshares
  double vulnerability_weight = 0.2;
  std::vector<EffectTerm> effects = default_effects();
  double noise_sd = 0.02;

  double verified_rate = 0.003;
  std::size_t words_per_post = 12;
  std::uint64_t seed = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Ground truth behind one synthetic dataset. Post indices follow graph.posts()
/// (hate posts first); user indices follow graph.users().
struct SyntheticTruth {
  std::size_t n_users = 0;
  std::size_t n_hate_posts = 0;
  std::size_t n_clusters = 0;
  double affinity_floor = 0.0;
  std::vector<double> theta;         // per post, exposure probability
  std::vector<int> post_cluster;     // per post, -1 for normal posts
  std::vector<double> appeal;        // per post
  std::vector<double> affinity;      // n_users x n_clusters, rows sum to one
  std::vector<double> hate_scale;    // per user, interest scale on hate posts
  std::vector<double> normal_iota;   // per user, interest in every normal post
  std::vector<double> hate_rate;     // per user, target share of hateful reshares
  std::vector<double> expected_shares;
  std::vector<EffectTerm> effects;
  std::vector<double> effect_offsets;  // population mean of each effect term

  double iota(std::size_t user, std::size_t post) const;
  double edge_probability(std::size_t user, std::size_t post) const { return theta[post] * iota(user, post); }

  /// Dense n_users x n_hate_posts interest matrix.
  std::vector<double> hate_iota() const;

  /// Centered contribution of effect term `term` at feature value x (feature scale of
  /// log_transform: log counts, raw age, 0/1 verified).
  double effect(std::size_t term, double x) const;
  /// Sum of centered effect contributions for one feature row.
  double signal(const std::array<double, 5>& features) const;
};

struct SyntheticDataset {
  Dataset data;
  SyntheticTruth truth;
};

/// Draws attributes, posts, texts and edges S_uh ~ Bernoulli(theta_h * iota_uh).
SyntheticDataset generate(const SynthConfig& config);

/// Redraws every edge from the truth with a fresh seed; users and posts are unchanged.
InteractionGraph resample_interactions(const InteractionGraph& graph, const SyntheticTruth& truth,
                                       std::uint64_t seed);

/// Interest-only held-out sample on hate posts: each (u, h) that is not an edge of `train`
/// becomes a test edge with probability rate * iota_uh. Exposure plays no role, as in a
/// randomized trial. `train` must be a hate-only graph aligned with the truth's hate posts.
InteractionGraph sample_interest_test(const InteractionGraph& train, const SyntheticTruth& truth, double rate,
                                      std::uint64_t seed);

/// Reference range of an attribute on the feature scale, used by the effect shapes.
std::pair<double, double> reference_range(std::string_view attribute);

/// truth.csv (hate posts only: user_id, post_id, theta, iota) and effects_truth.csv
/// (attribute, grid_x, contribution) with `grid` points per effect.
void write_truth(const std::filesystem::path& dir, const Dataset& data, const SyntheticTruth& truth,
                 std::size_t grid = 50);

}  // namespace reshare::synth
