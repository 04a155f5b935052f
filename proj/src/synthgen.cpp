#include "reshare/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"

namespace reshare::synth {

namespace {

// Generator calibration: account age ~ N(3664, 834) days; counts log-normal with the
// medians and spreads of the reference population.
constexpr double kAgeMean = 3663.74;
constexpr double kAgeSd = 833.51;
constexpr double kPostsLogMedian = 10.105; // ln 24465.5
constexpr double kPostsLogSd = 1.308;
constexpr double kFollowersLogMedian = 6.3026; // ln 546
constexpr double kFollowersLogSd = 1.677;
constexpr double kFriendsLogMedian = 6.1964; // ln 491
constexpr double kFriendsLogSd = 1.369;

enum StreamTag : std::uint64_t { kUsers = 1, kPosts, kAffinity, kShares, kEdges, kTexts, kTest, kResample };

std::size_t attribute_index(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
    if (kAttributeNames[i] == name) return i;
  }
  throw ValidationError("unknown attribute '" + std::string(name) + "' in effect spec");
}

double shape_value(const EffectTerm& term, double x) {
  const auto [lo, hi] = reference_range(term.attribute);
  const double z = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  switch (term.shape) {
    case EffectShape::None: return 0.0;
    case EffectShape::Linear: return term.amplitude * z;
    case EffectShape::Step: return z > 0.5 ? term.amplitude : 0.0;
    case EffectShape::UShape: return term.amplitude * 4.0 * (z - 0.5) * (z - 0.5);
  }
  return 0.0;
}

std::string padded(char prefix, std::size_t i, std::size_t n) {
  std::size_t width = 1;
  for (std::size_t m = n; m >= 10; m /= 10) ++width;
  auto digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

// Pronounceable pseudo-words; distinct for distinct (group, i).
std::string pseudo_word(std::size_t group, std::size_t i) {
  static constexpr std::array<std::string_view, 16> kSyl = {"ka", "lo", "mi", "ter", "zun", "bra", "vek", "sol",
                                                            "dra", "pum", "nix", "ore", "gal", "shu", "wen", "tis"};
  std::string w(kSyl[group % 16]);
  w += kSyl[(group / 16) % 16];
  std::size_t v = i;
  do {
    w += kSyl[v % 16];
    v /= 16;
  } while (v > 0);
  return w;
}

std::string make_text(Rng& rng, std::size_t group, std::size_t n_words, std::size_t vocab_per_group) {
  static constexpr std::array<std::string_view, 8> kStop = {"the", "and", "this", "is", "to", "of", "you", "it"};
  static constexpr std::array<std::string_view, 3> kEmoji = {"\xF0\x9F\x98\xA1", "\xF0\x9F\x94\xA5",
                                                             "\xF0\x9F\x98\x82"};
  std::string text;
  for (std::size_t k = 0; k < n_words; ++k) {
    if (!text.empty()) text += ' ';
    const double u = rng.uniform();
    if (u < 0.25) {
      text += kStop[rng.index(kStop.size())];
    } else if (u < 0.4) {
      text += pseudo_word(255, rng.index(vocab_per_group));  // shared chatter
    } else {
      // Zipf-like pick inside the group's own vocabulary
      const double r = rng.uniform();
      text += pseudo_word(group, static_cast<std::size_t>(r * r * static_cast<double>(vocab_per_group)));
    }
  }
  if (rng.bernoulli(0.2)) text += " https://t.co/" + pseudo_word(254, rng.index(4096));
  if (rng.bernoulli(0.2)) text += std::string(" ") + std::string(kEmoji[rng.index(kEmoji.size())]);
  return text;
}

// Smallest s with sum_h theta_h * min(1, s * kappa_h) >= target, capped where every term saturates.
double solve_scale(std::span<const double> theta, std::span<const double> kappa, double target) {
  double reach = 0.0, kmin = 1e300;
  for (std::size_t h = 0; h < theta.size(); ++h) {
    reach += theta[h];
    if (kappa[h] > 0.0) kmin = std::min(kmin, kappa[h]);
  }
  if (target >= reach) return 1.0 / kmin;
  auto f = [&](double s) {
    double v = 0.0;
    for (std::size_t h = 0; h < theta.size(); ++h) v += theta[h] * std::min(1.0, s * kappa[h]);
    return v;
  };
  double lo = 0.0, hi = 1.0;
  while (f(hi) < target) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace

std::string_view to_string(EffectShape shape) {
  switch (shape) {
    case EffectShape::None: return "none";
    case EffectShape::Linear: return "linear";
    case EffectShape::Step: return "step";
    case EffectShape::UShape: return "ushape";
  }
  return "none";
}

EffectShape parse_shape(std::string_view name) {
  if (name == "none") return EffectShape::None;
  if (name == "linear") return EffectShape::Linear;
  if (name == "step") return EffectShape::Step;
  if (name == "ushape" || name == "u-shaped" || name == "u") return EffectShape::UShape;
  throw ValidationError("unknown effect shape '" + std::string(name) + "'");
}

std::pair<double, double> reference_range(std::string_view attribute) {
  switch (attribute_index(attribute)) {
    case 0: return {0.0, 1.0};
    case 1: return {kAgeMean - 2.5 * kAgeSd, kAgeMean + 2.5 * kAgeSd};
    case 2: return {kPostsLogMedian - 2.5 * kPostsLogSd, kPostsLogMedian + 2.5 * kPostsLogSd};
    case 3: return {kFollowersLogMedian - 2.5 * kFollowersLogSd, kFollowersLogMedian + 2.5 * kFollowersLogSd};
    default: return {kFriendsLogMedian - 2.5 * kFriendsLogSd, kFriendsLogMedian + 2.5 * kFriendsLogSd};
  }
}

std::vector<EffectTerm> default_effects() {
  return {{"account_age_days", EffectShape::UShape, 0.15},
          {"log_n_followers", EffectShape::Step, -0.08},
          {"log_n_friends", EffectShape::Linear, -0.06}};
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("synth config: " + field + " " + why);
  };
  if (n_users == 0) fail("n_users", "must be positive");
  if (n_posts == 0) fail("n_posts", "must be positive");
  if (n_hate_posts == 0) fail("n_hate_posts", "must be positive");
  if (n_hate_posts > n_posts) fail("n_hate_posts", "must not exceed n_posts");
  if (n_clusters == 0) fail("n_clusters", "must be positive");
  if (n_clusters > n_hate_posts) fail("n_clusters", "must not exceed n_hate_posts");
  if (!(exposure_exponent >= 0.0)) fail("exposure_exponent", "must be non-negative");
  if (!(popularity_sd >= 0.0)) fail("popularity_sd", "must be non-negative");
  if (!(cluster_popularity_sd >= 0.0)) fail("cluster_popularity_sd", "must be non-negative");
  if (!(appeal_sd >= 0.0)) fail("appeal_sd", "must be non-negative");
  if (!(affinity_concentration > 0.0)) fail("affinity_concentration", "must be positive");
  if (!(affinity_floor >= 0.0)) fail("affinity_floor", "must be non-negative");
  if (!(mean_shares > 0.0)) fail("mean_shares", "must be positive");
  if (!(activity_sd >= 0.0)) fail("activity_sd", "must be non-negative");
  if (!(base_rate > 0.0 && base_rate < 1.0)) fail("base_rate", "must lie in (0, 1)");
  if (!(noise_sd >= 0.0)) fail("noise_sd", "must be non-negative");
  if (!(verified_rate >= 0.0 && verified_rate <= 1.0)) fail("verified_rate", "must lie in [0, 1]");
  for (const auto& e : effects) {
    attribute_index(e.attribute);
    if (!std::isfinite(e.amplitude)) fail("effects." + e.attribute, "amplitude must be finite");
  }
}

double SyntheticTruth::iota(std::size_t user, std::size_t post) const {
  const int c = post_cluster[post];
  if (c < 0) return normal_iota[user];
  const double kappa = (affinity[user * n_clusters + static_cast<std::size_t>(c)] + affinity_floor) * appeal[post];
  return std::min(1.0, hate_scale[user] * kappa);
}

std::vector<double> SyntheticTruth::hate_iota() const {
  std::vector<double> out(n_users * n_hate_posts);
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t h = 0; h < n_hate_posts; ++h) out[u * n_hate_posts + h] = iota(u, h);
  }
  return out;
}

double SyntheticTruth::effect(std::size_t term, double x) const {
  return shape_value(effects.at(term), x) - effect_offsets.at(term);
}

double SyntheticTruth::signal(const std::array<double, 5>& features) const {
  double s = 0.0;
  for (std::size_t m = 0; m < effects.size(); ++m) s += effect(m, features[attribute_index(effects[m].attribute)]);
  return s;
}

SyntheticDataset generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n_users = config.n_users;
  const std::size_t n_posts = config.n_posts;
  const std::size_t n_hate = config.n_hate_posts;
  const std::size_t C = config.n_clusters;

  // Users and attributes.
  std::vector<std::string> user_ids(n_users);
  std::vector<UserAttributes> attrs(n_users);
  {
    Rng rng(mix_seed(config.seed, kUsers));
    for (std::size_t u = 0; u < n_users; ++u) {
      user_ids[u] = padded('u', u, n_users);
      auto& a = attrs[u];
      a.user_id = user_ids[u];
      a.verified = rng.bernoulli(config.verified_rate);
      a.account_age_days = std::clamp<std::int64_t>(std::llround(rng.normal(kAgeMean, kAgeSd)), 1, 7000);
      a.n_posts = std::llround(rng.lognormal(kPostsLogMedian, kPostsLogSd));
      a.n_followers = std::llround(rng.lognormal(kFollowersLogMedian, kFollowersLogSd));
      a.n_friends = std::llround(rng.lognormal(kFriendsLogMedian, kFriendsLogSd));
    }
  }

  SyntheticTruth truth;
  truth.n_users = n_users;
  truth.n_hate_posts = n_hate;
  truth.n_clusters = C;
  truth.affinity_floor = config.affinity_floor;
  truth.effects = config.effects;

  // Effect offsets: population means, so effects are centered on the generated users.
  std::vector<std::array<double, 5>> features(n_users);
  for (std::size_t u = 0; u < n_users; ++u) features[u] = log_transform(attrs[u]);
  for (const auto& term : truth.effects) {
    const auto m = attribute_index(term.attribute);
    double s = 0.0;
    for (std::size_t u = 0; u < n_users; ++u) s += shape_value(term, features[u][m]);
    truth.effect_offsets.push_back(s / static_cast<double>(n_users));
  }

  // Posts: hate posts first, clusters assigned round-robin.
  std::vector<Post> posts(n_posts);
  truth.post_cluster.assign(n_posts, -1);
  truth.appeal.assign(n_posts, 1.0);
  truth.theta.assign(n_posts, 1.0);
  {
    Rng rng(mix_seed(config.seed, kPosts));
    std::vector<double> cluster_pop(C);
    for (auto& p : cluster_pop) p = rng.lognormal(0.0, config.cluster_popularity_sd);
    std::vector<double> pop(n_posts);
    for (std::size_t h = 0; h < n_posts; ++h) {
      auto& post = posts[h];
      post.post_id = padded('p', h, n_posts);
      const auto author = rng.index(n_users);
      post.author_id = user_ids[author];
      post.is_hate = h < n_hate;
      double base = rng.lognormal(0.0, config.popularity_sd);
      if (config.follower_weighted) base = 1.0 + static_cast<double>(attrs[author].n_followers);
      if (post.is_hate) {
        const auto c = static_cast<int>(h % C);
        truth.post_cluster[h] = c;
        post.cluster = "cluster_" + std::to_string(c);
        truth.appeal[h] = config.appeal_sd > 0.0 ? rng.lognormal(0.0, config.appeal_sd) : 1.0;
        base *= cluster_pop[static_cast<std::size_t>(c)];
      }
      pop[h] = base;
    }
    // Exposure is normalized separately for hate and normal posts.
    auto normalize = [&](std::size_t first, std::size_t last) {
      if (first == last) return;
      const double max_pop = *std::max_element(pop.begin() + static_cast<std::ptrdiff_t>(first),
                                               pop.begin() + static_cast<std::ptrdiff_t>(last));
      for (std::size_t h = first; h < last; ++h) {
        truth.theta[h] = std::max(std::pow(pop[h] / max_pop, config.exposure_exponent), 1e-3);
      }
    };
    normalize(0, n_hate);
    normalize(n_hate, n_posts);
  }

  // Interest: cluster affinities, hate rates and the per-user scales that meet them.
  truth.affinity.assign(n_users * C, 0.0);
  truth.hate_scale.assign(n_users, 0.0);
  truth.normal_iota.assign(n_users, 0.0);
  truth.hate_rate.assign(n_users, 0.0);
  truth.expected_shares.assign(n_users, 0.0);
  {
    Rng rng(mix_seed(config.seed, kAffinity));
    std::vector<double> kappa(n_hate);
    const std::span<const double> hate_theta(truth.theta.data(), n_hate);
    double normal_reach = 0.0;
    for (std::size_t g = n_hate; g < n_posts; ++g) normal_reach += truth.theta[g];
    for (std::size_t u = 0; u < n_users; ++u) {
      double* a = truth.affinity.data() + u * C;
      double total = 0.0;
      for (std::size_t c = 0; c < C; ++c) total += (a[c] = rng.gamma(config.affinity_concentration));
      if (!(total > 0.0)) {
        std::fill(a, a + C, 1.0 / static_cast<double>(C));
      } else {
        for (std::size_t c = 0; c < C; ++c) a[c] /= total;
      }

      double p = config.base_rate + truth.signal(features[u]);
      p += config.vulnerability_weight * (a[0] - 1.0 / static_cast<double>(C));
      p += config.noise_sd * rng.normal();
      p = std::clamp(p, 0.02, 0.98);
      truth.hate_rate[u] = p;

      const double activity =
          config.mean_shares * std::exp(config.activity_sd * rng.normal() - 0.5 * config.activity_sd * config.activity_sd);
      truth.expected_shares[u] = activity;
      for (std::size_t h = 0; h < n_hate; ++h) {
        kappa[h] = (a[truth.post_cluster[h]] + config.affinity_floor) * truth.appeal[h];
      }
      truth.hate_scale[u] = solve_scale(hate_theta, kappa, p * activity);
      truth.normal_iota[u] = normal_reach > 0.0 ? std::min(1.0, (1.0 - p) * activity / normal_reach) : 0.0;
    }
  }

  // Texts.
  {
    Rng rng(mix_seed(config.seed, kTexts));
    const std::size_t vocab = 60;
    for (std::size_t h = 0; h < n_posts; ++h) {
      const std::size_t group = posts[h].is_hate ? static_cast<std::size_t>(truth.post_cluster[h]) : 200;
      posts[h].text = make_text(rng, group, config.words_per_post, vocab);
    }
  }

  // Edges.
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n_users; ++u) {
    Rng rng(mix_seed(mix_seed(config.seed, kEdges), u));
    for (std::size_t h = 0; h < n_posts; ++h) {
      if (rng.uniform() < truth.edge_probability(u, h)) {
        edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(h)});
      }
    }
  }

  SyntheticDataset out;
  out.data.graph = InteractionGraph(std::move(user_ids), std::move(posts), std::move(edges));
  out.data.users = UserAttributeTable(std::move(attrs));
  out.truth = std::move(truth);
  return out;
}

InteractionGraph resample_interactions(const InteractionGraph& graph, const SyntheticTruth& truth,
                                       std::uint64_t seed) {
  if (graph.num_users() != truth.n_users || graph.num_posts() != truth.theta.size()) {
    throw ValidationError("resample_interactions: graph does not match the truth");
  }
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    Rng rng(mix_seed(mix_seed(seed, kResample), u));
    for (std::size_t h = 0; h < graph.num_posts(); ++h) {
      if (rng.uniform() < truth.edge_probability(u, h)) {
        edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(h)});
      }
    }
  }
  return graph.with_edges(std::move(edges));
}

InteractionGraph sample_interest_test(const InteractionGraph& train, const SyntheticTruth& truth, double rate,
                                      std::uint64_t seed) {
  if (train.num_users() != truth.n_users || train.num_posts() != truth.n_hate_posts) {
    throw ValidationError("sample_interest_test: train graph must be the hate subgraph of the truth");
  }
  if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("sample_interest_test: rate must lie in (0, 1]");
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < train.num_users(); ++u) {
    Rng rng(mix_seed(mix_seed(seed, kTest), u));
    for (std::uint32_t h = 0; h < train.num_posts(); ++h) {
      const double draw = rng.uniform();
      if (!train.has_edge(u, h) && draw < rate * truth.iota(u, h)) edges.push_back({u, h});
    }
  }
  return train.with_edges(std::move(edges));
}

void write_truth(const std::filesystem::path& dir, const Dataset& data, const SyntheticTruth& truth,
                 std::size_t grid) {
  const auto& g = data.graph;
  {
    csv::Writer w(dir / "truth.csv");
    w.row("user_id", "post_id", "theta", "iota");
    for (std::size_t u = 0; u < g.num_users(); ++u) {
      for (std::size_t h = 0; h < truth.n_hate_posts; ++h) {
        w.row(g.users()[u], g.posts()[h].post_id, truth.theta[h], truth.iota(u, h));
      }
    }
    w.close();
  }
  csv::Writer w(dir / "effects_truth.csv");
  w.row("attribute", "grid_x", "contribution");
  for (std::size_t m = 0; m < truth.effects.size(); ++m) {
    const auto& term = truth.effects[m];
    if (term.attribute == "verified") {
      for (double x : {0.0, 1.0}) w.row(term.attribute, x, truth.effect(m, x));
      continue;
    }
    const auto [lo, hi] = reference_range(term.attribute);
    for (std::size_t i = 0; i < grid; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(grid - 1, 1));
      w.row(term.attribute, x, truth.effect(m, x));
    }
  }
  w.close();
}

}  // namespace reshare::synth
