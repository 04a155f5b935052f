#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "reshare/dataset.hpp"

namespace reshare {

/// Per-post topic mixture; entries are non-negative and sum to one.
using TopicVector = std::vector<double>;

enum class PropensityScheme { Biased, Virality, Follower, Neural };

std::string_view to_string(PropensityScheme scheme);
PropensityScheme parse_scheme(std::string_view name);

inline constexpr double kDefaultPropensityFloor = 1e-3;
inline constexpr double kDefaultMu = 0.5;

/// Estimated exposure probability per post, aligned with the graph's post order.
struct PropensityTable {
  PropensityScheme scheme = PropensityScheme::Biased;
  double mu = 1.0;
  double floor = kDefaultPropensityFloor;
  std::vector<std::string> post_ids;
  std::vector<double> theta;

  std::size_t size() const { return theta.size(); }
  double operator[](std::size_t post) const { return theta[post]; }
  /// Table of all ones; turns every IPS weight into the plain indicator.
  static PropensityTable uniform(const InteractionGraph& graph);
};

/// theta_h = (#resharers of h) / (#users), clipped to [floor, 1].
PropensityTable biased_propensity(const InteractionGraph& graph, double floor = kDefaultPropensityFloor);

/// theta_h = (reshares_h / max_g reshares_g)^mu, clipped to [floor, 1].
PropensityTable virality_propensity(const InteractionGraph& graph, double mu = kDefaultMu,
                                    double floor = kDefaultPropensityFloor);

/// theta_h = (sum_u S_uh F_u / max_g sum_u S_ug F_u)^mu with F_u the follower count.
PropensityTable follower_propensity(const InteractionGraph& graph, const UserAttributeTable& users,
                                    double mu = kDefaultMu, double floor = kDefaultPropensityFloor);

/// theta_h = sigmoid(w . e_h + b), with (w, b) fitted by least squares against a target.
struct NeuralPropensityModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  double sse = 0.0;

  double predict(std::span<const double> topic_vector) const;
};

struct NeuralFitOptions {
  double target_mu = kDefaultMu;  // smoothing of the virality target
  double floor = kDefaultPropensityFloor;
  std::size_t max_iterations = 1000;
};

/// Levenberg-Marquardt fit of the logistic map onto `targets`. Starts from w = 0, b = 0.
/// Throws ConvergenceError when the iteration cap is hit without meeting the tolerances.
NeuralPropensityModel fit_neural_propensity(std::span<const TopicVector> topics, std::span<const double> targets,
                                            std::size_t max_iterations = 1000);

/// Fits against the virality target of `graph` and predicts every post.
/// `topics` is aligned with graph.posts(); every vector must sum to one.
PropensityTable neural_propensity(std::span<const TopicVector> topics, const InteractionGraph& graph,
                                  const NeuralFitOptions& options = {});
PropensityTable neural_propensity(const std::unordered_map<std::string, TopicVector>& topics,
                                  const InteractionGraph& graph, const NeuralFitOptions& options = {});

/// propensity.csv rows: post_id, scheme, mu, theta_hat (tables appended in order).
void write_propensity(const std::filesystem::path& path, std::span<const PropensityTable> tables);
/// Reads all tables from propensity.csv, re-aligned to `graph`'s post order.
std::vector<PropensityTable> read_propensity(const std::filesystem::path& path, const InteractionGraph& graph,
                                             double floor = kDefaultPropensityFloor);

}  // namespace reshare
