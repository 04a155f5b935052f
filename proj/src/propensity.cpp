#include "reshare/propensity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"

namespace reshare {

std::string_view to_string(PropensityScheme scheme) {
  switch (scheme) {
    case PropensityScheme::Biased: return "biased";
    case PropensityScheme::Virality: return "virality";
    case PropensityScheme::Follower: return "follower";
    case PropensityScheme::Neural: return "neural";
  }
  return "unknown";
}

PropensityScheme parse_scheme(std::string_view name) {
  if (name == "biased") return PropensityScheme::Biased;
  if (name == "virality") return PropensityScheme::Virality;
  if (name == "follower") return PropensityScheme::Follower;
  if (name == "neural") return PropensityScheme::Neural;
  throw ValidationError("unknown propensity scheme '" + std::string(name) + "'");
}

namespace {

void check_mu(double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("mu must lie in (0, 1]");
}

void check_floor(double floor) {
  if (!(floor > 0.0 && floor <= 1.0)) throw ValidationError("propensity floor must lie in (0, 1]");
}

double clip(double theta, double floor) { return std::clamp(theta, floor, 1.0); }

PropensityTable make_table(const InteractionGraph& graph, PropensityScheme scheme, double mu, double floor) {
  PropensityTable t;
  t.scheme = scheme;
  t.mu = mu;
  t.floor = floor;
  t.post_ids.reserve(graph.num_posts());
  for (const auto& p : graph.posts()) t.post_ids.push_back(p.post_id);
  t.theta.assign(graph.num_posts(), floor);
  return t;
}

PropensityTable normalized_power(const InteractionGraph& graph, std::span<const double> mass,
                                 PropensityScheme scheme, double mu, double floor) {
  const double max_mass = mass.empty() ? 0.0 : *std::max_element(mass.begin(), mass.end());
  if (!(max_mass > 0.0)) {
    throw ValidationError(std::string(to_string(scheme)) + " propensity: all reshare counts are zero");
  }
  auto t = make_table(graph, scheme, mu, floor);
  for (std::size_t h = 0; h < mass.size(); ++h) {
    // The arg-max post is exactly 1 regardless of rounding in pow.
    t.theta[h] = mass[h] == max_mass ? 1.0 : clip(std::pow(mass[h] / max_mass, mu), floor);
  }
  return t;
}

std::vector<double> reshare_counts(const InteractionGraph& graph) {
  std::vector<double> counts(graph.num_posts());
  for (std::uint32_t h = 0; h < graph.num_posts(); ++h) counts[h] = static_cast<double>(graph.users_of(h).size());
  return counts;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

PropensityTable PropensityTable::uniform(const InteractionGraph& graph) {
  auto t = make_table(graph, PropensityScheme::Biased, 1.0, kDefaultPropensityFloor);
  std::fill(t.theta.begin(), t.theta.end(), 1.0);
  return t;
}

PropensityTable biased_propensity(const InteractionGraph& graph, double floor) {
  check_floor(floor);
  if (graph.num_users() == 0 || graph.num_posts() == 0) throw ValidationError("biased propensity: empty graph");
  auto t = make_table(graph, PropensityScheme::Biased, 1.0, floor);
  const double n_users = static_cast<double>(graph.num_users());
  for (std::uint32_t h = 0; h < graph.num_posts(); ++h) {
    t.theta[h] = clip(static_cast<double>(graph.users_of(h).size()) / n_users, floor);
  }
  return t;
}

PropensityTable virality_propensity(const InteractionGraph& graph, double mu, double floor) {
  check_mu(mu);
  check_floor(floor);
  const auto counts = reshare_counts(graph);
  return normalized_power(graph, counts, PropensityScheme::Virality, mu, floor);
}

PropensityTable follower_propensity(const InteractionGraph& graph, const UserAttributeTable& users, double mu,
                                    double floor) {
  check_mu(mu);
  check_floor(floor);
  std::vector<double> followers(graph.num_users(), -1.0);
  for (std::uint32_t u = 0; u < graph.num_users(); ++u) {
    if (const auto* row = users.find(graph.users()[u])) followers[u] = static_cast<double>(row->n_followers);
  }
  std::vector<double> mass(graph.num_posts(), 0.0);
  for (const auto& e : graph.edges()) {
    if (followers[e.user] < 0.0) {
      throw ValidationError("follower propensity: no follower count for resharing user '" +
                            graph.users()[e.user] + "'");
    }
    mass[e.post] += followers[e.user];
  }
  return normalized_power(graph, mass, PropensityScheme::Follower, mu, floor);
}

double NeuralPropensityModel::predict(std::span<const double> topic_vector) const {
  if (topic_vector.size() != weights.size()) throw ValidationError("neural propensity: topic dimension mismatch");
  double z = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) z += weights[k] * topic_vector[k];
  return sigmoid(z);
}

NeuralPropensityModel fit_neural_propensity(std::span<const TopicVector> topics, std::span<const double> targets,
                                            std::size_t max_iterations) {
  if (topics.size() != targets.size()) throw ValidationError("neural propensity: topics/targets size mismatch");
  if (topics.empty()) throw ValidationError("neural propensity: no training posts");
  const std::size_t n = topics.size();
  const std::size_t k = topics.front().size();
  for (const auto& v : topics) {
    if (v.size() != k) throw ValidationError("neural propensity: inconsistent topic dimensions");
  }
  const std::size_t p = k + 1;

  Eigen::MatrixXd design(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) design(i, j) = topics[i][j];
    design(i, k) = 1.0;
  }
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(n));

  Eigen::VectorXd params = Eigen::VectorXd::Zero(p);
  auto evaluate = [&](const Eigen::VectorXd& w, Eigen::VectorXd& fitted) {
    fitted = (design * w).unaryExpr([](double z) { return sigmoid(z); });
    return (fitted - y).squaredNorm();
  };

  Eigen::VectorXd fitted;
  double sse = evaluate(params, fitted);
  double damping = 1e-3;
  constexpr double kGradTol = 1e-15;
  constexpr double kRelTol = 1e-13;

  NeuralPropensityModel model;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd slope = fitted.array() * (1.0 - fitted.array());
    const Eigen::MatrixXd jac = design.array().colwise() * slope.array();
    const Eigen::VectorXd residual = fitted - y;
    const Eigen::VectorXd grad = jac.transpose() * residual;
    if (grad.lpNorm<Eigen::Infinity>() < kGradTol || sse == 0.0) {
      model.iterations = it;
      break;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    bool accepted = false;
    bool converged = false;
    while (damping < 1e20) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal().array() += damping * (1.0 + jtj.diagonal().array());
      const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
      const Eigen::VectorXd candidate = params + step;
      Eigen::VectorXd cand_fitted;
      const double cand_sse = evaluate(candidate, cand_fitted);
      if (cand_sse < sse) {
        const double rel = (sse - cand_sse) / sse;
        params = candidate;
        fitted = std::move(cand_fitted);
        sse = cand_sse;
        damping = std::max(damping * 0.3, 1e-12);
        accepted = true;
        converged = rel < kRelTol;
        break;
      }
      damping *= 10.0;
    }
    model.iterations = it;
    if (!accepted || converged) break;  // stationary point or no further progress
    if (it == max_iterations) {
      throw ConvergenceError("neural propensity fit hit the iteration cap (" + std::to_string(max_iterations) +
                             " iterations, sse " + std::to_string(sse) + ")");
    }
  }
  model.weights.assign(params.data(), params.data() + k);
  model.bias = params[static_cast<Eigen::Index>(k)];
  model.sse = sse;
  return model;
}

PropensityTable neural_propensity(std::span<const TopicVector> topics, const InteractionGraph& graph,
                                  const NeuralFitOptions& options) {
  check_floor(options.floor);
  if (topics.size() != graph.num_posts()) {
    throw ValidationError("neural propensity: missing topic vector (have " + std::to_string(topics.size()) +
                          ", need " + std::to_string(graph.num_posts()) + ")");
  }
  for (std::size_t h = 0; h < topics.size(); ++h) {
    double s = 0.0;
    for (double v : topics[h]) {
      if (v < 0.0) throw ValidationError("neural propensity: negative topic weight for " + graph.posts()[h].post_id);
      s += v;
    }
    if (std::fabs(s - 1.0) > 1e-6) {
      throw ValidationError("neural propensity: topic vector of " + graph.posts()[h].post_id + " does not sum to 1");
    }
  }
  const auto target = virality_propensity(graph, options.target_mu, options.floor);
  const auto model = fit_neural_propensity(topics, target.theta, options.max_iterations);
  auto t = make_table(graph, PropensityScheme::Neural, options.target_mu, options.floor);
  for (std::size_t h = 0; h < topics.size(); ++h) t.theta[h] = clip(model.predict(topics[h]), options.floor);
  return t;
}

PropensityTable neural_propensity(const std::unordered_map<std::string, TopicVector>& topics,
                                  const InteractionGraph& graph, const NeuralFitOptions& options) {
  std::vector<TopicVector> aligned;
  aligned.reserve(graph.num_posts());
  for (const auto& p : graph.posts()) {
    auto it = topics.find(p.post_id);
    if (it == topics.end()) throw ValidationError("neural propensity: missing topic vector for post " + p.post_id);
    aligned.push_back(it->second);
  }
  return neural_propensity(aligned, graph, options);
}

void write_propensity(const std::filesystem::path& path, std::span<const PropensityTable> tables) {
  csv::Writer w(path);
  w.row("post_id", "scheme", "mu", "theta_hat");
  for (const auto& t : tables) {
    for (std::size_t h = 0; h < t.size(); ++h) w.row(t.post_ids[h], to_string(t.scheme), t.mu, t.theta[h]);
  }
  w.close();
}

std::vector<PropensityTable> read_propensity(const std::filesystem::path& path, const InteractionGraph& graph,
                                             double floor) {
  csv::Reader reader(path);
  csv::Record rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": missing header row", 1);
  const auto cols = csv::require_columns(rec, {"post_id", "scheme", "mu", "theta_hat"}, path);
  std::vector<PropensityTable> tables;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;  // (scheme, mu text) -> table
  while (reader.next(rec)) {
    if (rec.fields.size() < 4) continue;
    const auto& f = rec.fields;
    auto key = std::make_pair(f[cols[1]], f[cols[2]]);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, tables.size()).first;
      auto t = make_table(graph, parse_scheme(f[cols[1]]), csv::parse_double(f[cols[2]], path, rec.line, "mu"), floor);
      std::fill(t.theta.begin(), t.theta.end(), -1.0);
      tables.push_back(std::move(t));
    }
    auto h = graph.post_index(f[cols[0]]);
    if (!h) throw DataError(path.string() + ":" + std::to_string(rec.line) + ": unknown post_id", rec.line);
    tables[it->second].theta[*h] = csv::parse_double(f[cols[3]], path, rec.line, "theta_hat");
  }
  for (const auto& t : tables) {
    for (double v : t.theta) {
      if (v < 0.0) throw DataError(path.string() + ": table '" + std::string(to_string(t.scheme)) + "' misses posts");
    }
  }
  return tables;
}

}  // namespace reshare
