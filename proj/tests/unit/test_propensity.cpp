#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "reshare/error.hpp"
#include "reshare/propensity.hpp"
#include "reshare/stats.hpp"

using namespace reshare;

namespace {

std::vector<Post> posts(std::size_t n) {
  std::vector<Post> out;
  for (std::size_t h = 0; h < n; ++h) out.push_back({"p" + std::to_string(h), "u0", true, std::nullopt, ""});
  return out;
}

std::vector<std::string> users(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t u = 0; u < n; ++u) out.push_back("u" + std::to_string(u));
  return out;
}

UserAttributeTable followers(std::span<const std::int64_t> counts) {
  std::vector<UserAttributes> rows;
  for (std::size_t u = 0; u < counts.size(); ++u) rows.push_back({"u" + std::to_string(u), false, 1, 1, counts[u], 1});
  return UserAttributeTable(rows);
}

}  // namespace

TEST_SUITE("propensity") {
  TEST_CASE("biased: resharing ratio") {
    // p0: 2 of 10 users, p1: all users, p2: nobody.
    std::vector<Edge> edges{{0, 0}, {1, 0}};
    for (std::uint32_t u = 0; u < 10; ++u) edges.push_back({u, 1});
    const InteractionGraph g(users(10), posts(3), edges);
    const auto t = biased_propensity(g);
    CHECK(t[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(t[1] == 1.0);
    CHECK(t[2] == kDefaultPropensityFloor);
  }

  TEST_CASE("virality: power of the reshare ratio") {
    // p0: 4 reshares, p1: 1 reshare.
    const InteractionGraph g(users(4), posts(2), {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 1}});
    for (double mu : {0.1, 0.5, 1.0}) CHECK(virality_propensity(g, mu)[0] == 1.0);
    CHECK(virality_propensity(g, 0.5)[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(virality_propensity(g, 1.0)[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(virality_propensity(g, 0.0), ValidationError);
    CHECK_THROWS_AS(virality_propensity(g, 1.5), ValidationError);
  }

  TEST_CASE("follower: equal follower counts reduce to virality") {
    const auto g = oracle::random_graph(12, 9, 0.3, 4);
    const std::vector<std::int64_t> same(12, 37);
    const auto f = follower_propensity(g, followers(same), 0.5);
    const auto v = virality_propensity(g, 0.5);
    for (std::size_t h = 0; h < g.num_posts(); ++h) CHECK(f[h] == doctest::Approx(v[h]).epsilon(1e-14));
  }

  TEST_CASE("follower: weighted ratio and zero-follower floor") {
    // p0 reshared by u0 (F=100); p1 by u1 (F=400); p2 by u2 (F=0).
    const std::vector<std::int64_t> counts{100, 400, 0};
    const InteractionGraph g(users(3), posts(3), {{0, 0}, {1, 1}, {2, 2}});
    const auto t = follower_propensity(g, followers(counts), 0.5);
    CHECK(t[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t[1] == 1.0);
    CHECK(t[2] == kDefaultPropensityFloor);
  }

  TEST_CASE("property: range, argmax and monotonicity") {
    for (std::uint64_t s = 0; s < 30; ++s) {
      const auto g = oracle::random_graph(25, 12, 0.25, s);
      if (g.num_edges() == 0) continue;
      for (double mu : {0.1, 0.5, 1.0}) {
        const auto t = virality_propensity(g, mu);
        double top = 0.0;
        for (std::size_t h = 0; h < g.num_posts(); ++h) {
          CHECK(t[h] >= kDefaultPropensityFloor);
          CHECK(t[h] <= 1.0);
          top = std::max(top, t[h]);
          for (std::size_t k = 0; k < g.num_posts(); ++k) {
            if (g.users_of(h).size() < g.users_of(k).size()) CHECK(t[h] <= t[k]);
          }
        }
        CHECK(top == 1.0);
      }
    }
  }

  TEST_CASE("property: follower scale invariance") {
    const auto g = oracle::random_graph(20, 10, 0.3, 9);
    Rng rng(3);
    std::vector<std::int64_t> a, b;
    for (int i = 0; i < 20; ++i) {
      a.push_back(static_cast<std::int64_t>(rng.index(5000)));
      b.push_back(a.back() * 13);
    }
    const auto ta = follower_propensity(g, followers(a), 0.5);
    const auto tb = follower_propensity(g, followers(b), 0.5);
    for (std::size_t h = 0; h < g.num_posts(); ++h) CHECK(ta[h] == doctest::Approx(tb[h]).epsilon(1e-13));
  }

  TEST_CASE("neural: untrained model predicts one half") {
    NeuralPropensityModel m;
    m.weights.assign(4, 0.0);
    const std::vector<double> e{0.1, 0.2, 0.3, 0.4};
    CHECK(m.predict(e) == 0.5);
  }

  TEST_CASE("neural: single post recovers its target") {
    const InteractionGraph g(users(3), posts(1), {{0, 0}, {2, 0}});
    const std::vector<TopicVector> topics{{0.3, 0.7}};
    const auto t = neural_propensity(topics, g);
    CHECK(std::fabs(t[0] - virality_propensity(g)[0]) < 1e-6);
  }

  TEST_CASE("neural: fit to a target that is exactly logistic") {
    std::vector<TopicVector> topics;
    std::vector<double> target;
    for (int i = 0; i < 30; ++i) {
      const double m = i / 29.0;
      topics.push_back({m, 1.0 - m});
      target.push_back(1.0 / (1.0 + std::exp(-(3.0 * m - 1.0))));
    }
    const auto model = fit_neural_propensity(topics, target);
    CHECK(model.sse < 1e-12);
    for (std::size_t i = 0; i < topics.size(); ++i) CHECK(model.predict(topics[i]) == doctest::Approx(target[i]));
  }

  TEST_CASE("neural: topic mass that drives virality is recovered") {
    Rng rng(11);
    const std::size_t n_posts = 200, n_users = 400;
    std::vector<TopicVector> topics;
    std::vector<double> true_theta;
    for (std::size_t h = 0; h < n_posts; ++h) {
      const double m = rng.uniform();
      topics.push_back({m, 0.5 * (1.0 - m), 0.5 * (1.0 - m)});
      true_theta.push_back(0.02 + 0.5 * m * m);
    }
    std::vector<Edge> edges;
    for (std::uint32_t u = 0; u < n_users; ++u) {
      for (std::uint32_t h = 0; h < n_posts; ++h) {
        if (rng.bernoulli(true_theta[h])) edges.push_back({u, h});
      }
    }
    const InteractionGraph g(users(n_users), posts(n_posts), edges);
    NeuralFitOptions opt;
    opt.target_mu = 1.0;
    const auto t = neural_propensity(topics, g, opt);
    CHECK(stats::spearman(t.theta, true_theta) >= 0.8);
  }

  TEST_CASE("neural: invalid topic vectors") {
    const InteractionGraph g(users(2), posts(2), {{0, 0}});
    const std::vector<TopicVector> bad_sum{{0.5, 0.2}, {0.5, 0.5}};
    CHECK_THROWS_AS(neural_propensity(bad_sum, g), ValidationError);
    const std::vector<TopicVector> missing{{0.5, 0.5}};
    CHECK_THROWS_AS(neural_propensity(missing, g), ValidationError);
  }

  TEST_CASE("propensity.csv round-trip") {
    const auto g = oracle::random_graph(10, 6, 0.4, 2);
    const std::vector<PropensityTable> tables{biased_propensity(g), virality_propensity(g, 0.1)};
    const auto path = std::filesystem::temp_directory_path() / "reshare_unit_propensity.csv";
    write_propensity(path, tables);
    const auto back = read_propensity(path, g);
    REQUIRE(back.size() == 2);
    CHECK(back[1].scheme == PropensityScheme::Virality);
    CHECK(back[1].mu == 0.1);
    for (std::size_t h = 0; h < g.num_posts(); ++h) CHECK(back[0][h] == tables[0][h]);
  }
}
