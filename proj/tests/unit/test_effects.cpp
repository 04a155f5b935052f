#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "reshare/effects.hpp"
#include "reshare/error.hpp"
#include "reshare/outcomes.hpp"
#include "reshare/stats.hpp"
#include "reshare/synthgen.hpp"

using namespace reshare;
using effects::FeatureMatrix;

namespace {

struct Data {
  FeatureMatrix train;
  FeatureMatrix test;
};

// x1 ~ U(0, 10), x2 ~ U(0, 10), x3 binary; target supplied by `f`.
template <class F>
Data make_data(std::size_t n, std::uint64_t seed, F f, double noise = 0.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), double(rng.bernoulli(0.3))};
    y.push_back(f(r) + noise * rng.normal());
    rows.push_back(std::move(r));
  }
  const auto all = FeatureMatrix::from_rows({"x1", "x2", "x3"}, rows, y);
  const auto [a, b] = split_indices(n, 0.8, seed);
  const std::vector<std::size_t> ia(a.begin(), a.end()), ib(b.begin(), b.end());
  return {all.select_rows(ia), all.select_rows(ib)};
}

effects::EbmHyper quick(std::uint64_t seed = 0) {
  effects::EbmHyper h;
  h.n_bags = 4;
  h.n_interactions = 0;
  h.seed = seed;
  return h;
}

}  // namespace

TEST_SUITE("effects") {
  TEST_CASE("feature assembly") {
    const auto g = oracle::random_graph(6, 8, 0.4, 2, 4, 2);
    std::vector<UserAttributes> rows;
    for (const auto& u : g.users()) rows.push_back({u, false, 10, 1, 2, 3});
    const UserAttributeTable attrs(rows);
    const auto out = compute_outcomes(g);
    effects::EmbeddingTable emb;
    for (const auto& u : g.users()) emb[u] = std::vector<double>(64, 0.5);

    const auto full = effects::assemble_features(attrs, &emb, out);
    CHECK(full.cols() == 69);
    CHECK(full.rows() == out.size());
    CHECK(full.target == out.y);
    CHECK(effects::assemble_features(attrs, nullptr, out).cols() == 5);

    const auto c = effects::assemble_features(attrs, &emb, out, std::string("c1"));
    CHECK(c.target == out.cluster_column("c1"));
    CHECK_THROWS_AS(effects::assemble_features(attrs, &emb, out, std::string("zzz")), ValidationError);
    emb.erase(g.users()[0]);
    if (out.user_ids.front() == g.users()[0]) {
      CHECK_THROWS_AS(effects::assemble_features(attrs, &emb, out), ValidationError);
    }
  }

  TEST_CASE("constant target") {
    const auto d = make_data(300, 1, [](const auto&) { return 0.7; });
    const auto m = effects::fit_ebm(d.train, quick());
    CHECK(m.intercept == doctest::Approx(0.7).epsilon(1e-12));
    for (const auto& s : m.shapes) {
      for (double v : s.values) CHECK(v == 0.0);
    }
    for (double p : effects::predict(m, d.test)) CHECK(p == doctest::Approx(0.7).epsilon(1e-12));
  }

  TEST_CASE("pure linear target") {
    const auto d = make_data(2000, 2, [](const auto& r) { return 2.0 * r[0]; });
    const auto m = effects::fit_ebm(d.train, quick(2));
    const auto x = d.train.column(0);
    const double mean_x = stats::mean(x);
    for (const auto& row : effects::contribution_curve(m, "x1", 50)) {
      const double tol = std::max(0.02 * 20.0, 2.0 * (row.upper - row.value) / 2.0);
      CHECK(std::fabs(row.value - 2.0 * (row.x - mean_x)) <= tol);
    }
    const auto pred = effects::predict(m, d.test);
    CHECK(stats::rmse(pred, d.test.target) < 0.05 * stats::stddev(d.test.target));
  }

  TEST_CASE("step target") {
    const auto d = make_data(2000, 3, [](const auto& r) { return r[0] > 5.0 ? 1.0 : 0.0; });
    const auto m = effects::fit_ebm(d.train, quick(3));
    const auto& s = m.shapes[0];
    // Location of the largest jump between adjacent bins.
    std::size_t best = 0;
    double jump = 0.0;
    for (std::size_t b = 0; b + 1 < s.values.size(); ++b) {
      if (std::fabs(s.values[b + 1] - s.values[b]) > jump) {
        jump = std::fabs(s.values[b + 1] - s.values[b]);
        best = b;
      }
    }
    const double width = (s.max_x - s.min_x) / static_cast<double>(s.values.size());
    CHECK(std::fabs(s.cuts[best] - 5.0) <= width);
  }

  TEST_CASE("centering and additivity") {
    const auto d = make_data(800, 4, [](const auto& r) { return std::sin(r[0]) + r[1] * r[2]; }, 0.05);
    effects::EbmHyper h = quick(4);
    h.n_interactions = 2;
    const auto m = effects::fit_ebm(d.train, h);
    const auto pred = effects::predict(m, d.train);
    std::vector<double> sums(m.shapes.size() + m.pairs.size(), 0.0);
    for (std::size_t i = 0; i < d.train.rows(); ++i) {
      const auto t = effects::term_contributions(m, d.train, i);
      CHECK(std::accumulate(t.begin(), t.end(), m.intercept) == doctest::Approx(pred[i]).epsilon(1e-12));
      for (std::size_t j = 0; j < t.size(); ++j) sums[j] += t[j];
    }
    for (double s : sums) CHECK(std::fabs(s / static_cast<double>(d.train.rows())) < 1e-9);
  }

  TEST_CASE("linear baseline") {
    const auto c = make_data(200, 5, [](const auto&) { return 3.0; });
    const auto mc = effects::fit_linear(c.train);
    CHECK(mc.intercept == doctest::Approx(3.0).epsilon(1e-12));
    for (const auto& s : mc.shapes) CHECK(std::fabs(s.slope) < 1e-9);

    const auto l = make_data(200, 6, [](const auto& r) { return 2.0 * r[0]; });
    const auto ml = effects::fit_linear(l.train);
    CHECK(std::fabs(ml.shapes[0].slope - 2.0) < 1e-9);
    CHECK(std::fabs(ml.shapes[1].slope) < 1e-9);
  }

  TEST_CASE("U-shaped effect favours the boosted model") {
    const auto d = make_data(3000, 7, [](const auto& r) { return (r[0] - 5.0) * (r[0] - 5.0) / 25.0; }, 0.05);
    const auto ebm = effects::fit_ebm(d.train, quick(7));
    const auto lin = effects::fit_linear(d.train);
    CHECK(stats::rmse(effects::predict(lin, d.test), d.test.target) >
          stats::rmse(effects::predict(ebm, d.test), d.test.target));
  }

  TEST_CASE("rank-deficient design falls back to ridge") {
    Rng rng(1);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 50; ++i) {
      const double a = rng.normal();
      rows.push_back({a, 2.0 * a});
      y.push_back(a);
    }
    const auto m = effects::fit_linear(FeatureMatrix::from_rows({"a", "b"}, rows, y));
    CHECK_FALSE(m.warnings.empty());
    const auto p = effects::predict(m, FeatureMatrix::from_rows({"a", "b"}, rows, y));
    CHECK(stats::rmse(p, y) < 1e-6);
  }

  TEST_CASE("intercept-only model predicts a constant") {
    effects::EffectModel m;
    m.intercept = 1.25;
    const auto d = make_data(20, 8, [](const auto&) { return 0.0; });
    m.feature_names = d.test.names;
    for (const auto& name : d.test.names) {
      effects::ShapeFunction s;
      s.feature = name;
      s.values = {0.0};
      s.stderrs = {0.0};
      m.shapes.push_back(s);
    }
    for (double p : effects::predict(m, d.test)) CHECK(p == 1.25);
  }

  TEST_CASE("importance") {
    const auto d = make_data(2000, 9, [](const auto& r) { return 2.0 * r[0] + 0.1 * r[1]; });
    const auto m = effects::fit_ebm(d.train, quick(9));
    const auto imp = effects::feature_importance(m, d.train);
    CHECK(imp.front().term == "x1");
    double x2 = -1.0, x3 = -1.0;
    for (const auto& i : imp) {
      CHECK(i.value >= 0.0);
      if (i.term == "x2") x2 = i.value;
      if (i.term == "x3") x3 = i.value;
    }
    CHECK(imp.front().value > x2);
    const auto c = make_data(200, 1, [](const auto&) { return 0.4; });
    for (const auto& i : effects::feature_importance(effects::fit_ebm(c.train, quick()), c.train)) {
      CHECK(i.value == 0.0);
    }
    (void)x3;
  }

  TEST_CASE("contribution curves") {
    const auto d = make_data(1500, 10, [](const auto& r) { return 0.5 * r[2] + 0.1 * r[0]; }, 0.05);
    const auto m = effects::fit_ebm(d.train, quick(10));
    const auto bin = effects::contribution_curve(m, "x3");
    REQUIRE(bin.size() == 2);
    const auto& s = m.shapes[2];
    CHECK(std::fabs(s.weights[0] * bin[0].value + s.weights[1] * bin[1].value) < 1e-9);
    CHECK(bin[1].value - bin[0].value == doctest::Approx(0.5).epsilon(0.1));
    CHECK(effects::contribution_curve(m, "x1", 25).size() == 25);
    CHECK_THROWS_AS(effects::contribution_curve(m, "nope"), ValidationError);

    auto one = quick(10);
    one.n_bags = 1;
    for (const auto& r : effects::contribution_curve(effects::fit_ebm(d.train, one), "x1", 20)) {
      CHECK(r.lower == r.value);
      CHECK(r.upper == r.value);
    }
  }

  TEST_CASE("U-shaped synthetic effect is recovered") {
    synth::SynthConfig cfg;
    cfg.n_users = 3000;
    cfg.n_posts = 40;
    cfg.n_hate_posts = 10;
    cfg.effects = {{"account_age_days", synth::EffectShape::UShape, 0.3}};
    const auto ds = synth::generate(cfg);
    const auto view = log_transform_attributes(ds.data.users);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (const auto& f : view.rows) {
      rows.emplace_back(f.begin(), f.end());
      y.push_back(ds.truth.signal(f));
    }
    const double sd = stats::stddev(y);
    Rng rng(1);
    for (auto& v : y) v += 0.1 * sd * rng.normal();
    std::vector<std::string> names(kAttributeNames.begin(), kAttributeNames.end());
    const auto fm = FeatureMatrix::from_rows(names, rows, y);
    const auto m = effects::fit_ebm(fm, quick(1));
    std::vector<double> fitted, truth;
    for (const auto& r : effects::contribution_curve(m, "account_age_days", 100)) {
      fitted.push_back(r.value);
      truth.push_back(ds.truth.effect(0, r.x));
    }
    CHECK(stats::pearson(fitted, truth) >= 0.9);
  }

  TEST_CASE("hyperparameter validation") {
    const auto d = make_data(50, 1, [](const auto& r) { return r[0]; });
    auto h = quick();
    h.n_bags = 0;
    CHECK_THROWS_AS(effects::fit_ebm(d.train, h), ValidationError);
    h = quick();
    h.learning_rate = -1.0;
    CHECK_THROWS_AS(effects::fit_ebm(d.train, h), ValidationError);
  }
}
