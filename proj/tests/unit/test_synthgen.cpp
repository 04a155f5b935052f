#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "reshare/error.hpp"
#include "reshare/pipeline.hpp"
#include "reshare/synthgen.hpp"

namespace fs = std::filesystem;
using namespace reshare;

TEST_SUITE("synthgen") {
  TEST_CASE("exponent zero gives uniform exposure") {
    synth::SynthConfig cfg;
    cfg.n_users = 50;
    cfg.exposure_exponent = 0.0;
    const auto ds = synth::generate(cfg);
    for (double t : ds.truth.theta) CHECK(t == 1.0);
  }

  TEST_CASE("certain interest and exposure give the complete graph") {
    synth::SynthConfig cfg;
    cfg.n_users = 20;
    cfg.n_posts = 12;
    cfg.n_hate_posts = 6;
    auto ds = synth::generate(cfg);
    auto truth = ds.truth;
    std::fill(truth.theta.begin(), truth.theta.end(), 1.0);
    std::fill(truth.hate_scale.begin(), truth.hate_scale.end(), 1e9);
    std::fill(truth.normal_iota.begin(), truth.normal_iota.end(), 1.0);
    const auto g = synth::resample_interactions(ds.data.graph, truth, 3);
    CHECK(g.num_edges() == 20 * 12);
  }

  TEST_CASE("edge frequencies follow theta * iota") {
    synth::SynthConfig cfg;
    cfg.n_users = 1000;
    cfg.n_posts = 200;
    cfg.n_hate_posts = 60;
    const auto ds = synth::generate(cfg);
    const std::size_t reps = 50, U = 1000, P = 200;
    std::vector<std::uint16_t> hits(U * P, 0);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto g = synth::resample_interactions(ds.data.graph, ds.truth, 100 + r);
      for (const auto& e : g.edges()) {
        ++hits[e.user * P + e.post];
      }
    }
    // Per-pair 3-sigma bands hold for ~99.7% of pairs under the model; the pooled count is
    // tested separately.
    std::size_t outside = 0;
    double observed = 0.0, expected = 0.0, var = 0.0;
    for (std::size_t u = 0; u < U; ++u) {
      for (std::size_t h = 0; h < P; ++h) {
        const double p = ds.truth.edge_probability(u, h);
        const double freq = hits[u * P + h] / double(reps);
        const double se = std::sqrt(p * (1.0 - p) / double(reps));
        if (std::fabs(freq - p) > 3.0 * se + 1e-12) ++outside;
        observed += hits[u * P + h];
        expected += reps * p;
        var += reps * p * (1.0 - p);
      }
    }
    CHECK(static_cast<double>(outside) / double(U * P) < 0.01);
    CHECK(std::fabs(observed - expected) < 3.0 * std::sqrt(var));
  }

  TEST_CASE("invalid config names the field") {
    synth::SynthConfig cfg;
    cfg.n_posts = 10;
    cfg.n_hate_posts = 20;
    try {
      synth::generate(cfg);
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("n_hate_posts") != std::string::npos);
    }
  }

  TEST_CASE("interest test sample avoids train edges") {
    synth::SynthConfig cfg;
    cfg.n_users = 200;
    const auto ds = synth::generate(cfg);
    const auto train = ds.data.graph.hate_subgraph();
    const auto test = synth::sample_interest_test(train, ds.truth, 0.5, 1);
    for (const auto& e : test.edges()) CHECK_FALSE(train.has_edge(e.user, e.post));
    CHECK_THROWS_AS(synth::sample_interest_test(ds.data.graph, ds.truth, 0.5, 1), ValidationError);
  }

  TEST_CASE("effect offsets center the population") {
    synth::SynthConfig cfg;
    cfg.n_users = 500;
    const auto ds = synth::generate(cfg);
    const auto view = log_transform_attributes(ds.data.users);
    double s = 0.0;
    for (const auto& f : view.rows) s += ds.truth.signal(f);
    CHECK(std::fabs(s / 500.0) < 1e-12);
  }

  TEST_CASE("synth command writes the dataset and truth files deterministically") {
    synth::SynthConfig cfg;
    cfg.n_users = 150;
    cfg.n_posts = 80;
    cfg.n_hate_posts = 30;
    const auto a = fs::temp_directory_path() / "reshare_unit_synth_a";
    const auto b = fs::temp_directory_path() / "reshare_unit_synth_b";
    fs::remove_all(a);
    fs::remove_all(b);
    pipeline::cmd_synth(cfg, a);
    pipeline::cmd_synth(cfg, b);
    for (const auto* f : {"posts.csv", "users.csv", "interactions.csv", "outcomes.csv", "truth.csv",
                          "effects_truth.csv"}) {
      REQUIRE(fs::exists(a / f));
      CHECK(oracle::read_file(a / f) == oracle::read_file(b / f));
    }
    const auto back = load_dataset(DatasetPaths::in_directory(a));
    CHECK(back.graph.num_users() == 150);
    CHECK(back.graph.num_posts() == 80);
  }
}
