#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "reshare/dataset.hpp"
#include "reshare/error.hpp"

namespace fs = std::filesystem;
using namespace reshare;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("reshare_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

fs::path small_dataset(const std::string& name, const std::string& interactions) {
  const auto dir = fresh_dir(name);
  write(dir / "posts.csv",
        "post_id,author_id,is_hate,cluster,text\n"
        "p1,u1,1,toxic,hello\n"
        "p2,u2,0,,\"quoted, text\"\n"
        "p3,u1,1,,plain\n");
  write(dir / "users.csv",
        "user_id,verified,account_age_days,n_posts,n_followers,n_friends\n"
        "u1,0,100,10,5,491\n"
        "u2,1,2000,0,0,3\n");
  write(dir / "interactions.csv", interactions);
  return dir;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("graph counts echo the input files") {
    const auto dir = small_dataset("counts", "user_id,post_id\nu1,p1\nu1,p2\nu2,p2\nu2,p3\n");
    const auto ds = load_dataset(DatasetPaths::in_directory(dir));
    CHECK(ds.graph.num_posts() == 3);
    CHECK(ds.graph.num_users() >= 2);
    CHECK(ds.graph.num_edges() == 4);
    CHECK(ds.graph.posts()[1].text == "quoted, text");
    CHECK(ds.graph.posts()[0].cluster == std::optional<std::string>("toxic"));
    CHECK_FALSE(ds.graph.posts()[2].cluster.has_value());
  }

  TEST_CASE("interaction referencing an absent post names the row") {
    const auto dir = small_dataset("absent", "user_id,post_id\nu1,p1\nu2,p9\n");
    try {
      load_dataset(DatasetPaths::in_directory(dir));
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("p9") != std::string::npos);
      CHECK(std::string(e.what()).find("interactions.csv") != std::string::npos);
    }
  }

  TEST_CASE("cluster on a non-hate post is rejected") {
    const auto dir = small_dataset("cluster", "user_id,post_id\n");
    write(dir / "posts.csv", "post_id,author_id,is_hate,cluster\np1,u1,0,toxic\n");
    CHECK_THROWS_AS(load_dataset(DatasetPaths::in_directory(dir)), DataError);
  }

  TEST_CASE("write then load round-trips") {
    const auto dir = small_dataset("roundtrip", "user_id,post_id\nu1,p1\nu2,p3\n");
    const auto ds = load_dataset(DatasetPaths::in_directory(dir));
    const auto out = fresh_dir("roundtrip_out");
    write_dataset(ds, DatasetPaths::in_directory(out));
    CHECK(load_dataset(DatasetPaths::in_directory(out)) == ds);
  }

  TEST_CASE("log transform") {
    UserAttributes row{"u", true, 42, 1, 0, 491};
    const auto f = log_transform(row);
    CHECK(f[0] == 1.0);
    CHECK(f[1] == 42.0);
    CHECK(f[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(f[3] == 0.0);
    const double ln492 = static_cast<double>(std::log(492.0L));
    CHECK(f[4] == doctest::Approx(ln492).epsilon(1e-15));
    CHECK(f[4] == doctest::Approx(6.19848).epsilon(1e-6));
  }

  TEST_CASE("by-edge split arithmetic") {
    std::vector<Edge> edges;
    for (std::uint32_t u = 0; u < 2; ++u) {
      for (std::uint32_t h = 0; h < 5; ++h) edges.push_back({u, h});
    }
    const auto g = oracle::random_graph(2, 5, 0.0, 1).with_edges(edges);
    const auto sp = split(g, SplitMode::ByEdge, 0.8, 7);
    CHECK(sp.train.num_edges() == 8);
    CHECK(sp.test.num_edges() == 2);
    const auto again = split(g, SplitMode::ByEdge, 0.8, 7);
    CHECK(again.train == sp.train);
    CHECK(again.test == sp.test);
  }

  TEST_CASE("a user's only edge stays in train") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto g = oracle::random_graph(6, 10, 0.6, seed);
      std::vector<Edge> edges;
      for (const auto& e : g.edges()) {
        if (e.user != 0) edges.push_back(e);
      }
      edges.push_back({0, 3});
      g = g.with_edges(edges);
      const auto sp = split(g, SplitMode::ByEdge, 0.5, seed);
      CHECK(sp.train.has_edge(0, 3));
    }
  }

  TEST_CASE("by-user split keeps whole users together") {
    const auto g = oracle::random_graph(30, 12, 0.3, 3);
    const auto sp = split(g, SplitMode::ByUser, 0.8, 3);
    for (auto u : sp.test_users) CHECK(sp.train.posts_of(u).empty());
    for (auto u : sp.train_users) CHECK(sp.test.posts_of(u).empty());
    CHECK(sp.train.num_edges() + sp.test.num_edges() == g.num_edges());
  }

  TEST_CASE("split_indices partitions 0..n-1") {
    const auto [a, b] = split_indices(10, 0.8, 5);
    CHECK(a.size() == 8);
    CHECK(b.size() == 2);
    std::vector<std::uint32_t> all(a);
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::uint32_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  }

  TEST_CASE("invalid ratio") {
    const auto g = oracle::random_graph(3, 3, 0.5, 1);
    CHECK_THROWS_AS(split(g, SplitMode::ByEdge, 1.5, 0), ValidationError);
    CHECK_THROWS_AS(split(g, SplitMode::ByEdge, 0.0, 0), ValidationError);
  }
}
