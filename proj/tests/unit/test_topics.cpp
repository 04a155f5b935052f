#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"
#include "reshare/topics.hpp"

using namespace reshare;

namespace {

// Two groups of documents with disjoint vocabularies.
topics::TokenCorpus separable_corpus() {
  const std::vector<std::string> a{"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"};
  const std::vector<std::string> b{"golf", "hotel", "india", "juliet", "kilo", "lima"};
  std::vector<Post> posts;
  Rng rng(4);
  for (int d = 0; d < 40; ++d) {
    const auto& words = d % 2 == 0 ? a : b;
    std::string text;
    for (int w = 0; w < 100; ++w) text += words[rng.index(words.size())] + " ";
    posts.push_back({"p" + std::to_string(d), "u", true, std::nullopt, text});
  }
  return topics::tokenize(posts, {});
}

bool in_group_a(const std::string& w) { return w < "g"; }

}  // namespace

TEST_SUITE("topics") {
  TEST_CASE("tokenizer rules") {
    const topics::StopwordSet stop{"i", "this"};
    CHECK(topics::tokenize_text("I HATE this http://x.co \xF0\x9F\x98\xA1", stop) == std::vector<std::string>{"hate"});
    CHECK(topics::tokenize_text("https://example.com/a?b=c", stop).empty());
    CHECK(topics::tokenize_text("don't www.x.org stop", {}) == std::vector<std::string>{"dont", "stop"});
    CHECK(topics::tokenize_text("same words here", stop) == topics::tokenize_text("same words here", stop));
  }

  TEST_CASE("vocabulary pruning by document frequency") {
    std::vector<Post> posts{{"a", "u", true, std::nullopt, "common rare"}, {"b", "u", true, std::nullopt, "common"}};
    const auto c = topics::prune_vocabulary(topics::tokenize(posts, {}), 2);
    CHECK(c.vocabulary == std::vector<std::string>{"common"});
    CHECK(c.documents.size() == 2);
    CHECK(c.documents[0].size() == 1);
  }

  TEST_CASE("separable corpus: each topic draws its top words from one group") {
    const auto corpus = separable_corpus();
    const auto model = topics::fit_lda(corpus, 2, 200, 7);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto top = model.top_words(k, 5);
      const bool first = in_group_a(model.vocabulary[top[0]]);
      for (auto w : top) CHECK(in_group_a(model.vocabulary[w]) == first);
    }
    CHECK(in_group_a(model.vocabulary[model.top_words(0, 1)[0]]) !=
          in_group_a(model.vocabulary[model.top_words(1, 1)[0]]));
  }

  TEST_CASE("fold-in on a group-exclusive document") {
    const auto corpus = separable_corpus();
    const auto model = topics::fit_lda(corpus, 2, 200, 7);
    const std::size_t topic_a = in_group_a(model.vocabulary[model.top_words(0, 1)[0]]) ? 0 : 1;
    // Long enough for the data to outweigh the alpha = 50 / K prior.
    std::vector<std::string> doc;
    for (int i = 0; i < 50; ++i) doc.insert(doc.end(), {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"});
    const auto mix = topics::infer_topics(model, topics::encode(model, doc));
    CHECK(mix[topic_a] >= 0.9);
    CHECK(std::accumulate(mix.begin(), mix.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("empty document gives the uniform mixture") {
    const auto model = topics::fit_lda(separable_corpus(), 4, 20, 1);
    const auto mix = topics::infer_topics(model, {});
    for (double v : mix) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }

  TEST_CASE("same seed, same phi") {
    const auto corpus = separable_corpus();
    CHECK(topics::fit_lda(corpus, 3, 50, 9).phi == topics::fit_lda(corpus, 3, 50, 9).phi);
  }

  TEST_CASE("degenerate one-word vocabulary") {
    std::vector<Post> posts;
    for (int i = 0; i < 6; ++i) posts.push_back({"p" + std::to_string(i), "u", true, std::nullopt, "word"});
    const auto model = topics::fit_lda(topics::tokenize(posts, {}), 2, 30, 2);
    CHECK(model.word_prob(0, 0) == doctest::Approx(1.0));
    CHECK(model.word_prob(1, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("phi rows are distributions and mixtures sum to one") {
    const auto corpus = separable_corpus();
    const auto model = topics::fit_lda(corpus, 3, 40, 5);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0.0;
      for (std::uint32_t w = 0; w < model.vocab_size; ++w) s += model.word_prob(k, w);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const auto& doc : corpus.documents) {
      const auto mix = topics::infer_topics(model, doc);
      CHECK(std::accumulate(mix.begin(), mix.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
      for (double v : mix) CHECK(v >= 0.0);
    }
  }

  TEST_CASE("invalid options") {
    const auto corpus = separable_corpus();
    CHECK_THROWS_AS(topics::fit_lda(corpus, 1, 10, 0), ValidationError);
    CHECK_THROWS_AS(topics::fit_lda(corpus, 100, 10, 0), ValidationError);
  }
}
