#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "reshare/dataset.hpp"
#include "reshare/propensity.hpp"

namespace reshare::topics {

using StopwordSet = std::unordered_set<std::string>;

/// Small built-in English stop word list.
const StopwordSet& default_stopwords();
/// One token per line; blank lines and lines starting with '#' are skipped. Tokens are lowercased.
StopwordSet load_stopwords(const std::filesystem::path& path);

struct TokenizeOptions {
  std::size_t min_token_length = 2;  // in code points
};

/// Lowercases ASCII, strips URLs and emoji, splits on anything that is not a letter or digit
/// (apostrophes are dropped inside words), and removes stop words and short tokens.
std::vector<std::string> tokenize_text(std::string_view text, const StopwordSet& stopwords,
                                       const TokenizeOptions& options = {});

struct TokenCorpus {
  std::vector<std::string> vocabulary;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::vector<std::uint32_t>> documents;

  std::size_t vocab_size() const { return vocabulary.size(); }
};

/// One document per post, in input order; empty documents are kept. Vocabulary ids are
/// assigned in order of first appearance.
TokenCorpus tokenize(std::span<const Post> posts, const StopwordSet& stopwords, const TokenizeOptions& options = {});

/// Drops tokens whose document frequency is below `min_df` and re-numbers the vocabulary.
TokenCorpus prune_vocabulary(const TokenCorpus& corpus, std::size_t min_df);

struct LdaOptions {
  std::size_t num_topics = 20;
  std::size_t iterations = 200;
  double alpha = -1.0;  // negative: 50 / num_topics
  double beta = 0.01;
  std::uint64_t seed = 0;
};

/// Topic-word distributions from collapsed Gibbs sampling.
struct TopicModel {
  std::size_t num_topics = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> phi;  // num_topics x vocab_size, row-major
  std::vector<std::string> vocabulary;

  double word_prob(std::size_t topic, std::uint32_t word) const { return phi[topic * vocab_size + word]; }
  /// Word ids of `topic` sorted by decreasing probability (ties by id).
  std::vector<std::uint32_t> top_words(std::size_t topic, std::size_t n) const;
};

/// Collapsed Gibbs sampling for `options.iterations` sweeps. Requires num_topics >= 2 and
/// at least num_topics non-empty documents.
TopicModel fit_lda(const TokenCorpus& corpus, const LdaOptions& options);
TopicModel fit_lda(const TokenCorpus& corpus, std::size_t num_topics, std::size_t iterations, std::uint64_t seed);

struct InferOptions {
  std::size_t sweeps = 60;
  std::size_t burn_in = 20;
  std::uint64_t seed = 0;
};

/// Fold-in Gibbs with phi frozen; returns the posterior-mean topic mixture averaged over the
/// post-burn-in sweeps. An empty document yields the uniform vector.
TopicVector infer_topics(const TopicModel& model, std::span<const std::uint32_t> document,
                         const InferOptions& options = {});

/// Maps tokens onto the model vocabulary, dropping unknown words.
std::vector<std::uint32_t> encode(const TopicModel& model, std::span<const std::string> tokens);

/// exp(-log-likelihood / #tokens) of `documents` under fold-in mixtures.
double perplexity(const TopicModel& model, std::span<const std::vector<std::uint32_t>> documents,
                  const InferOptions& options = {});

/// topics.csv: post_id, t_0..t_{K-1}.
void write_topics(const std::filesystem::path& path, std::span<const std::string> post_ids,
                  std::span<const TopicVector> vectors);
std::unordered_map<std::string, TopicVector> read_topics(const std::filesystem::path& path);

}  // namespace reshare::topics
