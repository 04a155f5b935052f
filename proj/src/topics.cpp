#include "reshare/topics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"

namespace reshare::topics {

const StopwordSet& default_stopwords() {
  static const StopwordSet kWords = {
      "a",     "about", "above", "after", "again", "against", "all",   "am",    "an",    "and",   "any",
      "are",   "as",    "at",    "be",    "because", "been", "before", "being", "below", "between", "both",
      "but",   "by",    "can",   "could", "did",   "do",    "does",  "doing", "down",  "during", "each",
      "few",   "for",   "from",  "further", "had", "has",   "have",  "having", "he",   "her",   "here",
      "hers",  "herself", "him", "himself", "his", "how",   "i",     "if",    "in",    "into",  "is",
      "it",    "its",   "itself", "just", "me",    "more",  "most",  "my",    "myself", "no",   "nor",
      "not",   "now",   "of",    "off",   "on",    "once",  "only",  "or",    "other", "our",   "ours",
      "ourselves", "out", "over", "own",  "rt",    "same",  "she",   "should", "so",   "some",  "such",
      "than",  "that",  "the",   "their", "theirs", "them", "themselves", "then", "there", "these", "they",
      "this",  "those", "through", "to",  "too",   "under", "until", "up",    "very",  "was",   "we",
      "were",  "what",  "when",  "where", "which", "while", "who",   "whom",  "why",   "will",  "with",
      "would", "you",   "your",  "yours", "yourself", "yourselves"};
  return kWords;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword list " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::string w = line.substr(start);
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(w));
  }
  return words;
}

namespace {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid bytes map to U+FFFD.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= text.size()) return -1;
    const auto b = static_cast<unsigned char>(text[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) {
      i += 2;
      return static_cast<char32_t>(((b0 & 0x1F) << 6) | c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      i += 3;
      return static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      i += 4;
      return static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3);
    }
  }
  i += 1;
  return 0xFFFD;
}

bool is_emoji(char32_t c) {
  return (c >= 0x1F000 && c <= 0x1FAFF) || (c >= 0x2600 && c <= 0x27BF) || (c >= 0x2300 && c <= 0x23FF) ||
         (c >= 0x2B00 && c <= 0x2BFF) || (c >= 0xFE00 && c <= 0xFE0F) || c == 0x200D || c == 0x20E3 ||
         (c >= 0xE0020 && c <= 0xE007F);
}

bool is_word_char(char32_t c) {
  if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
  if (c == 0xD7 || c == 0xF7 || c == 0xFFFD) return false;
  if (c >= 0x2000 && c <= 0x2BFF) return false;  // punctuation, symbols, arrows, dingbats
  if (c >= 0x3000 && c <= 0x303F) return false;  // CJK punctuation
  return c >= 0xC0 && !is_emoji(c);
}

bool is_apostrophe(char32_t c) { return c == '\'' || c == 0x2019; }

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(std::tolower(static_cast<int>(c))));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

bool starts_with_ci(std::string_view text, std::size_t i, std::string_view prefix) {
  if (text.size() - i < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(text[i + k])) != prefix[k]) return false;
  }
  return true;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> tokenize_text(std::string_view text, const StopwordSet& stopwords,
                                       const TokenizeOptions& options) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t current_len = 0;
  auto flush = [&] {
    if (current_len >= options.min_token_length && !stopwords.contains(current)) tokens.push_back(current);
    current.clear();
    current_len = 0;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const bool at_boundary = i == 0 || is_space(text[i - 1]);
    if (at_boundary && (starts_with_ci(text, i, "http://") || starts_with_ci(text, i, "https://") ||
                        starts_with_ci(text, i, "www."))) {
      flush();
      while (i < text.size() && !is_space(text[i])) ++i;
      continue;
    }
    const char32_t c = next_code_point(text, i);
    if (is_word_char(c)) {
      append_utf8(current, c);
      ++current_len;
    } else if (is_apostrophe(c) && current_len > 0) {
      // "don't" -> "dont"
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

TokenCorpus tokenize(std::span<const Post> posts, const StopwordSet& stopwords, const TokenizeOptions& options) {
  TokenCorpus corpus;
  corpus.documents.reserve(posts.size());
  for (const auto& post : posts) {
    std::vector<std::uint32_t> doc;
    for (auto& tok : tokenize_text(post.text, stopwords, options)) {
      auto [it, inserted] = corpus.index.emplace(tok, static_cast<std::uint32_t>(corpus.vocabulary.size()));
      if (inserted) corpus.vocabulary.push_back(std::move(tok));
      doc.push_back(it->second);
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

TokenCorpus prune_vocabulary(const TokenCorpus& corpus, std::size_t min_df) {
  std::vector<std::size_t> df(corpus.vocab_size(), 0);
  for (const auto& doc : corpus.documents) {
    auto unique = doc;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto w : unique) ++df[w];
  }
  TokenCorpus out;
  std::vector<std::int64_t> remap(corpus.vocab_size(), -1);
  for (std::size_t w = 0; w < corpus.vocab_size(); ++w) {
    if (df[w] >= min_df) {
      remap[w] = static_cast<std::int64_t>(out.vocabulary.size());
      out.index.emplace(corpus.vocabulary[w], static_cast<std::uint32_t>(out.vocabulary.size()));
      out.vocabulary.push_back(corpus.vocabulary[w]);
    }
  }
  out.documents.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    std::vector<std::uint32_t> kept;
    for (auto w : doc) {
      if (remap[w] >= 0) kept.push_back(static_cast<std::uint32_t>(remap[w]));
    }
    out.documents.push_back(std::move(kept));
  }
  return out;
}

std::vector<std::uint32_t> TopicModel::top_words(std::size_t topic, std::size_t n) const {
  std::vector<std::uint32_t> ids(vocab_size);
  std::iota(ids.begin(), ids.end(), 0u);
  n = std::min(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](auto a, auto b) {
    const double pa = word_prob(topic, a), pb = word_prob(topic, b);
    return pa != pb ? pa > pb : a < b;
  });
  ids.resize(n);
  return ids;
}

namespace {

std::size_t sample_discrete(std::span<const double> cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

TopicModel fit_lda(const TokenCorpus& corpus, const LdaOptions& options) {
  const std::size_t K = options.num_topics;
  if (K < 2) throw ValidationError("fit_lda: need at least 2 topics");
  const std::size_t non_empty = static_cast<std::size_t>(std::count_if(
      corpus.documents.begin(), corpus.documents.end(), [](const auto& d) { return !d.empty(); }));
  if (non_empty < K) {
    throw ValidationError("fit_lda: corpus too small (" + std::to_string(non_empty) + " non-empty documents for " +
                          std::to_string(K) + " topics)");
  }
  if (!(options.beta > 0.0)) throw ValidationError("fit_lda: beta must be positive");
  const std::size_t V = corpus.vocab_size();
  const double alpha = options.alpha > 0.0 ? options.alpha : 50.0 / static_cast<double>(K);
  const double beta = options.beta;
  const double v_beta = static_cast<double>(V) * beta;

  Rng rng(mix_seed(options.seed, 0x1da));
  const std::size_t D = corpus.documents.size();
  std::vector<std::uint32_t> n_dk(D * K, 0);
  std::vector<std::uint32_t> n_kw(K * V, 0);
  std::vector<std::uint32_t> n_k(K, 0);
  std::vector<std::vector<std::uint16_t>> z(D);
  for (std::size_t d = 0; d < D; ++d) {
    const auto& doc = corpus.documents[d];
    z[d].resize(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto k = static_cast<std::uint16_t>(rng.index(K));
      z[d][i] = k;
      ++n_dk[d * K + k];
      ++n_kw[k * V + doc[i]];
      ++n_k[k];
    }
  }

  std::vector<double> cumulative(K);
  for (std::size_t sweep = 0; sweep < options.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      const auto& doc = corpus.documents[d];
      std::uint32_t* doc_counts = n_dk.data() + d * K;
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto w = doc[i];
        const auto old = z[d][i];
        --doc_counts[old];
        --n_kw[old * V + w];
        --n_k[old];
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          acc += (doc_counts[k] + alpha) * (n_kw[k * V + w] + beta) / (n_k[k] + v_beta);
          cumulative[k] = acc;
        }
        const auto k = static_cast<std::uint16_t>(sample_discrete(cumulative, rng));
        z[d][i] = k;
        ++doc_counts[k];
        ++n_kw[k * V + w];
        ++n_k[k];
      }
    }
  }

  TopicModel model;
  model.num_topics = K;
  model.vocab_size = V;
  model.alpha = alpha;
  model.beta = beta;
  model.iterations = options.iterations;
  model.seed = options.seed;
  model.vocabulary = corpus.vocabulary;
  model.phi.resize(K * V);
  for (std::size_t k = 0; k < K; ++k) {
    double row = 0.0;
    for (std::size_t w = 0; w < V; ++w) {
      model.phi[k * V + w] = (n_kw[k * V + w] + beta) / (n_k[k] + v_beta);
      row += model.phi[k * V + w];
    }
    for (std::size_t w = 0; w < V; ++w) model.phi[k * V + w] /= row;
  }
  return model;
}

TopicModel fit_lda(const TokenCorpus& corpus, std::size_t num_topics, std::size_t iterations, std::uint64_t seed) {
  LdaOptions options;
  options.num_topics = num_topics;
  options.iterations = iterations;
  options.seed = seed;
  return fit_lda(corpus, options);
}

TopicVector infer_topics(const TopicModel& model, std::span<const std::uint32_t> document,
                         const InferOptions& options) {
  const std::size_t K = model.num_topics;
  TopicVector theta(K, 0.0);
  if (document.empty()) {
    std::fill(theta.begin(), theta.end(), 1.0 / static_cast<double>(K));
    return theta;
  }
  if (options.burn_in >= options.sweeps) throw ValidationError("infer_topics: burn_in must be below sweeps");
  std::uint64_t doc_hash = document.size();
  for (auto w : document) doc_hash = mix_seed(doc_hash, w);
  Rng rng(mix_seed(options.seed, doc_hash));

  std::vector<std::uint32_t> counts(K, 0);
  std::vector<std::uint16_t> z(document.size());
  for (std::size_t i = 0; i < document.size(); ++i) {
    if (document[i] >= model.vocab_size) throw ValidationError("infer_topics: word id outside the vocabulary");
    z[i] = static_cast<std::uint16_t>(rng.index(K));
    ++counts[z[i]];
  }
  std::vector<double> cumulative(K);
  std::size_t kept = 0;
  const double denom = static_cast<double>(document.size()) + static_cast<double>(K) * model.alpha;
  for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
    for (std::size_t i = 0; i < document.size(); ++i) {
      --counts[z[i]];
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        acc += (counts[k] + model.alpha) * model.word_prob(k, document[i]);
        cumulative[k] = acc;
      }
      z[i] = static_cast<std::uint16_t>(sample_discrete(cumulative, rng));
      ++counts[z[i]];
    }
    if (sweep >= options.burn_in) {
      for (std::size_t k = 0; k < K; ++k) theta[k] += (counts[k] + model.alpha) / denom;
      ++kept;
    }
  }
  double total = 0.0;
  for (auto& t : theta) {
    t /= static_cast<double>(kept);
    total += t;
  }
  for (auto& t : theta) t /= total;
  return theta;
}

std::vector<std::uint32_t> encode(const TopicModel& model, std::span<const std::string> tokens) {
  std::unordered_map<std::string_view, std::uint32_t> index;
  index.reserve(model.vocabulary.size());
  for (std::size_t w = 0; w < model.vocabulary.size(); ++w) index.emplace(model.vocabulary[w], static_cast<std::uint32_t>(w));
  std::vector<std::uint32_t> ids;
  for (const auto& t : tokens) {
    auto it = index.find(t);
    if (it != index.end()) ids.push_back(it->second);
  }
  return ids;
}

double perplexity(const TopicModel& model, std::span<const std::vector<std::uint32_t>> documents,
                  const InferOptions& options) {
  double log_lik = 0.0;
  std::size_t n_tokens = 0;
  for (const auto& doc : documents) {
    if (doc.empty()) continue;
    const auto theta = infer_topics(model, doc, options);
    for (auto w : doc) {
      double p = 0.0;
      for (std::size_t k = 0; k < model.num_topics; ++k) p += theta[k] * model.word_prob(k, w);
      log_lik += std::log(p);
    }
    n_tokens += doc.size();
  }
  if (n_tokens == 0) throw ValidationError("perplexity: no tokens");
  return std::exp(-log_lik / static_cast<double>(n_tokens));
}

void write_topics(const std::filesystem::path& path, std::span<const std::string> post_ids,
                  std::span<const TopicVector> vectors) {
  if (post_ids.size() != vectors.size()) throw ValidationError("write_topics: size mismatch");
  csv::Writer w(path);
  const std::size_t K = vectors.empty() ? 0 : vectors.front().size();
  w.field("post_id");
  for (std::size_t k = 0; k < K; ++k) w.field("t_" + std::to_string(k));
  w.end_row();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    w.field(post_ids[i]);
    for (double v : vectors[i]) w.field(v);
    w.end_row();
  }
  w.close();
}

std::unordered_map<std::string, TopicVector> read_topics(const std::filesystem::path& path) {
  csv::Reader reader(path);
  csv::Record rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": missing header row", 1);
  if (rec.fields.empty() || rec.fields[0] != "post_id") throw DataError(path.string() + ": expected post_id column", 1);
  const std::size_t K = rec.fields.size() - 1;
  std::unordered_map<std::string, TopicVector> out;
  while (reader.next(rec)) {
    if (rec.fields.size() != K + 1) throw DataError(path.string() + ": wrong field count", rec.line);
    TopicVector v(K);
    for (std::size_t k = 0; k < K; ++k) v[k] = csv::parse_double(rec.fields[k + 1], path, rec.line, "t");
    out.emplace(rec.fields[0], std::move(v));
  }
  return out;
}

}  // namespace reshare::topics
