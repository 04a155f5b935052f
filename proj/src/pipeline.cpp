#include "reshare/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/outcomes.hpp"
#include "reshare/rng.hpp"
#include "reshare/stats.hpp"

namespace reshare::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config parsing

using Handlers = std::map<std::string, std::function<void(const json&)>>;

void parse_object(const json& obj, const std::string& ctx, const Handlers& handlers) {
  if (!obj.is_object()) throw ValidationError("config: '" + ctx + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const auto name = ctx.empty() ? key : ctx + "." + key;
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ValidationError("config: unknown key '" + name + "'");
    try {
      it->second(value);
    } catch (const json::exception&) {
      throw ValidationError("config: '" + name + "' has the wrong type");
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.rfind("config:", 0) == 0) throw;
      throw ValidationError("config: '" + name + "': " + what);
    }
  }
}

double number(const json& v) {
  if (!v.is_number()) throw ValidationError("expected a number");
  return v.get<double>();
}

std::size_t count(const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError("expected a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t seed_value(const json& v) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ValidationError("expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool boolean(const json& v) {
  if (!v.is_boolean()) throw ValidationError("expected true or false");
  return v.get<bool>();
}

std::string text(const json& v) {
  if (!v.is_string()) throw ValidationError("expected a string");
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

synth::EffectTerm parse_effect(const json& v) {
  synth::EffectTerm t;
  parse_object(v, "synth.effects[]", {
                                         {"attribute", [&](const json& x) { t.attribute = text(x); }},
                                         {"shape", [&](const json& x) { t.shape = synth::parse_shape(text(x)); }},
                                         {"amplitude", [&](const json& x) { t.amplitude = number(x); }},
                                     });
  return t;
}

void parse_synth(const json& v, PipelineConfig& c) {
  auto& s = c.synth;
  parse_object(v, "synth",
               {
                   {"n_users", [&](const json& x) { s.n_users = count(x); }},
                   {"n_posts", [&](const json& x) { s.n_posts = count(x); }},
                   {"n_hate_posts", [&](const json& x) { s.n_hate_posts = count(x); }},
                   {"n_clusters", [&](const json& x) { s.n_clusters = count(x); }},
                   {"exposure_exponent", [&](const json& x) { s.exposure_exponent = number(x); }},
                   {"popularity_sd", [&](const json& x) { s.popularity_sd = number(x); }},
                   {"cluster_popularity_sd", [&](const json& x) { s.cluster_popularity_sd = number(x); }},
                   {"follower_weighted", [&](const json& x) { s.follower_weighted = boolean(x); }},
                   {"appeal_sd", [&](const json& x) { s.appeal_sd = number(x); }},
                   {"affinity_concentration", [&](const json& x) { s.affinity_concentration = number(x); }},
                   {"affinity_floor", [&](const json& x) { s.affinity_floor = number(x); }},
                   {"mean_shares", [&](const json& x) { s.mean_shares = number(x); }},
                   {"activity_sd", [&](const json& x) { s.activity_sd = number(x); }},
                   {"base_rate", [&](const json& x) { s.base_rate = number(x); }},
                   {"vulnerability_weight", [&](const json& x) { s.vulnerability_weight = number(x); }},
                   {"noise_sd", [&](const json& x) { s.noise_sd = number(x); }},
                   {"verified_rate", [&](const json& x) { s.verified_rate = number(x); }},
                   {"words_per_post", [&](const json& x) { s.words_per_post = count(x); }},
                   {"seed",
                    [&](const json& x) {
                      s.seed = seed_value(x);
                      c.synth_seed_set = true;
                    }},
                   {"effects",
                    [&](const json& x) {
                      if (!x.is_array()) throw ValidationError("expected a list");
                      s.effects.clear();
                      for (const auto& e : x) s.effects.push_back(parse_effect(e));
                    }},
               });
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + spec + "' is not key=value");
  const auto key = spec.substr(0, eq), raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("override '" + spec + "' has an empty key segment");
    if (!node->is_object()) throw ValidationError("override '" + spec + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json to_json(const synth::SynthConfig& s) {
  json effects = json::array();
  for (const auto& e : s.effects) {
    effects.push_back({{"attribute", e.attribute}, {"shape", std::string(synth::to_string(e.shape))},
                       {"amplitude", e.amplitude}});
  }
  return {{"n_users", s.n_users},
          {"n_posts", s.n_posts},
          {"n_hate_posts", s.n_hate_posts},
          {"n_clusters", s.n_clusters},
          {"exposure_exponent", s.exposure_exponent},
          {"popularity_sd", s.popularity_sd},
          {"cluster_popularity_sd", s.cluster_popularity_sd},
          {"follower_weighted", s.follower_weighted},
          {"appeal_sd", s.appeal_sd},
          {"affinity_concentration", s.affinity_concentration},
          {"affinity_floor", s.affinity_floor},
          {"mean_shares", s.mean_shares},
          {"activity_sd", s.activity_sd},
          {"base_rate", s.base_rate},
          {"vulnerability_weight", s.vulnerability_weight},
          {"noise_sd", s.noise_sd},
          {"verified_rate", s.verified_rate},
          {"words_per_post", s.words_per_post},
          {"seed", s.seed},
          {"effects", effects}};
}

json to_json(const plv::PlvHyper& h) {
  return {{"embedding_dim", h.embedding_dim},         {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},               {"lambda", h.lambda},
          {"epochs", h.epochs},                       {"loss_mode", std::string(plv::to_string(h.loss_mode))},
          {"samples_per_epoch", h.samples_per_epoch}, {"early_stop_tol", h.early_stop_tol},
          {"early_stop_window", h.early_stop_window}};
}

json to_json(const effects::EbmHyper& h) {
  return {{"learning_rate", h.learning_rate},
          {"max_bins", h.max_bins},
          {"min_samples_leaf", h.min_samples_leaf},
          {"max_rounds", h.max_rounds},
          {"n_interactions", h.n_interactions},
          {"n_bags", h.n_bags},
          {"early_stop_patience", h.early_stop_patience},
          {"early_stop_tol", h.early_stop_tol},
          {"max_leaves", h.max_leaves},
          {"interaction_bins", h.interaction_bins}};
}

// ---------------------------------------------------------------------------
// stage plumbing

std::string fingerprint(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path marker_path(const fs::path& dir, std::string_view stage) { return dir / (".done_" + std::string(stage)); }

bool is_done(const fs::path& dir, std::string_view stage, const std::string& fp) {
  std::ifstream in(marker_path(dir, stage));
  std::string stored;
  return in && std::getline(in, stored) && stored == fp;
}

void mark_done(const fs::path& dir, std::string_view stage, const std::string& fp) {
  std::ofstream out(marker_path(dir, stage));
  out << fp << "\n";
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

class Log {
 public:
  explicit Log(std::ostream* out) : out_(out) {}
  void operator()(const std::string& line) const {
    if (out_) *out_ << "[reshare] " << line << std::endl;
  }

 private:
  std::ostream* out_;
};

template <class Fn>
auto run_stage(std::string_view name, const Log& log, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", secs);
    log(std::string(name) + " done in " + buf + " s");
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto result = fn();
      finish();
      return result;
    }
  } catch (const ValidationError& e) {
    throw ValidationError("stage " + std::string(name) + ": " + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("stage " + std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + std::string(name) + ": " + e.what());
  }
}

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// stages

Dataset prepare_data(const PipelineConfig& config, const fs::path& out, bool resume, const Log& log) {
  if (config.data) {
    log("loading " + config.data->posts.string() + ", " + config.data->users.string() + ", " +
        config.data->interactions.string());
    return load_dataset(*config.data);
  }
  const auto dir = out / "data";
  const auto sc = synth_config(config);
  const auto fp = fingerprint(to_json(sc).dump());
  if (resume && is_done(dir, "synth", fp)) {
    log("data: reusing " + dir.string());
    return load_dataset(DatasetPaths::in_directory(dir));
  }
  auto generated = cmd_synth(sc, dir);
  mark_done(dir, "synth", fp);
  return std::move(generated.data);
}

std::vector<TopicVector> fit_post_topics(const PipelineConfig& config, const InteractionGraph& hate,
                                         std::uint64_t seed) {
  const auto stopwords = config.stopwords ? topics::load_stopwords(*config.stopwords) : topics::default_stopwords();
  auto corpus = topics::tokenize(hate.posts(), stopwords);
  if (config.min_df > 1) corpus = topics::prune_vocabulary(corpus, config.min_df);
  auto lda = config.lda;
  lda.seed = seed;
  const auto model = topics::fit_lda(corpus, lda);
  std::vector<TopicVector> vectors;
  vectors.reserve(corpus.documents.size());
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    topics::InferOptions opts;
    opts.seed = mix_seed(seed, d);
    vectors.push_back(topics::infer_topics(model, corpus.documents[d], opts));
  }
  return vectors;
}

PropensityTable estimate(PropensityScheme scheme, const InteractionGraph& train, const UserAttributeTable& users,
                         double mu, double floor, std::span<const TopicVector> topic_vectors) {
  switch (scheme) {
    case PropensityScheme::Biased:
      return biased_propensity(train, floor);
    case PropensityScheme::Virality:
      return virality_propensity(train, mu, floor);
    case PropensityScheme::Follower:
      return follower_propensity(train, users, mu, floor);
    case PropensityScheme::Neural: {
      NeuralFitOptions opts;
      opts.target_mu = mu;
      opts.floor = floor;
      return neural_propensity(topic_vectors, train, opts);
    }
  }
  throw ValidationError("unknown propensity scheme");
}

void write_ranking(const fs::path& path, const std::string& label, const plv::RankingReport& r) {
  csv::Writer w(path);
  w.row("model", "metric", "k", "value");
  for (std::size_t i = 0; i < r.k_list.size(); ++i) w.row(label, "recall", r.k_list[i], r.recall[i]);
  for (std::size_t i = 0; i < r.k_list.size(); ++i) w.row(label, "ndcg", r.k_list[i], r.ndcg[i]);
  w.row(label, "users_evaluated", 0, r.users_evaluated);
  w.row(label, "users_skipped", 0, r.users_skipped);
  w.close();
}

plv::RankingReport read_ranking(const fs::path& path) {
  csv::Reader reader(path);
  csv::Record rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": missing header row", 1);
  const auto cols = csv::require_columns(rec, {"metric", "k", "value"}, path);
  plv::RankingReport r;
  while (reader.next(rec)) {
    const auto& metric = rec.fields[cols[0]];
    const auto k = static_cast<std::size_t>(csv::parse_int(rec.fields[cols[1]], path, rec.line, "k"));
    const auto v = csv::parse_double(rec.fields[cols[2]], path, rec.line, "value");
    if (metric == "recall") {
      r.k_list.push_back(k);
      r.recall.push_back(v);
    } else if (metric == "ndcg") {
      r.ndcg.push_back(v);
    } else if (metric == "users_evaluated") {
      r.users_evaluated = static_cast<std::size_t>(v);
    } else if (metric == "users_skipped") {
      r.users_skipped = static_cast<std::size_t>(v);
    }
  }
  if (r.ndcg.size() != r.k_list.size()) throw DataError(path.string() + ": recall and ndcg rows do not match");
  return r;
}

std::vector<effects::Importance> read_importance(const fs::path& path) {
  csv::Reader reader(path);
  csv::Record rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": missing header row", 1);
  const auto cols = csv::require_columns(rec, {"feature", "importance"}, path);
  std::vector<effects::Importance> out;
  while (reader.next(rec)) {
    out.push_back({rec.fields[cols[0]], csv::parse_double(rec.fields[cols[1]], path, rec.line, "importance")});
  }
  return out;
}

effects::EmbeddingTable embedding_table(const plv::PlvModel& model) {
  effects::EmbeddingTable table;
  for (std::size_t u = 0; u < model.num_users(); ++u) {
    const auto row = model.user_row(u);
    table.emplace(model.user_ids[u], std::vector<double>(row.begin(), row.end()));
  }
  return table;
}

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

std::vector<std::string> target_clusters(const PipelineConfig& config, const OutcomeTable& outcomes) {
  if (config.all_clusters) return outcomes.clusters;
  for (const auto& c : config.clusters) {
    if (!outcomes.cluster_index(c)) throw ValidationError("target cluster '" + c + "' does not occur in the data");
  }
  return config.clusters;
}

struct Fit {
  effects::EffectModel model;
  effects::FeatureMatrix train;
  double rmse = 0.0;
};

Fit fit_and_score(const effects::FeatureMatrix& features, std::span<const std::size_t> train_rows,
                  std::span<const std::size_t> test_rows, const effects::EbmHyper* ebm) {
  Fit f;
  f.train = features.select_rows(train_rows);
  const auto test = features.select_rows(test_rows);
  f.model = ebm ? effects::fit_ebm(f.train, *ebm) : effects::fit_linear(f.train);
  const auto pred = effects::predict(f.model, test);
  f.rmse = stats::rmse(pred, test.target);
  return f;
}

struct RunContext {
  const PipelineConfig& config;
  const Dataset& data;
  const InteractionGraph& hate;
  const OutcomeTable& outcomes;
  const Log& log;
  bool resume;
};

RunResult run_once(const RunContext& ctx, std::uint64_t seed, const fs::path& dir) {
  const auto& config = ctx.config;
  const auto& log = ctx.log;
  RunResult result;
  result.seed = seed;
  result.dir = dir;
  fs::create_directories(dir);
  log("run seed " + std::to_string(seed) + " -> " + dir.string());

  const auto plv_split = run_stage("split", log, [&] {
    return split(ctx.hate, SplitMode::ByEdge, config.plv_split_ratio, mix_seed(seed, 1));
  });

  const bool need_topics = std::find(config.variants.begin(), config.variants.end(), PropensityScheme::Neural) !=
                           config.variants.end();
  json topic_key = {{"seed", seed},
                    {"num_topics", config.lda.num_topics},
                    {"iterations", config.lda.iterations},
                    {"alpha", config.lda.alpha},
                    {"beta", config.lda.beta},
                    {"min_df", config.min_df},
                    {"stopwords", config.stopwords ? config.stopwords->string() : std::string()}};
  const auto topics_fp = fingerprint(topic_key.dump());
  std::vector<TopicVector> topic_vectors;
  if (need_topics) {
    topic_vectors = run_stage("topics", log, [&] {
      const auto path = dir / "topics.csv";
      std::vector<TopicVector> vectors;
      if (ctx.resume && is_done(dir, "topics", topics_fp)) {
        const auto stored = topics::read_topics(path);
        for (const auto& p : ctx.hate.posts()) {
          auto it = stored.find(p.post_id);
          if (it == stored.end()) throw DataError(path.string() + ": missing post " + p.post_id);
          vectors.push_back(it->second);
        }
        return vectors;
      }
      vectors = fit_post_topics(config, ctx.hate, mix_seed(seed, 3));
      std::vector<std::string> ids;
      for (const auto& p : ctx.hate.posts()) ids.push_back(p.post_id);
      topics::write_topics(path, ids, vectors);
      mark_done(dir, "topics", topics_fp);
      return vectors;
    });
  }

  json prop_key = {{"seed", seed},   {"ratio", config.plv_split_ratio}, {"mu", config.mu},
                   {"floor", config.floor}, {"topics", need_topics ? topics_fp : std::string()}};
  for (auto v : config.variants) prop_key["variants"].push_back(std::string(to_string(v)));
  const auto prop_fp = fingerprint(prop_key.dump());
  const auto tables = run_stage("propensity", log, [&] {
    const auto path = dir / "propensity.csv";
    std::map<PropensityScheme, PropensityTable> out;
    if (ctx.resume && is_done(dir, "propensity", prop_fp)) {
      for (auto& t : read_propensity(path, plv_split.train, config.floor)) out.emplace(t.scheme, std::move(t));
      return out;
    }
    std::vector<PropensityTable> list;
    for (auto scheme : config.variants) {
      list.push_back(estimate(scheme, plv_split.train, ctx.data.users, config.mu, config.floor, topic_vectors));
      out.emplace(scheme, list.back());
    }
    write_propensity(path, list);
    mark_done(dir, "propensity", prop_fp);
    return out;
  });

  std::map<PropensityScheme, effects::EmbeddingTable> embeddings;
  std::string plv_fps;
  for (auto scheme : config.variants) {
    const auto label = variant_label(scheme);
    const auto vdir = dir / ("plv_" + std::string(to_string(scheme)));
    json key = {{"propensity", prop_fp}, {"plv", to_json(config.plv)}, {"k", config.k_list},
                {"scheme", std::string(to_string(scheme))}};
    const auto fp = fingerprint(key.dump());
    plv_fps += fp;
    run_stage("plv " + label, log, [&] {
      fs::create_directories(vdir);
      if (ctx.resume && is_done(vdir, "plv", fp)) {
        embeddings[scheme] = plv::read_embeddings(vdir / "plv_embeddings.csv");
        result.ranking[label] = read_ranking(vdir / "ranking.csv");
        return;
      }
      auto hyper = config.plv;
      hyper.seed = mix_seed(seed, 20 + static_cast<std::uint64_t>(scheme));
      const auto model = plv::train(plv_split.train, &tables.at(scheme), hyper);
      auto ranking = plv::ranking_metrics(model, plv_split.train, plv_split.test, config.k_list);
      plv::write_embeddings(vdir / "plv_embeddings.csv", model);
      plv::write_training_curve(vdir / "training_curve.csv", model);
      write_ranking(vdir / "ranking.csv", label, ranking);
      embeddings[scheme] = embedding_table(model);
      result.ranking[label] = std::move(ranking);
      mark_done(vdir, "plv", fp);
    });
  }

  const auto clusters = target_clusters(config, ctx.outcomes);
  json eff_key = {{"plv", plv_fps},
                  {"ebm", to_json(config.ebm)},
                  {"ratio", config.effects_split_ratio},
                  {"linear", config.linear_baseline},
                  {"base", config.base_model},
                  {"primary", std::string(to_string(config.primary))},
                  {"clusters", clusters},
                  {"grid", config.curve_grid},
                  {"svg", config.svg},
                  {"seed", seed}};
  const auto eff_fp = fingerprint(eff_key.dump());
  const auto edir = dir / "effects";
  run_stage("effects", log, [&] {
    fs::create_directories(edir);
    if (ctx.resume && is_done(edir, "effects", eff_fp)) {
      csv::Reader reader(edir / "rmse.csv");
      csv::Record rec;
      reader.next(rec);
      while (reader.next(rec)) {
        const double v = csv::parse_double(rec.fields.at(1), edir / "rmse.csv", rec.line, "rmse");
        const auto& name = rec.fields.at(0);
        if (name.rfind("cluster:", 0) == 0) {
          result.cluster_rmse[name.substr(8)] = v;
        } else {
          result.rmse[name] = v;
        }
      }
      result.importance = read_importance(edir / "importance.csv");
      for (const auto& c : clusters) {
        result.cluster_importance[c] = read_importance(edir / ("importance_cluster_" + safe_name(c) + ".csv"));
      }
      return;
    }
    const auto [train_rows32, test_rows32] =
        split_indices(ctx.outcomes.size(), config.effects_split_ratio, mix_seed(seed, 4));
    const std::vector<std::size_t> train_rows(train_rows32.begin(), train_rows32.end());
    const std::vector<std::size_t> test_rows(test_rows32.begin(), test_rows32.end());
    if (train_rows.size() < 2 || test_rows.empty()) throw ValidationError("too few users with reshares to split");
    auto ebm = config.ebm;
    ebm.seed = mix_seed(seed, 5);

    if (config.base_model) {
      const auto fm = effects::assemble_features(ctx.data.users, nullptr, ctx.outcomes);
      result.rmse["Base"] = fit_and_score(fm, train_rows, test_rows, &ebm).rmse;
      log("effects Base rmse " + fixed(result.rmse["Base"], 6));
    }
    for (auto scheme : config.variants) {
      const auto label = variant_label(scheme);
      const auto fm = effects::assemble_features(ctx.data.users, &embeddings.at(scheme), ctx.outcomes);
      auto fit = fit_and_score(fm, train_rows, test_rows, &ebm);
      result.rmse[label] = fit.rmse;
      log("effects " + label + " rmse " + fixed(fit.rmse, 6));
      for (const auto& w : fit.model.warnings) log("warning: " + label + ": " + w);
      if (scheme != config.primary) continue;
      result.importance = effects::feature_importance(fit.model, fit.train);
      effects::write_importance(edir / "importance.csv", result.importance);
      for (auto name : kAttributeNames) {
        const auto rows = effects::contribution_curve(fit.model, name, config.curve_grid);
        effects::write_curve(edir / ("curve_" + std::string(name) + ".csv"), rows);
        if (config.svg) {
          effects::write_curve_svg(edir / ("curve_" + std::string(name) + ".svg"), rows,
                                   std::string(name) + " (DF-EBM, " + label + ")");
        }
      }
      if (config.linear_baseline) {
        const auto lin = fit_and_score(fm, train_rows, test_rows, nullptr);
        result.rmse["DF-linear"] = lin.rmse;
        for (const auto& w : lin.model.warnings) log("warning: DF-linear: " + w);
        log("effects DF-linear rmse " + fixed(lin.rmse, 6));
      }
      for (const auto& c : clusters) {
        const auto cfm = effects::assemble_features(ctx.data.users, &embeddings.at(scheme), ctx.outcomes, c);
        auto cfit = fit_and_score(cfm, train_rows, test_rows, &ebm);
        result.cluster_rmse[c] = cfit.rmse;
        result.cluster_importance[c] = effects::feature_importance(cfit.model, cfit.train);
        effects::write_importance(edir / ("importance_cluster_" + safe_name(c) + ".csv"),
                                  result.cluster_importance[c]);
        for (auto name : kAttributeNames) {
          const auto rows = effects::contribution_curve(cfit.model, name, config.curve_grid);
          effects::write_curve(edir / ("curve_cluster_" + safe_name(c) + "_" + std::string(name) + ".csv"), rows);
        }
      }
    }
    csv::Writer w(edir / "rmse.csv");
    w.row("model", "rmse");
    for (const auto& [name, v] : result.rmse) w.row(name, v);
    for (const auto& [name, v] : result.cluster_rmse) w.row("cluster:" + name, v);
    w.close();
    mark_done(edir, "effects", eff_fp);
  });
  return result;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::string> model_order(const PipelineConfig& config) {
  std::vector<std::string> order;
  if (config.base_model) order.push_back("Base");
  for (auto v : config.variants) order.push_back(variant_label(v));
  if (config.linear_baseline) order.push_back("DF-linear");
  return order;
}

std::vector<effects::Importance> mean_importance(const std::vector<const std::vector<effects::Importance>*>& lists) {
  std::map<std::string, double> sum;
  std::vector<std::string> first_seen;
  for (const auto* list : lists) {
    for (const auto& imp : *list) {
      if (!sum.count(imp.term)) first_seen.push_back(imp.term);
      sum[imp.term] += imp.value;
    }
  }
  std::vector<effects::Importance> out;
  for (const auto& term : first_seen) out.push_back({term, sum[term] / static_cast<double>(lists.size())});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  return out;
}

void importance_table(std::ostringstream& os, const std::vector<effects::Importance>& rows, std::size_t top) {
  os << pad("term", 32) << "importance\n";
  for (std::size_t i = 0; i < rows.size() && i < top; ++i) os << pad(rows[i].term, 32) << fixed(rows[i].value, 6) << "\n";
  if (rows.size() > top) os << "(" << rows.size() - top << " more terms in importance.csv)\n";
  os << "attributes:";
  for (auto name : kAttributeNames) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].term == name) os << " " << name << " #" << i + 1;
    }
  }
  os << "\n";
}

std::string render_report(const PipelineConfig& config, const PipelineResult& r) {
  std::ostringstream os;
  os << "reshare pipeline report\n\n";
  os << "dataset: " << r.num_users << " users, " << r.num_posts << " posts (" << r.num_hate_posts << " hate), "
     << r.num_edges << " reshares\n";
  os << "outcomes: " << r.outcome_rows << " users with reshares, " << r.excluded_users
     << " excluded (no reshares)\n";
  os << "runs: " << r.runs.size() << " (seeds";
  for (const auto& run : r.runs) os << " " << run.seed;
  os << ")\n";
  os << "propensity: mu " << general(config.mu) << ", floor " << general(config.floor) << "; plv loss "
     << plv::to_string(config.plv.loss_mode) << "\n\n";

  const auto order = model_order(config);
  std::map<std::string, std::vector<double>> samples;
  for (const auto& name : order) {
    for (const auto& run : r.runs) samples[name].push_back(run.rmse.at(name));
  }
  os << "== Effect model test RMSE ==\n";
  os << pad("model", 12) << pad("mean", 12) << pad("sd", 12) << "per run\n";
  for (const auto& name : order) {
    const auto& xs = samples[name];
    os << pad(name, 12) << pad(fixed(stats::mean(xs), 6), 12)
       << pad(xs.size() > 1 ? fixed(stats::stddev(xs), 6) : "-", 12);
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? " " : "") << fixed(xs[i], 6);
    os << "\n";
  }
  os << "\n";

  if (r.runs.size() >= 2) {
    os << "== Welch t-tests on per-run RMSE ==\n";
    os << pad("model a", 12) << pad("model b", 12) << pad("t", 12) << pad("df", 10) << "p\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const auto w = stats::welch_t_test(samples[order[i]], samples[order[j]]);
        os << pad(order[i], 12) << pad(order[j], 12);
        if (w.degenerate) {
          os << pad("-", 12) << pad("-", 10) << "1 (zero variance)\n";
        } else {
          os << pad(fixed(w.t, 4), 12) << pad(fixed(w.df, 2), 10) << general(w.p) << "\n";
        }
      }
    }
    os << "\n";
  }

  os << "== PLV ranking on held-out hate reshares (mean over runs, %) ==\n";
  os << pad("model", 12) << pad("metric", 8);
  for (auto k : config.k_list) os << pad("k=" + std::to_string(k), 10);
  os << "\n";
  std::size_t evaluated = 0, skipped = 0;
  for (auto v : config.variants) {
    const auto label = variant_label(v);
    for (const char* metric : {"recall", "ndcg"}) {
      os << pad(label, 12) << pad(metric, 8);
      for (auto k : config.k_list) {
        double s = 0.0;
        for (const auto& run : r.runs) {
          const auto& rep = run.ranking.at(label);
          s += std::string_view(metric) == "recall" ? rep.recall_at(k) : rep.ndcg_at(k);
        }
        os << pad(fixed(100.0 * s / static_cast<double>(r.runs.size()), 2), 10);
      }
      os << "\n";
    }
  }
  if (!config.variants.empty() && !r.runs.empty()) {
    const auto& rep = r.runs.front().ranking.at(variant_label(config.variants.front()));
    evaluated = rep.users_evaluated;
    skipped = rep.users_skipped;
  }
  os << "users evaluated: " << evaluated << ", skipped (no test edges): " << skipped << "\n\n";

  os << "== Feature importance: DF-EBM with " << variant_label(config.primary) << " (mean over runs) ==\n";
  std::vector<const std::vector<effects::Importance>*> lists;
  for (const auto& run : r.runs) lists.push_back(&run.importance);
  importance_table(os, mean_importance(lists), 15);

  std::vector<std::string> clusters;
  if (!r.runs.empty()) {
    for (const auto& [c, v] : r.runs.front().cluster_rmse) clusters.push_back(c);
  }
  for (const auto& c : clusters) {
    std::vector<double> xs;
    std::vector<const std::vector<effects::Importance>*> cl;
    for (const auto& run : r.runs) {
      xs.push_back(run.cluster_rmse.at(c));
      cl.push_back(&run.cluster_importance.at(c));
    }
    os << "\n== Cluster " << c << ": DF-EBM test RMSE " << fixed(stats::mean(xs), 6) << " ==\n";
    importance_table(os, mean_importance(cl), 10);
  }
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// public API

void PipelineConfig::validate() const {
  if (!data) synth.validate();
  plv.validate();
  ebm.validate();
  if (variants.empty()) throw ValidationError("config: propensity.variants is empty");
  if (std::find(variants.begin(), variants.end(), primary) == variants.end()) {
    throw ValidationError("config: propensity.primary must be one of propensity.variants");
  }
  if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("config: propensity.mu must be in (0, 1]");
  if (!(floor > 0.0 && floor <= 1.0)) throw ValidationError("config: propensity.floor must be in (0, 1]");
  if (!(plv_split_ratio > 0.0 && plv_split_ratio < 1.0)) throw ValidationError("config: split.plv_ratio must be in (0, 1)");
  if (!(effects_split_ratio > 0.0 && effects_split_ratio < 1.0)) {
    throw ValidationError("config: split.effects_ratio must be in (0, 1)");
  }
  if (runs < 1) throw ValidationError("config: runs must be at least 1");
  if (k_list.empty()) throw ValidationError("config: k_list is empty");
  for (auto k : k_list) {
    if (k == 0) throw ValidationError("config: k_list entries must be positive");
  }
  if (lda.num_topics < 2) throw ValidationError("config: topics.num_topics must be at least 2");
  if (curve_grid < 2) throw ValidationError("config: effects.curve_grid must be at least 2");
}

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir,
                            std::span<const std::string> overrides) {
  json doc = json::parse(json_text.begin(), json_text.end(), nullptr, false);
  if (doc.is_discarded()) throw ValidationError("config: not valid JSON");
  if (doc.is_null()) doc = json::object();
  for (const auto& o : overrides) apply_override(doc, o);

  PipelineConfig c;
  parse_object(
      doc, "",
      {
          {"seed", [&](const json& v) { c.seed = seed_value(v); }},
          {"runs", [&](const json& v) { c.runs = count(v); }},
          {"k_list",
           [&](const json& v) {
             if (!v.is_array()) throw ValidationError("expected a list");
             c.k_list.clear();
             for (const auto& k : v) c.k_list.push_back(count(k));
           }},
          {"mu_list",
           [&](const json& v) {
             if (!v.is_array()) throw ValidationError("expected a list");
             c.mu_list.clear();
             for (const auto& m : v) c.mu_list.push_back(number(m));
           }},
          {"data",
           [&](const json& v) {
             DatasetPaths p;
             parse_object(v, "data",
                          {
                              {"dir", [&](const json& x) { p = DatasetPaths::in_directory(resolve(base_dir, text(x))); }},
                              {"posts", [&](const json& x) { p.posts = resolve(base_dir, text(x)); }},
                              {"users", [&](const json& x) { p.users = resolve(base_dir, text(x)); }},
                              {"interactions", [&](const json& x) { p.interactions = resolve(base_dir, text(x)); }},
                          });
             if (p.posts.empty() || p.users.empty() || p.interactions.empty()) {
               throw ValidationError("config: data needs 'dir' or all of posts, users, interactions");
             }
             c.data = p;
           }},
          {"synth", [&](const json& v) { parse_synth(v, c); }},
          {"propensity",
           [&](const json& v) {
             parse_object(v, "propensity",
                          {
                              {"variants",
                               [&](const json& x) {
                                 if (!x.is_array()) throw ValidationError("expected a list");
                                 c.variants.clear();
                                 for (const auto& s : x) c.variants.push_back(parse_scheme(text(s)));
                               }},
                              {"primary", [&](const json& x) { c.primary = parse_scheme(text(x)); }},
                              {"mu", [&](const json& x) { c.mu = number(x); }},
                              {"floor", [&](const json& x) { c.floor = number(x); }},
                          });
           }},
          {"topics",
           [&](const json& v) {
             parse_object(v, "topics",
                          {
                              {"num_topics", [&](const json& x) { c.lda.num_topics = count(x); }},
                              {"iterations", [&](const json& x) { c.lda.iterations = count(x); }},
                              {"alpha", [&](const json& x) { c.lda.alpha = number(x); }},
                              {"beta", [&](const json& x) { c.lda.beta = number(x); }},
                              {"min_df", [&](const json& x) { c.min_df = count(x); }},
                              {"stopwords", [&](const json& x) { c.stopwords = resolve(base_dir, text(x)); }},
                          });
           }},
          {"plv",
           [&](const json& v) {
             auto& h = c.plv;
             parse_object(v, "plv",
                          {
                              {"embedding_dim", [&](const json& x) { h.embedding_dim = count(x); }},
                              {"learning_rate", [&](const json& x) { h.learning_rate = number(x); }},
                              {"batch_size", [&](const json& x) { h.batch_size = count(x); }},
                              {"lambda", [&](const json& x) { h.lambda = number(x); }},
                              {"epochs", [&](const json& x) { h.epochs = count(x); }},
                              {"loss_mode", [&](const json& x) { h.loss_mode = plv::parse_loss_mode(text(x)); }},
                              {"samples_per_epoch", [&](const json& x) { h.samples_per_epoch = count(x); }},
                              {"early_stop_tol", [&](const json& x) { h.early_stop_tol = number(x); }},
                              {"early_stop_window", [&](const json& x) { h.early_stop_window = count(x); }},
                          });
           }},
          {"ebm",
           [&](const json& v) {
             auto& h = c.ebm;
             parse_object(v, "ebm",
                          {
                              {"learning_rate", [&](const json& x) { h.learning_rate = number(x); }},
                              {"max_bins", [&](const json& x) { h.max_bins = count(x); }},
                              {"min_samples_leaf", [&](const json& x) { h.min_samples_leaf = count(x); }},
                              {"max_rounds", [&](const json& x) { h.max_rounds = count(x); }},
                              {"n_interactions", [&](const json& x) { h.n_interactions = count(x); }},
                              {"n_bags", [&](const json& x) { h.n_bags = count(x); }},
                              {"early_stop_patience", [&](const json& x) { h.early_stop_patience = count(x); }},
                              {"early_stop_tol", [&](const json& x) { h.early_stop_tol = number(x); }},
                              {"max_leaves", [&](const json& x) { h.max_leaves = count(x); }},
                              {"interaction_bins", [&](const json& x) { h.interaction_bins = count(x); }},
                              {"n_threads", [&](const json& x) { h.n_threads = count(x); }},
                          });
           }},
          {"effects",
           [&](const json& v) {
             parse_object(v, "effects",
                          {
                              {"linear_baseline", [&](const json& x) { c.linear_baseline = boolean(x); }},
                              {"base_model", [&](const json& x) { c.base_model = boolean(x); }},
                              {"clusters",
                               [&](const json& x) {
                                 c.clusters.clear();
                                 c.all_clusters = false;
                                 if (x.is_string() && x.get<std::string>() == "all") {
                                   c.all_clusters = true;
                                   return;
                                 }
                                 if (!x.is_array()) throw ValidationError("expected a list or \"all\"");
                                 for (const auto& s : x) c.clusters.push_back(text(s));
                               }},
                              {"curve_grid", [&](const json& x) { c.curve_grid = count(x); }},
                              {"svg", [&](const json& x) { c.svg = boolean(x); }},
                          });
           }},
          {"split",
           [&](const json& v) {
             parse_object(v, "split",
                          {
                              {"plv_ratio", [&](const json& x) { c.plv_split_ratio = number(x); }},
                              {"effects_ratio", [&](const json& x) { c.effects_split_ratio = number(x); }},
                          });
           }},
      });
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), overrides);
}

std::string config_json(const PipelineConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["runs"] = c.runs;
  doc["k_list"] = c.k_list;
  doc["mu_list"] = c.mu_list;
  if (c.data) {
    doc["data"] = {{"posts", c.data->posts.string()},
                   {"users", c.data->users.string()},
                   {"interactions", c.data->interactions.string()}};
  } else {
    doc["synth"] = to_json(synth_config(c));
  }
  json variants = json::array();
  for (auto v : c.variants) variants.push_back(std::string(to_string(v)));
  doc["propensity"] = {{"variants", variants},
                       {"primary", std::string(to_string(c.primary))},
                       {"mu", c.mu},
                       {"floor", c.floor}};
  doc["topics"] = {{"num_topics", c.lda.num_topics},
                   {"iterations", c.lda.iterations},
                   {"alpha", c.lda.alpha},
                   {"beta", c.lda.beta},
                   {"min_df", c.min_df}};
  if (c.stopwords) doc["topics"]["stopwords"] = c.stopwords->string();
  doc["plv"] = to_json(c.plv);
  doc["ebm"] = to_json(c.ebm);
  doc["ebm"]["n_threads"] = c.ebm.n_threads;
  doc["effects"] = {{"linear_baseline", c.linear_baseline},
                    {"base_model", c.base_model},
                    {"curve_grid", c.curve_grid},
                    {"svg", c.svg}};
  if (c.all_clusters) {
    doc["effects"]["clusters"] = "all";
  } else {
    doc["effects"]["clusters"] = c.clusters;
  }
  doc["split"] = {{"plv_ratio", c.plv_split_ratio}, {"effects_ratio", c.effects_split_ratio}};
  return doc.dump(2) + "\n";
}

synth::SynthConfig synth_config(const PipelineConfig& config) {
  auto s = config.synth;
  if (!config.synth_seed_set) s.seed = config.seed;
  return s;
}

std::string variant_label(PropensityScheme scheme) {
  switch (scheme) {
    case PropensityScheme::Biased:
      return "BPRMF";
    case PropensityScheme::Virality:
      return "BPRMF-V";
    case PropensityScheme::Follower:
      return "BPRMF-F";
    case PropensityScheme::Neural:
      return "BPRMF-NN";
  }
  return "BPRMF-?";
}

synth::SyntheticDataset cmd_synth(const synth::SynthConfig& config, const fs::path& out) {
  config.validate();
  auto generated = synth::generate(config);
  fs::create_directories(out);
  write_dataset(generated.data, DatasetPaths::in_directory(out));
  write_outcomes(out / "outcomes.csv", compute_outcomes(generated.data.graph));
  synth::write_truth(out, generated.data, generated.truth);
  return generated;
}

PipelineResult cmd_pipeline(const PipelineConfig& config, const fs::path& out, const RunOptions& options) {
  config.validate();
  const Log log(options.log);
  fs::create_directories(out);
  write_text(out / "config.json", config_json(config));

  const auto data = run_stage("data", log, [&] { return prepare_data(config, out, options.resume, log); });
  const auto hate = data.graph.hate_subgraph();
  const auto outcomes = run_stage("outcomes", log, [&] {
    auto table = compute_outcomes(data.graph);
    write_outcomes(out / "outcomes.csv", table);
    if (table.unlabeled_posts > 0) {
      log("warning: " + std::to_string(table.unlabeled_posts) + " hate posts have no cluster label");
    }
    return table;
  });

  PipelineResult result;
  result.num_users = data.graph.num_users();
  result.num_posts = data.graph.num_posts();
  result.num_hate_posts = hate.num_posts();
  result.num_edges = data.graph.num_edges();
  result.outcome_rows = outcomes.size();
  result.excluded_users = outcomes.excluded_users;

  const RunContext ctx{config, data, hate, outcomes, log, options.resume};
  for (std::size_t r = 0; r < config.runs; ++r) {
    const auto seed = config.seed + r;
    result.runs.push_back(run_once(ctx, seed, out / ("run_" + std::to_string(seed))));
  }
  result.report = render_report(config, result);
  write_text(out / "report.txt", result.report);
  log("report written to " + (out / "report.txt").string());
  return result;
}

std::vector<MuSweepRow> cmd_mu_sweep(const PipelineConfig& config, std::span<const double> mu_list,
                                     const fs::path& out, const RunOptions& options) {
  if (mu_list.empty()) throw ValidationError("mu-sweep: mu list is empty");
  for (double mu : mu_list) {
    if (!(mu > 0.0 && mu <= 1.0)) throw ValidationError("mu-sweep: mu " + general(mu) + " is outside (0, 1]");
  }
  config.validate();
  const Log log(options.log);
  fs::create_directories(out);
  const auto data = run_stage("data", log, [&] { return prepare_data(config, out, options.resume, log); });
  const auto hate = data.graph.hate_subgraph();
  const auto sp = split(hate, SplitMode::ByEdge, config.plv_split_ratio, mix_seed(config.seed, 1));

  std::vector<MuSweepRow> rows;
  for (auto scheme : {PropensityScheme::Virality, PropensityScheme::Follower}) {
    for (double mu : mu_list) {
      run_stage("mu-sweep " + variant_label(scheme) + " mu=" + general(mu), log, [&] {
        const auto table = estimate(scheme, sp.train, data.users, mu, config.floor, {});
        auto hyper = config.plv;
        hyper.seed = mix_seed(config.seed, 20 + static_cast<std::uint64_t>(scheme));
        const auto model = plv::train(sp.train, &table, hyper);
        rows.push_back({scheme, mu, plv::ranking_metrics(model, sp.train, sp.test, config.k_list)});
      });
    }
  }

  csv::Writer w(out / "mu_sweep.csv");
  w.row("model", "mu", "metric", "k", "value");
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.ranking.k_list.size(); ++i) {
      w.row(variant_label(row.scheme), row.mu, "recall", row.ranking.k_list[i], row.ranking.recall[i]);
    }
    for (std::size_t i = 0; i < row.ranking.k_list.size(); ++i) {
      w.row(variant_label(row.scheme), row.mu, "ndcg", row.ranking.k_list[i], row.ranking.ndcg[i]);
    }
  }
  w.close();

  std::ostringstream os;
  os << "recall@k (%) by propensity scheme and mu\n";
  os << pad("model", 18);
  for (auto k : config.k_list) os << pad("k=" + std::to_string(k), 10);
  os << "\n";
  for (const auto& row : rows) {
    os << pad(variant_label(row.scheme) + " mu=" + general(row.mu), 18);
    for (double v : row.ranking.recall) os << pad(fixed(100.0 * v, 2), 10);
    os << "\n";
  }
  write_text(out / "mu_sweep.txt", os.str());
  return rows;
}

std::vector<EmbeddingAnalysis> cmd_embed_analyze(std::span<const fs::path> inputs, const fs::path& out, double eps,
                                                 std::size_t min_pts) {
  if (inputs.empty()) throw ValidationError("embed-analyze: no embedding files given");
  if (!(eps > 0.0)) throw ValidationError("embed-analyze: eps must be positive");
  if (min_pts < 1) throw ValidationError("embed-analyze: min_pts must be at least 1");
  std::vector<EmbeddingAnalysis> results;
  for (const auto& path : inputs) {
    if (!fs::exists(path)) throw ValidationError("embed-analyze: missing file " + path.string());
    const auto table = plv::read_embeddings(path);
    if (table.empty()) throw ValidationError("embed-analyze: " + path.string() + " has no rows");
    stats::PointSet points;
    points.dim = table.begin()->second.size();
    for (const auto& [id, row] : table) points.values.insert(points.values.end(), row.begin(), row.end());
    const auto labels = stats::dbscan(points, eps, min_pts);

    EmbeddingAnalysis a;
    a.tag = path.stem().string();
    if (a.tag == "plv_embeddings" && path.has_parent_path() && !path.parent_path().filename().empty()) {
      a.tag = path.parent_path().filename().string();
    }
    a.n_points = points.size();
    int max_label = -1;
    for (int l : labels) {
      if (l == stats::kNoise) {
        ++a.n_noise;
      } else {
        max_label = std::max(max_label, l);
      }
    }
    a.n_clusters = static_cast<std::size_t>(max_label + 1);
    if (a.n_clusters >= 2) a.silhouette = stats::silhouette(points, labels);
    results.push_back(std::move(a));
  }
  fs::create_directories(out);
  csv::Writer w(out / "embedding_analysis.csv");
  w.row("dataset_tag", "n_clusters", "n_noise", "silhouette");
  for (const auto& a : results) {
    w.field(a.tag).field(a.n_clusters).field(a.n_noise);
    if (a.silhouette) {
      w.field(*a.silhouette);
    } else {
      w.field("");
    }
    w.end_row();
  }
  w.close();
  return results;
}

}  // namespace reshare::pipeline
