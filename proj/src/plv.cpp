#include "reshare/plv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"

namespace reshare::plv {

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Naive: return "naive";
    case LossMode::Unbiased: return "unbiased";
    case LossMode::NonNeg: return "nonneg";
  }
  return "nonneg";
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "naive") return LossMode::Naive;
  if (name == "unbiased") return LossMode::Unbiased;
  if (name == "nonneg") return LossMode::NonNeg;
  throw ValidationError("unknown loss mode '" + std::string(name) + "'");
}

void PlvHyper::validate() const {
  if (embedding_dim < 1) throw ValidationError("plv: embedding_dim must be at least 1");
  if (!(learning_rate > 0.0)) throw ValidationError("plv: learning_rate must be positive");
  if (batch_size < 1) throw ValidationError("plv: batch_size must be at least 1");
  if (!(lambda >= 0.0)) throw ValidationError("plv: lambda must be non-negative");
  if (early_stop_window < 1) throw ValidationError("plv: early_stop_window must be at least 1");
}

namespace {

struct TripleSampler {
  const InteractionGraph& graph;
  Rng rng;

  Triple draw() {
    const auto& e = graph.edges()[rng.index(graph.num_edges())];
    auto g = static_cast<std::uint32_t>(rng.index(graph.num_posts() - 1));
    if (g >= e.post) ++g;
    return {e.user, e.post, g};
  }
};

void check_sampleable(const InteractionGraph& graph) {
  if (graph.num_posts() < 2) throw ValidationError("triplet sampling needs at least 2 posts");
  if (graph.num_edges() == 0) throw ValidationError("triplet sampling needs at least one edge");
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

double theta_of(const PropensityTable* table, std::uint32_t post) {
  if (!table) return 1.0;
  return (*table)[post];
}

}  // namespace

TripletBatch sample_triplets(const InteractionGraph& graph, std::size_t n, std::uint64_t seed) {
  check_sampleable(graph);
  TripleSampler sampler{graph, Rng(seed)};
  TripletBatch batch;
  batch.triples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = sampler.draw();
    batch.triples.push_back(t);
    batch.s_neg.push_back(graph.has_edge(t.user, t.neg) ? 1 : 0);
  }
  batch.theta_pos.assign(n, 1.0);
  batch.theta_neg.assign(n, 1.0);
  return batch;
}

void attach_propensity(TripletBatch& batch, const PropensityTable& propensity) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch.triples[i];
    if (t.pos >= propensity.size() || t.neg >= propensity.size()) {
      throw ValidationError("propensity table does not cover every post");
    }
    batch.theta_pos[i] = propensity[t.pos];
    batch.theta_neg[i] = propensity[t.neg];
  }
}

double pair_loss(double x) {
  // softplus(-x)
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double pair_loss_slope(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(x));
}

double triple_weight(LossMode mode, double theta_pos, double theta_neg, bool s_neg) {
  if (mode == LossMode::Naive) return s_neg ? 0.0 : 1.0;
  if (!(theta_pos > 0.0) || !(theta_neg > 0.0)) {
    throw ValidationError("zero propensity encountered; propensities must be clipped to a positive floor");
  }
  const double w = (1.0 / theta_pos) * (1.0 - (s_neg ? 1.0 / theta_neg : 0.0));
  return mode == LossMode::NonNeg ? std::max(w, 0.0) : w;
}

double PlvModel::score(std::size_t u, std::size_t h) const { return dot(U.data() + u * dim, H.data() + h * dim, dim); }

std::vector<double> PlvModel::user_embedding(std::string_view user_id) const {
  for (std::size_t u = 0; u < user_ids.size(); ++u) {
    if (user_ids[u] == user_id) return {U.begin() + static_cast<std::ptrdiff_t>(u * dim),
                                        U.begin() + static_cast<std::ptrdiff_t>((u + 1) * dim)};
  }
  throw ValidationError("unknown user '" + std::string(user_id) + "'");
}

PlvModel PlvModel::initialize(const InteractionGraph& graph, const PlvHyper& hyper) {
  hyper.validate();
  PlvModel m;
  m.user_ids = graph.users();
  m.post_ids.reserve(graph.num_posts());
  for (const auto& p : graph.posts()) m.post_ids.push_back(p.post_id);
  m.dim = hyper.embedding_dim;
  m.hyper = hyper;
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.dim));
  Rng rng(mix_seed(hyper.seed, 0x1417));
  m.U.resize(m.num_users() * m.dim);
  m.H.resize(m.num_posts() * m.dim);
  for (auto& x : m.U) x = rng.uniform(-bound, bound);
  for (auto& x : m.H) x = rng.uniform(-bound, bound);
  return m;
}

double batch_loss(const PlvModel& model, const TripletBatch& batch, LossMode mode) {
  if (batch.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch.triples[i];
    const double w = triple_weight(mode, batch.theta_pos[i], batch.theta_neg[i], batch.s_neg[i] != 0);
    if (w == 0.0) continue;
    total += w * pair_loss(model.score(t.user, t.pos) - model.score(t.user, t.neg));
  }
  return total / static_cast<double>(batch.size());
}

namespace {

// Adds d(batch_loss)/d(rows) into the dense buffers; returns the batch loss.
double accumulate_gradient(const PlvModel& model, const TripletBatch& batch, LossMode mode, double* dU, double* dH) {
  const std::size_t d = model.dim;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch.triples[i];
    const double w = triple_weight(mode, batch.theta_pos[i], batch.theta_neg[i], batch.s_neg[i] != 0);
    if (w == 0.0) continue;
    const double* u = model.U.data() + t.user * d;
    const double* hp = model.H.data() + t.pos * d;
    const double* hn = model.H.data() + t.neg * d;
    double x = 0.0;
    for (std::size_t k = 0; k < d; ++k) x += u[k] * (hp[k] - hn[k]);
    total += w * pair_loss(x);
    const double c = w * pair_loss_slope(x) * inv_n;
    double* gu = dU + t.user * d;
    double* gp = dH + t.pos * d;
    double* gn = dH + t.neg * d;
    for (std::size_t k = 0; k < d; ++k) {
      gu[k] += c * (hp[k] - hn[k]);
      gp[k] += c * u[k];
      gn[k] -= c * u[k];
    }
  }
  return total * inv_n;
}

}  // namespace

Gradient batch_gradient(const PlvModel& model, const TripletBatch& batch, LossMode mode) {
  Gradient g;
  g.dU.assign(model.U.size(), 0.0);
  g.dH.assign(model.H.size(), 0.0);
  if (batch.size() == 0) return g;
  accumulate_gradient(model, batch, mode, g.dU.data(), g.dH.data());
  return g;
}

namespace {

// Per-row lazy Adam with a proximal l2 shrink applied at every global step.
class LazyAdam {
 public:
  LazyAdam(std::size_t rows, std::size_t dim, double lr, double shrink)
      : dim_(dim), lr_(lr), shrink_(shrink), m_(rows * dim, 0.0), v_(rows * dim, 0.0), last_(rows, 0) {}

  // Brings a row to the state after `step` steps in which it received no gradient.
  void catch_up(double* row, std::size_t r, std::size_t step) {
    if (last_[r] >= step) return;
    if (shrink_ != 1.0) {
      const double f = std::pow(shrink_, static_cast<double>(step - last_[r]));
      for (std::size_t k = 0; k < dim_; ++k) row[k] *= f;
    }
    last_[r] = step;
  }

  void update(double* row, std::size_t r, const double* grad, std::size_t step) {
    constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kB1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kB2, static_cast<double>(step));
    double* m = m_.data() + r * dim_;
    double* v = v_.data() + r * dim_;
    for (std::size_t k = 0; k < dim_; ++k) {
      m[k] = kB1 * m[k] + (1.0 - kB1) * grad[k];
      v[k] = kB2 * v[k] + (1.0 - kB2) * grad[k] * grad[k];
      row[k] = (row[k] - lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps)) * shrink_;
    }
    last_[r] = step;
  }

 private:
  std::size_t dim_;
  double lr_;
  double shrink_;
  std::vector<double> m_, v_;
  std::vector<std::size_t> last_;
};

}  // namespace

PlvModel train(const InteractionGraph& graph, const PropensityTable* propensity, const PlvHyper& hyper) {
  hyper.validate();
  check_sampleable(graph);
  if (hyper.loss_mode != LossMode::Naive) {
    if (!propensity) throw ValidationError("plv: propensity table required for loss mode " +
                                           std::string(to_string(hyper.loss_mode)));
    if (propensity->size() != graph.num_posts()) throw ValidationError("plv: propensity table does not cover all posts");
  }
  PlvModel model = PlvModel::initialize(graph, hyper);
  const std::size_t d = model.dim;
  const double shrink = 1.0 / (1.0 + 2.0 * hyper.learning_rate * hyper.lambda);
  LazyAdam adam_u(model.num_users(), d, hyper.learning_rate, shrink);
  LazyAdam adam_h(model.num_posts(), d, hyper.learning_rate, shrink);

  std::vector<double> gU(model.U.size(), 0.0), gH(model.H.size(), 0.0);
  std::vector<std::size_t> stamp_u(model.num_users(), 0), stamp_h(model.num_posts(), 0);
  std::vector<std::uint32_t> touched_u, touched_h;
  const std::size_t per_epoch = hyper.samples_per_epoch > 0 ? hyper.samples_per_epoch : graph.num_edges();

  TripletBatch batch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    TripleSampler sampler{graph, Rng(mix_seed(hyper.seed, epoch + 1))};
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t done = 0; done < per_epoch; done += hyper.batch_size) {
      const std::size_t n = std::min(hyper.batch_size, per_epoch - done);
      batch.triples.clear();
      batch.s_neg.clear();
      batch.theta_pos.clear();
      batch.theta_neg.clear();
      ++step;
      touched_u.clear();
      touched_h.clear();
      auto touch_h = [&](std::uint32_t h) {
        if (stamp_h[h] != step) {
          stamp_h[h] = step;
          touched_h.push_back(h);
          adam_h.catch_up(model.H.data() + h * d, h, step - 1);
        }
      };
      for (std::size_t i = 0; i < n; ++i) {
        const auto t = sampler.draw();
        batch.triples.push_back(t);
        batch.s_neg.push_back(graph.has_edge(t.user, t.neg) ? 1 : 0);
        batch.theta_pos.push_back(theta_of(propensity, t.pos));
        batch.theta_neg.push_back(theta_of(propensity, t.neg));
        if (stamp_u[t.user] != step) {
          stamp_u[t.user] = step;
          touched_u.push_back(t.user);
          adam_u.catch_up(model.U.data() + t.user * d, t.user, step - 1);
        }
        touch_h(t.pos);
        touch_h(t.neg);
      }
      const double loss = accumulate_gradient(model, batch, hyper.loss_mode, gU.data(), gH.data());
      if (!std::isfinite(loss)) {
        throw ConvergenceError("plv training diverged at epoch " + std::to_string(epoch + 1) + " (non-finite loss)");
      }
      epoch_loss += loss;
      ++n_batches;
      for (auto u : touched_u) {
        adam_u.update(model.U.data() + u * d, u, gU.data() + u * d, step);
        std::fill_n(gU.data() + u * d, d, 0.0);
      }
      for (auto h : touched_h) {
        adam_h.update(model.H.data() + h * d, h, gH.data() + h * d, step);
        std::fill_n(gH.data() + h * d, d, 0.0);
      }
    }
    for (std::size_t u = 0; u < model.num_users(); ++u) adam_u.catch_up(model.U.data() + u * d, u, step);
    for (std::size_t h = 0; h < model.num_posts(); ++h) adam_h.catch_up(model.H.data() + h * d, h, step);
    const double mean_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(n_batches, 1));
    const bool finite_params = std::all_of(model.U.begin(), model.U.end(), [](double x) { return std::isfinite(x); }) &&
                               std::all_of(model.H.begin(), model.H.end(), [](double x) { return std::isfinite(x); });
    if (!std::isfinite(mean_loss) || !finite_params) {
      throw ConvergenceError("plv training diverged at epoch " + std::to_string(epoch + 1));
    }
    model.training_curve.push_back(mean_loss);
    const auto& curve = model.training_curve;
    if (curve.size() > hyper.early_stop_window &&
        curve[curve.size() - 1 - hyper.early_stop_window] - curve.back() < hyper.early_stop_tol) {
      break;
    }
  }
  return model;
}

double ideal_loss(const PlvModel& model, std::span<const double> iota) {
  const std::size_t nu = model.num_users(), np = model.num_posts();
  if (iota.size() != nu * np) throw ValidationError("ideal_loss: interest matrix has the wrong shape");
  if (np < 2) throw ValidationError("ideal_loss: need at least 2 posts");
  std::vector<double> scores(np);
  double total = 0.0;
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t h = 0; h < np; ++h) scores[h] = model.score(u, h);
    const double* iu = iota.data() + u * np;
    for (std::size_t h = 0; h < np; ++h) {
      if (iu[h] == 0.0) continue;
      double row = 0.0;
      for (std::size_t g = 0; g < np; ++g) {
        if (g != h) row += (1.0 - iu[g]) * pair_loss(scores[h] - scores[g]);
      }
      total += iu[h] * row;
    }
  }
  return total / (static_cast<double>(nu) * static_cast<double>(np) * static_cast<double>(np - 1));
}

double population_loss(const PlvModel& model, const InteractionGraph& graph, const PropensityTable* propensity,
                       LossMode mode) {
  const std::size_t nu = model.num_users(), np = model.num_posts();
  if (graph.num_users() != nu || graph.num_posts() != np) throw ValidationError("population_loss: graph/model mismatch");
  if (np < 2) throw ValidationError("population_loss: need at least 2 posts");
  if (mode != LossMode::Naive && !propensity) throw ValidationError("population_loss: propensity table required");
  std::vector<double> scores(np);
  double total = 0.0;
  for (std::uint32_t u = 0; u < nu; ++u) {
    const auto shared = graph.posts_of(u);
    if (shared.empty()) continue;
    for (std::size_t h = 0; h < np; ++h) scores[h] = model.score(u, h);
    for (auto h : shared) {
      // Every g outside S_u carries weight a_h; shared g get the corrected weight.
      const double a = triple_weight(mode, theta_of(propensity, h), 1.0, false);
      double row = 0.0;
      for (std::size_t g = 0; g < np; ++g) {
        if (g != h) row += pair_loss(scores[h] - scores[g]);
      }
      double sum = a * row;
      for (auto g : shared) {
        if (g == h) continue;
        const double w = triple_weight(mode, theta_of(propensity, h), theta_of(propensity, g), true);
        sum += (w - a) * pair_loss(scores[h] - scores[g]);
      }
      total += sum;
    }
  }
  return total / (static_cast<double>(nu) * static_cast<double>(np) * static_cast<double>(np - 1));
}

double RankingReport::recall_at(std::size_t k) const {
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] == k) return recall[i];
  }
  throw ValidationError("recall@" + std::to_string(k) + " was not computed");
}

double RankingReport::ndcg_at(std::size_t k) const {
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] == k) return ndcg[i];
  }
  throw ValidationError("ndcg@" + std::to_string(k) + " was not computed");
}

RankingReport ranking_metrics(const PlvModel& model, const InteractionGraph& train, const InteractionGraph& test,
                              std::span<const std::size_t> k_list) {
  if (k_list.empty()) throw ValidationError("ranking_metrics: empty k list");
  if (train.num_users() != model.num_users() || train.num_posts() != model.num_posts() ||
      test.num_users() != model.num_users() || test.num_posts() != model.num_posts()) {
    throw ValidationError("ranking_metrics: graphs do not match the model");
  }
  RankingReport rep;
  rep.k_list.assign(k_list.begin(), k_list.end());
  rep.recall.assign(k_list.size(), 0.0);
  rep.ndcg.assign(k_list.size(), 0.0);
  const std::size_t max_k = *std::max_element(k_list.begin(), k_list.end());
  if (max_k == 0) throw ValidationError("ranking_metrics: k must be positive");

  std::vector<double> scores(model.num_posts());
  std::vector<std::uint8_t> relevant(model.num_posts(), 0);
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t u = 0; u < model.num_users(); ++u) {
    const auto rel = test.posts_of(u);
    if (rel.empty()) {
      ++rep.users_skipped;
      continue;
    }
    ++rep.users_evaluated;
    for (auto h : rel) relevant[h] = 1;
    candidates.clear();
    for (std::uint32_t h = 0; h < model.num_posts(); ++h) {
      if (relevant[h] || !train.has_edge(u, h)) {
        candidates.push_back(h);
        scores[h] = model.score(u, h);
      }
    }
    const std::size_t top = std::min(max_k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(top), candidates.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
      const std::size_t k = k_list[ki];
      const std::size_t n_rel = rel.size();
      std::size_t hits = 0;
      double dcg = 0.0, idcg = 0.0;
      for (std::size_t r = 0; r < std::min(k, top); ++r) {
        if (relevant[candidates[r]]) {
          ++hits;
          dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
      }
      for (std::size_t r = 0; r < std::min(k, n_rel); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      rep.recall[ki] += static_cast<double>(hits) / static_cast<double>(std::min(n_rel, k));
      rep.ndcg[ki] += dcg / idcg;
    }
    for (auto h : rel) relevant[h] = 0;
  }
  if (rep.users_evaluated > 0) {
    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
      rep.recall[ki] /= static_cast<double>(rep.users_evaluated);
      rep.ndcg[ki] /= static_cast<double>(rep.users_evaluated);
    }
  }
  return rep;
}

void write_embeddings(const std::filesystem::path& path, const PlvModel& model) {
  csv::Writer w(path);
  w.field("user_id");
  for (std::size_t k = 0; k < model.dim; ++k) w.field("x_" + std::to_string(k));
  w.end_row();
  for (std::size_t u = 0; u < model.num_users(); ++u) {
    w.field(model.user_ids[u]);
    for (double x : model.user_row(u)) w.field(x);
    w.end_row();
  }
  w.close();
}

std::map<std::string, std::vector<double>> read_embeddings(const std::filesystem::path& path) {
  csv::Reader reader(path);
  csv::Record rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": missing header row", 1);
  if (rec.fields.size() < 2 || rec.fields[0] != "user_id") {
    throw DataError(path.string() + ": expected user_id followed by embedding columns", 1);
  }
  const std::size_t d = rec.fields.size() - 1;
  std::map<std::string, std::vector<double>> out;
  while (reader.next(rec)) {
    if (rec.fields.size() != d + 1) throw DataError(path.string() + ":" + std::to_string(rec.line) + ": wrong field count", rec.line);
    std::vector<double> row(d);
    for (std::size_t k = 0; k < d; ++k) row[k] = csv::parse_double(rec.fields[k + 1], path, rec.line, "x");
    if (!out.emplace(rec.fields[0], std::move(row)).second) {
      throw DataError(path.string() + ":" + std::to_string(rec.line) + ": duplicate user_id", rec.line);
    }
  }
  return out;
}

void write_training_curve(const std::filesystem::path& path, const PlvModel& model) {
  csv::Writer w(path);
  w.row("epoch", "loss");
  for (std::size_t e = 0; e < model.training_curve.size(); ++e) w.row(e + 1, model.training_curve[e]);
  w.close();
}

}  // namespace reshare::plv
