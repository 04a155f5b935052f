#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reshare/dataset.hpp"
#include "reshare/propensity.hpp"

namespace reshare::plv {

enum class LossMode { Naive, Unbiased, NonNeg };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view name);

struct PlvHyper {
  std::size_t embedding_dim = 64;
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  double lambda = 1e-4;
  std::size_t epochs = 50;
  LossMode loss_mode = LossMode::NonNeg;
  std::uint64_t seed = 0;
  std::size_t samples_per_epoch = 0;  // 0: one triple per training edge
  double early_stop_tol = 1e-5;
  std::size_t early_stop_window = 5;

  void validate() const;
};

struct Triple {
  std::uint32_t user = 0;
  std::uint32_t pos = 0;  // h, with S_uh = 1
  std::uint32_t neg = 0;  // g != h, any post

  bool operator==(const Triple&) const = default;
};

struct TripletBatch {
  std::vector<Triple> triples;
  std::vector<double> theta_pos;  // theta_uh
  std::vector<double> theta_neg;  // theta_ug
  std::vector<std::uint8_t> s_neg;  // S_ug

  std::size_t size() const { return triples.size(); }
};

/// Draws n triples: (u, h) uniform over edges, g uniform over posts other than h.
/// Propensities default to one; see attach_propensity.
TripletBatch sample_triplets(const InteractionGraph& graph, std::size_t n, std::uint64_t seed);

/// Fills theta_pos / theta_neg from a per-post table aligned with the graph's posts.
void attach_propensity(TripletBatch& batch, const PropensityTable& propensity);

/// -ln sigmoid(x), evaluated without overflow.
double pair_loss(double score_diff);
/// d/dx of pair_loss: -sigmoid(-x).
double pair_loss_slope(double score_diff);

/// IPS weight of one triple under `mode` (S_uh = 1 by construction).
double triple_weight(LossMode mode, double theta_pos, double theta_neg, bool s_neg);

/// Row-major embedding matrices plus training metadata.
struct PlvModel {
  std::vector<std::string> user_ids;
  std::vector<std::string> post_ids;
  std::size_t dim = 0;
  std::vector<double> U;  // num_users x dim
  std::vector<double> H;  // num_posts x dim
  PlvHyper hyper;
  std::vector<double> training_curve;  // mean batch loss per epoch

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_posts() const { return post_ids.size(); }
  std::span<const double> user_row(std::size_t u) const { return {U.data() + u * dim, dim}; }
  std::span<const double> post_row(std::size_t h) const { return {H.data() + h * dim, dim}; }
  double score(std::size_t u, std::size_t h) const;

  /// Row U_u of the named user. Throws ValidationError for unknown ids.
  std::vector<double> user_embedding(std::string_view user_id) const;

  /// Uniform +-1/sqrt(dim) initialization, deterministic in seed.
  static PlvModel initialize(const InteractionGraph& graph, const PlvHyper& hyper);
};

/// Mean over triples of weight * pair_loss(U_u.H_h - U_u.H_g).
double batch_loss(const PlvModel& model, const TripletBatch& batch, LossMode mode);

struct Gradient {
  std::vector<double> dU;
  std::vector<double> dH;
};

/// Analytic gradient of batch_loss with respect to U and H (dense).
Gradient batch_gradient(const PlvModel& model, const TripletBatch& batch, LossMode mode);

/// Minimizes the IPS pairwise loss plus lambda (|U|^2 + |H|^2) with lazy Adam over minibatches;
/// the l2 term is applied as an exact proximal shrink on every row each step. `propensity`
/// may be null only in naive mode. Throws ConvergenceError when the loss turns non-finite.
PlvModel train(const InteractionGraph& graph, const PropensityTable* propensity, const PlvHyper& hyper);

/// Population losses over every (u, h, g) with h != g, averaged by |U| * |H| * (|H| - 1).
/// `iota` is a dense num_users x num_posts interest matrix.
double ideal_loss(const PlvModel& model, std::span<const double> iota);
/// Same average with the observed S and the IPS weight of `mode`.
double population_loss(const PlvModel& model, const InteractionGraph& graph, const PropensityTable* propensity,
                       LossMode mode);

struct RankingReport {
  std::vector<std::size_t> k_list;
  std::vector<double> recall;  // aligned with k_list
  std::vector<double> ndcg;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;  // no test edges

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

/// Candidates of u: every post that is not a train edge of u, plus u's test posts. Ties in
/// score are broken by ascending post index.
RankingReport ranking_metrics(const PlvModel& model, const InteractionGraph& train, const InteractionGraph& test,
                              std::span<const std::size_t> k_list);

/// plv_embeddings.csv: user_id, x_0..x_{dim-1}.
void write_embeddings(const std::filesystem::path& path, const PlvModel& model);
/// Returns user id -> embedding row.
std::map<std::string, std::vector<double>> read_embeddings(const std::filesystem::path& path);
/// training_curve.csv: epoch, loss.
void write_training_curve(const std::filesystem::path& path, const PlvModel& model);

}  // namespace reshare::plv
