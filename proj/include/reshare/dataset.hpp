#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reshare {

struct Post {
  std::string post_id;
  std::string author_id;
  bool is_hate = false;
  std::optional<std::string> cluster;  // only hate posts carry a cluster label
  std::string text;

  bool operator==(const Post&) const = default;
};

struct UserAttributes {
  std::string user_id;
  bool verified = false;
  std::int64_t account_age_days = 0;
  std::int64_t n_posts = 0;
  std::int64_t n_followers = 0;
  std::int64_t n_friends = 0;

  bool operator==(const UserAttributes&) const = default;
};

class UserAttributeTable {
 public:
  UserAttributeTable() = default;
  /// Throws ValidationError on duplicate ids or negative counts.
  explicit UserAttributeTable(std::vector<UserAttributes> rows);

  const std::vector<UserAttributes>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  const UserAttributes* find(std::string_view user_id) const;
  const UserAttributes& at(std::string_view user_id) const;

  bool operator==(const UserAttributeTable& other) const { return rows_ == other.rows_; }

 private:
  std::vector<UserAttributes> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// S_uh = 1 for (user, post), both as dense indices into the owning graph.
struct Edge {
  std::uint32_t user = 0;
  std::uint32_t post = 0;

  auto operator<=>(const Edge&) const = default;
};

/// Bipartite user x post reshare graph. Immutable after construction; edges are kept
/// sorted by (user, post) and indexed both ways.
class InteractionGraph {
 public:
  InteractionGraph() = default;
  /// Validates unique ids, edge endpoints, duplicate edges and the cluster => is_hate rule.
  InteractionGraph(std::vector<std::string> users, std::vector<Post> posts, std::vector<Edge> edges);

  const std::vector<std::string>& users() const { return users_; }
  const std::vector<Post>& posts() const { return posts_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t num_users() const { return users_.size(); }
  std::size_t num_posts() const { return posts_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  std::optional<std::uint32_t> user_index(std::string_view user_id) const;
  std::optional<std::uint32_t> post_index(std::string_view post_id) const;

  /// Posts shared by `user`, ascending.
  std::span<const std::uint32_t> posts_of(std::uint32_t user) const;
  /// Users who shared `post`, ascending.
  std::span<const std::uint32_t> users_of(std::uint32_t post) const;
  bool has_edge(std::uint32_t user, std::uint32_t post) const;

  /// Same users, only hate posts, and the edges among them.
  InteractionGraph hate_subgraph() const;
  /// Same users and posts with a different edge set.
  InteractionGraph with_edges(std::vector<Edge> edges) const;

  bool operator==(const InteractionGraph& other) const {
    return users_ == other.users_ && posts_ == other.posts_ && edges_ == other.edges_;
  }

 private:
  void build_indices();

  std::vector<std::string> users_;
  std::vector<Post> posts_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::uint32_t> user_index_;
  std::unordered_map<std::string, std::uint32_t> post_index_;
  std::vector<std::uint32_t> user_offsets_;  // CSR over edges_ (sorted by user)
  std::vector<std::uint32_t> user_adj_;
  std::vector<std::uint32_t> post_offsets_;
  std::vector<std::uint32_t> post_adj_;
};

struct Dataset {
  InteractionGraph graph;
  UserAttributeTable users;

  bool operator==(const Dataset&) const = default;
};

struct DatasetPaths {
  std::filesystem::path posts;
  std::filesystem::path users;
  std::filesystem::path interactions;

  /// posts.csv, users.csv and interactions.csv inside `dir`.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Loads the three input tables. Graph users are the rows of users.csv in file order,
/// posts are the rows of posts.csv in file order. Throws DataError naming file and line.
Dataset load_dataset(const DatasetPaths& paths);
Dataset load_dataset(const std::filesystem::path& posts, const std::filesystem::path& users,
                     const std::filesystem::path& interactions);
void write_dataset(const Dataset& dataset, const DatasetPaths& paths);

/// Attribute columns used by the effect model, in fixed order.
inline constexpr std::array<std::string_view, 5> kAttributeNames = {
    "verified", "account_age_days", "log_n_posts", "log_n_followers", "log_n_friends"};

struct FeatureView {
  std::vector<std::string> user_ids;
  std::vector<std::array<double, 5>> rows;  // columns as in kAttributeNames
};

/// verified -> {0,1}; account age unchanged; counts -> ln(1 + x).
FeatureView log_transform_attributes(const UserAttributeTable& table);
std::array<double, 5> log_transform(const UserAttributes& row);

enum class SplitMode { ByEdge, ByUser };

/// Both halves keep the full user and post lists. In by-user mode the edges are those of
/// the users in train_users / test_users; in by-edge mode the user lists are empty.
struct SplitPair {
  InteractionGraph train;
  InteractionGraph test;
  std::vector<std::uint32_t> train_users;
  std::vector<std::uint32_t> test_users;
  SplitMode mode = SplitMode::ByEdge;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

/// Deterministic 80/20-style split. In by-edge mode every user with at least one edge keeps
/// one train edge; the train edge count is round(ratio * |E|) whenever that is attainable.
SplitPair split(const InteractionGraph& graph, SplitMode mode, double ratio, std::uint64_t seed);

/// Shuffles 0..n-1 with `seed` and returns (first round(ratio*n), rest), each sorted.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_indices(std::size_t n, double ratio,
                                                                               std::uint64_t seed);

}  // namespace reshare
