#include "reshare/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"

namespace reshare {

UserAttributeTable::UserAttributeTable(std::vector<UserAttributes> rows) : rows_(std::move(rows)) {
  index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.account_age_days < 0 || r.n_posts < 0 || r.n_followers < 0 || r.n_friends < 0) {
      throw ValidationError("user '" + r.user_id + "' has a negative attribute");
    }
    if (!index_.emplace(r.user_id, i).second) {
      throw ValidationError("duplicate user_id '" + r.user_id + "'");
    }
  }
}

const UserAttributes* UserAttributeTable::find(std::string_view user_id) const {
  auto it = index_.find(std::string(user_id));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

const UserAttributes& UserAttributeTable::at(std::string_view user_id) const {
  const auto* row = find(user_id);
  if (row == nullptr) throw ValidationError("unknown user_id '" + std::string(user_id) + "'");
  return *row;
}

InteractionGraph::InteractionGraph(std::vector<std::string> users, std::vector<Post> posts,
                                   std::vector<Edge> edges)
    : users_(std::move(users)), posts_(std::move(posts)), edges_(std::move(edges)) {
  user_index_.reserve(users_.size());
  for (std::size_t i = 0; i < users_.size(); ++i) {
    if (!user_index_.emplace(users_[i], static_cast<std::uint32_t>(i)).second) {
      throw ValidationError("duplicate user_id '" + users_[i] + "'");
    }
  }
  post_index_.reserve(posts_.size());
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    const auto& p = posts_[i];
    if (p.cluster && !p.is_hate) {
      throw ValidationError("post '" + p.post_id + "' has a cluster label but is not hate speech");
    }
    if (!post_index_.emplace(p.post_id, static_cast<std::uint32_t>(i)).second) {
      throw ValidationError("duplicate post_id '" + p.post_id + "'");
    }
  }
  for (const auto& e : edges_) {
    if (e.user >= users_.size() || e.post >= posts_.size()) {
      throw ValidationError("edge endpoint out of range");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  auto dup = std::adjacent_find(edges_.begin(), edges_.end());
  if (dup != edges_.end()) {
    throw ValidationError("duplicate edge (" + users_[dup->user] + ", " + posts_[dup->post].post_id + ")");
  }
  build_indices();
}

void InteractionGraph::build_indices() {
  user_offsets_.assign(users_.size() + 1, 0);
  post_offsets_.assign(posts_.size() + 1, 0);
  for (const auto& e : edges_) {
    ++user_offsets_[e.user + 1];
    ++post_offsets_[e.post + 1];
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(), user_offsets_.begin());
  std::partial_sum(post_offsets_.begin(), post_offsets_.end(), post_offsets_.begin());
  user_adj_.resize(edges_.size());
  post_adj_.resize(edges_.size());
  std::vector<std::uint32_t> post_fill(post_offsets_.begin(), post_offsets_.end() - 1);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    user_adj_[i] = edges_[i].post;  // edges_ sorted by (user, post)
    post_adj_[post_fill[edges_[i].post]++] = edges_[i].user;
  }
}

std::optional<std::uint32_t> InteractionGraph::user_index(std::string_view user_id) const {
  auto it = user_index_.find(std::string(user_id));
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> InteractionGraph::post_index(std::string_view post_id) const {
  auto it = post_index_.find(std::string(post_id));
  if (it == post_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const std::uint32_t> InteractionGraph::posts_of(std::uint32_t user) const {
  return {user_adj_.data() + user_offsets_[user], user_adj_.data() + user_offsets_[user + 1]};
}

std::span<const std::uint32_t> InteractionGraph::users_of(std::uint32_t post) const {
  return {post_adj_.data() + post_offsets_[post], post_adj_.data() + post_offsets_[post + 1]};
}

bool InteractionGraph::has_edge(std::uint32_t user, std::uint32_t post) const {
  auto posts = posts_of(user);
  return std::binary_search(posts.begin(), posts.end(), post);
}

InteractionGraph InteractionGraph::hate_subgraph() const {
  std::vector<Post> posts;
  std::vector<std::int64_t> remap(posts_.size(), -1);
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    if (posts_[i].is_hate) {
      remap[i] = static_cast<std::int64_t>(posts.size());
      posts.push_back(posts_[i]);
    }
  }
  std::vector<Edge> edges;
  for (const auto& e : edges_) {
    if (remap[e.post] >= 0) edges.push_back({e.user, static_cast<std::uint32_t>(remap[e.post])});
  }
  return InteractionGraph(users_, std::move(posts), std::move(edges));
}

InteractionGraph InteractionGraph::with_edges(std::vector<Edge> edges) const {
  return InteractionGraph(users_, posts_, std::move(edges));
}

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "posts.csv", dir / "users.csv", dir / "interactions.csv"};
}

namespace {

void require_field_count(const csv::Record& rec, std::size_t needed, const std::filesystem::path& path) {
  if (rec.fields.size() < needed) {
    throw DataError(path.string() + ":" + std::to_string(rec.line) + ": expected at least " +
                        std::to_string(needed) + " fields, found " + std::to_string(rec.fields.size()),
                    rec.line);
  }
}

bool blank(const csv::Record& rec) { return rec.fields.size() == 1 && rec.fields[0].empty(); }

std::size_t max_position(const std::vector<std::size_t>& cols) {
  return *std::max_element(cols.begin(), cols.end()) + 1;
}

}  // namespace

Dataset load_dataset(const DatasetPaths& paths) {
  for (const auto* p : {&paths.posts, &paths.users, &paths.interactions}) {
    if (!std::filesystem::exists(*p)) throw DataError("missing input file " + p->string());
  }

  // users.csv
  std::vector<UserAttributes> user_rows;
  {
    csv::Reader reader(paths.users);
    csv::Record rec;
    if (!reader.next(rec)) throw DataError(paths.users.string() + ": missing header row", 1);
    const auto cols = csv::require_columns(
        rec, {"user_id", "verified", "account_age_days", "n_posts", "n_followers", "n_friends"}, paths.users);
    const auto width = max_position(cols);
    std::unordered_map<std::string, std::size_t> seen;
    while (reader.next(rec)) {
      if (blank(rec)) continue;
      require_field_count(rec, width, paths.users);
      const auto& f = rec.fields;
      UserAttributes u;
      u.user_id = f[cols[0]];
      u.verified = csv::parse_bool(f[cols[1]], paths.users, rec.line, "verified");
      u.account_age_days = csv::parse_int(f[cols[2]], paths.users, rec.line, "account_age_days");
      u.n_posts = csv::parse_int(f[cols[3]], paths.users, rec.line, "n_posts");
      u.n_followers = csv::parse_int(f[cols[4]], paths.users, rec.line, "n_followers");
      u.n_friends = csv::parse_int(f[cols[5]], paths.users, rec.line, "n_friends");
      if (u.account_age_days < 0 || u.n_posts < 0 || u.n_followers < 0 || u.n_friends < 0) {
        throw DataError(paths.users.string() + ":" + std::to_string(rec.line) + ": negative count", rec.line);
      }
      if (!seen.emplace(u.user_id, rec.line).second) {
        throw DataError(paths.users.string() + ":" + std::to_string(rec.line) + ": duplicate user_id '" +
                            u.user_id + "'",
                        rec.line);
      }
      user_rows.push_back(std::move(u));
    }
  }

  // posts.csv
  std::vector<Post> posts;
  {
    csv::Reader reader(paths.posts);
    csv::Record rec;
    if (!reader.next(rec)) throw DataError(paths.posts.string() + ": missing header row", 1);
    const auto cols = csv::require_columns(rec, {"post_id", "author_id", "is_hate", "cluster"}, paths.posts);
    std::optional<std::size_t> text_col;
    for (std::size_t i = 0; i < rec.fields.size(); ++i) {
      if (rec.fields[i] == "text") text_col = i;
    }
    const auto width = max_position(cols);
    std::unordered_map<std::string, std::size_t> seen;
    while (reader.next(rec)) {
      if (blank(rec)) continue;
      require_field_count(rec, width, paths.posts);
      const auto& f = rec.fields;
      Post p;
      p.post_id = f[cols[0]];
      p.author_id = f[cols[1]];
      p.is_hate = csv::parse_bool(f[cols[2]], paths.posts, rec.line, "is_hate");
      if (!f[cols[3]].empty()) p.cluster = f[cols[3]];
      if (text_col && *text_col < f.size()) p.text = f[*text_col];
      if (p.cluster && !p.is_hate) {
        throw DataError(paths.posts.string() + ":" + std::to_string(rec.line) + ": post '" + p.post_id +
                            "' has a cluster but is_hate = 0",
                        rec.line);
      }
      if (!seen.emplace(p.post_id, rec.line).second) {
        throw DataError(paths.posts.string() + ":" + std::to_string(rec.line) + ": duplicate post_id '" +
                            p.post_id + "'",
                        rec.line);
      }
      posts.push_back(std::move(p));
    }
  }

  std::vector<std::string> user_ids;
  user_ids.reserve(user_rows.size());
  std::unordered_map<std::string, std::uint32_t> user_index;
  for (std::size_t i = 0; i < user_rows.size(); ++i) {
    user_ids.push_back(user_rows[i].user_id);
    user_index.emplace(user_rows[i].user_id, static_cast<std::uint32_t>(i));
  }
  std::unordered_map<std::string, std::uint32_t> post_index;
  for (std::size_t i = 0; i < posts.size(); ++i) post_index.emplace(posts[i].post_id, static_cast<std::uint32_t>(i));

  // interactions.csv; extra columns such as timestamps are ignored.
  std::vector<Edge> edges;
  {
    csv::Reader reader(paths.interactions);
    csv::Record rec;
    if (!reader.next(rec)) throw DataError(paths.interactions.string() + ": missing header row", 1);
    const auto cols = csv::require_columns(rec, {"user_id", "post_id"}, paths.interactions);
    const auto width = max_position(cols);
    std::vector<std::size_t> edge_lines;
    while (reader.next(rec)) {
      if (blank(rec)) continue;
      require_field_count(rec, width, paths.interactions);
      const auto& uid = rec.fields[cols[0]];
      const auto& pid = rec.fields[cols[1]];
      auto u = user_index.find(uid);
      if (u == user_index.end()) {
        throw DataError(paths.interactions.string() + ":" + std::to_string(rec.line) +
                            ": interaction references unknown user_id '" + uid + "'",
                        rec.line);
      }
      auto p = post_index.find(pid);
      if (p == post_index.end()) {
        throw DataError(paths.interactions.string() + ":" + std::to_string(rec.line) +
                            ": interaction references unknown post_id '" + pid + "'",
                        rec.line);
      }
      edges.push_back({u->second, p->second});
      edge_lines.push_back(rec.line);
    }
    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return edges[a] < edges[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (edges[order[i]] == edges[order[i - 1]]) {
        const auto line = std::max(edge_lines[order[i]], edge_lines[order[i - 1]]);
        throw DataError(paths.interactions.string() + ":" + std::to_string(line) + ": duplicate interaction",
                        line);
      }
    }
  }

  return Dataset{InteractionGraph(std::move(user_ids), std::move(posts), std::move(edges)),
                 UserAttributeTable(std::move(user_rows))};
}

Dataset load_dataset(const std::filesystem::path& posts, const std::filesystem::path& users,
                     const std::filesystem::path& interactions) {
  return load_dataset(DatasetPaths{posts, users, interactions});
}

void write_dataset(const Dataset& dataset, const DatasetPaths& paths) {
  {
    csv::Writer w(paths.posts);
    w.row("post_id", "author_id", "is_hate", "cluster", "text");
    for (const auto& p : dataset.graph.posts()) {
      w.row(p.post_id, p.author_id, p.is_hate ? 1 : 0, p.cluster.value_or(""), p.text);
    }
    w.close();
  }
  {
    csv::Writer w(paths.users);
    w.row("user_id", "verified", "account_age_days", "n_posts", "n_followers", "n_friends");
    for (const auto& u : dataset.users.rows()) {
      w.row(u.user_id, u.verified ? 1 : 0, static_cast<long long>(u.account_age_days),
            static_cast<long long>(u.n_posts), static_cast<long long>(u.n_followers),
            static_cast<long long>(u.n_friends));
    }
    w.close();
  }
  {
    csv::Writer w(paths.interactions);
    w.row("user_id", "post_id");
    const auto& g = dataset.graph;
    for (const auto& e : g.edges()) w.row(g.users()[e.user], g.posts()[e.post].post_id);
    w.close();
  }
}

std::array<double, 5> log_transform(const UserAttributes& row) {
  return {row.verified ? 1.0 : 0.0, static_cast<double>(row.account_age_days),
          std::log1p(static_cast<double>(row.n_posts)), std::log1p(static_cast<double>(row.n_followers)),
          std::log1p(static_cast<double>(row.n_friends))};
}

FeatureView log_transform_attributes(const UserAttributeTable& table) {
  FeatureView view;
  view.user_ids.reserve(table.size());
  view.rows.reserve(table.size());
  for (const auto& row : table.rows()) {
    view.user_ids.push_back(row.user_id);
    view.rows.push_back(log_transform(row));
  }
  return view;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_indices(std::size_t n, double ratio,
                                                                               std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(mix_seed(seed, 0x5b1));
  rng.shuffle(idx.begin(), idx.end());
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::uint32_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::uint32_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

SplitPair split(const InteractionGraph& graph, SplitMode mode, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  if (graph.num_edges() == 0) throw ValidationError("cannot split a graph with zero edges");

  SplitPair out;
  out.mode = mode;
  out.seed = seed;
  out.ratio = ratio;

  if (mode == SplitMode::ByUser) {
    auto [train_users, test_users] = split_indices(graph.num_users(), ratio, seed);
    std::vector<char> in_train(graph.num_users(), 0);
    for (auto u : train_users) in_train[u] = 1;
    std::vector<Edge> train_edges, test_edges;
    for (const auto& e : graph.edges()) (in_train[e.user] ? train_edges : test_edges).push_back(e);
    out.train = graph.with_edges(std::move(train_edges));
    out.test = graph.with_edges(std::move(test_edges));
    out.train_users = std::move(train_users);
    out.test_users = std::move(test_users);
    return out;
  }

  // By edge: one anchor edge per active user always goes to train; the remaining edges are
  // shuffled globally and fill the train quota.
  Rng rng(mix_seed(seed, 0xed9e));
  const auto& edges = graph.edges();
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> pool;
  for (std::uint32_t u = 0; u < graph.num_users(); ++u) {
    const auto begin = static_cast<std::size_t>(
        std::lower_bound(edges.begin(), edges.end(), Edge{u, 0}) - edges.begin());
    const auto count = graph.posts_of(u).size();
    if (count == 0) continue;
    const auto anchor = begin + rng.index(count);
    anchors.push_back(anchor);
    for (std::size_t i = begin; i < begin + count; ++i) {
      if (i != anchor) pool.push_back(i);
    }
  }
  rng.shuffle(pool.begin(), pool.end());
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(edges.size())));
  const std::size_t from_pool = target > anchors.size() ? std::min(target - anchors.size(), pool.size()) : 0;

  std::vector<Edge> train_edges, test_edges;
  for (auto i : anchors) train_edges.push_back(edges[i]);
  for (std::size_t i = 0; i < pool.size(); ++i) (i < from_pool ? train_edges : test_edges).push_back(edges[pool[i]]);
  out.train = graph.with_edges(std::move(train_edges));
  out.test = graph.with_edges(std::move(test_edges));
  return out;
}

}  // namespace reshare
