#include "reshare/outcomes.hpp"

#include <algorithm>
#include <map>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"

namespace reshare {

std::optional<std::size_t> OutcomeTable::cluster_index(std::string_view label) const {
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c] == label) return c;
  }
  return std::nullopt;
}

std::vector<double> OutcomeTable::cluster_column(std::string_view label) const {
  const auto c = cluster_index(label);
  if (!c) throw ValidationError("unknown cluster '" + std::string(label) + "'");
  std::vector<double> out(size());
  for (std::size_t r = 0; r < size(); ++r) out[r] = y_uc(r, *c);
  return out;
}

OutcomeTable compute_outcomes(const InteractionGraph& graph) {
  OutcomeTable t;
  std::map<std::string, std::size_t> labels;
  for (const auto& p : graph.posts()) {
    if (!p.is_hate) continue;
    if (p.cluster) {
      labels.emplace(*p.cluster, 0);
    } else {
      ++t.unlabeled_posts;
    }
  }
  for (auto& [label, slot] : labels) {
    slot = t.clusters.size();
    t.clusters.push_back(label);
  }
  if (t.unlabeled_posts > 0) {
    // A real label named "unlabeled" simply shares the catch-all column.
    auto it = labels.find(std::string(kUnlabeledCluster));
    if (it == labels.end()) {
      labels.emplace(std::string(kUnlabeledCluster), t.clusters.size());
      t.clusters.emplace_back(kUnlabeledCluster);
    }
  }
  std::vector<int> post_cluster(graph.num_posts(), -1);
  for (std::size_t h = 0; h < graph.num_posts(); ++h) {
    const auto& p = graph.posts()[h];
    if (!p.is_hate) continue;
    post_cluster[h] = static_cast<int>(labels.at(p.cluster ? *p.cluster : std::string(kUnlabeledCluster)));
  }

  const std::size_t C = t.clusters.size();
  std::vector<std::uint32_t> counts(C);
  for (std::uint32_t u = 0; u < graph.num_users(); ++u) {
    const auto shared = graph.posts_of(u);
    if (shared.empty()) {
      ++t.excluded_users;
      continue;
    }
    std::fill(counts.begin(), counts.end(), 0);
    std::uint32_t hate = 0;
    for (auto h : shared) {
      if (post_cluster[h] >= 0) {
        ++hate;
        ++counts[static_cast<std::size_t>(post_cluster[h])];
      }
    }
    const auto total = static_cast<double>(shared.size());
    t.user_ids.push_back(graph.users()[u]);
    t.user_index.push_back(u);
    t.n_hate.push_back(hate);
    t.n_normal.push_back(static_cast<std::uint32_t>(shared.size()) - hate);
    t.y.push_back(hate / total);
    for (std::size_t c = 0; c < C; ++c) {
      t.n_cluster.push_back(counts[c]);
      t.y_cluster.push_back(counts[c] / total);
    }
  }
  return t;
}

void write_outcomes(const std::filesystem::path& path, const OutcomeTable& table) {
  csv::Writer w(path);
  w.field("user_id");
  w.field("y_overall");
  for (const auto& c : table.clusters) w.field(c);
  w.end_row();
  for (std::size_t r = 0; r < table.size(); ++r) {
    w.field(table.user_ids[r]);
    w.field(table.y[r]);
    for (std::size_t c = 0; c < table.num_clusters(); ++c) w.field(table.y_uc(r, c));
    w.end_row();
  }
  w.close();
}

}  // namespace reshare
