#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reshare/dataset.hpp"

namespace reshare {

inline constexpr std::string_view kUnlabeledCluster = "unlabeled";

/// Per-user hate reshare rates. Rows cover users with at least one reshare, in graph order.
struct OutcomeTable {
  std::vector<std::string> clusters;  // sorted labels; "unlabeled" last when present
  std::vector<std::string> user_ids;
  std::vector<std::uint32_t> user_index;  // row -> graph user index
  std::vector<double> y;                  // Y_u
  std::vector<double> y_cluster;          // rows x clusters, Y_uc
  std::vector<std::uint32_t> n_hate;
  std::vector<std::uint32_t> n_normal;
  std::vector<std::uint32_t> n_cluster;   // rows x clusters
  std::size_t excluded_users = 0;         // users with no reshares
  std::size_t unlabeled_posts = 0;        // hate posts without a cluster label

  std::size_t size() const { return user_ids.size(); }
  std::size_t num_clusters() const { return clusters.size(); }
  std::optional<std::size_t> cluster_index(std::string_view label) const;
  double y_uc(std::size_t row, std::size_t cluster) const { return y_cluster[row * clusters.size() + cluster]; }
  /// Y_uc for every row. Throws ValidationError for an unknown label.
  std::vector<double> cluster_column(std::string_view label) const;
};

/// Y_u = n_hate / (n_hate + n_normal), Y_uc = n_c / (n_hate + n_normal).
OutcomeTable compute_outcomes(const InteractionGraph& graph);

/// outcomes.csv: user_id, y_overall, then one column per cluster label.
void write_outcomes(const std::filesystem::path& path, const OutcomeTable& table);

}  // namespace reshare
