#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace reshare::stats {

double mean(std::span<const double> xs);
/// Sample variance (n - 1 denominator); 0 for fewer than two values.
double variance(std::span<const double> xs);
double stddev(std::span<const double> xs);

/// Root mean squared error. Throws ValidationError on length mismatch or empty input.
double rmse(std::span<const double> pred, std::span<const double> actual);

/// Pearson correlation; 0 when either side is constant.
double pearson(std::span<const double> a, std::span<const double> b);
/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated to ~1e-15.
double incomplete_beta(double a, double b, double x);
/// P(T > t) for Student's t with `df` degrees of freedom (df may be fractional).
double student_t_sf(double t, double df);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;  // Welch-Satterthwaite
  double p = 1.0;   // two-sided
  bool degenerate = false;  // both variances zero; t and df are not informative
};

/// Welch's unequal-variance t-test. Both samples need at least two values.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

inline constexpr int kNoise = -1;

/// A point set stored row-major: point i occupies values[i*dim, (i+1)*dim).
struct PointSet {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// Standard DBSCAN with Euclidean distance; a point counts itself toward min_pts.
/// Clusters are numbered 0..k-1 in order of discovery (ascending point index); noise is kNoise.
std::vector<int> dbscan(const PointSet& points, double eps, std::size_t min_pts);

/// Mean silhouette over non-noise points; singleton clusters contribute 0.
/// Throws ValidationError when fewer than two clusters remain after removing noise.
double silhouette(const PointSet& points, std::span<const int> labels);

}  // namespace reshare::stats
