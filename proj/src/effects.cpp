#include "reshare/effects.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "reshare/csv.hpp"
#include "reshare/error.hpp"
#include "reshare/rng.hpp"

namespace reshare::effects {

std::optional<std::size_t> FeatureMatrix::column_index(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  return std::nullopt;
}

FeatureMatrix FeatureMatrix::from_rows(std::vector<std::string> names, std::span<const std::vector<double>> rows,
                                       std::vector<double> target) {
  if (rows.size() != target.size()) throw ValidationError("feature matrix: row count does not match target length");
  FeatureMatrix m;
  m.names = std::move(names);
  m.target = std::move(target);
  const std::size_t n = rows.size(), p = m.names.size();
  m.values.resize(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != p) throw ValidationError("feature matrix: row " + std::to_string(i) + " has the wrong width");
    for (std::size_t j = 0; j < p; ++j) m.values[j * n + i] = rows[i][j];
  }
  m.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.row_ids[i] = std::to_string(i);
  return m;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix m;
  m.names = names;
  m.target_name = target_name;
  const std::size_t n = rows.size(), p = cols(), src = this->rows();
  m.values.resize(n * p);
  m.target.resize(n);
  m.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = rows[i];
    if (r >= src) throw ValidationError("feature matrix: row index out of range");
    m.target[i] = target[r];
    m.row_ids[i] = row_ids[r];
    for (std::size_t j = 0; j < p; ++j) m.values[j * n + i] = values[j * src + r];
  }
  return m;
}

FeatureMatrix assemble_features(const UserAttributeTable& attrs, const EmbeddingTable* embeddings,
                                const OutcomeTable& outcomes, const std::optional<std::string>& cluster) {
  FeatureMatrix m;
  for (auto name : kAttributeNames) m.names.emplace_back(name);
  std::size_t dim = 0;
  if (embeddings) {
    if (embeddings->empty()) throw ValidationError("assemble_features: embedding table is empty");
    dim = embeddings->begin()->second.size();
    for (std::size_t k = 0; k < dim; ++k) m.names.push_back("x_" + std::to_string(k));
  }
  const std::size_t n = outcomes.size(), p = m.names.size();
  m.values.resize(n * p);
  m.row_ids = outcomes.user_ids;
  if (cluster) {
    m.target = outcomes.cluster_column(*cluster);
    m.target_name = *cluster;
  } else {
    m.target = outcomes.y;
    m.target_name = "y_overall";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = outcomes.user_ids[i];
    const auto* row = attrs.find(id);
    if (!row) throw ValidationError("assemble_features: user '" + id + "' has no attributes");
    const auto f = log_transform(*row);
    for (std::size_t j = 0; j < f.size(); ++j) m.values[j * n + i] = f[j];
    if (embeddings) {
      auto it = embeddings->find(id);
      if (it == embeddings->end()) throw ValidationError("assemble_features: user '" + id + "' has no embedding");
      if (it->second.size() != dim) throw ValidationError("assemble_features: inconsistent embedding dimension");
      for (std::size_t k = 0; k < dim; ++k) m.values[(f.size() + k) * n + i] = it->second[k];
    }
  }
  return m;
}

void EbmHyper::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("ebm: learning_rate must be positive");
  if (max_bins < 2) throw ValidationError("ebm: max_bins must be at least 2");
  if (max_bins > 65535) throw ValidationError("ebm: max_bins must be below 65536");
  if (min_samples_leaf < 1) throw ValidationError("ebm: min_samples_leaf must be at least 1");
  if (n_bags < 1) throw ValidationError("ebm: n_bags must be at least 1");
  if (max_leaves < 2) throw ValidationError("ebm: max_leaves must be at least 2");
  if (interaction_bins < 2) throw ValidationError("ebm: interaction_bins must be at least 2");
  if (early_stop_patience < 1) throw ValidationError("ebm: early_stop_patience must be at least 1");
}

std::size_t ShapeFunction::bin_of(double x) const {
  return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

double ShapeFunction::operator()(double x) const {
  if (linear) return slope * (x - center);
  return values[bin_of(x)];
}

double ShapeFunction::stderr_at(double x) const {
  if (linear || stderrs.empty()) return 0.0;
  return stderrs[bin_of(x)];
}

double PairTerm::operator()(double xa, double xb) const {
  const auto ia = static_cast<std::size_t>(std::lower_bound(cuts_a.begin(), cuts_a.end(), xa) - cuts_a.begin());
  const auto ib = static_cast<std::size_t>(std::lower_bound(cuts_b.begin(), cuts_b.end(), xb) - cuts_b.begin());
  return values[ia * (cuts_b.size() + 1) + ib];
}

namespace {

// Quantile cuts: one bin per distinct value when there are at most max_bins of them,
// otherwise equal-count bins; every bin keeps at least min_leaf rows.
std::vector<double> make_cuts(std::span<const double> column, std::size_t max_bins, std::size_t min_leaf) {
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (double v : sorted) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(0);
    }
    ++counts.back();
  }
  std::vector<double> cuts;
  if (distinct.size() < 2) return cuts;
  const std::size_t n = sorted.size();
  const std::size_t target = distinct.size() <= max_bins ? min_leaf
                                                         : std::max(min_leaf, (n + max_bins - 1) / max_bins);
  std::size_t acc = 0, seen = 0;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    acc += counts[i];
    seen += counts[i];
    if (acc >= target && n - seen >= min_leaf) {
      cuts.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
      acc = 0;
    }
  }
  return cuts;
}

std::uint16_t bin_index(const std::vector<double>& cuts, double x) {
  return static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Segment {
  std::size_t begin, end;  // bins [begin, end)
};

// Greedy regression tree over ordered bins: grows up to max_leaves leaves by best SSE gain.
// Writes lr * leaf mean into delta for every bin of each leaf.
void fit_tree(std::span<const double> sum, std::span<const double> weight, std::size_t max_leaves, double min_leaf,
              double lr, std::span<double> delta) {
  const std::size_t B = sum.size();
  std::vector<double> ps(B + 1, 0.0), pw(B + 1, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    ps[b + 1] = ps[b] + sum[b];
    pw[b + 1] = pw[b] + weight[b];
  }
  auto score = [&](std::size_t lo, std::size_t hi) {
    const double w = pw[hi] - pw[lo];
    return w > 0.0 ? (ps[hi] - ps[lo]) * (ps[hi] - ps[lo]) / w : 0.0;
  };
  std::vector<Segment> leaves{{0, B}};
  while (leaves.size() < max_leaves) {
    double best_gain = 0.0;
    std::size_t best_leaf = 0, best_cut = 0;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      const auto [lo, hi] = leaves[l];
      const double base = score(lo, hi);
      for (std::size_t c = lo + 1; c < hi; ++c) {
        if (pw[c] - pw[lo] < min_leaf || pw[hi] - pw[c] < min_leaf) continue;
        const double gain = score(lo, c) + score(c, hi) - base;
        if (gain > best_gain) {
          best_gain = gain;
          best_leaf = l;
          best_cut = c;
        }
      }
    }
    if (best_gain <= 0.0) break;
    const auto [lo, hi] = leaves[best_leaf];
    leaves[best_leaf] = {lo, best_cut};
    leaves.push_back({best_cut, hi});
  }
  for (const auto& [lo, hi] : leaves) {
    const double w = pw[hi] - pw[lo];
    const double v = w > 0.0 ? lr * (ps[hi] - ps[lo]) / w : 0.0;
    for (std::size_t b = lo; b < hi; ++b) delta[b] = v;
  }
}

struct QuadrantFit {
  double gain = 0.0;
  std::size_t cut_a = 0, cut_b = 0;  // first bin of the upper half on each axis
  std::array<double, 4> mean{};
};

// Best split of a 2-D histogram into four quadrants (one cut per axis).
QuadrantFit fit_quadrants(std::span<const double> sum, std::span<const double> weight, std::size_t na, std::size_t nb,
                          double min_leaf) {
  // 2-D prefix sums
  std::vector<double> ps((na + 1) * (nb + 1), 0.0), pw((na + 1) * (nb + 1), 0.0);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t k = 0; k < nb; ++k) {
      const auto at = (i + 1) * (nb + 1) + (k + 1);
      ps[at] = sum[i * nb + k] + ps[i * (nb + 1) + k + 1] + ps[(i + 1) * (nb + 1) + k] - ps[i * (nb + 1) + k];
      pw[at] = weight[i * nb + k] + pw[i * (nb + 1) + k + 1] + pw[(i + 1) * (nb + 1) + k] - pw[i * (nb + 1) + k];
    }
  }
  auto rect = [&](const std::vector<double>& p, std::size_t i0, std::size_t i1, std::size_t k0, std::size_t k1) {
    return p[i1 * (nb + 1) + k1] - p[i0 * (nb + 1) + k1] - p[i1 * (nb + 1) + k0] + p[i0 * (nb + 1) + k0];
  };
  const double total_w = pw.back();
  const double base = total_w > 0.0 ? ps.back() * ps.back() / total_w : 0.0;
  QuadrantFit best;
  for (std::size_t ca = 1; ca < na; ++ca) {
    for (std::size_t cb = 1; cb < nb; ++cb) {
      const std::array<std::array<std::size_t, 4>, 4> q = {{{0, ca, 0, cb}, {0, ca, cb, nb}, {ca, na, 0, cb}, {ca, na, cb, nb}}};
      double s = 0.0;
      bool ok = true;
      std::array<double, 4> mean{};
      for (std::size_t r = 0; r < 4 && ok; ++r) {
        const double w = rect(pw, q[r][0], q[r][1], q[r][2], q[r][3]);
        if (w < min_leaf || w <= 0.0) {
          ok = false;
          break;
        }
        const double sm = rect(ps, q[r][0], q[r][1], q[r][2], q[r][3]);
        s += sm * sm / w;
        mean[r] = sm / w;
      }
      if (!ok) continue;
      if (s - base > best.gain) {
        best.gain = s - base;
        best.cut_a = ca;
        best.cut_b = cb;
        best.mean = mean;
      }
    }
  }
  return best;
}

struct BinnedData {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::vector<double>> cuts;
  std::vector<std::uint16_t> bins;  // column-major
  std::vector<std::size_t> n_bins;
  std::vector<std::vector<double>> coarse_cuts;
  std::vector<std::uint16_t> coarse;  // column-major
  std::vector<std::size_t> n_coarse;

  const std::uint16_t* col(std::size_t j) const { return bins.data() + j * n; }
  const std::uint16_t* coarse_col(std::size_t j) const { return coarse.data() + j * n; }
};

BinnedData bin_features(const FeatureMatrix& fm, const EbmHyper& hyper) {
  BinnedData bd;
  bd.n = fm.rows();
  bd.p = fm.cols();
  bd.bins.resize(bd.n * bd.p);
  bd.coarse.resize(bd.n * bd.p);
  for (std::size_t j = 0; j < bd.p; ++j) {
    const auto column = fm.column(j);
    bd.cuts.push_back(make_cuts(column, hyper.max_bins, hyper.min_samples_leaf));
    bd.coarse_cuts.push_back(make_cuts(column, hyper.interaction_bins, hyper.min_samples_leaf));
    bd.n_bins.push_back(bd.cuts.back().size() + 1);
    bd.n_coarse.push_back(bd.coarse_cuts.back().size() + 1);
    for (std::size_t i = 0; i < bd.n; ++i) {
      bd.bins[j * bd.n + i] = bin_index(bd.cuts[j], column[i]);
      bd.coarse[j * bd.n + i] = bin_index(bd.coarse_cuts[j], column[i]);
    }
  }
  return bd;
}

struct PairSpec {
  std::size_t a, b;
  double strength;
};

// State of one bootstrap bag.
struct Bag {
  std::vector<double> weight;  // in-bag multiplicity per row
  std::vector<std::uint32_t> oob;
  double intercept = 0.0;
  std::vector<std::vector<double>> mains;  // per feature, per bin
  std::vector<std::vector<double>> pairs;  // per selected pair, per coarse cell
  std::vector<double> curve;
  std::size_t main_rounds = 0;
};

class Booster {
 public:
  Booster(const BinnedData& bd, std::span<const double> y, const EbmHyper& hyper) : bd_(bd), y_(y), hyper_(hyper) {}

  void fit_mains(Bag& bag, bool record_curve) const {
    const std::size_t n = bd_.n, p = bd_.p;
    double wsum = 0.0, wy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wsum += bag.weight[i];
      wy += bag.weight[i] * y_[i];
    }
    bag.intercept = wy / wsum;
    bag.mains.assign(p, {});
    std::vector<std::vector<double>> wbin(p);
    for (std::size_t j = 0; j < p; ++j) {
      bag.mains[j].assign(bd_.n_bins[j], 0.0);
      wbin[j].assign(bd_.n_bins[j], 0.0);
      const auto* bins = bd_.col(j);
      for (std::size_t i = 0; i < n; ++i) wbin[j][bins[i]] += bag.weight[i];
    }
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y_[i] - bag.intercept;
    if (p == 0) return;

    std::vector<double> hist(bd_.n_bins[0], 0.0);
    {
      const auto* bins = bd_.col(0);
      for (std::size_t i = 0; i < n; ++i) hist[bins[i]] += bag.weight[i] * r[i];
    }
    double best_oob = oob_mse(bag, r);
    auto best = bag.mains;
    std::size_t best_round = 0;
    std::vector<double> delta, next_hist;
    for (std::size_t round = 1; round <= hyper_.max_rounds; ++round) {
      double in_sse = 0.0, oob_sse = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const std::size_t nxt = j + 1 < p ? j + 1 : 0;
        delta.assign(bd_.n_bins[j], 0.0);
        fit_tree(hist, wbin[j], hyper_.max_leaves, static_cast<double>(hyper_.min_samples_leaf),
                 hyper_.learning_rate, delta);
        for (std::size_t b = 0; b < delta.size(); ++b) bag.mains[j][b] += delta[b];
        next_hist.assign(bd_.n_bins[nxt], 0.0);
        const auto* bins = bd_.col(j);
        const auto* nbins = bd_.col(nxt);
        // Residual update for this feature fused with the next feature's histogram.
        if (j + 1 < p) {
          for (std::size_t i = 0; i < n; ++i) {
            r[i] -= delta[bins[i]];
            next_hist[nbins[i]] += bag.weight[i] * r[i];
          }
        } else {
          for (std::size_t i = 0; i < n; ++i) {
            r[i] -= delta[bins[i]];
            const double wr = bag.weight[i] * r[i];
            next_hist[nbins[i]] += wr;
            in_sse += wr * r[i];
          }
        }
        hist.swap(next_hist);
      }
      for (auto i : bag.oob) oob_sse += r[i] * r[i];
      if (record_curve) bag.curve.push_back(std::sqrt(in_sse / wsum));
      if (bag.oob.empty()) {
        best_round = round;
        continue;
      }
      const double oob = oob_sse / static_cast<double>(bag.oob.size());
      if (oob < best_oob * (1.0 - hyper_.early_stop_tol)) {
        best_oob = oob;
        best = bag.mains;
        best_round = round;
      } else if (round - best_round >= hyper_.early_stop_patience) {
        break;
      }
    }
    if (!bag.oob.empty()) bag.mains = std::move(best);
    bag.main_rounds = best_round;
  }

  void fit_pairs(Bag& bag, std::span<const PairSpec> specs) const {
    const std::size_t n = bd_.n;
    bag.pairs.assign(specs.size(), {});
    if (specs.empty()) return;
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y_[i] - main_prediction(bag, i);
    std::vector<std::vector<std::uint32_t>> cells(specs.size(), std::vector<std::uint32_t>(n));
    std::vector<std::vector<double>> wcell(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
      const auto nb = bd_.n_coarse[specs[s].b];
      const auto* ca = bd_.coarse_col(specs[s].a);
      const auto* cb = bd_.coarse_col(specs[s].b);
      bag.pairs[s].assign(bd_.n_coarse[specs[s].a] * nb, 0.0);
      wcell[s].assign(bag.pairs[s].size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        cells[s][i] = static_cast<std::uint32_t>(ca[i] * nb + cb[i]);
        wcell[s][cells[s][i]] += bag.weight[i];
      }
    }
    double best_oob = oob_mse(bag, r);
    auto best = bag.pairs;
    std::size_t best_round = 0;
    std::vector<double> hist, delta;
    for (std::size_t round = 1; round <= hyper_.max_rounds; ++round) {
      for (std::size_t s = 0; s < specs.size(); ++s) {
        const auto na = bd_.n_coarse[specs[s].a], nb = bd_.n_coarse[specs[s].b];
        hist.assign(na * nb, 0.0);
        const auto& cell = cells[s];
        for (std::size_t i = 0; i < n; ++i) hist[cell[i]] += bag.weight[i] * r[i];
        const auto fit = fit_quadrants(hist, wcell[s], na, nb, static_cast<double>(hyper_.min_samples_leaf));
        if (fit.gain <= 0.0) continue;
        delta.assign(na * nb, 0.0);
        for (std::size_t ia = 0; ia < na; ++ia) {
          for (std::size_t ib = 0; ib < nb; ++ib) {
            const std::size_t q = (ia >= fit.cut_a ? 2 : 0) + (ib >= fit.cut_b ? 1 : 0);
            delta[ia * nb + ib] = hyper_.learning_rate * fit.mean[q];
          }
        }
        for (std::size_t c = 0; c < delta.size(); ++c) bag.pairs[s][c] += delta[c];
        for (std::size_t i = 0; i < n; ++i) r[i] -= delta[cell[i]];
      }
      if (bag.oob.empty()) continue;
      const double oob = oob_mse(bag, r);
      if (oob < best_oob * (1.0 - hyper_.early_stop_tol)) {
        best_oob = oob;
        best = bag.pairs;
        best_round = round;
      } else if (round - best_round >= hyper_.early_stop_patience) {
        break;
      }
    }
    if (!bag.oob.empty()) bag.pairs = std::move(best);
  }

  double main_prediction(const Bag& bag, std::size_t i) const {
    double f = bag.intercept;
    for (std::size_t j = 0; j < bd_.p; ++j) f += bag.mains[j][bd_.col(j)[i]];
    return f;
  }

 private:
  static double oob_mse(const Bag& bag, std::span<const double> r) {
    if (bag.oob.empty()) return 0.0;
    double s = 0.0;
    for (auto i : bag.oob) s += r[i] * r[i];
    return s / static_cast<double>(bag.oob.size());
  }

  const BinnedData& bd_;
  std::span<const double> y_;
  const EbmHyper& hyper_;
};

std::vector<PairSpec> detect_pairs(const BinnedData& bd, std::span<const double> residual, std::size_t count,
                                   double min_leaf) {
  std::vector<PairSpec> all;
  if (count == 0) return all;
  std::vector<double> hist, weight;
  for (std::size_t a = 0; a < bd.p; ++a) {
    if (bd.n_coarse[a] < 2) continue;
    for (std::size_t b = a + 1; b < bd.p; ++b) {
      if (bd.n_coarse[b] < 2) continue;
      const auto na = bd.n_coarse[a], nb = bd.n_coarse[b];
      hist.assign(na * nb, 0.0);
      weight.assign(na * nb, 0.0);
      const auto* ca = bd.coarse_col(a);
      const auto* cb = bd.coarse_col(b);
      for (std::size_t i = 0; i < bd.n; ++i) {
        const auto c = ca[i] * nb + cb[i];
        hist[c] += residual[i];
        weight[c] += 1.0;
      }
      const auto fit = fit_quadrants(hist, weight, na, nb, min_leaf);
      if (fit.gain > 0.0) all.push_back({a, b, fit.gain / static_cast<double>(bd.n)});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const PairSpec& x, const PairSpec& y) { return x.strength > y.strength; });
  if (all.size() > count) all.resize(count);
  return all;
}

// Moves the train-mean of each term into the intercept, weighting bins by train occupancy.
void center_bag(Bag& bag, const BinnedData& bd, std::span<const PairSpec> specs) {
  const double n = static_cast<double>(bd.n);
  for (std::size_t j = 0; j < bd.p; ++j) {
    const auto* bins = bd.col(j);
    double m = 0.0;
    for (std::size_t i = 0; i < bd.n; ++i) m += bag.mains[j][bins[i]];
    m /= n;
    for (auto& v : bag.mains[j]) v -= m;
    bag.intercept += m;
  }
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto nb = bd.n_coarse[specs[s].b];
    const auto* ca = bd.coarse_col(specs[s].a);
    const auto* cb = bd.coarse_col(specs[s].b);
    double m = 0.0;
    for (std::size_t i = 0; i < bd.n; ++i) m += bag.pairs[s][ca[i] * nb + cb[i]];
    m /= n;
    for (auto& v : bag.pairs[s]) v -= m;
    bag.intercept += m;
  }
}

ShapeFunction describe_feature(const FeatureMatrix& fm, const BinnedData& bd, std::size_t j) {
  ShapeFunction s;
  s.feature = fm.names[j];
  s.cuts = bd.cuts[j];
  const auto column = fm.column(j);
  const std::size_t B = bd.n_bins[j];
  s.values.assign(B, 0.0);
  s.stderrs.assign(B, 0.0);
  s.bin_x.assign(B, 0.0);
  s.weights.assign(B, 0.0);
  std::vector<double> count(B, 0.0);
  const auto* bins = bd.col(j);
  for (std::size_t i = 0; i < bd.n; ++i) {
    s.bin_x[bins[i]] += column[i];
    count[bins[i]] += 1.0;
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (count[b] > 0) s.bin_x[b] /= count[b];
    s.weights[b] = count[b] / static_cast<double>(bd.n);
  }
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  s.min_x = *lo;
  s.max_x = *hi;
  std::vector<double> distinct(column.begin(), column.end());
  std::sort(distinct.begin(), distinct.end());
  s.binary = std::unique(distinct.begin(), distinct.end()) - distinct.begin() == 2;
  return s;
}

void check_matrix(const FeatureMatrix& features) {
  if (features.rows() == 0 || features.cols() == 0) throw ValidationError("effects: empty feature matrix");
  if (features.values.size() != features.rows() * features.cols()) {
    throw ValidationError("effects: feature matrix storage does not match its shape");
  }
  for (double v : features.values) {
    if (!std::isfinite(v)) throw ValidationError("effects: feature matrix contains non-finite values");
  }
  for (double v : features.target) {
    if (!std::isfinite(v)) throw ValidationError("effects: target contains non-finite values");
  }
}

}  // namespace

EffectModel fit_ebm(const FeatureMatrix& features, const EbmHyper& hyper) {
  hyper.validate();
  check_matrix(features);
  if (features.rows() < 2) throw ValidationError("effects: need at least 2 rows");
  const auto bd = bin_features(features, hyper);
  const std::span<const double> y(features.target);

  EffectModel model;
  model.kind = ModelKind::Ebm;
  model.feature_names = features.names;
  for (std::size_t j = 0; j < bd.p; ++j) model.shapes.push_back(describe_feature(features, bd, j));

  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*ymin == *ymax) {
    model.intercept = *ymin;
    model.warnings.push_back("constant target; returning an intercept-only model");
    return model;
  }

  std::vector<Bag> bags(hyper.n_bags);
  for (std::size_t b = 0; b < hyper.n_bags; ++b) {
    Rng rng(mix_seed(hyper.seed, b));
    bags[b].weight.assign(bd.n, 0.0);
    for (std::size_t i = 0; i < bd.n; ++i) bags[b].weight[rng.index(bd.n)] += 1.0;
    for (std::size_t i = 0; i < bd.n; ++i) {
      if (bags[b].weight[i] == 0.0) bags[b].oob.push_back(static_cast<std::uint32_t>(i));
    }
  }
  const Booster booster(bd, y, hyper);
  parallel_for(bags.size(), hyper.n_threads, [&](std::size_t b) { booster.fit_mains(bags[b], b == 0); });

  std::vector<PairSpec> specs;
  if (hyper.n_interactions > 0 && bd.p >= 2) {
    std::vector<double> residual(bd.n, 0.0);
    for (const auto& bag : bags) {
      for (std::size_t i = 0; i < bd.n; ++i) residual[i] += booster.main_prediction(bag, i);
    }
    for (std::size_t i = 0; i < bd.n; ++i) residual[i] = y[i] - residual[i] / static_cast<double>(bags.size());
    specs = detect_pairs(bd, residual, hyper.n_interactions, static_cast<double>(hyper.min_samples_leaf));
    parallel_for(bags.size(), hyper.n_threads, [&](std::size_t b) { booster.fit_pairs(bags[b], specs); });
  }
  for (auto& bag : bags) center_bag(bag, bd, specs);

  const double nb = static_cast<double>(bags.size());
  for (const auto& bag : bags) model.intercept += bag.intercept / nb;
  for (std::size_t j = 0; j < bd.p; ++j) {
    auto& s = model.shapes[j];
    for (std::size_t b = 0; b < s.values.size(); ++b) {
      double m = 0.0;
      for (const auto& bag : bags) m += bag.mains[j][b];
      m /= nb;
      double ss = 0.0;
      for (const auto& bag : bags) ss += (bag.mains[j][b] - m) * (bag.mains[j][b] - m);
      s.values[b] = m;
      s.stderrs[b] = bags.size() > 1 ? std::sqrt(ss / (nb - 1.0)) / std::sqrt(nb) : 0.0;
    }
  }
  for (std::size_t s = 0; s < specs.size(); ++s) {
    PairTerm term;
    term.a = specs[s].a;
    term.b = specs[s].b;
    term.cuts_a = bd.coarse_cuts[term.a];
    term.cuts_b = bd.coarse_cuts[term.b];
    term.strength = specs[s].strength;
    term.values.assign(bags.front().pairs[s].size(), 0.0);
    for (const auto& bag : bags) {
      for (std::size_t c = 0; c < term.values.size(); ++c) term.values[c] += bag.pairs[s][c] / nb;
    }
    model.pairs.push_back(std::move(term));
  }
  model.training_curve = std::move(bags.front().curve);
  for (const auto& bag : bags) model.rounds.push_back(bag.main_rounds);
  return model;
}

EffectModel fit_linear(const FeatureMatrix& features, const LinearOptions& options) {
  check_matrix(features);
  const std::size_t n = features.rows(), p = features.cols();
  EffectModel model;
  model.kind = ModelKind::Linear;
  model.feature_names = features.names;
  double ymean = 0.0;
  for (double v : features.target) ymean += v;
  ymean /= static_cast<double>(n);
  model.intercept = ymean;

  std::vector<std::size_t> active;
  model.shapes.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto& s = model.shapes[j];
    s.feature = features.names[j];
    s.linear = true;
    const auto col = features.column(j);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    s.min_x = *lo;
    s.max_x = *hi;
    double m = 0.0;
    for (double v : col) m += v;
    s.center = m / static_cast<double>(n);
    std::vector<double> distinct(col.begin(), col.end());
    std::sort(distinct.begin(), distinct.end());
    s.binary = std::unique(distinct.begin(), distinct.end()) - distinct.begin() == 2;
    if (*lo != *hi) active.push_back(j);
  }
  if (active.empty() || n < 2) return model;

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(active.size()));
  Eigen::VectorXd yc(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) yc[static_cast<Eigen::Index>(i)] = features.target[i] - ymean;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto j = active[k];
    const auto col = features.column(j);
    for (std::size_t i = 0; i < n; ++i) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = col[i] - model.shapes[j].center;
    }
  }
  Eigen::VectorXd beta;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() == X.cols()) {
    beta = qr.solve(yc);
  } else {
    if (!options.ridge_fallback) {
      throw ValidationError("fit_linear: design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                            std::to_string(X.cols()) + ")");
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    const double alpha = options.ridge * gram.diagonal().mean();
    gram.diagonal().array() += alpha;
    beta = gram.ldlt().solve(X.transpose() * yc);
    model.warnings.push_back("rank-deficient design; used ridge fallback with penalty " + csv::format_double(alpha));
  }
  for (std::size_t k = 0; k < active.size(); ++k) model.shapes[active[k]].slope = beta[static_cast<Eigen::Index>(k)];
  return model;
}

namespace {

void check_columns(const EffectModel& model, const FeatureMatrix& features) {
  if (features.names != model.feature_names) {
    throw ValidationError("effects: feature columns do not match the model (" + std::to_string(features.cols()) +
                          " columns, model expects " + std::to_string(model.feature_names.size()) + ")");
  }
}

}  // namespace

std::vector<double> predict(const EffectModel& model, const FeatureMatrix& features) {
  check_columns(model, features);
  const std::size_t n = features.rows();
  std::vector<double> out(n, model.intercept);
  for (std::size_t j = 0; j < model.shapes.size(); ++j) {
    const auto col = features.column(j);
    for (std::size_t i = 0; i < n; ++i) out[i] += model.shapes[j](col[i]);
  }
  for (const auto& pair : model.pairs) {
    const auto ca = features.column(pair.a), cb = features.column(pair.b);
    for (std::size_t i = 0; i < n; ++i) out[i] += pair(ca[i], cb[i]);
  }
  return out;
}

std::vector<double> term_contributions(const EffectModel& model, const FeatureMatrix& features, std::size_t row) {
  check_columns(model, features);
  if (row >= features.rows()) throw ValidationError("term_contributions: row out of range");
  std::vector<double> out;
  for (std::size_t j = 0; j < model.shapes.size(); ++j) out.push_back(model.shapes[j](features.at(row, j)));
  for (const auto& pair : model.pairs) out.push_back(pair(features.at(row, pair.a), features.at(row, pair.b)));
  return out;
}

std::vector<Importance> feature_importance(const EffectModel& model, const FeatureMatrix& train) {
  check_columns(model, train);
  const double n = static_cast<double>(train.rows());
  std::vector<Importance> out;
  for (std::size_t j = 0; j < model.shapes.size(); ++j) {
    double s = 0.0;
    for (double x : train.column(j)) s += std::fabs(model.shapes[j](x));
    out.push_back({model.shapes[j].feature, n > 0 ? s / n : 0.0});
  }
  for (const auto& pair : model.pairs) {
    const auto ca = train.column(pair.a), cb = train.column(pair.b);
    double s = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) s += std::fabs(pair(ca[i], cb[i]));
    out.push_back({model.feature_names[pair.a] + " & " + model.feature_names[pair.b], n > 0 ? s / n : 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const Importance& a, const Importance& b) { return a.value > b.value; });
  return out;
}

std::vector<CurveRow> contribution_curve(const EffectModel& model, std::string_view feature, std::size_t grid) {
  const ShapeFunction* shape = nullptr;
  for (const auto& s : model.shapes) {
    if (s.feature == feature) shape = &s;
  }
  if (!shape) throw ValidationError("contribution_curve: unknown feature '" + std::string(feature) + "'");
  std::vector<double> xs;
  if (shape->binary) {
    xs = {shape->min_x, shape->max_x};
  } else {
    const std::size_t g = std::max<std::size_t>(grid, 2);
    for (std::size_t i = 0; i < g; ++i) {
      xs.push_back(shape->min_x + (shape->max_x - shape->min_x) * static_cast<double>(i) / static_cast<double>(g - 1));
    }
  }
  std::vector<CurveRow> rows;
  for (double x : xs) {
    const double v = (*shape)(x);
    const double se = shape->stderr_at(x);
    rows.push_back({x, v, v - 2.0 * se, v + 2.0 * se});
  }
  return rows;
}

void write_importance(const std::filesystem::path& path, std::span<const Importance> rows) {
  csv::Writer w(path);
  w.row("feature", "importance");
  for (const auto& r : rows) w.row(r.term, r.value);
  w.close();
}

void write_curve(const std::filesystem::path& path, std::span<const CurveRow> rows) {
  csv::Writer w(path);
  w.row("x", "value", "lower", "upper");
  for (const auto& r : rows) w.row(r.x, r.value, r.lower, r.upper);
  w.close();
}

void write_curve_svg(const std::filesystem::path& path, std::span<const CurveRow> rows, std::string_view title) {
  if (rows.empty()) throw ValidationError("write_curve_svg: no rows");
  constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 50;
  double x0 = rows.front().x, x1 = rows.front().x, y0 = rows.front().lower, y1 = rows.front().upper;
  for (const auto& r : rows) {
    x0 = std::min(x0, r.x);
    x1 = std::max(x1, r.x);
    y0 = std::min({y0, r.lower, r.value});
    y1 = std::max({y1, r.upper, r.value});
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); };
  auto py = [&](double y) { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); };
  auto polyline = [&](auto get, std::string_view color, bool dashed) {
    std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"";
    if (dashed) s += " stroke-dasharray=\"6,4\"";
    s += " points=\"";
    for (const auto& r : rows) s += csv::format_double(px(r.x)) + "," + csv::format_double(py(get(r))) + " ";
    return s + "\"/>\n";
  };
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
  if (y0 < 0.0 && y1 > 0.0) {
    out << "<line x1=\"" << kL << "\" y1=\"" << py(0.0) << "\" x2=\"" << kW - kR << "\" y2=\"" << py(0.0)
        << "\" stroke=\"gray\" stroke-dasharray=\"2,3\"/>\n";
  }
  auto label = [&](double x, double y, std::string_view anchor, double value) {
    out << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << csv::format_double(std::round(value * 1e4) / 1e4)
        << "</text>\n";
  };
  label(kL, kH - kB + 16, "middle", x0);
  label(kW - kR, kH - kB + 16, "middle", x1);
  label(kL - 6, kH - kB, "end", y0);
  label(kL - 6, kT + 4, "end", y1);
  out << polyline([](const CurveRow& r) { return r.lower; }, "#ff7f0e", true);
  out << polyline([](const CurveRow& r) { return r.upper; }, "#ff7f0e", true);
  out << polyline([](const CurveRow& r) { return r.value; }, "#1f77b4", false);
  out << "</svg>\n";
}

}  // namespace reshare::effects
