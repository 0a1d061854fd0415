/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "gpfuse/core_types.hpp"
#include "gpfuse/covariance.hpp"
#include "gpfuse/detail/spatial_index.hpp"
#include "gpfuse/kriging.hpp"
#include "gpfuse/sparse_precision.hpp"

namespace gpfuse {

enum class OrderingMethod { maxmin, coordinate };

inline std::string_view to_string(OrderingMethod m) { return m == OrderingMethod::maxmin ? "maxmin" : "coordinate"; }

inline OrderingMethod parse_ordering(std::string_view s) {
  if (s == "maxmin") return OrderingMethod::maxmin;
  if (s == "coordinate") return OrderingMethod::coordinate;
  throw InputError("unknown ordering method '" + std::string(s) + "' (expected maxmin or coordinate)");
}

/// order[k] is the original index of the k-th point in the sequence.
class Ordering {
 public:
  Ordering() = default;
  Ordering(std::vector<std::size_t> order, OrderingMethod method) : order_(std::move(order)), method_(method) {
    std::vector<char> seen(order_.size(), 0);
    for (std::size_t v : order_) {
      if (v >= order_.size() || seen[v]) throw InputError("ordering is not a permutation");
      seen[v] = 1;
    }
  }
  static Ordering identity(std::size_t n, OrderingMethod method = OrderingMethod::coordinate) {
    std::vector<std::size_t> o(n);
    std::iota(o.begin(), o.end(), std::size_t{0});
    return Ordering(std::move(o), method);
  }

  std::size_t size() const { return order_.size(); }
  std::size_t operator[](std::size_t k) const { return order_[k]; }
  const std::vector<std::size_t>& order() const { return order_; }
  OrderingMethod method() const { return method_; }

  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> pos(order_.size());
    for (std::size_t k = 0; k < order_.size(); ++k) pos[order_[k]] = k;
    return pos;
  }

 private:
  std::vector<std::size_t> order_;
  OrderingMethod method_ = OrderingMethod::maxmin;
};

/// Normalized mean of unit vectors (falls back to 0N 0E when they cancel) at the mean time.
inline SpaceTimePoint spherical_centroid(std::span<const SpaceTimePoint> points) {
  constexpr double deg = kPi / 180.0;
  double x = 0.0, y = 0.0, z = 0.0, t = 0.0;
  for (const auto& p : points) {
    const double cl = std::cos(p.lat() * deg);
    x += cl * std::cos(p.lon() * deg);
    y += cl * std::sin(p.lon() * deg);
    z += std::sin(p.lat() * deg);
    t += p.time();
  }
  const double n = static_cast<double>(points.size());
  t /= n;
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (norm < 1e-12 * n) return SpaceTimePoint::make(0.0, 0.0, t);
  const double lat = std::asin(std::clamp(z / norm, -1.0, 1.0)) / deg;
  const double lon = std::atan2(y, x) / deg;
  return SpaceTimePoint::make(lat, lon, t);
}

/*! Max-min ordering.
 *
 * Starts from the point nearest the spherical centroid, then repeatedly
 * picks the point whose minimum scaled distance to the already-ordered
 * points is largest. Ties go to the smaller original index. Minimum
 * distances are maintained lazily in a max-heap; after each pick only
 * points inside the current max-min radius can change, and those are
 * found through the spatial index.
 */
inline Ordering order_maxmin(std::span<const SpaceTimePoint> points, const KernelParams& params) {
  const std::size_t n = points.size();
  if (n == 0) return Ordering({}, OrderingMethod::maxmin);

  const SpaceTimePoint c = spherical_centroid(points);
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = scaled_distance_value(c, points[i], params);
    if (d < best) {
      best = d;
      first = i;
    }
  }

  struct Entry {
    double d;
    std::size_t i;
    bool operator<(const Entry& o) const { return d < o.d || (d == o.d && i > o.i); }
  };
  std::vector<double> dmin(n);
  std::vector<char> done(n, 0);
  std::priority_queue<Entry> heap;
  for (std::size_t i = 0; i < n; ++i) {
    dmin[i] = scaled_distance_value(points[first], points[i], params);
    if (i != first) heap.push({dmin[i], i});
  }
  done[first] = 1;

  std::vector<std::size_t> order;
  order.reserve(n);
  order.push_back(first);
  const detail::SpaceTimeIndex index(points, params);
  while (!heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    if (done[top.i] || top.d != dmin[top.i]) continue;
    done[top.i] = 1;
    order.push_back(top.i);
    const SpaceTimePoint& p = points[top.i];
    index.within(p, top.d, [&](std::size_t j) {
      if (done[j]) return;
      const double d = scaled_distance_value(p, points[j], params);
      if (d < dmin[j]) {
        dmin[j] = d;
        heap.push({d, j});
      }
    });
  }
  return Ordering(std::move(order), OrderingMethod::maxmin);
}

/// Sort by (lat, lon, time, index).
inline Ordering order_coordinate(std::span<const SpaceTimePoint> points) {
  std::vector<std::size_t> o(points.size());
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = points[a];
    const auto& q = points[b];
    if (p.lat() != q.lat()) return p.lat() < q.lat();
    if (p.lon() != q.lon()) return p.lon() < q.lon();
    return p.time() < q.time();
  });
  return Ordering(std::move(o), OrderingMethod::coordinate);
}

inline Ordering make_ordering(std::span<const SpaceTimePoint> points, const KernelParams& params,
                              OrderingMethod method) {
  return method == OrderingMethod::maxmin ? order_maxmin(points, params) : order_coordinate(points);
}

/// sets[i] holds ordered positions (< i), nearest first; ties by position.
struct ConditioningSets {
  std::vector<std::vector<std::size_t>> sets;
  std::size_t m = 0;
};

namespace detail {

/// Nearest-predecessor search over points already arranged in sequence order.
template <class Accept>
ConditioningSets nearest_predecessors(std::span<const SpaceTimePoint> ordered, const KernelParams& params,
                                      std::size_t m, Accept&& accept) {
  ConditioningSets cs;
  cs.m = m;
  cs.sets.resize(ordered.size());
  const SpaceTimeIndex index(ordered, params);
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    const auto nb = index.nearest(ordered[i], std::min(i, m), i, [&](std::size_t j) { return accept(i, j); });
    auto& s = cs.sets[i];
    s.reserve(nb.size());
    for (const auto& x : nb) s.push_back(x.id);
  }
  return cs;
}

inline std::vector<SpaceTimePoint> arrange(std::span<const SpaceTimePoint> points, const Ordering& ordering) {
  std::vector<SpaceTimePoint> out;
  out.reserve(points.size());
  for (std::size_t k = 0; k < ordering.size(); ++k) out.push_back(points[ordering[k]]);
  return out;
}

}  // namespace detail

inline ConditioningSets conditioning_sets(const Ordering& ordering, std::span<const SpaceTimePoint> points,
                                          const KernelParams& params, std::size_t m) {
  if (m < 1) throw InputError("conditioning set size m must be >= 1");
  if (ordering.size() != points.size()) throw InputError("ordering size differs from point count");
  const auto ordered = detail::arrange(points, ordering);
  return detail::nearest_predecessors(ordered, params, m, [](std::size_t, std::size_t) { return true; });
}

/*! Sparse triangular Vecchia factor over a sequence of random variables.
 *
 * Row i encodes w_i = sum_j coef[i][j] * w_{sets[i][j]} + e_i with
 * e_i ~ N(0, cond_var[i]). With U = D^{-1/2}(I - B) the represented
 * precision is U^T U.
 */
struct VecchiaFactor {
  std::vector<std::vector<std::size_t>> sets;
  std::vector<std::vector<double>> coef;
  std::vector<double> cond_var;

  std::size_t size() const { return cond_var.size(); }

  Eigen::SparseMatrix<double> u_matrix() const {
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t i = 0; i < size(); ++i) {
      const double s = 1.0 / std::sqrt(cond_var[i]);
      t.emplace_back(static_cast<int>(i), static_cast<int>(i), s);
      for (std::size_t k = 0; k < sets[i].size(); ++k)
        t.emplace_back(static_cast<int>(i), static_cast<int>(sets[i][k]), -coef[i][k] * s);
    }
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::SparseMatrix<double> u(n, n);
    u.setFromTriplets(t.begin(), t.end());
    return u;
  }

  SparsePrecision precision() const {
    const Eigen::SparseMatrix<double> u = u_matrix();
    const Eigen::SparseMatrix<double> q = Eigen::SparseMatrix<double>(u.transpose()) * u;
    return SparsePrecision::from_symmetric(q);
  }
};

namespace detail {

/*! Computes each row's regression on its conditioning set.
 *
 * `cov(i, j)` returns the model covariance between sequence positions.
 * Conditional variances below -1e-8 of the marginal are a numerical
 * failure; small or slightly negative ones (exact interpolation) are
 * floored at 1e-12 of the marginal.
 */
template <class Cov>
VecchiaFactor build_factor(ConditioningSets sets, Cov&& cov, double sill,
                           const std::vector<std::size_t>* original_index = nullptr) {
  VecchiaFactor f;
  const std::size_t n = sets.sets.size();
  f.sets = std::move(sets.sets);
  f.coef.resize(n);
  f.cond_var.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = f.sets[i];
    const auto k = static_cast<Eigen::Index>(s.size());
    const double kii = cov(i, i);
    double d = kii;
    if (k > 0) {
      Eigen::MatrixXd kss(k, k);
      Eigen::VectorXd ksi(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        ksi(a) = cov(s[a], i);
        for (Eigen::Index b = 0; b <= a; ++b) {
          const double v = cov(s[a], s[b]);
          kss(a, b) = v;
          kss(b, a) = v;
        }
      }
      const LoadedCholesky chol(kss, sill);
      const Eigen::VectorXd b = chol.llt.solve(ksi);
      f.coef[i].assign(b.data(), b.data() + k);
      d = kii - ksi.dot(b);
    }
    if (!(d >= -1e-8 * kii)) {
      const std::size_t orig = original_index ? (*original_index)[i] : i;
      throw NumericalError("non-positive conditional variance " + num(d) + " at sequence position " +
                           std::to_string(i) + " (point " + std::to_string(orig) + ")");
    }
    f.cond_var[i] = std::max(d, 1e-12 * kii);
  }
  return f;
}

}  // namespace detail

/*! Vecchia precision of noisy responses at points taken in the given order.
 *
 * noise may be empty (noise-free) or hold one sd per point.
 */
inline SparsePrecision sparse_precision(std::span<const SpaceTimePoint> ordered_points, const KernelParams& params,
                                        std::span<const double> noise, std::size_t m) {
  if (m < 1) throw InputError("conditioning set size m must be >= 1");
  if (!noise.empty() && noise.size() != ordered_points.size())
    throw InputError("sparse_precision: noise vector length differs from point count");
  auto sets = detail::nearest_predecessors(ordered_points, params, m, [](std::size_t, std::size_t) { return true; });
  auto cov = [&](std::size_t i, std::size_t j) {
    if (i == j) return params.point_variance() + (noise.empty() ? 0.0 : noise[i] * noise[i]);
    return kernel_between(ordered_points[i], ordered_points[j], params);
  };
  return detail::build_factor(std::move(sets), cov, params.sill()).precision();
}

struct PosteriorOptions {
  std::size_t m = 10;
  OrderingMethod ordering = OrderingMethod::maxmin;
  /// Mean used when there are no observations.
  double prior_mean = 0.0;
  /// Known mean; bypasses estimation when set.
  std::optional<double> fixed_mean;
  /// Observations further than this many spatial ranges or temporal ranges from a grid point are not
  /// eligible for its conditioning set. Unset disables truncation.
  std::optional<double> truncation_ranges = 5.0;
  /// Largest observation count for which the constant mean is the dense GLS estimate.
  std::size_t gls_max = 500;
};

/*! Posterior of the latent field at grid points under a joint Vecchia model.
 *
 * The joint sequence is the observations (max-min ordered among
 * themselves) followed by the grid points (ordered among themselves).
 * Each observation conditions on up to m earlier observations; each grid
 * point conditions on up to m earlier entries of the joint sequence. The
 * observation rows do not depend on grid values, so the grid rows alone
 * define the posterior: mean by forward recursion, precision U_gg^T U_gg.
 * The unknown constant mean is estimated first and the model works on
 * residuals from it.
 *
 * All public vectors and the precision are indexed in the caller's grid order.
 */
class VecchiaPosterior {
 public:
  std::vector<double> mean;
  std::vector<double> variance;
  SparsePrecision precision;
  double mean_estimate = 0.0;
  /// "gls", "observation-mean", "prior" or "fixed".
  std::string mean_method;
  std::size_t m = 0;
  OrderingMethod ordering_method = OrderingMethod::maxmin;

  std::size_t n_obs() const { return obs_order_.size(); }
  std::size_t n_grid() const { return grid_order_.size(); }
  const VecchiaFactor& factor() const { return factor_; }

  /// Coefficients a with posterior mean(cell) = a^T z over the observations in their input order;
  /// they sum to one.
  std::vector<double> effective_weights(std::size_t grid_index) const {
    std::vector<double> c(n_obs(), 0.0);
    if (n_obs() == 0) return c;
    walk(grid_index, [&](std::size_t row, double v) {
      const auto& s = factor_.sets[row];
      for (std::size_t k = 0; k < s.size(); ++k)
        if (s[k] < n_obs()) c[obs_order_[s[k]]] += v * factor_.coef[row][k];
    });
    double csum = 0.0;
    for (double x : c) csum += x;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += (1.0 - csum) * mean_weights_[i];
    return c;
  }

  static VecchiaPosterior compute(std::span<const Observation> obs, std::span<const SpaceTimePoint> grid,
                                  const KernelParams& params, const PosteriorOptions& opt) {
    if (grid.empty()) throw InputError("posterior needs at least one grid point");
    if (opt.m < 1) throw InputError("conditioning set size m must be >= 1");
    detail::reject_noise_free_duplicates(obs);

    VecchiaPosterior post;
    post.m = opt.m;
    post.ordering_method = opt.ordering;
    const std::size_t p = obs.size();
    const std::size_t g = grid.size();

    // constant mean
    post.mean_weights_.assign(p, 0.0);
    if (opt.fixed_mean) {
      post.mean_estimate = *opt.fixed_mean;
      post.mean_method = "fixed";
    } else if (p == 0) {
      post.mean_estimate = opt.prior_mean;
      post.mean_method = "prior";
    } else if (p <= opt.gls_max) {
      const OrdinaryKriging ok(obs, params);
      post.mean_estimate = ok.gls_mean();
      const Eigen::VectorXd w = ok.gls_weights();
      post.mean_weights_.assign(w.data(), w.data() + w.size());
      post.mean_method = "gls";
    } else {
      double s = 0.0;
      for (const auto& o : obs) s += o.value();
      post.mean_estimate = s / static_cast<double>(p);
      post.mean_weights_.assign(p, 1.0 / static_cast<double>(p));
      post.mean_method = "observation-mean";
    }
    if (post.mean_method == "fixed" || post.mean_method == "prior") post.mean_weights_.assign(p, 0.0);

    // joint sequence
    const auto obs_pts = points_of(obs);
    post.obs_order_ = make_ordering(obs_pts, params, opt.ordering).order();
    post.grid_order_ = make_ordering(grid, params, opt.ordering).order();
    std::vector<SpaceTimePoint> seq;
    std::vector<double> extra;  // diagonal additions beyond the sill
    std::vector<std::size_t> original;
    seq.reserve(p + g);
    for (std::size_t k : post.obs_order_) {
      seq.push_back(obs_pts[k]);
      extra.push_back(params.nugget() + obs[k].noise_sd() * obs[k].noise_sd());
      original.push_back(k);
    }
    for (std::size_t k : post.grid_order_) {
      seq.push_back(grid[k]);
      extra.push_back(params.nugget());
      original.push_back(k);
    }

    const double rs = opt.truncation_ranges.value_or(0.0) * params.spatial_range_km();
    const double rt = opt.truncation_ranges.value_or(0.0) * params.temporal_range_days();
    auto accept = [&](std::size_t row, std::size_t cand) {
      if (!opt.truncation_ranges || row < p || cand >= p) return true;
      return great_circle_km(seq[row], seq[cand]) <= rs && std::abs(seq[row].time() - seq[cand].time()) <= rt;
    };
    auto sets = detail::nearest_predecessors(seq, params, opt.m, accept);
    auto cov = [&](std::size_t i, std::size_t j) {
      if (i == j) return params.sill() + extra[i];
      return kernel_between(seq[i], seq[j], params);
    };
    post.factor_ = detail::build_factor(std::move(sets), cov, params.sill(), &original);

    // grid position lookup: grid index -> sequence row
    post.grid_row_.assign(g, 0);
    for (std::size_t k = 0; k < g; ++k) post.grid_row_[post.grid_order_[k]] = p + k;

    // posterior mean by forward recursion on residuals
    std::vector<double> w(p + g, 0.0);
    for (std::size_t k = 0; k < p; ++k) w[k] = obs[post.obs_order_[k]].value() - post.mean_estimate;
    for (std::size_t i = p; i < p + g; ++i) {
      double acc = 0.0;
      const auto& s = post.factor_.sets[i];
      for (std::size_t k = 0; k < s.size(); ++k) acc += post.factor_.coef[i][k] * w[s[k]];
      w[i] = acc;
    }
    post.mean.resize(g);
    for (std::size_t k = 0; k < g; ++k) post.mean[post.grid_order_[k]] = post.mean_estimate + w[p + k];

    // precision over grid points in grid order
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t i = p; i < p + g; ++i) {
      const int r = static_cast<int>(post.grid_order_[i - p]);
      const double s = 1.0 / std::sqrt(post.factor_.cond_var[i]);
      t.emplace_back(r, r, s);
      const auto& set = post.factor_.sets[i];
      for (std::size_t k = 0; k < set.size(); ++k)
        if (set[k] >= p)
          t.emplace_back(r, static_cast<int>(post.grid_order_[set[k] - p]), -post.factor_.coef[i][k] * s);
    }
    Eigen::SparseMatrix<double> u(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(g));
    u.setFromTriplets(t.begin(), t.end());
    const Eigen::SparseMatrix<double> q = Eigen::SparseMatrix<double>(u.transpose()) * u;
    post.precision = SparsePrecision::from_symmetric(q);

    // marginal variances: row k of U^-1 is v_k * sqrt(d_k) with v = row of (I - B_gg)^-1
    post.variance.resize(g);
    for (std::size_t gi = 0; gi < g; ++gi) {
      double var = 0.0;
      post.walk(gi, [&](std::size_t row, double v) { var += v * v * post.factor_.cond_var[row]; });
      post.variance[gi] = var;
    }
    return post;
  }

 private:
  /*! Visits (row, v_row) for the nonzeros of row `grid_index` of (I - B_gg)^{-1},
   *  i.e. every grid row reachable through conditioning sets, in decreasing sequence order.
   */
  template <class Visit>
  void walk(std::size_t grid_index, Visit&& visit) const {
    const std::size_t p = n_obs();
    const std::size_t start = grid_row_.at(grid_index);
    scratch_acc_.resize(factor_.size(), 0.0);
    scratch_mark_.resize(factor_.size(), 0);
    std::vector<std::size_t> reach{start};
    scratch_mark_[start] = 1;
    for (std::size_t h = 0; h < reach.size(); ++h) {
      for (std::size_t j : factor_.sets[reach[h]]) {
        if (j >= p && !scratch_mark_[j]) {
          scratch_mark_[j] = 1;
          reach.push_back(j);
        }
      }
    }
    std::sort(reach.begin(), reach.end(), std::greater<>());
    for (std::size_t row : reach) {
      const double v = (row == start ? 1.0 : 0.0) + scratch_acc_[row];
      visit(row, v);
      const auto& s = factor_.sets[row];
      for (std::size_t k = 0; k < s.size(); ++k)
        if (s[k] >= p) scratch_acc_[s[k]] += v * factor_.coef[row][k];
    }
    for (std::size_t row : reach) {
      scratch_acc_[row] = 0.0;
      scratch_mark_[row] = 0;
    }
  }

  VecchiaFactor factor_;
  std::vector<std::size_t> obs_order_;
  std::vector<std::size_t> grid_order_;
  std::vector<std::size_t> grid_row_;
  std::vector<double> mean_weights_;
  mutable std::vector<double> scratch_acc_;
  mutable std::vector<char> scratch_mark_;
};

inline VecchiaPosterior posterior_precision(std::span<const Observation> obs, std::span<const SpaceTimePoint> grid,
                                            const KernelParams& params, const PosteriorOptions& options) {
  return VecchiaPosterior::compute(obs, grid, params, options);
}

inline VecchiaPosterior posterior_precision(std::span<const Observation> obs, std::span<const SpaceTimePoint> grid,
                                            const KernelParams& params, std::size_t m) {
  PosteriorOptions o;
  o.m = m;
  return VecchiaPosterior::compute(obs, grid, params, o);
}

}  // namespace gpfuse
