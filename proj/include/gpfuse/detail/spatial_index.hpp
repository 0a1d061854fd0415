/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "gpfuse/core_types.hpp"
#include "gpfuse/covariance.hpp"

namespace gpfuse::detail {

/*! k-d tree over space-time points for scaled-distance queries.
 *
 * Points are embedded in R^4 as (unit-sphere xyz * R / spatial_range,
 * t / temporal_range). Chord length never exceeds great-circle length, so
 * the Euclidean distance in the embedding is a lower bound of the scaled
 * distance; box bounds computed in the embedding are therefore valid
 * pruning bounds for exact scaled-distance searches. All distances handed
 * to callers are exact scaled distances.
 */
class SpaceTimeIndex {
 public:
  using Embedded = std::array<double, 4>;

  struct Neighbor {
    double distance;
    std::size_t rank;
    std::size_t id;
    bool operator<(const Neighbor& o) const {
      return distance < o.distance || (distance == o.distance && rank < o.rank);
    }
  };

  /// `rank` (optional) attaches an order key per point used by rank-limited queries.
  SpaceTimeIndex(std::span<const SpaceTimePoint> points, const KernelParams& params,
                 std::vector<std::size_t> rank = {})
      : points_(points), params_(params), rank_(std::move(rank)) {
    if (rank_.empty()) {
      rank_.resize(points.size());
      std::iota(rank_.begin(), rank_.end(), std::size_t{0});
    }
    emb_.reserve(points.size());
    for (const auto& p : points) emb_.push_back(embed(p, params));
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) build(0, points.size());
  }

  static Embedded embed(const SpaceTimePoint& p, const KernelParams& params) {
    constexpr double deg = kPi / 180.0;
    const double s = kEarthRadiusKm / params.spatial_range_km();
    const double cl = std::cos(p.lat() * deg);
    return {cl * std::cos(p.lon() * deg) * s, cl * std::sin(p.lon() * deg) * s, std::sin(p.lat() * deg) * s,
            p.time() / params.temporal_range_days()};
  }

  double exact(std::size_t i, const SpaceTimePoint& q) const {
    return scaled_distance_value(points_[i], q, params_);
  }

  /*! The k nearest points with rank < rank_limit that satisfy `accept`,
   *  sorted by (distance, rank). Only points within max_distance are returned.
   */
  template <class Accept>
  std::vector<Neighbor> nearest(const SpaceTimePoint& query, std::size_t k, std::size_t rank_limit, Accept&& accept,
                                double max_distance = std::numeric_limits<double>::infinity()) const {
    std::vector<Neighbor> heap;  // max-heap on (distance, rank)
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    const Embedded q = embed(query, params_);
    search_knn(0, query, q, k, rank_limit, accept, max_distance, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  std::vector<Neighbor> nearest(const SpaceTimePoint& query, std::size_t k, std::size_t rank_limit) const {
    return nearest(query, k, rank_limit, [](std::size_t) { return true; });
  }

  /// Calls visit(id) for every point whose embedding lies within `radius` of the query (a superset of
  /// the exact scaled-distance ball).
  template <class Visit>
  void within(const SpaceTimePoint& query, double radius, Visit&& visit) const {
    if (nodes_.empty()) return;
    const Embedded q = embed(query, params_);
    search_ball(0, q, radius, visit);
  }

 private:
  struct Node {
    Embedded lo, hi;
    std::size_t begin, end;
    std::ptrdiff_t left = -1, right = -1;
    std::size_t min_rank;
  };

  static constexpr std::size_t kLeafSize = 16;

  std::size_t build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo.fill(std::numeric_limits<double>::infinity());
    node.hi.fill(-std::numeric_limits<double>::infinity());
    node.min_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = emb_[order_[i]];
      for (int d = 0; d < 4; ++d) {
        node.lo[d] = std::min(node.lo[d], e[d]);
        node.hi[d] = std::max(node.hi[d], e[d]);
      }
      node.min_rank = std::min(node.min_rank, rank_[order_[i]]);
    }
    const std::size_t id = nodes_.size();
    nodes_.push_back(node);
    if (end - begin > kLeafSize) {
      int axis = 0;
      double widest = -1.0;
      for (int d = 0; d < 4; ++d) {
        if (node.hi[d] - node.lo[d] > widest) {
          widest = node.hi[d] - node.lo[d];
          axis = d;
        }
      }
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                       order_.begin() + static_cast<std::ptrdiff_t>(mid),
                       order_.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](std::size_t a, std::size_t b) { return emb_[a][axis] < emb_[b][axis]; });
      const std::size_t l = build(begin, mid);
      const std::size_t r = build(mid, end);
      nodes_[id].left = static_cast<std::ptrdiff_t>(l);
      nodes_[id].right = static_cast<std::ptrdiff_t>(r);
    }
    return id;
  }

  static double box_bound(const Node& n, const Embedded& q) {
    double s = 0.0;
    for (int d = 0; d < 4; ++d) {
      double g = 0.0;
      if (q[d] < n.lo[d]) g = n.lo[d] - q[d];
      else if (q[d] > n.hi[d]) g = q[d] - n.hi[d];
      s += g * g;
    }
    return std::sqrt(s);
  }

  // Slack keeps rounding in the embedding from pruning exact ties.
  static bool beyond(double bound, double limit) { return bound > limit * (1.0 + 1e-9) + 1e-12; }

  template <class Accept>
  void search_knn(std::size_t id, const SpaceTimePoint& query, const Embedded& q, std::size_t k,
                  std::size_t rank_limit, Accept& accept, double max_distance, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.min_rank >= rank_limit) return;
    const double limit = heap.size() == k ? heap.front().distance : max_distance;
    if (beyond(box_bound(n, q), limit)) return;
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t j = order_[i];
        if (rank_[j] >= rank_limit || !accept(j)) continue;
        const double d = exact(j, query);
        if (d > max_distance) continue;
        const Neighbor cand{d, rank_[j], j};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const auto l = static_cast<std::size_t>(n.left);
    const auto r = static_cast<std::size_t>(n.right);
    if (box_bound(nodes_[l], q) <= box_bound(nodes_[r], q)) {
      search_knn(l, query, q, k, rank_limit, accept, max_distance, heap);
      search_knn(r, query, q, k, rank_limit, accept, max_distance, heap);
    } else {
      search_knn(r, query, q, k, rank_limit, accept, max_distance, heap);
      search_knn(l, query, q, k, rank_limit, accept, max_distance, heap);
    }
  }

  template <class Visit>
  void search_ball(std::size_t id, const Embedded& q, double radius, Visit& visit) const {
    const Node& n = nodes_[id];
    if (beyond(box_bound(n, q), radius)) return;
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) visit(order_[i]);
      return;
    }
    search_ball(static_cast<std::size_t>(n.left), q, radius, visit);
    search_ball(static_cast<std::size_t>(n.right), q, radius, visit);
  }

  std::span<const SpaceTimePoint> points_;
  KernelParams params_;
  std::vector<std::size_t> rank_;
  std::vector<Embedded> emb_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace gpfuse::detail
