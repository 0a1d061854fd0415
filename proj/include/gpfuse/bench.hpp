/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "gpfuse/core_types.hpp"
#include "gpfuse/kriging.hpp"
#include "gpfuse/rng.hpp"
#include "gpfuse/synth.hpp"
#include "gpfuse/trends.hpp"
#include "gpfuse/vecchia.hpp"

namespace gpfuse {

/// The dense path allocates p x p matrices; beyond this it is refused rather than left to exhaust memory.
inline constexpr std::size_t kDenseLimit = 3000;

/// Posterior mean and marginal variance at grid cells from the dense model.
struct DensePosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  double mean_estimate = 0.0;
};

/*! Exact posterior by one dense Cholesky factorization, with the GLS
 *  constant mean. Only the marginal variances are formed, which is what a
 *  gridded product reports.
 */
inline DensePosterior dense_posterior(std::span<const Observation> obs, std::span<const SpaceTimePoint> grid,
                                      const KernelParams& params) {
  if (obs.size() > kDenseLimit)
    throw InputError("dense posterior refuses p = " + std::to_string(obs.size()) + " > " + std::to_string(kDenseLimit) +
                     " observations; use the Vecchia path");
  DensePosterior out;
  const auto g = static_cast<Eigen::Index>(grid.size());
  if (obs.empty()) {
    out.mean = Eigen::VectorXd::Zero(g);
    out.variance = Eigen::VectorXd::Constant(g, params.point_variance());
    return out;
  }
  detail::reject_noise_free_duplicates(obs);
  const auto pts = points_of(obs);
  const detail::LoadedCholesky chol(build_cov(pts, params, noise_of(obs)), params.sill());
  Eigen::MatrixXd cog = build_cross_cov(pts, grid, params);
  const Eigen::VectorXd z = values_of(obs);
  const Eigen::VectorXd ones = chol.llt.solve(Eigen::VectorXd::Ones(z.size()));
  out.mean_estimate = ones.dot(z) / ones.sum();
  const Eigen::VectorXd w = chol.llt.solve((z.array() - out.mean_estimate).matrix());
  out.mean = (cog.transpose() * w).array() + out.mean_estimate;
  chol.llt.matrixL().solveInPlace(cog);
  out.variance = params.point_variance() - cog.colwise().squaredNorm().transpose().array();
  return out;
}

struct BenchOptions {
  std::vector<std::size_t> sizes;
  std::size_t m = 10;
  KernelParams params;
  std::uint64_t seed = 1;
  std::size_t repeats = 5;
  GridSpec grid{1.0, 0.0, 20.0, 0.0, 20.0, 0};
  bool dense = true;
  bool vecchia = true;
};

struct BenchRow {
  std::string path;
  std::size_t p = 0;
  /// Median wall-clock seconds; empty when the size was skipped.
  std::optional<double> seconds;
  std::string note;
};

struct BenchTable {
  std::vector<BenchRow> rows;
  std::optional<double> dense_slope;
  std::optional<double> vecchia_slope;
  std::string machine;
  unsigned threads = 1;
  std::size_t m = 10;
  std::size_t grid_cells = 0;
};

/// Least-squares slope of log(seconds) against log(p).
inline std::optional<double> loglog_slope(const std::vector<BenchRow>& rows, const std::string& path) {
  std::vector<double> x, y;
  for (const auto& r : rows)
    if (r.path == path && r.seconds && *r.seconds > 0.0) {
      x.push_back(std::log(static_cast<double>(r.p)));
      y.push_back(std::log(*r.seconds));
    }
  if (x.size() < 2) return std::nullopt;
  return fit_line(x, y).slope;
}

inline std::string machine_description() {
  std::string model;
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 1);
      while (!model.empty() && model.front() == ' ') model.erase(model.begin());
      break;
    }
  if (model.empty()) model = "unknown cpu";
  return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
}

namespace detail {

template <class F>
double median_seconds(std::size_t repeats, F&& run) {
  std::vector<double> t;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

/// Scattered observations over the grid's day; values are noise around a level since timing ignores them.
inline std::vector<Observation> bench_observations(std::size_t p, const GridSpec& g, std::uint64_t seed) {
  Rng rng(seed);
  const auto pts = random_points(p, g.lat_min(), g.lat_max(), g.lon_min(), g.lon_max(), g.day(), g.day() + 1.0, rng);
  std::vector<Observation> obs;
  obs.reserve(p);
  for (const auto& x : pts) obs.emplace_back(x, 400.0 + rng.normal(), 0.5);
  return obs;
}

}  // namespace detail

/*! Times the dense and Vecchia posteriors over `sizes` observations on a
 *  fixed grid. Each timing is the median of `repeats` runs on a monotonic
 *  clock; dense sizes above kDenseLimit are recorded as skipped.
 */
inline BenchTable bench_vecchia_scaling(const BenchOptions& opt) {
  if (opt.sizes.empty()) throw InputError("bench needs at least one size");
  if (!std::is_sorted(opt.sizes.begin(), opt.sizes.end())) throw InputError("bench sizes must be ascending");
  if (opt.repeats < 1) throw InputError("bench repeats must be >= 1");
  BenchTable table;
  table.machine = machine_description();
  table.threads = static_cast<unsigned>(Eigen::nbThreads());
  table.m = opt.m;
  table.grid_cells = opt.grid.size();
  std::vector<SpaceTimePoint> grid;
  for (std::size_t i = 0; i < opt.grid.size(); ++i) grid.push_back(opt.grid.cell_center(i));

  for (std::size_t p : opt.sizes) {
    const auto obs = detail::bench_observations(p, opt.grid, opt.seed + p);
    if (opt.dense) {
      BenchRow row{"dense", p, std::nullopt, ""};
      if (p > kDenseLimit) {
        row.note = "skipped: above dense limit";
      } else {
        row.seconds = detail::median_seconds(opt.repeats, [&] { (void)dense_posterior(obs, grid, opt.params); });
      }
      table.rows.push_back(row);
    }
    if (opt.vecchia) {
      PosteriorOptions po;
      po.m = opt.m;
      BenchRow row{"vecchia", p, std::nullopt, ""};
      row.seconds = detail::median_seconds(opt.repeats, [&] { (void)posterior_precision(obs, grid, opt.params, po); });
      table.rows.push_back(row);
    }
  }
  table.dense_slope = loglog_slope(table.rows, "dense");
  table.vecchia_slope = loglog_slope(table.rows, "vecchia");
  return table;
}

inline std::string format_bench(const BenchTable& t) {
  char buf[64];
  std::string s = "# machine: " + t.machine + "\n# threads: " + std::to_string(t.threads) +
                  "\n# m: " + std::to_string(t.m) + "\n# grid cells: " + std::to_string(t.grid_cells) +
                  "\n# timing: median of repeated runs, steady clock\npath,p,seconds,note\n";
  for (const auto& r : t.rows) {
    std::string sec = "";
    if (r.seconds) {
      std::snprintf(buf, sizeof buf, "%.6g", *r.seconds);
      sec = buf;
    }
    s += r.path + "," + std::to_string(r.p) + "," + sec + "," + r.note + "\n";
  }
  auto slope = [&](const char* name, const std::optional<double>& v) {
    if (!v) return;
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    s += std::string("# ") + name + " log-log slope: " + buf + "\n";
  };
  slope("dense", t.dense_slope);
  slope("vecchia", t.vecchia_slope);
  return s;
}

}  // namespace gpfuse
