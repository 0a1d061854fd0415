/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpfuse/column_ops.hpp"
#include "gpfuse/core_types.hpp"

namespace gpfuse {

namespace detail {

/// Neumaier compensated summation; keeps reductions insensitive to ordering.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <class Range>
double compensated_mean(const Range& r) {
  CompensatedSum s;
  std::size_t n = 0;
  for (double x : r) {
    s.add(x);
    ++n;
  }
  return n ? s.value() / static_cast<double>(n) : 0.0;
}

/// Smallest absolute longitude difference, in degrees.
inline double lon_separation(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace detail

struct CoincidenceCriteria {
  double lat_halfwidth_deg = 1.5;
  double lon_halfwidth_deg = 2.5;
  double time_window_min = 60.0;
  std::size_t n_min = 10;
  /// When set, coincidences with fewer than n_min soundings are dropped.
  bool daily_average = false;

  void validate() const {
    if (!(lat_halfwidth_deg > 0.0) || !(lon_halfwidth_deg > 0.0) || !(time_window_min > 0.0) || n_min < 1)
      throw InputError("coincidence criteria must all be positive");
  }
};

/// One reference sample: station column, plus the model column at the station when available.
struct StationSample {
  double time = 0.0;
  double value = 0.0;
  std::optional<double> model;
};

class StationRecord {
 public:
  StationRecord(int id, double lat, double lon, std::vector<StationSample> samples)
      : id_(id), location_(SpaceTimePoint::make(lat, lon, 0.0)), samples_(std::move(samples)) {
    for (std::size_t k = 1; k < samples_.size(); ++k)
      if (!(samples_[k].time > samples_[k - 1].time))
        throw InputError("station " + std::to_string(id) + ": sample times are not strictly increasing at sample " +
                         std::to_string(k));
  }

  int id() const { return id_; }
  double lat() const { return location_.lat(); }
  double lon() const { return location_.lon(); }
  const std::vector<StationSample>& samples() const { return samples_; }

  /// Reference profile x_val for a day, convolved with each sounding's kernel when both exist.
  void set_validation_profile(int day, std::vector<double> profile) { val_profile_[day] = std::move(profile); }
  /// Model profile x_mod at the station for a day.
  void set_model_profile(int day, std::vector<double> profile) { model_profile_[day] = std::move(profile); }
  const std::vector<double>* validation_profile(int day) const { return find(val_profile_, day); }
  const std::vector<double>* model_profile(int day) const { return find(model_profile_, day); }

 private:
  static const std::vector<double>* find(const std::map<int, std::vector<double>>& m, int day) {
    const auto it = m.find(day);
    return it == m.end() ? nullptr : &it->second;
  }

  int id_;
  SpaceTimePoint location_;
  std::vector<StationSample> samples_;
  std::map<int, std::vector<double>> val_profile_;
  std::map<int, std::vector<double>> model_profile_;
};

/// A product sounding or cell value to be validated, with optional retrieval geometry and model column.
struct ProductSounding {
  Observation obs;
  std::optional<SoundingGeometry> geometry;
  /// x_mc: model profile at the sounding convolved with its kernel.
  std::optional<double> model_column;
  /// h^T x_a; taken from the geometry when that is present.
  std::optional<double> prior_column;

  std::optional<double> prior() const {
    if (geometry) return geometry->prior_column();
    return prior_column;
  }
};

struct MatchedSounding {
  std::size_t index = 0;
  double time = 0.0;
  /// x-hat
  double value = 0.0;
  /// x_est
  double reference = 0.0;
  std::optional<double> model;
  std::optional<double> model_reference;
  std::optional<double> prior;
};

struct Matchup {
  int station = 0;
  int day = 0;
  /// Midpoint of the 90-minute station average used as reference.
  double reference_time = 0.0;
  double station_column = 0.0;
  std::vector<MatchedSounding> members;
};

struct StationAverage {
  double midpoint = 0.0;
  double value = 0.0;
  std::optional<double> model;
  std::size_t n_samples = 0;
};

/*! 90-minute station averages for one day.
 *
 * Windows are aligned to the start of the day (00:00-01:30, 01:30-03:00,
 * ...). Each average is the unweighted mean of the samples falling in its
 * window; windows with fewer than three samples are discarded.
 */
inline std::vector<StationAverage> station_averages(const StationRecord& st, int day) {
  constexpr double width = 1.5 / 24.0;
  std::vector<StationAverage> out;
  const auto& s = st.samples();
  auto it = std::lower_bound(s.begin(), s.end(), static_cast<double>(day),
                             [](const StationSample& a, double t) { return a.time < t; });
  for (int b = 0; b < 16; ++b) {
    const double lo = day + b * width;
    const double hi = b == 15 ? day + 1.0 : day + (b + 1) * width;
    detail::CompensatedSum v, mv;
    std::size_t n = 0, nm = 0;
    for (; it != s.end() && it->time < hi; ++it) {
      if (it->time < lo) continue;
      v.add(it->value);
      ++n;
      if (it->model) {
        mv.add(*it->model);
        ++nm;
      }
    }
    if (n < 3) continue;
    StationAverage a;
    a.midpoint = lo + 0.5 * width;
    a.value = v.value() / static_cast<double>(n);
    if (nm == n) a.model = mv.value() / static_cast<double>(n);
    a.n_samples = n;
    out.push_back(a);
  }
  return out;
}

/*! Groups product soundings into station/day coincidences.
 *
 * A sounding belongs to station j on day floor(t) if it lies inside the
 * lat/lon box around the station. The station reference is the 90-minute
 * average whose midpoint is nearest the mean sounding time, provided it is
 * within the time window; only soundings within the window of that
 * midpoint are kept. x_est uses the station's reference profile convolved
 * with each sounding's kernel when both are available, otherwise the
 * 90-minute average column.
 */
inline std::vector<Matchup> match_coincidences(std::span<const ProductSounding> product,
                                               std::span<const StationRecord> stations,
                                               const CoincidenceCriteria& criteria) {
  criteria.validate();
  const double window = criteria.time_window_min / 1440.0;
  std::vector<Matchup> out;
  for (const auto& st : stations) {
    std::map<int, std::vector<std::size_t>> by_day;
    for (std::size_t i = 0; i < product.size(); ++i) {
      const auto& p = product[i].obs.point();
      if (std::abs(p.lat() - st.lat()) > criteria.lat_halfwidth_deg) continue;
      if (detail::lon_separation(p.lon(), st.lon()) > criteria.lon_halfwidth_deg) continue;
      by_day[static_cast<int>(std::floor(p.time()))].push_back(i);
    }
    for (const auto& [day, idx] : by_day) {
      const auto avgs = station_averages(st, day);
      if (avgs.empty()) continue;
      detail::CompensatedSum ts;
      for (std::size_t i : idx) ts.add(product[i].obs.point().time());
      const double tbar = ts.value() / static_cast<double>(idx.size());
      const StationAverage* best = nullptr;
      for (const auto& a : avgs)
        if (!best || std::abs(a.midpoint - tbar) < std::abs(best->midpoint - tbar)) best = &a;
      if (std::abs(best->midpoint - tbar) > window) continue;

      Matchup mu;
      mu.station = st.id();
      mu.day = day;
      mu.reference_time = best->midpoint;
      mu.station_column = best->value;
      const auto* val = st.validation_profile(day);
      const auto* mod = st.model_profile(day);
      for (std::size_t i : idx) {
        const auto& ps = product[i];
        const double t = ps.obs.point().time();
        if (std::abs(t - best->midpoint) > window) continue;
        MatchedSounding m;
        m.index = i;
        m.time = t;
        m.value = ps.obs.value();
        m.reference = (val && ps.geometry) ? convolve_profile(*ps.geometry, *val) : best->value;
        m.model = ps.model_column;
        if (mod && ps.geometry) m.model_reference = convolve_profile(*ps.geometry, *mod);
        else m.model_reference = best->model;
        m.prior = ps.prior();
        mu.members.push_back(m);
      }
      if (mu.members.empty()) continue;
      if (criteria.daily_average && mu.members.size() < criteria.n_min) continue;
      out.push_back(std::move(mu));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Matchup& a, const Matchup& b) { return a.station < b.station || (a.station == b.station && a.day < b.day); });
  return out;
}

struct StationBias {
  int station = 0;
  std::size_t n_days = 0;
  double bias = 0.0;
};

/// Station-level and day-level statistics of a per-coincidence quantity.
struct HierarchyStats {
  std::size_t n_stations = 0;
  double overall = 0.0;
  std::vector<StationBias> stations;
  /// Spread of station means (J - 1 denominator); zero and flagged when J < 2.
  double between_std = 0.0;
  /// Mean over stations of the within-station std of daily means; stations with one day are skipped.
  double within_std = 0.0;
  bool between_undefined = false;
  std::size_t single_day_stations = 0;
};

namespace detail {

/// daily[j] holds the daily means of station j, grouped in station order.
inline HierarchyStats hierarchy(const std::vector<std::pair<int, std::vector<double>>>& daily) {
  HierarchyStats h;
  h.n_stations = daily.size();
  for (const auto& [id, days] : daily) h.stations.push_back({id, days.size(), compensated_mean(days)});
  CompensatedSum all;
  for (const auto& s : h.stations) all.add(s.bias);
  h.overall = h.n_stations ? all.value() / static_cast<double>(h.n_stations) : 0.0;

  if (h.n_stations >= 2) {
    CompensatedSum ss;
    for (const auto& s : h.stations) ss.add((s.bias - h.overall) * (s.bias - h.overall));
    h.between_std = std::sqrt(ss.value() / static_cast<double>(h.n_stations - 1));
  } else {
    h.between_undefined = true;
  }

  CompensatedSum within;
  std::size_t used = 0;
  for (std::size_t j = 0; j < daily.size(); ++j) {
    const auto& days = daily[j].second;
    if (days.size() < 2) {
      ++h.single_day_stations;
      continue;
    }
    CompensatedSum ss;
    for (double e : days) ss.add((e - h.stations[j].bias) * (e - h.stations[j].bias));
    within.add(std::sqrt(ss.value() / static_cast<double>(days.size() - 1)));
    ++used;
  }
  h.within_std = used ? within.value() / static_cast<double>(used) : 0.0;
  return h;
}

template <class F>
std::vector<std::pair<int, std::vector<double>>> daily_means(std::span<const Matchup> matchups, F&& diff) {
  std::vector<std::pair<int, std::vector<double>>> out;
  for (const auto& mu : matchups) {
    CompensatedSum s;
    for (const auto& m : mu.members) s.add(diff(m));
    const double e = s.value() / static_cast<double>(mu.members.size());
    if (out.empty() || out.back().first != mu.station) out.emplace_back(mu.station, std::vector<double>{});
    out.back().second.push_back(e);
  }
  return out;
}

/// Checks that matchups arrive grouped by station (the order match_coincidences produces).
inline void require_grouped(std::span<const Matchup> matchups) {
  std::vector<int> seen;
  for (std::size_t k = 0; k < matchups.size(); ++k) {
    if (matchups[k].members.empty()) throw InputError("matchup " + std::to_string(k) + " has no members");
    if (k > 0 && matchups[k].station == matchups[k - 1].station) continue;
    if (std::find(seen.begin(), seen.end(), matchups[k].station) != seen.end())
      throw InputError("matchups of station " + std::to_string(matchups[k].station) + " are not contiguous");
    seen.push_back(matchups[k].station);
  }
}

inline bool has_model(std::span<const Matchup> matchups) {
  if (matchups.empty()) return false;
  for (const auto& mu : matchups)
    for (const auto& m : mu.members)
      if (!m.model || !m.model_reference) return false;
  return true;
}

}  // namespace detail

/// Daily errors x-hat - x_est summarized as overall bias, station biases, s_b and s_d.
inline HierarchyStats observation_error_summary(std::span<const Matchup> matchups) {
  detail::require_grouped(matchups);
  return detail::hierarchy(detail::daily_means(matchups, [](const MatchedSounding& m) { return m.value - m.reference; }));
}

struct ColocationStats {
  double s_mb = 0.0;
  double s_md = 0.0;
  double s_m = 0.0;
  /// Set when model columns were missing and the configured constant was used.
  bool fallback = false;
  bool between_undefined = false;
};

inline double colocation_combine(double s_mb, double s_md) { return std::sqrt(s_mb * s_mb + s_md * s_md); }

/// Model-based co-location error from x_mc - x_ref; falls back to a constant when model columns are missing.
inline ColocationStats colocation_error(std::span<const Matchup> matchups, double fallback = 0.0) {
  detail::require_grouped(matchups);
  ColocationStats c;
  if (!detail::has_model(matchups)) {
    c.fallback = true;
    c.s_m = fallback;
    return c;
  }
  const auto h =
      detail::hierarchy(detail::daily_means(matchups, [](const MatchedSounding& m) { return *m.model - *m.model_reference; }));
  c.s_mb = h.between_std;
  c.s_md = h.within_std;
  c.between_undefined = h.between_undefined;
  c.s_m = colocation_combine(c.s_mb, c.s_md);
  return c;
}

struct ClampedValue {
  double value = 0.0;
  bool clamped = false;
};

/// sqrt(s_b^2 + s_d^2 - s_m^2 - s_v^2), clamped at zero.
inline ClampedValue systematic_error(double s_b, double s_d, double s_m, double s_v) {
  if (s_b < 0.0 || s_d < 0.0 || s_m < 0.0 || s_v < 0.0) throw InputError("systematic_error: inputs must be >= 0");
  const double r = s_b * s_b + s_d * s_d - s_m * s_m - s_v * s_v;
  if (r < 0.0) return {0.0, true};
  return {std::sqrt(r), false};
}

struct RandomStats {
  double s_e = 0.0;
  double s_me = 0.0;
  double s_r = 0.0;
  bool clamped = false;
  /// No model columns, s_me taken as zero.
  bool model_missing = false;
  std::size_t skipped_stations = 0;
};

inline ClampedValue random_from_std(double s_e, double s_me) {
  const double r = s_e * s_e - s_me * s_me;
  if (r < 0.0) return {0.0, true};
  return {std::sqrt(r), false};
}

namespace detail {

/// Mean over stations of the pooled within-coincidence std of `value` centered on its coincidence mean.
template <class F>
double pooled_within_std(std::span<const Matchup> matchups, F&& value, std::size_t& skipped) {
  CompensatedSum total;
  std::size_t used = 0;
  skipped = 0;
  std::size_t k = 0;
  while (k < matchups.size()) {
    const int station = matchups[k].station;
    CompensatedSum ss;
    std::size_t n = 0;
    for (; k < matchups.size() && matchups[k].station == station; ++k) {
      CompensatedSum s;
      for (const auto& m : matchups[k].members) s.add(value(m));
      const double mean = s.value() / static_cast<double>(matchups[k].members.size());
      for (const auto& m : matchups[k].members) {
        const double e = value(m) - mean;
        ss.add(e * e);
      }
      n += matchups[k].members.size();
    }
    if (n < 2) {
      ++skipped;
      continue;
    }
    total.add(std::sqrt(ss.value() / static_cast<double>(n - 1)));
    ++used;
  }
  return used ? total.value() / static_cast<double>(used) : 0.0;
}

}  // namespace detail

/*! Random error from within-coincidence spread.
 *
 * Observation errors are the sounding differences x-hat - x_est centered
 * on their coincidence mean, and model errors are x_mc centered on its
 * coincidence mean. s_r = sqrt(s_e^2 - s_me^2), clamped at zero.
 */
inline RandomStats random_error(std::span<const Matchup> matchups) {
  detail::require_grouped(matchups);
  RandomStats r;
  std::size_t skipped_model = 0;
  r.s_e = detail::pooled_within_std(matchups, [](const MatchedSounding& m) { return m.value - m.reference; },
                                    r.skipped_stations);
  bool model = !matchups.empty();
  for (const auto& mu : matchups)
    for (const auto& m : mu.members) model = model && m.model.has_value();
  if (model) r.s_me = detail::pooled_within_std(matchups, [](const MatchedSounding& m) { return *m.model; }, skipped_model);
  else r.model_missing = true;
  const auto c = random_from_std(r.s_e, r.s_me);
  r.s_r = c.value;
  r.clamped = c.clamped;
  return r;
}

/// Expected error of an average of n soundings: sqrt(s_s^2 + s_r^2 / n).
inline double aggregated_error(double s_s, double s_r, double n) {
  if (!(n >= 1.0)) throw InputError("aggregated_error: n must be >= 1");
  return std::sqrt(s_s * s_s + s_r * s_r / n);
}

/// Number of averaged soundings at which random error inflates the total by fraction f.
inline double n_for_error_inflation_ratio(double ratio, double f) {
  if (!(f > 0.0)) throw InputError("n_for_error_inflation: inflation fraction must be > 0");
  if (ratio < 0.0) throw InputError("n_for_error_inflation: variance ratio must be >= 0");
  return ratio / ((1.0 + f) * (1.0 + f) - 1.0);
}

inline double n_for_error_inflation(double s_r, double s_s, double f) {
  if (!(s_s > 0.0)) throw InputError("n_for_error_inflation: systematic error must be > 0");
  return n_for_error_inflation_ratio((s_r * s_r) / (s_s * s_s), f);
}

struct AssessmentOptions {
  double s_v = 0.4;
  /// Co-location error used when model columns are missing.
  double colocation_fallback = 0.0;
};

/// Columns of the land/ocean error tables plus the flags behind them.
struct ErrorSummary {
  std::size_t n_matchups = 0;
  std::size_t n_soundings = 0;
  HierarchyStats observed;
  ColocationStats colocation;
  double s_v = 0.4;
  ClampedValue systematic;
  RandomStats random;

  std::size_t J() const { return observed.n_stations; }
  double overall_bias() const { return observed.overall; }
  double s_b() const { return observed.between_std; }
  double s_d() const { return observed.within_std; }
  double s_m() const { return colocation.s_m; }
  double s_s() const { return systematic.value; }
  double s_r() const { return random.s_r; }
  bool any_clamp() const { return systematic.clamped || random.clamped; }
};

inline ErrorSummary assess_errors(std::span<const Matchup> matchups, const AssessmentOptions& opt = {}) {
  if (opt.s_v < 0.0) throw InputError("validation error s_v must be >= 0");
  ErrorSummary s;
  s.n_matchups = matchups.size();
  for (const auto& mu : matchups) s.n_soundings += mu.members.size();
  s.observed = observation_error_summary(matchups);
  s.colocation = colocation_error(matchups, opt.colocation_fallback);
  s.s_v = opt.s_v;
  s.systematic = systematic_error(s.s_b(), s.s_d(), s.s_m(), s.s_v);
  s.random = random_error(matchups);
  return s;
}

/// Same assessment with each sounding value replaced by its prior column h^T x_a.
inline ErrorSummary prior_error_assessment(std::span<const Matchup> matchups, const AssessmentOptions& opt = {}) {
  std::vector<Matchup> swapped(matchups.begin(), matchups.end());
  for (auto& mu : swapped)
    for (auto& m : mu.members) {
      if (!m.prior)
        throw InputError("prior assessment: station " + std::to_string(mu.station) + " day " + std::to_string(mu.day) +
                         " has a sounding without a prior column");
      m.value = *m.prior;
    }
  return assess_errors(swapped, opt);
}

}  // namespace gpfuse
