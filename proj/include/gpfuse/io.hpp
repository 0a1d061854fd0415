/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpfuse/core_types.hpp"
#include "gpfuse/fusion.hpp"
#include "gpfuse/raster.hpp"
#include "gpfuse/rng.hpp"
#include "gpfuse/sparse_precision.hpp"
#include "gpfuse/synth.hpp"
#include "gpfuse/trends.hpp"
#include "gpfuse/validation.hpp"

namespace gpfuse::io {

// ---------------------------------------------------------------------------------------------
// text primitives

/// Shortest text that parses back to the same double (never more than 17 significant digits).
inline std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what) {}
};

/// Source text split into lines; CR before LF is dropped.
class Lines {
 public:
  Lines(std::string source, std::string text) : source_(std::move(source)) {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines_.push_back(std::move(line));
      start = end + 1;
    }
  }

  std::size_t size() const { return lines_.size(); }
  const std::string& operator[](std::size_t i) const { return lines_[i]; }
  const std::string& source() const { return source_; }
  [[noreturn]] void fail(std::size_t index, const std::string& what) const { throw ParseError(source_, index + 1, what); }

 private:
  std::string source_;
  std::vector<std::string> lines_;
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

/// Splits on runs of spaces/tabs.
inline std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> to_int(std::string_view s) {
  Int v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

namespace detail {

inline double num_field(const Lines& l, std::size_t i, std::string_view field, const char* column) {
  const auto v = to_double(field);
  if (!v) l.fail(i, std::string("column '") + column + "': '" + std::string(field) + "' is not a finite number");
  return *v;
}

template <class Int>
Int int_field(const Lines& l, std::size_t i, std::string_view field, const char* column) {
  const auto v = to_int<Int>(field);
  if (!v) l.fail(i, std::string("column '") + column + "': '" + std::string(field) + "' is not an integer");
  return *v;
}

/// Runs `body`, re-throwing invariant violations with the line number attached.
template <class F>
auto at_line(const Lines& l, std::size_t i, F&& body) {
  try {
    return body();
  } catch (const ParseError&) {
    throw;
  } catch (const InputError& e) {
    l.fail(i, e.what());
  }
}

inline std::size_t expect_header(const Lines& l, std::string_view header) {
  if (l.size() == 0) throw InputError(l.source() + ": file is empty");
  if (l[0] != header) l.fail(0, "expected header '" + std::string(header) + "', found '" + l[0] + "'");
  return 1;
}

inline void check_fields(const Lines& l, std::size_t i, const std::vector<std::string_view>& f, std::size_t n) {
  if (f.size() != n)
    l.fail(i, "expected " + std::to_string(n) + " comma-separated fields, found " + std::to_string(f.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// observations

inline constexpr std::string_view kObservationHeader = "lat,lon,time,value,noise_sd,instrument_id,quality,surface";

inline std::vector<Observation> parse_observations(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  std::vector<Observation> out;
  for (std::size_t i = detail::expect_header(l, kObservationHeader); i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto f = split(l[i], ',');
    detail::check_fields(l, i, f, 8);
    const double lat = detail::num_field(l, i, f[0], "lat");
    const double lon = detail::num_field(l, i, f[1], "lon");
    const double t = detail::num_field(l, i, f[2], "time");
    const double v = detail::num_field(l, i, f[3], "value");
    const double sd = detail::num_field(l, i, f[4], "noise_sd");
    const int inst = detail::int_field<int>(l, i, f[5], "instrument_id");
    bool q;
    if (f[6] == "1" || f[6] == "true") q = true;
    else if (f[6] == "0" || f[6] == "false") q = false;
    else l.fail(i, "column 'quality': expected 1, 0, true or false, found '" + std::string(f[6]) + "'");
    if (!(sd > 0.0)) l.fail(i, "column 'noise_sd': must be > 0");
    out.push_back(detail::at_line(l, i, [&] {
      return Observation(SpaceTimePoint::make(lat, lon, t), v, sd, inst, q, parse_surface(f[7]));
    }));
  }
  return out;
}

inline std::vector<Observation> read_observations(const std::string& path) {
  return parse_observations(path, read_text(path));
}

inline std::string format_observations(std::span<const Observation> obs) {
  std::string s(kObservationHeader);
  s += '\n';
  for (const auto& o : obs) {
    s += fmt(o.point().lat()) + ',' + fmt(o.point().lon()) + ',' + fmt(o.point().time()) + ',' + fmt(o.value()) + ',' +
         fmt(o.noise_sd()) + ',' + std::to_string(o.instrument_id()) + ',' + (o.quality_flag() ? "1" : "0") + ',' +
         std::string(to_string(o.surface())) + '\n';
  }
  return s;
}

inline void write_observations(const std::string& path, std::span<const Observation> obs) {
  write_text(path, format_observations(obs));
}

// ---------------------------------------------------------------------------------------------
// precision (dictionary of keys)

inline std::string format_precision(const SparsePrecision& p) {
  std::string s = "dok v1 " + std::to_string(p.dimension()) + " " + std::to_string(p.nonzeros()) + "\n";
  for (const auto& e : p.entries()) s += std::to_string(e.row) + " " + std::to_string(e.col) + " " + fmt(e.value) + "\n";
  return s;
}

inline SparsePrecision parse_precision(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  if (l.size() == 0) throw InputError(source + ": file is empty");
  const auto h = words(l[0]);
  if (h.size() != 4 || h[0] != "dok" || h[1] != "v1") l.fail(0, "expected header 'dok v1 <n> <nnz>'");
  const auto n = detail::int_field<std::size_t>(l, 0, h[2], "n");
  const auto nnz = detail::int_field<std::size_t>(l, 0, h[3], "nnz");
  std::vector<PrecisionEntry> e;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t i = 1;
  for (; i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto w = words(l[i]);
    if (w.size() != 3) l.fail(i, "expected 'row col value'");
    const auto r = detail::int_field<std::size_t>(l, i, w[0], "row");
    const auto c = detail::int_field<std::size_t>(l, i, w[1], "col");
    const double v = detail::num_field(l, i, w[2], "value");
    if (r >= n || c >= n) l.fail(i, "index out of range for dimension " + std::to_string(n));
    if (r < c) l.fail(i, "entry lies in the upper triangle (row < col)");
    if (!seen.insert({r, c}).second) l.fail(i, "duplicate entry (" + std::to_string(r) + ", " + std::to_string(c) + ")");
    if (!e.empty() && (r < e.back().row || (r == e.back().row && c < e.back().col)))
      l.fail(i, "entries are not sorted by (row, col)");
    e.push_back({r, c, v});
  }
  if (e.size() != nnz)
    throw InputError(source + ": header announces " + std::to_string(nnz) + " entries, found " + std::to_string(e.size()));
  return SparsePrecision(n, std::move(e));
}

inline void write_precision(const std::string& path, const SparsePrecision& p) { write_text(path, format_precision(p)); }
inline SparsePrecision read_precision(const std::string& path) { return parse_precision(path, read_text(path)); }

// ---------------------------------------------------------------------------------------------
// rasters

inline std::string format_raster(const Raster& r) {
  const auto& g = r.extent();
  std::string s = "raster v1 " + fmt(g.lat_min()) + " " + fmt(g.lat_max()) + " " + fmt(g.lon_min()) + " " +
                  fmt(g.lon_max()) + " " + fmt(g.cell_size()) + "\n";
  for (std::size_t row = 0; row < g.n_lat(); ++row) {
    for (std::size_t c = 0; c < g.n_lon(); ++c) {
      if (c) s += ' ';
      s += std::to_string(r.values()[row * g.n_lon() + c]);
    }
    s += '\n';
  }
  return s;
}

/// Rows run south to north, columns west to east.
inline Raster parse_raster(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  if (l.size() == 0) throw InputError(source + ": file is empty");
  const auto h = words(l[0]);
  if (h.size() != 7 || h[0] != "raster" || h[1] != "v1")
    l.fail(0, "expected header 'raster v1 <lat_min> <lat_max> <lon_min> <lon_max> <cell_size>'");
  const GridSpec g = detail::at_line(l, 0, [&] {
    return GridSpec(detail::num_field(l, 0, h[6], "cell_size"), detail::num_field(l, 0, h[2], "lat_min"),
                    detail::num_field(l, 0, h[3], "lat_max"), detail::num_field(l, 0, h[4], "lon_min"),
                    detail::num_field(l, 0, h[5], "lon_max"), 0);
  });
  std::vector<int> v;
  v.reserve(g.size());
  std::size_t rows = 0;
  for (std::size_t i = 1; i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto w = words(l[i]);
    if (w.size() != g.n_lon()) l.fail(i, "expected " + std::to_string(g.n_lon()) + " values per row");
    for (auto x : w) v.push_back(detail::int_field<int>(l, i, x, "value"));
    ++rows;
  }
  if (rows != g.n_lat())
    throw InputError(source + ": expected " + std::to_string(g.n_lat()) + " rows, found " + std::to_string(rows));
  return Raster(g, std::move(v));
}

inline void write_raster(const std::string& path, const Raster& r) { write_text(path, format_raster(r)); }
inline Raster read_raster(const std::string& path) { return parse_raster(path, read_text(path)); }

// ---------------------------------------------------------------------------------------------
// sounding geometries: one line per sounding, '-' when absent

inline std::string format_geometry_line(const SoundingGeometry& g) {
  std::string s = std::to_string(g.n_levels());
  auto section = [&](const std::vector<double>& v) {
    s += " |";
    for (double x : v) s += ' ' + fmt(x);
  };
  section(g.pressure());
  section(g.prior());
  section(g.pwf());
  s += " |";
  const auto& a = g.averaging_kernel();
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) s += ' ' + fmt(a(r, c));
  return s;
}

inline std::string format_geometries(std::span<const std::optional<SoundingGeometry>> g) {
  std::string s = "geometry v1 " + std::to_string(g.size()) + "\n";
  for (const auto& x : g) s += (x ? format_geometry_line(*x) : std::string("-")) + "\n";
  return s;
}

inline std::vector<std::optional<SoundingGeometry>> parse_geometries(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  if (l.size() == 0) throw InputError(source + ": file is empty");
  const auto h = words(l[0]);
  if (h.size() != 3 || h[0] != "geometry" || h[1] != "v1") l.fail(0, "expected header 'geometry v1 <count>'");
  const auto count = detail::int_field<std::size_t>(l, 0, h[2], "count");
  std::vector<std::optional<SoundingGeometry>> out;
  for (std::size_t i = 1; i < l.size(); ++i) {
    if (l[i].empty()) continue;
    if (l[i] == "-") {
      out.emplace_back(std::nullopt);
      continue;
    }
    const auto parts = split(l[i], '|');
    if (parts.size() != 5) l.fail(i, "expected '<n> | pressure | prior | pwf | averaging kernel'");
    const auto n = detail::int_field<std::size_t>(l, i, trim(parts[0]), "n_levels");
    auto vec = [&](std::string_view part, std::size_t expect, const char* what) {
      std::vector<double> v;
      for (auto w : words(part)) v.push_back(detail::num_field(l, i, w, what));
      if (v.size() != expect)
        l.fail(i, std::string(what) + ": expected " + std::to_string(expect) + " values, found " + std::to_string(v.size()));
      return v;
    };
    auto p = vec(parts[1], n, "pressure");
    auto xa = vec(parts[2], n, "prior");
    auto hw = vec(parts[3], n, "pwf");
    const auto ak = vec(parts[4], n * n, "averaging kernel");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = ak[r * n + c];
    out.emplace_back(detail::at_line(l, i, [&] { return SoundingGeometry(std::move(p), std::move(xa), std::move(hw), a); }));
  }
  if (out.size() != count)
    throw InputError(source + ": header announces " + std::to_string(count) + " geometries, found " +
                     std::to_string(out.size()));
  return out;
}

inline void write_geometries(const std::string& path, std::span<const std::optional<SoundingGeometry>> g) {
  write_text(path, format_geometries(g));
}
inline std::vector<std::optional<SoundingGeometry>> read_geometries(const std::string& path) {
  return parse_geometries(path, read_text(path));
}

// ---------------------------------------------------------------------------------------------
// gridded cells

inline constexpr std::string_view kCellHeader = "grid_index,surface,lat,lon,time,value,sd,n_contributing,geometry";

/// Land block first, then ocean; each block in grid order (row-major, south to north, west to east).
inline std::vector<GriddedCellEstimate> product_cells(const DailyProduct& p) {
  std::vector<GriddedCellEstimate> c = p.land.cells;
  c.insert(c.end(), p.ocean.cells.begin(), p.ocean.cells.end());
  return c;
}

inline std::string format_cells(std::span<const GriddedCellEstimate> cells) {
  std::string s(kCellHeader);
  s += '\n';
  for (const auto& c : cells)
    s += std::to_string(c.grid_index) + ',' + std::string(to_string(c.surface)) + ',' + fmt(c.center.lat()) + ',' +
         fmt(c.center.lon()) + ',' + fmt(c.center.time()) + ',' + fmt(c.value) + ',' + fmt(c.sd) + ',' +
         std::to_string(c.n_contributing) + ',' + (c.geometry ? "1" : "0") + '\n';
  return s;
}

/// Geometry flags are read back but the geometries themselves live in the companion geometry file.
inline std::vector<GriddedCellEstimate> parse_cells(const std::string& source, std::string text,
                                                    std::vector<bool>* has_geometry = nullptr) {
  const Lines l(source, std::move(text));
  std::vector<GriddedCellEstimate> out;
  for (std::size_t i = detail::expect_header(l, kCellHeader); i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto f = split(l[i], ',');
    detail::check_fields(l, i, f, 9);
    GriddedCellEstimate c;
    c.grid_index = detail::int_field<std::size_t>(l, i, f[0], "grid_index");
    c.surface = detail::at_line(l, i, [&] { return parse_surface(f[1]); });
    const double lat = detail::num_field(l, i, f[2], "lat");
    const double lon = detail::num_field(l, i, f[3], "lon");
    const double t = detail::num_field(l, i, f[4], "time");
    c.center = detail::at_line(l, i, [&] { return SpaceTimePoint::make(lat, lon, t); });
    c.value = detail::num_field(l, i, f[5], "value");
    c.sd = detail::num_field(l, i, f[6], "sd");
    if (c.sd < 0.0) l.fail(i, "column 'sd': must be >= 0");
    c.n_contributing = detail::int_field<std::size_t>(l, i, f[7], "n_contributing");
    if (f[8] != "0" && f[8] != "1") l.fail(i, "column 'geometry': expected 0 or 1");
    if (has_geometry) has_geometry->push_back(f[8] == "1");
    out.push_back(std::move(c));
  }
  return out;
}

inline void write_cells(const std::string& path, std::span<const GriddedCellEstimate> cells) {
  write_text(path, format_cells(cells));
}
inline std::vector<GriddedCellEstimate> read_cells(const std::string& path, std::vector<bool>* has_geometry = nullptr) {
  return parse_cells(path, read_text(path), has_geometry);
}

// ---------------------------------------------------------------------------------------------
// stations: one row per 15-minute sample, grouped by station

inline constexpr std::string_view kStationHeader = "station,lat,lon,time,value";
inline constexpr std::string_view kStationModelHeader = "station,lat,lon,time,value,model";

inline std::string format_stations(std::span<const StationRecord> stations) {
  bool model = false;
  for (const auto& st : stations)
    for (const auto& s : st.samples()) model = model || s.model.has_value();
  std::string out(model ? kStationModelHeader : kStationHeader);
  out += '\n';
  for (const auto& st : stations)
    for (const auto& s : st.samples()) {
      out += std::to_string(st.id()) + ',' + fmt(st.lat()) + ',' + fmt(st.lon()) + ',' + fmt(s.time) + ',' + fmt(s.value);
      if (model) out += ',' + (s.model ? fmt(*s.model) : std::string());
      out += '\n';
    }
  return out;
}

inline std::vector<StationRecord> parse_stations(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  if (l.size() == 0) throw InputError(source + ": file is empty");
  const bool model = l[0] == kStationModelHeader;
  if (!model && l[0] != kStationHeader)
    l.fail(0, "expected header '" + std::string(kStationHeader) + "' or '" + std::string(kStationModelHeader) + "'");
  struct Acc {
    int id;
    double lat, lon;
    std::vector<StationSample> samples;
    std::size_t first_line;
  };
  std::vector<Acc> acc;
  for (std::size_t i = 1; i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto f = split(l[i], ',');
    detail::check_fields(l, i, f, model ? 6 : 5);
    const int id = detail::int_field<int>(l, i, f[0], "station");
    const double lat = detail::num_field(l, i, f[1], "lat");
    const double lon = detail::num_field(l, i, f[2], "lon");
    StationSample s;
    s.time = detail::num_field(l, i, f[3], "time");
    s.value = detail::num_field(l, i, f[4], "value");
    if (model && !f[5].empty()) s.model = detail::num_field(l, i, f[5], "model");
    auto it = std::find_if(acc.begin(), acc.end(), [&](const Acc& a) { return a.id == id; });
    if (it == acc.end()) {
      acc.push_back({id, lat, lon, {}, i});
      it = acc.end() - 1;
    } else if (&*it != &acc.back()) {
      l.fail(i, "rows of station " + std::to_string(id) + " are not contiguous");
    } else if (it->lat != lat || it->lon != lon) {
      l.fail(i, "station " + std::to_string(id) + " changes location");
    }
    if (!it->samples.empty() && !(s.time > it->samples.back().time))
      l.fail(i, "station " + std::to_string(id) + ": sample times are not strictly increasing");
    it->samples.push_back(s);
  }
  std::vector<StationRecord> out;
  for (auto& a : acc)
    out.push_back(detail::at_line(l, a.first_line, [&] { return StationRecord(a.id, a.lat, a.lon, std::move(a.samples)); }));
  return out;
}

inline void write_stations(const std::string& path, std::span<const StationRecord> s) { write_text(path, format_stations(s)); }
inline std::vector<StationRecord> read_stations(const std::string& path) { return parse_stations(path, read_text(path)); }

// ---------------------------------------------------------------------------------------------
// auxiliary columns aligned with a product file: model column x_mc and prior column h^T x_a

struct AuxRow {
  std::optional<double> model;
  std::optional<double> prior;
  friend bool operator==(const AuxRow&, const AuxRow&) = default;
};

inline constexpr std::string_view kAuxHeader = "model,prior";

inline std::string format_aux(std::span<const AuxRow> rows) {
  std::string s(kAuxHeader);
  s += '\n';
  for (const auto& r : rows) s += (r.model ? fmt(*r.model) : "") + ',' + (r.prior ? fmt(*r.prior) : "") + '\n';
  return s;
}

inline std::vector<AuxRow> parse_aux(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  std::vector<AuxRow> out;
  for (std::size_t i = detail::expect_header(l, kAuxHeader); i < l.size(); ++i) {
    if (l[i].empty()) continue;
    const auto f = split(l[i], ',');
    detail::check_fields(l, i, f, 2);
    AuxRow r;
    if (!f[0].empty()) r.model = detail::num_field(l, i, f[0], "model");
    if (!f[1].empty()) r.prior = detail::num_field(l, i, f[1], "prior");
    out.push_back(r);
  }
  return out;
}

inline void write_aux(const std::string& path, std::span<const AuxRow> rows) { write_text(path, format_aux(rows)); }
inline std::vector<AuxRow> read_aux(const std::string& path) { return parse_aux(path, read_text(path)); }

// ---------------------------------------------------------------------------------------------
// realizations

inline std::string format_realizations(const Realizations& r, std::size_t dim) {
  std::string s = "realizations v1 " + std::to_string(r.size()) + " " + std::to_string(dim) + "\n";
  for (const auto& x : r) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i) s += ' ';
      s += fmt(x[i]);
    }
    s += '\n';
  }
  return s;
}

inline Realizations parse_realizations(const std::string& source, std::string text, std::size_t* dim_out = nullptr) {
  const Lines l(source, std::move(text));
  if (l.size() == 0) throw InputError(source + ": file is empty");
  const auto h = words(l[0]);
  if (h.size() != 4 || h[0] != "realizations" || h[1] != "v1") l.fail(0, "expected header 'realizations v1 <count> <dim>'");
  const auto count = detail::int_field<std::size_t>(l, 0, h[2], "count");
  const auto dim = detail::int_field<std::size_t>(l, 0, h[3], "dim");
  Realizations out;
  for (std::size_t i = 1; i < l.size() && out.size() < count; ++i) {
    const auto w = words(l[i]);
    if (w.size() != dim) l.fail(i, "expected " + std::to_string(dim) + " values");
    std::vector<double> x;
    x.reserve(dim);
    for (auto v : w) x.push_back(detail::num_field(l, i, v, "value"));
    out.push_back(std::move(x));
  }
  if (out.size() != count) throw InputError(source + ": expected " + std::to_string(count) + " realizations");
  if (dim_out) *dim_out = dim;
  return out;
}

// ---------------------------------------------------------------------------------------------
// run configuration

/*! Flat configuration shared by every subcommand. Fields hold raw values;
 *  the typed accessors build validated domain objects.
 */
struct RunConfig {
  std::string land_family = "exponential";
  double land_sill = 1.0, land_range = 500.0, land_trange = 1.0, land_nugget = 0.0;
  std::string ocean_family = "exponential";
  double ocean_sill = 1.0, ocean_range = 500.0, ocean_trange = 1.0, ocean_nugget = 0.0;
  std::size_t m = 10;
  std::string ordering = "maxmin";
  double truncation = 5.0;
  std::size_t gls_max = 500;
  double prior_mean = 400.0;
  double cell_size = 1.0, lat_min = -90.0, lat_max = 90.0, lon_min = -180.0, lon_max = 180.0;
  /// "all" or a day index.
  std::string day = "all";
  CoincidenceCriteria coincidence;
  double s_v = 0.4;
  double colocation_fallback = 0.0;
  std::string epoch = "2015-01-01T00:00:00Z";
  std::uint64_t seed = 1;
  ScenarioConfig scenario;
  std::string in_observations, in_geometry, in_mask, in_product, in_product_geometry, in_aux, in_stations;
  std::string out_prefix = "gpfuse";

  KernelParams params(SurfaceClass s) const {
    return s == SurfaceClass::land
               ? KernelParams(parse_kernel_family(land_family), land_sill, land_range, land_trange, land_nugget)
               : KernelParams(parse_kernel_family(ocean_family), ocean_sill, ocean_range, ocean_trange, ocean_nugget);
  }

  GridSpec grid(int d) const { return GridSpec(cell_size, lat_min, lat_max, lon_min, lon_max, d); }

  std::optional<int> fixed_day() const {
    if (day == "all") return std::nullopt;
    const auto v = to_int<int>(day);
    if (!v) throw InputError("grid.day must be 'all' or an integer, found '" + day + "'");
    return *v;
  }

  FusionConfig fusion() const {
    FusionConfig f;
    f.land = params(SurfaceClass::land);
    f.ocean = params(SurfaceClass::ocean);
    f.m = m;
    f.ordering = parse_ordering(ordering);
    f.prior_mean = prior_mean;
    f.truncation_ranges = truncation;
    f.gls_max = gls_max;
    f.seed = seed;
    return f;
  }

  AssessmentOptions assessment() const { return {s_v, colocation_fallback}; }

  std::vector<std::string> observation_paths() const { return list(in_observations); }
  std::vector<std::string> geometry_paths() const { return list(in_geometry); }

  static std::vector<std::string> list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    for (auto p : split(s, ',')) out.emplace_back(trim(p));
    return out;
  }

  /// Checks every typed view and that no path is referenced twice.
  void validate() const {
    (void)params(SurfaceClass::land);
    (void)params(SurfaceClass::ocean);
    (void)grid(0);
    (void)fixed_day();
    if (m < 1) throw InputError("vecchia.m must be >= 1");
    (void)parse_ordering(ordering);
    if (!(truncation > 0.0)) throw InputError("vecchia.truncation_ranges must be > 0");
    coincidence.validate();
    if (s_v < 0.0) throw InputError("validation.s_v must be >= 0");
    if (colocation_fallback < 0.0) throw InputError("validation.colocation_fallback must be >= 0");
    scenario.validate();
    std::set<std::string> seen;
    std::vector<std::string> paths = observation_paths();
    for (const auto& g : geometry_paths()) paths.push_back(g);
    for (const auto* p : {&in_mask, &in_product, &in_product_geometry, &in_aux, &in_stations})
      for (const auto& q : list(*p)) paths.push_back(q);
    for (const auto& p : paths)
      if (!seen.insert(p).second) throw InputError("configuration references path '" + p + "' more than once");
  }
};

struct ConfigKey {
  const char* name;
  const char* help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

namespace detail {

inline double cfg_double(std::string_view key, std::string_view v) {
  const auto d = to_double(v);
  if (!d) throw InputError("config key '" + std::string(key) + "': '" + std::string(v) + "' is not a finite number");
  return *d;
}

template <class Int>
Int cfg_int(std::string_view key, std::string_view v) {
  const auto d = to_int<Int>(v);
  if (!d) throw InputError("config key '" + std::string(key) + "': '" + std::string(v) + "' is not a non-negative integer");
  return *d;
}

inline bool cfg_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError("config key '" + std::string(key) + "': expected true or false");
}

}  // namespace detail

#define GPFUSE_KEY_D(name, help, field)                                                                \
  ConfigKey{name, help, [](const RunConfig& c) { return fmt(c.field); },                               \
            [](RunConfig& c, std::string_view v) { c.field = detail::cfg_double(name, v); }}
#define GPFUSE_KEY_N(name, help, field, type)                                                          \
  ConfigKey{name, help, [](const RunConfig& c) { return std::to_string(c.field); },                    \
            [](RunConfig& c, std::string_view v) { c.field = detail::cfg_int<type>(name, v); }}
#define GPFUSE_KEY_S(name, help, field)                                                                \
  ConfigKey{name, help, [](const RunConfig& c) { return c.field; },                                    \
            [](RunConfig& c, std::string_view v) { c.field = std::string(v); }}
#define GPFUSE_KEY_B(name, help, field)                                                                \
  ConfigKey{name, help, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); },    \
            [](RunConfig& c, std::string_view v) { c.field = detail::cfg_bool(name, v); }}

/// Every recognised key, in the order the resolved configuration is written.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      GPFUSE_KEY_S("land.family", "covariance family over land: exponential or matern32", land_family),
      GPFUSE_KEY_D("land.sill", "partial sill over land, ppm^2 (> 0)", land_sill),
      GPFUSE_KEY_D("land.spatial_range_km", "spatial range over land, km (> 0)", land_range),
      GPFUSE_KEY_D("land.temporal_range_days", "temporal range over land, days (> 0)", land_trange),
      GPFUSE_KEY_D("land.nugget", "nugget over land, ppm^2 (>= 0)", land_nugget),
      GPFUSE_KEY_S("ocean.family", "covariance family over ocean", ocean_family),
      GPFUSE_KEY_D("ocean.sill", "partial sill over ocean, ppm^2", ocean_sill),
      GPFUSE_KEY_D("ocean.spatial_range_km", "spatial range over ocean, km", ocean_range),
      GPFUSE_KEY_D("ocean.temporal_range_days", "temporal range over ocean, days", ocean_trange),
      GPFUSE_KEY_D("ocean.nugget", "nugget over ocean, ppm^2", ocean_nugget),
      GPFUSE_KEY_N("vecchia.m", "conditioning set size (>= 1)", m, std::size_t),
      GPFUSE_KEY_S("vecchia.ordering", "maxmin or coordinate", ordering),
      GPFUSE_KEY_D("vecchia.truncation_ranges", "observations beyond this many ranges never condition a cell", truncation),
      GPFUSE_KEY_N("vecchia.gls_max", "largest observation count for the dense GLS mean", gls_max, std::size_t),
      GPFUSE_KEY_D("fusion.prior_mean", "mean reported by cells without usable observations, ppm", prior_mean),
      GPFUSE_KEY_D("grid.cell_size", "grid cell size, degrees", cell_size),
      GPFUSE_KEY_D("grid.lat_min", "southern grid edge, degrees", lat_min),
      GPFUSE_KEY_D("grid.lat_max", "northern grid edge, degrees", lat_max),
      GPFUSE_KEY_D("grid.lon_min", "western grid edge, degrees", lon_min),
      GPFUSE_KEY_D("grid.lon_max", "eastern grid edge, degrees", lon_max),
      GPFUSE_KEY_S("grid.day", "day index to fuse, or 'all' for every day present in the observations", day),
      GPFUSE_KEY_D("coincidence.lat_halfwidth", "coincidence box half-height, degrees", coincidence.lat_halfwidth_deg),
      GPFUSE_KEY_D("coincidence.lon_halfwidth", "coincidence box half-width, degrees", coincidence.lon_halfwidth_deg),
      GPFUSE_KEY_D("coincidence.time_window_min", "max distance to the station average midpoint, minutes",
                   coincidence.time_window_min),
      GPFUSE_KEY_N("coincidence.n_min", "min soundings per coincidence for daily-average products", coincidence.n_min,
                   std::size_t),
      GPFUSE_KEY_B("coincidence.daily_average", "treat the product as a daily average (apply n_min)",
                   coincidence.daily_average),
      GPFUSE_KEY_D("validation.s_v", "validation (reference) error, ppm", s_v),
      GPFUSE_KEY_D("validation.colocation_fallback", "co-location error used when model columns are missing, ppm",
                   colocation_fallback),
      GPFUSE_KEY_S("epoch", "time origin of the fractional-day time axis (recorded, not interpreted)", epoch),
      GPFUSE_KEY_N("seed", "seed for every random draw", seed, std::uint64_t),
      GPFUSE_KEY_N("scenario.stations", "synthetic station count", scenario.stations, std::size_t),
      GPFUSE_KEY_N("scenario.days", "synthetic days per station", scenario.days, std::size_t),
      GPFUSE_KEY_N("scenario.per_day", "synthetic soundings per station-day", scenario.per_day, std::size_t),
      GPFUSE_KEY_D("scenario.mu", "overall bias, ppm", scenario.components.mu),
      GPFUSE_KEY_D("scenario.sigma_alpha", "station bias sd, ppm", scenario.components.sigma_alpha),
      GPFUSE_KEY_D("scenario.sigma_gamma", "daily overpass error sd, ppm", scenario.components.sigma_gamma),
      GPFUSE_KEY_D("scenario.sigma_eps", "single retrieval error sd, ppm", scenario.components.sigma_eps),
      GPFUSE_KEY_D("scenario.validation_sd", "reference measurement error sd, ppm", scenario.validation_sd),
      GPFUSE_KEY_D("scenario.kappa_sd", "local aggregation error sd, ppm", scenario.kappa_sd),
      GPFUSE_KEY_D("scenario.colocation_station_sd", "persistent co-location offset sd, ppm",
                   scenario.colocation_station_sd),
      GPFUSE_KEY_D("scenario.colocation_day_sd", "transient co-location sd, ppm", scenario.colocation_day_sd),
      GPFUSE_KEY_D("scenario.prior_station_sd", "prior offset sd per station, ppm", scenario.prior_station_sd),
      GPFUSE_KEY_D("scenario.prior_day_sd", "prior offset sd per station-day, ppm", scenario.prior_day_sd),
      GPFUSE_KEY_D("scenario.truth_level", "mean true column, ppm", scenario.truth_level),
      GPFUSE_KEY_D("scenario.truth_day_sd", "day-to-day sd of the true column, ppm", scenario.truth_day_sd),
      GPFUSE_KEY_N("scenario.geometry_levels", "levels of synthetic sounding geometries (0 = none)",
                   scenario.geometry_levels, std::size_t),
      GPFUSE_KEY_S("input.observations", "observation CSV files, comma-separated, one per instrument", in_observations),
      GPFUSE_KEY_S("input.geometry", "geometry files aligned with input.observations (optional)", in_geometry),
      GPFUSE_KEY_S("input.mask", "land/ocean raster, 0 land 1 ocean (optional; all land when empty)", in_mask),
      GPFUSE_KEY_S("input.product", "products to validate, comma-separated: observation CSV or gridded cells CSV files", in_product),
      GPFUSE_KEY_S("input.product_geometry", "geometry files aligned with input.product (optional)", in_product_geometry),
      GPFUSE_KEY_S("input.aux", "model/prior column files aligned with input.product (optional)", in_aux),
      GPFUSE_KEY_S("input.stations", "station samples CSV", in_stations),
      GPFUSE_KEY_S("output.prefix", "prefix of every output file", out_prefix),
  };
  return keys;
}

#undef GPFUSE_KEY_D
#undef GPFUSE_KEY_N
#undef GPFUSE_KEY_S
#undef GPFUSE_KEY_B

/// Parses `key = value` lines; '#' starts a comment. Unknown or repeated keys are errors.
inline RunConfig parse_config(const std::string& source, std::string text) {
  const Lines l(source, std::move(text));
  RunConfig c;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < l.size(); ++i) {
    std::string_view s = l[i];
    if (const auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) l.fail(i, "expected 'key = value'");
    const std::string key(trim(s.substr(0, eq)));
    const auto value = trim(s.substr(eq + 1));
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.name; });
    if (it == keys.end()) l.fail(i, "unknown key '" + key + "' (see --help config)");
    if (!seen.insert(key).second) l.fail(i, "key '" + key + "' given twice");
    detail::at_line(l, i, [&] {
      it->set(c, value);
      return 0;
    });
  }
  c.validate();
  return c;
}

inline RunConfig read_config(const std::string& path) { return parse_config(path, read_text(path)); }

/// Resolved configuration: every key with its effective value.
inline std::string format_config(const RunConfig& c) {
  std::string s;
  for (const auto& k : config_keys()) s += std::string(k.name) + " = " + k.get(c) + "\n";
  return s;
}

inline std::string config_help() {
  std::string s = "Configuration file: one 'key = value' per line, '#' starts a comment.\nKeys (default):\n";
  const RunConfig defaults;
  for (const auto& k : config_keys()) {
    std::string d = k.get(defaults);
    if (d.empty()) d = "<empty>";
    s += "  " + std::string(k.name) + " (" + d + ")\n      " + k.help + "\n";
  }
  return s;
}

/// 64-bit FNV-1a of the resolved configuration text.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/*! Provenance sidecar: comment lines naming the command, hash, seed and
 *  formats, followed by the resolved configuration, so the file itself can
 *  be passed back as --config to repeat the run.
 */
inline std::string format_provenance(const RunConfig& c, std::string_view command,
                                     const std::vector<std::string>& extra = {}) {
  std::string s = "# gpfuse provenance v1\n";
  s += "# command = " + std::string(command) + "\n";
  s += "# config_hash = " + hex(config_hash(c)) + "\n";
  s += "# seed = " + std::to_string(c.seed) + "\n";
  s += "# rng = " + std::string(Rng::kAlgorithm) + "\n";
  s += "# formats = observations-csv v1, dok v1, cells-csv v1, geometry v1, raster v1\n";
  for (const auto& e : extra) s += "# " + e + "\n";
  s += format_config(c);
  return s;
}

// ---------------------------------------------------------------------------------------------
// summary tables

inline constexpr std::string_view kSummaryHeader =
    "label,daily_obs,soundings,stations,overall_bias,station_bias_std,daily_std,colocation,validation,systematic,"
    "random,s_e,s_me,s_mb,s_md,flags";

inline std::string summary_flags(const ErrorSummary& s) {
  std::vector<std::string> f;
  if (s.systematic.clamped) f.emplace_back("systematic_clamped");
  if (s.random.clamped) f.emplace_back("random_clamped");
  if (s.observed.between_undefined) f.emplace_back("station_std_undefined");
  if (s.observed.single_day_stations) f.push_back("single_day_stations=" + std::to_string(s.observed.single_day_stations));
  if (s.colocation.fallback) f.emplace_back("colocation_fallback");
  if (s.random.model_missing) f.emplace_back("model_missing");
  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) out += (i ? ";" : "") + f[i];
  return out.empty() ? "none" : out;
}

inline std::string format_summary_row(std::string_view label, const ErrorSummary& s) {
  return std::string(label) + ',' + std::to_string(s.n_matchups) + ',' + std::to_string(s.n_soundings) + ',' +
         std::to_string(s.J()) + ',' + fmt(s.overall_bias()) + ',' + fmt(s.s_b()) + ',' + fmt(s.s_d()) + ',' +
         fmt(s.s_m()) + ',' + fmt(s.s_v) + ',' + fmt(s.s_s()) + ',' + fmt(s.s_r()) + ',' + fmt(s.random.s_e) + ',' +
         fmt(s.random.s_me) + ',' + fmt(s.colocation.s_mb) + ',' + fmt(s.colocation.s_md) + ',' + summary_flags(s) + '\n';
}

inline std::string format_trends(const TrendResult& r) {
  std::string s = "region,n_quarters,intercept,intercept_se,slope,slope_se,se_undefined\n";
  for (const auto& t : r.rows)
    s += std::to_string(t.region) + ',' + std::to_string(t.n_quarters) + ',' + fmt(t.intercept) + ',' +
         fmt(t.intercept_se) + ',' + fmt(t.slope) + ',' + fmt(t.slope_se) + ',' + (t.se_undefined ? "1" : "0") + '\n';
  return s;
}

inline std::string format_quarters(const TrendResult& r) {
  std::string s = "region,quarter,n,bootstrap_mean,bootstrap_sd\n";
  for (const auto& q : r.quarters)
    s += std::to_string(q.region) + ',' + std::to_string(q.quarter) + ',' + std::to_string(q.n) + ',' + fmt(q.mean) +
         ',' + fmt(q.sd) + '\n';
  return s;
}

}  // namespace gpfuse::io
