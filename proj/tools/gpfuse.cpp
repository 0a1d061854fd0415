/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gpfuse/bench.hpp"
#include "gpfuse/fusion.hpp"
#include "gpfuse/io.hpp"
#include "gpfuse/synth.hpp"
#include "gpfuse/trends.hpp"
#include "gpfuse/validation.hpp"

namespace {

using namespace gpfuse;

void warn(const std::string& w) { std::cerr << "warning: " << w << "\n"; }

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

// ---------------------------------------------------------------------------------------------
// fuse

struct InstrumentData {
  std::vector<Observation> obs;
  std::vector<SoundingGeometry> geometry;
};

std::vector<InstrumentData> load_instruments(const io::RunConfig& cfg) {
  const auto obs_paths = cfg.observation_paths();
  const auto geo_paths = cfg.geometry_paths();
  if (obs_paths.empty()) throw InputError("input.observations is empty; nothing to fuse");
  if (!geo_paths.empty() && geo_paths.size() != obs_paths.size())
    throw InputError("input.geometry lists " + std::to_string(geo_paths.size()) + " files for " +
                     std::to_string(obs_paths.size()) + " observation files");
  std::vector<InstrumentData> out;
  for (std::size_t k = 0; k < obs_paths.size(); ++k) {
    InstrumentData d;
    d.obs = io::read_observations(obs_paths[k]);
    if (!geo_paths.empty()) {
      const auto g = io::read_geometries(geo_paths[k]);
      if (g.size() != d.obs.size())
        throw InputError(geo_paths[k] + ": " + std::to_string(g.size()) + " geometries for " +
                         std::to_string(d.obs.size()) + " observations");
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g[i]) throw InputError(geo_paths[k] + ": sounding " + std::to_string(i) + " has no geometry");
        d.geometry.push_back(*g[i]);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

int day_of(const Observation& o) { return static_cast<int>(std::floor(o.point().time())); }

int run_fuse(const std::string& config_path, const std::string& command_line) {
  const io::RunConfig cfg = io::read_config(config_path);
  const auto instruments = load_instruments(cfg);
  std::vector<int> days;
  if (const auto d = cfg.fixed_day()) {
    days.push_back(*d);
  } else {
    std::set<int> seen;
    for (const auto& inst : instruments)
      for (const auto& o : inst.obs) seen.insert(day_of(o));
    days.assign(seen.begin(), seen.end());
    if (days.empty()) warn("no observations and grid.day = all; no product written");
  }

  const GridSpec extent = cfg.grid(0);
  const Raster mask = cfg.in_mask.empty() ? Raster::filled(extent, 0) : io::read_raster(cfg.in_mask);
  const FusionConfig fusion = cfg.fusion();
  std::vector<std::string> extra{"invocation = " + command_line,
                                 "vecchia conditioning = joint: observations max-min first, then grid cells"};

  for (int day : days) {
    std::vector<std::vector<Observation>> obs(instruments.size());
    std::vector<std::vector<SoundingGeometry>> geo(instruments.size());
    bool any_geometry = false;
    for (std::size_t k = 0; k < instruments.size(); ++k) {
      const auto& inst = instruments[k];
      for (std::size_t i = 0; i < inst.obs.size(); ++i) {
        if (day_of(inst.obs[i]) != day) continue;
        obs[k].push_back(inst.obs[i]);
        if (!inst.geometry.empty()) geo[k].push_back(inst.geometry[i]);
      }
      any_geometry = any_geometry || !inst.geometry.empty();
    }
    const MetaDataset meta = any_geometry ? concat_instruments(obs, geo) : concat_instruments(obs);
    const DailyProduct p = fuse_day(meta, cfg.grid(day), mask, fusion);
    for (const auto& w : p.warnings) warn("day " + std::to_string(day) + ": " + w);

    const std::string stem = cfg.out_prefix + ".day" + std::to_string(day);
    const auto cells = io::product_cells(p);
    io::write_cells(stem + ".cells.csv", cells);
    io::write_precision(stem + ".land.dok", p.land.precision);
    io::write_precision(stem + ".ocean.dok", p.ocean.precision);
    if (any_geometry) {
      std::vector<std::optional<SoundingGeometry>> g;
      for (const auto& c : cells) g.push_back(c.geometry);
      io::write_geometries(stem + ".geometry.txt", g);
    }
    for (const ClassProduct* c : {&p.land, &p.ocean})
      extra.push_back("day " + std::to_string(day) + " " + std::string(to_string(c->surface)) +
                      ": cells = " + std::to_string(c->cells.size()) + ", observations = " + std::to_string(c->n_obs) +
                      ", mean = " + io::fmt(c->mean_estimate) + " (" + c->mean_method + ")");
    std::cout << "day " << day << ": " << cells.size() << " cells from " << meta.size() << " observations -> "
              << stem << ".cells.csv\n";
  }
  io::write_text(cfg.out_prefix + ".provenance.cfg", io::format_provenance(cfg, "fuse", extra));
  return 0;
}

// ---------------------------------------------------------------------------------------------
// validate

std::vector<ProductSounding> load_product_file(const std::string& path, const std::string& geometry_path,
                                              const std::string& aux_path) {
  const std::string text = io::read_text(path);
  std::vector<ProductSounding> product;
  if (text.rfind(std::string(io::kCellHeader), 0) == 0) {
    for (const auto& c : io::parse_cells(path, text))
      product.push_back({Observation(c.center, c.value, c.sd, 1, true, c.surface), std::nullopt, std::nullopt,
                         std::nullopt});
  } else {
    for (const auto& o : io::parse_observations(path, text)) product.push_back({o, std::nullopt, std::nullopt, std::nullopt});
  }
  if (!geometry_path.empty()) {
    const auto g = io::read_geometries(geometry_path);
    if (g.size() != product.size())
      throw InputError(geometry_path + ": " + std::to_string(g.size()) + " geometries for " +
                       std::to_string(product.size()) + " rows of " + path);
    for (std::size_t i = 0; i < g.size(); ++i) product[i].geometry = g[i];
  }
  if (!aux_path.empty()) {
    const auto aux = io::read_aux(aux_path);
    if (aux.size() != product.size())
      throw InputError(aux_path + ": " + std::to_string(aux.size()) + " rows for " + std::to_string(product.size()) +
                       " rows of " + path);
    for (std::size_t i = 0; i < aux.size(); ++i) {
      product[i].model_column = aux[i].model;
      product[i].prior_column = aux[i].prior;
    }
  }
  return product;
}

/// input.product may list several files (one per day); geometry and aux lists, when given, align with it.
std::vector<ProductSounding> load_product(const io::RunConfig& cfg) {
  const auto paths = io::RunConfig::list(cfg.in_product);
  const auto geo = io::RunConfig::list(cfg.in_product_geometry);
  const auto aux = io::RunConfig::list(cfg.in_aux);
  if (paths.empty()) throw InputError("input.product is empty");
  if (!geo.empty() && geo.size() != paths.size())
    throw InputError("input.product_geometry must list one file per input.product file");
  if (!aux.empty() && aux.size() != paths.size()) throw InputError("input.aux must list one file per input.product file");
  std::vector<ProductSounding> product;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    auto part = load_product_file(paths[k], geo.empty() ? "" : geo[k], aux.empty() ? "" : aux[k]);
    product.insert(product.end(), part.begin(), part.end());
  }
  return product;
}

int run_validate(const std::string& config_path, bool prior_mode, const std::string& command_line) {
  const io::RunConfig cfg = io::read_config(config_path);
  const auto product = load_product(cfg);
  if (cfg.in_stations.empty()) throw InputError("input.stations is empty");
  const auto stations = io::read_stations(cfg.in_stations);
  const auto matchups = match_coincidences(product, stations, cfg.coincidence);
  if (matchups.empty()) throw InputError("no coincidences between the product and the stations");
  const ErrorSummary s =
      prior_mode ? prior_error_assessment(matchups, cfg.assessment()) : assess_errors(matchups, cfg.assessment());
  const std::string label = prior_mode ? "prior" : "product";
  std::string table(io::kSummaryHeader);
  table += "\n" + io::format_summary_row(label, s);
  std::cout << table;
  io::write_text(cfg.out_prefix + ".summary.csv", table);
  std::string biases = "station,n_days,bias\n";
  for (const auto& b : s.observed.stations)
    biases += std::to_string(b.station) + "," + std::to_string(b.n_days) + "," + io::fmt(b.bias) + "\n";
  io::write_text(cfg.out_prefix + ".stations.csv", biases);
  if (s.systematic.clamped) warn("systematic error clamped at zero");
  if (s.random.clamped) warn("random error clamped at zero");
  io::write_text(cfg.out_prefix + ".provenance.cfg",
                 io::format_provenance(cfg, prior_mode ? "validate --prior" : "validate",
                                       {"invocation = " + command_line}));
  return 0;
}

// ---------------------------------------------------------------------------------------------
// simulate

int run_simulate(const std::string& config_path, const std::string& command_line) {
  io::RunConfig cfg = io::read_config(config_path);
  cfg.scenario.seed = cfg.seed;
  const ScenarioFiles f = simulate_files(cfg.scenario);
  std::vector<Observation> obs;
  std::vector<io::AuxRow> aux;
  std::vector<std::optional<SoundingGeometry>> geo;
  for (const auto& s : f.soundings) {
    obs.push_back(s.obs);
    aux.push_back({s.model_column, s.prior_column});
    geo.push_back(s.geometry);
  }
  const std::string& p = cfg.out_prefix;
  io::write_observations(p + ".product.csv", obs);
  io::write_aux(p + ".aux.csv", aux);
  io::write_stations(p + ".stations.csv", f.stations);
  if (cfg.scenario.geometry_levels > 0) io::write_geometries(p + ".geometry.txt", geo);
  std::string truth = "mu = " + io::fmt(f.truth.mu) + "\nsystematic = " + io::fmt(f.truth.systematic) +
                      "\nrandom = " + io::fmt(f.truth.random) + "\n";
  for (std::size_t j = 0; j < f.truth.alpha.size(); ++j) truth += "alpha." + std::to_string(j) + " = " + io::fmt(f.truth.alpha[j]) + "\n";
  io::write_text(p + ".truth.txt", truth);
  io::write_text(p + ".provenance.cfg", io::format_provenance(cfg, "simulate", {"invocation = " + command_line}));
  std::cout << obs.size() << " soundings, " << f.stations.size() << " stations -> " << p << ".product.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------------------------
// sample, trends, bench

io::RunConfig optional_config(const std::string& path, std::uint64_t seed) {
  io::RunConfig cfg = path.empty() ? io::RunConfig{} : io::read_config(path);
  cfg.seed = seed;
  return cfg;
}

int run_sample(const std::string& cells_path, const std::string& surface, const std::string& precision_path,
               std::size_t count, std::uint64_t seed, const std::string& out, const std::string& config_path,
               const std::string& command_line) {
  const SurfaceClass cls = parse_surface(surface);
  std::vector<double> mean;
  for (const auto& c : io::read_cells(cells_path))
    if (c.surface == cls) mean.push_back(c.value);
  const SparsePrecision q = io::read_precision(precision_path);
  if (q.dimension() != mean.size())
    throw InputError(precision_path + " has dimension " + std::to_string(q.dimension()) + " but " + cells_path +
                     " holds " + std::to_string(mean.size()) + " " + surface + " cells");
  const Realizations r = sample_realizations(mean, q, count, seed);
  io::write_text(out, io::format_realizations(r, mean.size()));
  io::write_text(out + ".provenance.cfg",
                 io::format_provenance(optional_config(config_path, seed), "sample", {"invocation = " + command_line}));
  std::cout << count << " realizations of dimension " << mean.size() << " -> " << out << "\n";
  return 0;
}

int run_trends(const std::string& obs_path, const std::string& raster_path, double origin, double length,
               std::size_t quarters, std::size_t b, std::uint64_t seed, const std::string& prefix,
               const std::string& config_path, const std::string& command_line) {
  if (!(length > 0.0) || quarters < 1) throw InputError("quarter length must be > 0 and quarter count >= 1");
  std::vector<double> bounds;
  for (std::size_t q = 0; q <= quarters; ++q) bounds.push_back(origin + length * static_cast<double>(q));
  const auto obs = io::read_observations(obs_path);
  const Raster regions = io::read_raster(raster_path);
  const TrendResult r = regional_trends(obs, regions, bounds, b, seed);
  for (const auto& w : r.warnings) warn(w);
  const std::string table = io::format_trends(r);
  std::cout << table;
  io::write_text(prefix + ".trends.csv", table);
  io::write_text(prefix + ".quarters.csv", io::format_quarters(r));
  io::write_text(prefix + ".provenance.cfg",
                 io::format_provenance(optional_config(config_path, seed), "trends", {"invocation = " + command_line}));
  return 0;
}

int run_bench(const std::vector<std::size_t>& sizes, std::size_t m, std::size_t repeats, std::uint64_t seed,
              bool no_dense, bool no_vecchia, const std::string& out, const std::string& config_path,
              const std::string& command_line) {
  const io::RunConfig cfg = optional_config(config_path, seed);
  BenchOptions o;
  o.sizes = sizes;
  o.m = m;
  o.repeats = repeats;
  o.seed = seed;
  o.params = cfg.params(SurfaceClass::land);
  o.dense = !no_dense;
  o.vecchia = !no_vecchia;
  const std::string table = format_bench(bench_vecchia_scaling(o));
  std::cout << table;
  if (!out.empty()) {
    io::write_text(out, table);
    io::write_text(out + ".provenance.cfg", io::format_provenance(cfg, "bench", {"invocation = " + command_line}));
  }
  return 0;
}

int run(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if ((std::string(argv[i]) == "--help" || std::string(argv[i]) == "-h") && std::string(argv[i + 1]) == "config") {
      std::cout << io::config_help();
      return 0;
    }

  CLI::App app{"gpfuse: Vecchia-kriging fusion of trace-gas columns and hierarchical product validation.\n"
               "Run 'gpfuse --help config' for the configuration keys."};
  app.require_subcommand(1);
  const std::string cmd = join_args(argc, argv);

  std::string config;
  auto* fuse = app.add_subcommand("fuse", "fuse observations onto the configured grid, one product per day");
  fuse->add_option("-c,--config", config, "configuration file")->required()->check(CLI::ExistingFile);

  bool prior_mode = false;
  auto* validate = app.add_subcommand("validate", "match a product to stations and decompose its errors");
  validate->add_option("-c,--config", config, "configuration file")->required()->check(CLI::ExistingFile);
  validate->add_flag("--prior", prior_mode, "assess the retrieval prior columns instead of the product values");

  auto* simulate = app.add_subcommand("simulate", "write a synthetic validation scenario");
  simulate->add_option("-c,--config", config, "configuration file (scenario.* keys)")->required()->check(CLI::ExistingFile);

  std::string cells, surface = "land", precision, out;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  auto* sample = app.add_subcommand("sample", "draw realizations from a fused posterior");
  sample->add_option("--cells", cells, "cells CSV written by fuse (posterior mean)")->required()->check(CLI::ExistingFile);
  sample->add_option("--surface", surface, "surface class block: land or ocean")->capture_default_str();
  sample->add_option("--precision", precision, "DOK precision of that block")->required()->check(CLI::ExistingFile);
  sample->add_option("-n,--count", count, "number of realizations")->capture_default_str();
  sample->add_option("--seed", seed, "random seed")->capture_default_str();
  sample->add_option("-o,--out", out, "realizations file")->required();
  sample->add_option("-c,--config", config, "configuration recorded in the provenance (optional)");

  std::string obs_path, raster_path, prefix = "gpfuse";
  double origin = 0.0, length = 365.25 / 4.0;
  std::size_t quarters = 4, boot = 2000;
  auto* trends = app.add_subcommand("trends", "bootstrap regional quarterly means and fit linear trends");
  trends->add_option("--observations", obs_path, "observation CSV")->required()->check(CLI::ExistingFile);
  trends->add_option("--regions", raster_path, "region raster")->required()->check(CLI::ExistingFile);
  trends->add_option("--quarter-origin", origin, "start of quarter 0, days")->capture_default_str();
  trends->add_option("--quarter-days", length, "quarter length, days")->capture_default_str();
  trends->add_option("--quarters", quarters, "number of quarters")->capture_default_str();
  trends->add_option("-B,--bootstrap", boot, "bootstrap resamples")->capture_default_str();
  trends->add_option("--seed", seed, "random seed")->capture_default_str();
  trends->add_option("-o,--out-prefix", prefix, "output prefix")->capture_default_str();
  trends->add_option("-c,--config", config, "configuration recorded in the provenance (optional)");

  std::vector<std::size_t> sizes{200, 400, 800};
  std::size_t m = 10, repeats = 5;
  bool no_dense = false, no_vecchia = false;
  auto* bench = app.add_subcommand("bench", "time dense and Vecchia posteriors and fit log-log slopes");
  bench->add_option("--sizes", sizes, "observation counts, ascending")->delimiter(',')->capture_default_str();
  bench->add_option("-m", m, "Vecchia conditioning set size")->capture_default_str();
  bench->add_option("--repeats", repeats, "runs per timing (median reported)")->capture_default_str();
  bench->add_option("--seed", seed, "random seed")->capture_default_str();
  bench->add_flag("--no-dense", no_dense, "skip the dense path");
  bench->add_flag("--no-vecchia", no_vecchia, "skip the Vecchia path");
  bench->add_option("-o,--out", out, "also write the table here");
  bench->add_option("-c,--config", config, "kernel parameters from land.* keys (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*fuse) return run_fuse(config, cmd);
  if (*validate) return run_validate(config, prior_mode, cmd);
  if (*simulate) return run_simulate(config, cmd);
  if (*sample) return run_sample(cells, surface, precision, count, seed, out, config, cmd);
  if (*trends) return run_trends(obs_path, raster_path, origin, length, quarters, boot, seed, prefix, config, cmd);
  if (*bench) return run_bench(sizes, m, repeats, seed, no_dense, no_vecchia, out, config, cmd);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gpfuse::NumericalError& e) {
    std::cerr << "gpfuse: numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const gpfuse::InputError& e) {
    std::cerr << "gpfuse: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gpfuse: " << e.what() << "\n";
    return 1;
  }
}
