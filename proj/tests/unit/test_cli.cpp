/*!
 * This file is part of gpfuse, a C++ library for Vecchia-kriging fusion of
 * column-averaged trace-gas observations and hierarchical product validation.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the project root for license information.
 */
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gpfuse/io.hpp"

using namespace gpfuse;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

/// Work directory holding a `demo` link to the shipped fixtures, so demo configs run unchanged.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gpfuse_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "demo_out");
    fs::create_directory_symlink(GPFUSE_DEMO_DIR, dir_ / "demo");
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" + GPFUSE_CLI + "' " + args + " 2>&1";
    Result r{-1, ""};
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  void write(const std::string& rel, const std::string& text) const { io::write_text(path(rel), text); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run("validate --help").code, 0);
  EXPECT_EQ(run("--help").code, 0);
  const auto cfg = run("--help config");
  EXPECT_EQ(cfg.code, 0);
  EXPECT_NE(cfg.output.find("vecchia.m"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("fuse -c missing.cfg").code, 1);
}

TEST_F(CliTest, BadConfigReportsLine) {
  write("bad.cfg", "vecchia.m = 5\nvecchia.bogus = 1\n");
  const auto r = run("fuse -c bad.cfg");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("bad.cfg:2"), std::string::npos) << r.output;
}

TEST_F(CliTest, FuseDemo) {
  const auto r = run("fuse -c demo/fuse.cfg");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto cells = io::read_cells(path("demo_out/fused.day0.cells.csv"));
  ASSERT_EQ(cells.size(), 100u);
  std::size_t land = 0;
  for (const auto& c : cells) {
    land += c.surface == SurfaceClass::land;
    EXPECT_GT(c.sd, 0.0);
    EXPECT_NEAR(c.value, 401.0, 4.0);
  }
  EXPECT_EQ(land, 50u);
  EXPECT_EQ(io::read_precision(path("demo_out/fused.day0.land.dok")).dimension(), land);
  const auto prov = io::read_text(path("demo_out/fused.provenance.cfg"));
  EXPECT_NE(prov.find("# command = fuse"), std::string::npos);
  EXPECT_NE(prov.find("seed = 7"), std::string::npos);
}

TEST_F(CliTest, FuseWithoutObservationsGivesPrior) {
  const auto r = run("fuse -c demo/fuse_empty.cfg");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("warning"), std::string::npos) << r.output;
  const auto cells = io::read_cells(path("demo_out/empty.day0.cells.csv"));
  ASSERT_EQ(cells.size(), 25u);
  for (const auto& c : cells) {
    EXPECT_EQ(c.value, 400.0);
    EXPECT_NEAR(c.sd, 1.0, 1e-12);
  }
}

TEST_F(CliTest, SampleFromFusedPosterior) {
  ASSERT_EQ(run("fuse -c demo/fuse.cfg").code, 0);
  const auto r = run("sample --cells demo_out/fused.day0.cells.csv --surface ocean --precision demo_out/fused.day0.ocean.dok "
                     "-n 20 --seed 3 -o demo_out/draws.txt");
  ASSERT_EQ(r.code, 0) << r.output;
  std::size_t dim = 0;
  const auto draws = io::parse_realizations("draws", io::read_text(path("demo_out/draws.txt")), &dim);
  EXPECT_EQ(draws.size(), 20u);
  EXPECT_EQ(dim, 50u);
  const auto again = run("sample --cells demo_out/fused.day0.cells.csv --surface ocean --precision demo_out/fused.day0.ocean.dok "
                         "-n 20 --seed 3 -o demo_out/draws2.txt");
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(io::read_text(path("demo_out/draws.txt")), io::read_text(path("demo_out/draws2.txt")));
  write("tiny.dok", "dok v1 2 2\n0 0 1\n1 1 1\n");
  EXPECT_EQ(run("sample --cells demo_out/fused.day0.cells.csv --surface land --precision tiny.dok -n 2 -o demo_out/x.txt").code,
            1);
}

TEST_F(CliTest, SimulateThenValidate) {
  ASSERT_EQ(run("simulate -c demo/simulate.cfg").code, 0);
  const auto r = run("validate -c demo/validate.cfg");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto lines = io::split(io::read_text(path("demo_out/validation.summary.csv")), '\n');
  ASSERT_GE(lines.size(), 2u);
  const auto f = io::split(lines[1], ',');
  ASSERT_EQ(f.size(), 16u);
  EXPECT_EQ(f[0], "product");
  EXPECT_EQ(f[1], "300");
  EXPECT_NEAR(*io::to_double(f[4]), -0.2, 0.4);
  EXPECT_NEAR(*io::to_double(f[9]), std::hypot(0.4, 0.6), 0.3);
  EXPECT_NEAR(*io::to_double(f[10]), 0.8, 0.1);

  const auto prior = run("validate --prior -c demo/validate.cfg");
  ASSERT_EQ(prior.code, 0) << prior.output;
  EXPECT_NE(prior.output.find("\nprior,"), std::string::npos);
}

TEST_F(CliTest, ValidateFusedCells) {
  ASSERT_EQ(run("simulate -c demo/simulate.cfg").code, 0);
  write("fuse_scenario.cfg",
        "grid.cell_size = 2\ngrid.lat_min = -4\ngrid.lat_max = 8\ngrid.lon_min = -4\ngrid.lon_max = 60\n"
        "land.spatial_range_km = 200\nvecchia.m = 15\ninput.observations = demo_out/scenario.product.csv\n"
        "output.prefix = demo_out/scen\n");
  ASSERT_EQ(run("fuse -c fuse_scenario.cfg").code, 0);
  std::string products;
  for (int d = 0; d < 15; ++d) products += (d ? "," : "") + std::string("demo_out/scen.day") + std::to_string(d) + ".cells.csv";
  write("validate_cells.cfg", "input.product = " + products +
                                  "\ninput.stations = demo_out/scenario.stations.csv\noutput.prefix = demo_out/cellval\n");
  const auto r = run("validate -c validate_cells.cfg");
  ASSERT_EQ(r.code, 0) << r.output;
  // Kriging smooths the station-day errors, so only the overall bias survives fusion intact.
  const auto row = io::split(io::split(io::read_text(path("demo_out/cellval.summary.csv")), '\n')[1], ',');
  EXPECT_NEAR(*io::to_double(row[4]), -0.2, 0.15) << r.output;
}

TEST_F(CliTest, Trends) {
  const auto r = run("trends --observations demo/trend_obs.csv --regions demo/regions.txt --quarters 8 -B 200 "
                     "-o demo_out/tr");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto lines = io::split(io::read_text(path("demo_out/tr.trends.csv")), '\n');
  ASSERT_GE(lines.size(), 3u);
  EXPECT_NEAR(*io::to_double(io::split(lines[1], ',')[4]), 0.6, 0.1);
  EXPECT_NEAR(*io::to_double(io::split(lines[2], ',')[4]), 0.5, 0.1);
}

TEST_F(CliTest, Bench) {
  const auto r = run("bench --sizes 50,100 --repeats 1 -o demo_out/bench.csv");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("vecchia,100,"), std::string::npos);
  EXPECT_NE(r.output.find("log-log slope"), std::string::npos);
}
