#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bloch/experiments.hpp"
#include "doctest.h"

using namespace bloch;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// tiny csv reader for the tests
std::vector<std::vector<double>> read_csv(const std::string& path,
                                          std::vector<std::string>* header = nullptr) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  if (header) {
    std::stringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) header->push_back(tok);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ls, tok, ',')) row.push_back(std::stod(tok));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TEST_CASE("convergence fit") {
  SUBCASE("exact second-order data") {
    FitResult f = convergence_fit({0.125, 0.0625, 0.03125}, {8e-3, 2e-3, 5e-4});
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f.residual <= 1e-12);
  }
  SUBCASE("exact first-order data") {
    FitResult f = convergence_fit({0.125, 0.0625, 0.03125}, {1e-2, 5e-3, 2.5e-3});
    CHECK(f.slope == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("invalid inputs are rejected") {
    CHECK_THROWS_AS(convergence_fit({0.1, 0.2}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(convergence_fit({0.1, 0.2, 0.3}, {1.0, -2.0, 1.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("config parsing and round trip") {
  const std::string text = R"(
# a comment
lattice.period = 1.0
potential.coeffs = [[1, 0.5, 0.0], [-1, 0.5, 0.0]]
external.kind = "quadratic"
external.params = [0.0, 0.0, 0.5]
band.cutoff = 32
flag.check = true
)";
  Config cfg = Config::parse_string(text);
  CHECK(cfg.number("lattice.period") == 1.0);
  CHECK(cfg.str("external.kind") == "quadratic");
  CHECK(cfg.integer("band.cutoff") == 32);
  CHECK(cfg.flag_or("flag.check", false));
  CHECK(cfg.matrix("potential.coeffs").size() == 2);
  CHECK(cfg.list("external.params")[2] == 0.5);

  std::string ser = Config::parse_string(cfg.serialize()).serialize();
  CHECK(ser == cfg.serialize());

  SUBCASE("errors carry the key path") {
    CHECK_THROWS_WITH_AS(cfg.number("missing.key"),
                         "config: missing required key 'missing.key'",
                         std::runtime_error);
    CHECK_THROWS_AS(cfg.number("external.kind"), std::runtime_error);
  }
  SUBCASE("parse errors carry line numbers") {
    CHECK_THROWS_AS(Config::parse_string("just some words\n"), std::runtime_error);
  }
}

TEST_CASE("bands experiment writes the free dispersion") {
  Config cfg = Config::parse_string(R"(
band.index = 1
band.cutoff = 8
band.grid = 64
)");
  const std::string out = "harness_out_bands";
  int rc = run_experiment("bands", cfg, out, true);
  CHECK(rc == 0);
  std::vector<std::string> header;
  auto rows = read_csv(out + "/bands.csv", &header);
  REQUIRE(header.size() == 8);
  CHECK(header[0] == "p");
  CHECK(header[7] == "berry_conn");
  REQUIRE(rows.size() == 64);
  for (const auto& r : rows) {
    CHECK(std::abs(r[1] - 0.5 * r[0] * r[0]) <= 1e-10);
    CHECK(std::abs(r[2] - r[0]) <= 1e-10);       // dE1 = p
    CHECK(std::abs(r[7]) <= 1e-12);              // no connection
  }
  SUBCASE("byte-identical rerun") {
    const std::string out2 = "harness_out_bands2";
    run_experiment("bands", cfg, out2, false);
    CHECK(slurp(out + "/bands.csv") == slurp(out2 + "/bands.csv"));
    fs::remove_all(out2);
  }
  fs::remove_all(out);
}

TEST_CASE("special-case experiment tracks the closed-form momentum") {
  Config cfg = Config::parse_string(R"(
potential.coeffs = [[1, 0.5, 0.0], [-1, 0.5, 0.0]]
band.cutoff = 32
band.grid = 512
special.k0 = 0.5
special.c1 = 1.0
special.time = 2.0
special.dt = 1e-3
special.record_every = 200
)");
  const std::string out = "harness_out_special";
  int rc = run_experiment("special-case", cfg, out, true);
  CHECK(rc == 0);
  std::vector<std::string> header;
  auto rows = read_csv(out + "/special.csv", &header);
  REQUIRE(rows.size() > 5);
  for (const auto& r : rows) {
    double t = r[0], P = r[1], b1 = r[2];
    CHECK(b1 == 0.5 - t);
    CHECK(std::abs(P - b1) <= 1e-12);
  }
  fs::remove_all(out);
}

TEST_CASE("identities experiment emits the residual map") {
  Config cfg = Config::parse_string(R"(
potential.coeffs = [[1, 0.5, 0.0], [-1, 0.5, 0.0]]
band.cutoff = 32
band.grid = 256
)");
  const std::string out = "harness_out_ident";
  int rc = run_experiment("verify-identities", cfg, out, true);
  CHECK(rc == 0);
  std::string json = slurp(out + "/identities.json");
  CHECK(json.find("group_velocity") != std::string::npos);
  CHECK(json.find("first_order_velocity") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("trajectory experiment writes the full state") {
  Config cfg = Config::parse_string(R"(
potential.coeffs = [[1, 0.5, 0.0], [-1, 0.5, 0.0]]
band.cutoff = 16
band.grid = 128
external.kind = "quadratic"
external.params = [0.0, 0.0, 0.5]
trajectory.order = 2
trajectory.q0 = 1.0
trajectory.p0 = 0.2
trajectory.epsilon = 0.125
trajectory.dt = 1e-2
trajectory.time = 0.5
)");
  const std::string out = "harness_out_traj";
  int rc = run_experiment("trajectory", cfg, out, true);
  CHECK(rc == 0);
  std::vector<std::string> header;
  auto rows = read_csv(out + "/traj.csv", &header);
  REQUIRE(header.size() == 14);
  CHECK(header[12] == "x_c");
  REQUIRE(rows.size() == 51);
  CHECK(rows.front()[1] == 1.0);
  CHECK(rows.back()[0] == doctest::Approx(0.5).epsilon(1e-12));
  fs::remove_all(out);
}

TEST_CASE("mini center study has sane structure") {
  CenterScenario sc = CenterScenario::quadratic_default();
  sc.T = 0.4;
  sc.Np = 128;
  sc.M = 16;
  BandTable band(sc.V, sc.n, sc.Np, sc.M);
  PerturbTable pt(band);
  CenterRunResult r = run_center_study(sc, pt, 0.125, {0, 1, 2});
  REQUIRE(r.times.size() > 10);
  CHECK(r.center_ref.size() == r.times.size());
  CHECK(r.max_error.at(0) < 0.5);
  CHECK(r.max_error.at(1) < r.max_error.at(0) + 1e-6);
  CHECK(r.shift_pred.size() == r.times.size());
}
