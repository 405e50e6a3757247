#include "pdeid/experiment.hpp"
#include "pdeid/io.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace pdeid;

namespace {
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pdeid_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string read_body_skipping_header(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line, body;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && line.rfind("#", 0) == 0) {
      first = false;
      continue;  // timestamped comment header
    }
    first = false;
    body += line;
    body += '\n';
  }
  return body;
}
}  // namespace

TEST_CASE("trajectory container round-trips bit-exactly") {
  TempDir tmp;
  SpaceTimeGrid g({16, 8}, {{-1, 1}, {0, 2}}, {true, false}, 10, {0, 0.5});
  TrajectoryField traj(g);
  Rng rng(3);
  Matrix a(g.flat_space_size(), 10), b(g.flat_space_size(), 10);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  traj.add_field("u", a);
  traj.add_field("v", b);

  const Json prov = {{"problem", "test"}, {"seed", 42}};
  save_trajectory(tmp.path / "t.bin", traj, prov);
  Json prov2;
  const auto back = load_trajectory(tmp.path / "t.bin", &prov2);
  CHECK(prov2.at("seed") == 42);
  CHECK(back.grid() == g);
  REQUIRE(back.field_names() == traj.field_names());
  CHECK((back.field(0) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.field(1) - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv export for 1d fields") {
  TempDir tmp;
  SpaceTimeGrid g = grid_1d(4, 0, 1, 3, 0, 1);
  TrajectoryField traj(g);
  Matrix m(4, 3);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  traj.add_field("u", m);
  write_csv_1d(tmp.path / "u.csv", traj);
  const std::string body = read_body_skipping_header(tmp.path / "u.csv");
  CHECK(body.find("x/t,0,0.33333333333333331,0.66666666666666663") == 0);
  CHECK(body.find("\n0,1,2,3\n") != std::string::npos);
}

TEST_CASE("coefficient and trig JSON round-trips") {
  CoefficientTerm t;
  t.scale = 0.5;
  t.x_trig = {{TrigFactor::Fn::sin, std::numbers::pi, 0.25}};
  t.t_power = 1;
  t.transition_factor = {{-10.0, 0.5}};
  const CoefficientFunction c({t});
  const CoefficientFunction back = coefficient_from_json(coefficient_to_json(c));
  const double x = 0.37, tt = 0.81;
  CHECK(back(x, tt) == doctest::Approx(c(x, tt)).epsilon(1e-15));

  const CoefficientFunction k = coefficient_from_json(Json(2.5));
  CHECK(k.is_constant());
  CHECK(k.constant_value() == 2.5);
}

TEST_CASE("experiment config parses and validates") {
  Json j = {
      {"name", "demo"},
      {"problem",
       {{"kind", "transport1d"},
        {"grid",
         {{"space_points", {64}},
          {"space_extent", {{-1.0, 1.0}}},
          {"periodic", {true}},
          {"time_points", 200},
          {"time_extent", {0.0, 0.5}}}},
        {"coefficients", {2.0}},
        {"initial",
         {{{"kind", "sinusoid_sum"},
           {"terms", {{{"fn", "sin"}, {"freq", 3.141592653589793}, {"amp", 1.0}}}}}}}}},
      {"dictionary", {{"max_derivative_order", 2}, {"max_product_terms", 1}}},
      {"sensors",
       {{"count", 2}, {"space_radius", {3}}, {"time_radius", 5},
        {"observation_times", 4}, {"seed", 7}}},
      {"trials", 2},
      {"truth", {{"support", {"u_x"}}, {"coefficients", {2.0}}}},
  };
  const ExperimentConfig c = experiment_from_json(j);
  CHECK(c.name == "demo");
  CHECK(c.problem.kind == ProblemKind::transport1d);
  CHECK(c.trials == 2);
  CHECK(c.truth_support == std::vector<std::string>{"u_x"});
  CHECK(c.sensors.count == 2);

  // unknown feature mode rejected
  Json bad = j;
  bad["features"] = "alchemy";
  CHECK_THROWS_AS(experiment_from_json(bad), ConfigError);
}

TEST_CASE("identification json names the support") {
  const Dictionary d = build_dictionary({"u"}, 1, 2, 1);
  IdentificationResult res;
  res.chosen_level = 1;
  res.support = {d.index_of("u_xx")};
  res.coefficients = Matrix::Constant(1, 1, 0.5);
  res.rho = 0.25;
  res.trace = {{1, 0.0, 0.05}};
  const Json j = identification_to_json(res, d);
  CHECK(j.at("support").at(0) == "u_xx");
  CHECK(j.at("chosen_level") == 1);
}

TEST_CASE("csv bodies are deterministic modulo the timestamp header") {
  TempDir tmp;
  SpaceTimeGrid g = grid_1d(8, 0, 1, 5, 0, 1);
  TrajectoryField traj(g);
  Matrix m(8, 5);
  Rng rng(11);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  traj.add_field("u", m);
  write_csv_1d(tmp.path / "a.csv", traj);
  write_csv_1d(tmp.path / "b.csv", traj);
  CHECK(read_body_skipping_header(tmp.path / "a.csv") ==
        read_body_skipping_header(tmp.path / "b.csv"));
}
