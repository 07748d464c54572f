#include <cmath>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <spdlog/spdlog.h>

#include "dissipwave/cli.hpp"

using namespace dissipwave;
namespace fs = std::filesystem;

namespace {

const bool quiet = [] {
  spdlog::set_level(spdlog::level::warn);
  return true;
}();

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "dissipwave_test_cli" / name;
  fs::remove_all(p);
  return p;
}

fs::path config_file(const std::string& name) { return fs::path(DISSIPWAVE_SOURCE_DIR) / "tools" / "configs" / name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_linear() {
  ExperimentConfig c = load_config(config_file("linear_2d.cfg"));
  c.extent = 14.0;
  c.t_final = 6.0;
  c.record_stride = 8;
  return c;
}

const ConfigIssue* find_issue(const ConfigParseError& e, const std::string& key) {
  for (const auto& i : e.issues()) {
    if (i.key == key) return &i;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("minimal config gets the CFL time step") {
  const auto c = parse_config("geometry.dx = 0.1\n");
  REQUIRE(c.dt.has_value());
  CHECK(*c.dt == doctest::Approx(0.9 * 0.1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(c.b0 == 1.0);
  CHECK(c.form == "zero");

  const auto c3 = parse_config("geometry.dim = 3\ngeometry.dx = 0.2\n");
  CHECK(*c3.dt == doctest::Approx(0.9 * 0.2 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(parse_config("") == parse_config("# only a comment\n\n"));
}

TEST_CASE("negative b0 is reported at its line") {
  try {
    parse_config("geometry.dim = 2\n# damping\ndamping.b0 = -1\n");
    FAIL("expected ConfigParseError");
  } catch (const ConfigParseError& e) {
    REQUIRE(e.issues().size() == 1);
    CHECK(e.issues()[0].line == 3);
    CHECK(e.issues()[0].key == "damping.b0");
    CHECK(e.issues()[0].message == "b0 must be positive");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("2D weight constant must satisfy the side condition") {
  // The unit disk leaves inf |x| = 1, so A must be at least 2.
  try {
    parse_config("geometry.obstacle = ball\ngeometry.radius = 1\nweight.A = 1\n");
    FAIL("expected ConfigParseError");
  } catch (const ConfigParseError& e) {
    const auto* issue = find_issue(e, "weight.A");
    REQUIRE(issue != nullptr);
    CHECK(issue->line == 3);
    CHECK(issue->message.find("A|x| >= 2") != std::string::npos);
  }
  CHECK_NOTHROW(parse_config("weight.A = 2\n"));
  // On the rescaled domain inf |x| = 2.
  CHECK_NOTHROW(parse_config("weight.A = 1\nrescale.lambda = 0.5\n"));
  // Only the 2D weight carries the condition.
  CHECK_NOTHROW(parse_config("geometry.dim = 3\ngeometry.dx = 0.2\ngeometry.extent = 6\ndata.M = 4\nweight.A = 1\n"));
}

TEST_CASE("every config issue is reported") {
  const std::string text =
      "geometry.dx = -0.1\n"
      "damping.b0 = -1\n"
      "damping.colour = red\n"
      "run.t_final = soon\n"
      "rescale.lambda = 0.3\n"
      "damping.b0 = 2\n"
      "no equals sign here\n";
  try {
    parse_config(text);
    FAIL("expected ConfigParseError");
  } catch (const ConfigParseError& e) {
    std::vector<int> lines;
    for (const auto& i : e.issues()) lines.push_back(i.line);
    CHECK(lines == std::vector<int>{1, 2, 3, 4, 5, 6, 7});
    CHECK(find_issue(e, "damping.colour")->message == "unknown key");
    CHECK(find_issue(e, "run.t_final")->message.find("expected a real number") != std::string::npos);
    CHECK(find_issue(e, "rescale.lambda")->message == "lambda must be a power of two");
    CHECK(e.issues()[5].message.find("duplicate") != std::string::npos);
  }
}

TEST_CASE("explicit dt above the CFL limit is rejected") {
  CHECK_THROWS_AS(parse_config("geometry.dx = 0.1\nrun.dt = 0.08\n"), ConfigParseError);
  CHECK(*parse_config("geometry.dx = 0.1\nrun.dt = 0.05\n").dt == 0.05);
}

TEST_CASE("config text round-trips") {
  ExperimentConfig c;
  c.dim = 2;
  c.dx = 0.07;
  c.obstacle = "star";
  c.cutoff_inner = 2.2;
  c.profile = "rational";
  c.matrix_mode = "anisotropic";
  c.anisotropy = 0.3;
  c.form = "quasilinear";
  c.gamma = 0.1 / 3.0;
  c.delta = 1e-3;
  c.seed = 18446744073709551615ULL;
  c.lambda = 0.25;
  c.audit_times = {0.0, 0.5, 1.0 / 3.0};
  c.weight_A = 7.5;
  c.csv = "out file.csv";
  c.dt = 0.9 * 0.07 / std::sqrt(2.0);
  const ExperimentConfig back = parse_config(to_text(c));
  CHECK(back == c);
  CHECK(to_text(back) == to_text(c));

  const auto keys = config_keys();
  CHECK(keys.front() == "geometry.dim");
  CHECK(std::find(keys.begin(), keys.end(), "weight.A") != keys.end());
}

TEST_CASE("inner radius of the fluid region") {
  CHECK(domain_inner_radius(Obstacle(Ball{1.0}), 2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(domain_inner_radius(Obstacle(Ball{1.0}).rescaled(0.5), 2) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(domain_inner_radius(Obstacle(StarPolygon{4, 1.5, 0.75, 0.0}), 2) ==
        doctest::Approx(0.75).epsilon(1e-6));
  // The bite reaches within 1.5 - 1.2 of the origin along +x.
  CHECK(domain_inner_radius(Obstacle(Crescent{1.0, {1.5, 0.0, 0.0}, 1.2}), 2) ==
        doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("catalog linear run writes three files and passes") {
  const auto dir = scratch("linear");
  const auto c = small_linear();
  const auto r = run_experiment(c, dir);
  CHECK(r.exit_code == kExitOk);
  CHECK(r.diagnostic.empty());
  CHECK(fs::exists(dir / "series.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "decay.svg"));

  const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(s["exit_code"] == 0);
  CHECK(s["version"].get<std::string>() == version_string());
  CHECK_FALSE(version_string().empty());
  CHECK(s["monitors"]["pass"] == true);
  CHECK(s["grid"]["fluid_cells"].get<std::size_t>() > 0);
  CHECK(s["audits"]["damping"]["B1_pass"] == true);
  CHECK(s["E0_measured"].get<double>() > 0.0);
  // The echo re-parses to the run's config.
  CHECK(parse_config(s["config"].get<std::string>()) == parse_config(to_text(c)));

  const auto svg = slurp(dir / "decay.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("series CSV layout, determinism and read back") {
  const auto c = small_linear();
  const auto a = run_experiment(c, scratch("det_a"));
  const auto b = run_experiment(c, scratch("det_b"));
  REQUIRE(a.exit_code == kExitOk);
  const std::string bytes = slurp(a.csv);
  CHECK(bytes == slurp(b.csv));
  CHECK(bytes.substr(0, bytes.find('\n')) ==
        "t,E,Z0,Z1,Z2,Z_total,G,G_tilde,boundary_flux,support_radius,comp_ratio,H_running");

  const CsvSeries csv = read_series_csv(a.csv);
  REQUIRE(a.series.has_value());
  const auto& series = *a.series;
  REQUIRE(csv.rows.size() == series.records.size());
  CHECK(csv.columns.size() == 12);
  // %.16e is lossless for doubles.
  const auto t = csv.column("t");
  const auto E = csv.column("E");
  const auto H = csv.column("H_running");
  for (std::size_t k = 0; k < t.size(); ++k) {
    CHECK(t[k] == series.records[k].t);
    CHECK(E[k] == series.records[k].E);
    CHECK(H[k] == series.H_running[k]);
  }
  CHECK_THROWS((void)csv.column("nope"));
}

TEST_CASE("large quasilinear data aborts with exit code 2") {
  const auto dir = scratch("blowup");
  const auto r = run_experiment(load_config(config_file("blowup_quasilinear.cfg")), dir);
  CHECK(r.exit_code == kExitSolver);
  CHECK(r.diagnostic.find("instability") != std::string::npos);
  const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(s["abort"]["kind"] == "instability");
  CHECK(s["exit_code"] == 2);
}

TEST_CASE("negated damping fails the Lyapunov monitor") {
  const auto r = run_experiment(load_config(config_file("negated_damping.cfg")), scratch("negated"));
  CHECK(r.exit_code == kExitMonitor);
  CHECK(r.diagnostic.find("lyapunov") != std::string::npos);
}

TEST_CASE("config and audit failures exit with code 3") {
  ExperimentConfig bad;
  bad.dx = -1.0;
  CHECK(run_experiment(bad, scratch("bad")).exit_code == kExitConfig);

  auto c = small_linear();
  c.profile = "increasing";
  const auto dir = scratch("increasing");
  const auto r = run_experiment(c, dir);
  CHECK(r.exit_code == kExitConfig);
  CHECK(r.diagnostic.find("damping") != std::string::npos);
  const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(s["audits"]["damping"]["B2_pass"] == false);
}

TEST_CASE("sweep over lambda") {
  const std::string text =
      "geometry.extent = 12\n"
      "run.t_final = 3\n"
      "run.record_stride = 8\n"
      "rescale.lambda = 1\n"
      "monitor.bootstrap = false\n"
      "sweep.rescale.lambda = 1, 0.5, 0.25\n";
  const SweepPlan plan = parse_sweep(text);
  REQUIRE(plan.axes.size() == 1);
  CHECK(plan.entry_labels() ==
        std::vector<std::string>{"rescale.lambda=1", "rescale.lambda=0.5", "rescale.lambda=0.25"});
  CHECK(parse_config(plan.entry_texts()[1]).lambda == 0.5);

  const auto dir = scratch("sweep");
  const auto r = run_sweep(plan, dir, 2, 7);
  CHECK(r.exit_code == kExitOk);
  REQUIRE(r.entries.size() == 3);
  for (int k = 0; k < 3; ++k) {
    const auto summary = dir / ("entry_" + std::to_string(k)) / "summary.json";
    REQUIRE(fs::exists(summary));
    const auto j = nlohmann::json::parse(slurp(summary));
    CHECK(j["grid"]["lambda"].get<double>() == std::ldexp(1.0, -k));
    CHECK(parse_config(j["config"].get<std::string>()).seed == 7);
  }
  std::ifstream table(r.table);
  std::vector<std::string> lines;
  for (std::string l; std::getline(table, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0].rfind("entry,label,exit_code,lambda", 0) == 0);
  CHECK(lines[3].find("\"rescale.lambda=0.25\",0,0.25,") != std::string::npos);

  CHECK_THROWS_AS(parse_sweep("sweep.damping.colour = 1, 2\n"), ConfigParseError);
  CHECK(parse_sweep("sweep.data.delta = 1e-3, 1e-2\nsweep.rescale.lambda = 1, 0.5\n").entry_texts().size() == 4);
}

TEST_CASE("audits without time stepping") {
  bool pass = false;
  auto c = small_linear();
  c.poincare_trials = 20;
  const auto j = run_audits(c, &pass);
  CHECK(pass);
  CHECK(j["star_shape"]["pass"] == true);
  CHECK(j["poincare"]["proof_constant_holds"] == true);

  c.obstacle = "crescent";
  c.radius = 1.0;
  run_audits(c, &pass);
  CHECK_FALSE(pass);
}
