#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prcara/cli.hpp"
#include "prcara/config.hpp"
#include "prcara/error.hpp"

using namespace prcara;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "prcara_unit_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  const auto text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("defaults carry the reference setup") {
  const auto c = default_config();
  CHECK(c.densities.size() == 10);
  CHECK(c.densities.front() == 40.0);
  CHECK(c.densities.back() == 400.0);
  CHECK(c.seeds.size() == 100);
  CHECK(c.sim.scenario.sim_duration_ms == 30000);
  CHECK(c.sim.scenario.platoon_size == 5);
  CHECK(c.schedulers.size() == 5);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("partial documents keep defaults and roundtrip") {
  const auto c = parse_config(R"({"scenario": {"sim_duration_ms": 5000}, "densities": [120], "seeds": [4, 5]})");
  CHECK(c.sim.scenario.sim_duration_ms == 5000);
  CHECK(c.sim.grid.horizon == 5000);
  CHECK(c.sim.scenario.road_length_m == 2000.0);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  const auto again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
  CHECK(config_hash(again) == config_hash(c));
  CHECK(config_hash(c) != config_hash(default_config()));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config(R"({"scenari": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"scenario": {"lane": 2}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"densities": [-40]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"decode": {"gamma_sci_db": 3.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schedulers": ["Nope"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"channel": {"fast_fading": "rician"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  const auto pl = parse_config(R"({"channel": {"pathloss": {"model": "power_law", "constant": 1e-4, "exponent": 3}}})");
  CHECK(std::get<PowerLaw>(pl.sim.channel.pathloss).exponent == 3.0);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(InvariantViolation("x")) == kExitInvariant);
  CHECK(exit_code_for(MissingArtifact("x")) == kExitRuntime);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitRuntime);
}

TEST_CASE("gen-data writes n rows and audits ranges") {
  const auto dir = scratch("gen");
  const auto c = default_config();
  const auto audit = cmd_gen_data(c, 3, 1000, dir / "a.csv");
  CHECK(audit.rows == 1000);
  CHECK(audit.near_out_of_range == 0);
  CHECK(line_count(dir / "a.csv") == 1001);
  (void)cmd_gen_data(c, 3, 1000, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
}

TEST_CASE("train writes weights and a report") {
  const auto dir = scratch("train");
  auto c = default_config();
  c.training.n_samples = 400;
  c.training.epochs = 2;
  (void)cmd_gen_data(c, 1, 400, dir / "d.csv");
  const auto r = cmd_train(c, 1, dir / "d.csv", dir / "w.prcw", dir / "r.jsonl");
  CHECK(r.epochs.size() == 2);
  CHECK(fs::exists(dir / "w.prcw"));
  CHECK(line_count(dir / "r.jsonl") == 3);
}

TEST_CASE("simulate smoke and sweep cardinality") {
  const auto dir = scratch("sim");
  auto c = parse_config(R"({"scenario": {"sim_duration_ms": 1500}, "densities": [40], "seeds": [1],
                            "schedulers": ["SbSps"]})");
  c.output_dir = dir / "one";
  const auto rows = cmd_simulate(c, 1);
  REQUIRE(rows.size() == 1);
  CHECK(std::fabs(rows[0].pdr.mean + rows[0].per.mean + rows[0].pcr.mean - 1.0) < 1e-12);
  CHECK(fs::exists(dir / "one" / "aggregate.csv"));
  const auto manifest = slurp(dir / "one" / "manifest.json");
  CHECK(manifest.find("config_hash") != std::string::npos);
  CHECK(manifest.find("gamma0_pam_db") != std::string::npos);

  c.schedulers = {SchedulerKind::PrCara};
  CHECK_THROWS_AS(cmd_simulate(c, 1), MissingArtifact);

  auto t = default_config();
  t.training.n_samples = 200;
  t.training.epochs = 1;
  (void)cmd_train(t, 1, std::nullopt, dir / "w.prcw", dir / "r.jsonl");
  c.schedulers.assign(kAllSchedulers.begin(), kAllSchedulers.end());
  c.densities = {40, 400};
  c.sim.scenario.sim_duration_ms = 1200;
  c.sim.grid.horizon = 1200;
  c.weights = dir / "w.prcw";
  c.output_dir = dir / "sweep";
  CHECK(cmd_simulate(c, 1).size() == 10);
  CHECK(line_count(dir / "sweep" / "aggregate.csv") == 11);
}

TEST_CASE("trace export then validate") {
  const auto dir = scratch("trace");
  auto c = default_config();
  c.densities = {20};
  c.sim.scenario.sim_duration_ms = 1000;
  cmd_trace_export(c, 2, dir / "t.csv");
  const auto trace = cmd_trace_validate(dir / "t.csv");
  CHECK(trace.tracks().size() == 45);

  std::ofstream(dir / "empty.csv").close();
  CHECK_THROWS_AS(cmd_trace_validate(dir / "empty.csv"), FormatError);
  CHECK_THROWS_AS(cmd_trace_validate(dir / "missing.csv"), MissingArtifact);
}
