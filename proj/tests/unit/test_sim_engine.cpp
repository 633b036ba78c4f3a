#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "prcara/error.hpp"
#include "prcara/sim_engine.hpp"

using namespace prcara;

namespace {

SimParams small_params(double rho = 40.0, std::int64_t duration = 3000) {
  SimParams p;
  p.scenario.density_per_km = rho;
  p.scenario.sim_duration_ms = duration;
  p.grid.horizon = duration;
  return p;
}

std::vector<Vehicle> pair_of_pvues() {
  std::vector<Vehicle> v(2);
  for (int i = 0; i < 2; ++i) {
    v[static_cast<std::size_t>(i)].id = VehicleId{static_cast<std::uint32_t>(i)};
    v[static_cast<std::size_t>(i)].role = Role::Pvue;
    v[static_cast<std::size_t>(i)].x_m = 100.0 - 10.0 * i;
    v[static_cast<std::size_t>(i)].speed_mps = 30.0;
    v[static_cast<std::size_t>(i)].platoon = PlatoonSlot{0, i};
  }
  return v;
}

std::string records_csv(const RunResult& r) {
  std::ostringstream out;
  write_records_csv(out, r.records);
  return out.str();
}

}  // namespace

TEST_CASE("ratios partition the outcomes") {
  const auto r = run_simulation(small_params(), SchedulerKind::SbDs, 3, nullptr);
  const auto& rel = r.metrics.reliability;
  CHECK(rel.total() == r.records.size());
  CHECK(std::fabs(rel.pdr + rel.per + rel.pcr - 1.0) <= 1e-12);
  CHECK(rel.total() > 0);
  CHECK_THROWS_AS(compute_reliability({}), UndefinedMetrics);
}

TEST_CASE("platoon unicast links") {
  const auto r = run_simulation(small_params(0.0, 2000), SchedulerKind::SbSps, 1, nullptr);
  std::set<std::pair<std::uint32_t, std::uint32_t>> links;
  for (const auto& rec : r.records) links.insert({to_index(rec.sender), to_index(rec.receiver)});
  const std::set<std::pair<std::uint32_t, std::uint32_t>> want{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 3}};
  CHECK(links == want);
  // One PAM per link every 20 ms after warm-up.
  CHECK(r.records.size() == 5 * 50);
}

TEST_CASE("same-subframe transmissions of a unicast pair collide") {
  auto p = small_params(0.0, 200);
  p.warmup_ms = 0;
  World w(p, SchedulerKind::SbDs, 1, nullptr, pair_of_pvues());
  for (std::int64_t t = 1; t <= 40; ++t) {
    if (t == 30) {
      w.schedule(0, {0, 45});
      w.schedule(1, {3, 45});
    }
    (void)w.step_subframe(t);
  }
  for (std::int64_t t = 41; t <= 45; ++t) {
    const auto recs = w.step_subframe(t);
    if (t < 45) continue;
    REQUIRE(recs.size() == 2);
    for (const auto& r : recs) CHECK(r.outcome == Outcome::Collision);
  }
  CHECK(w.sensing(0).transmitted_in(45));
  CHECK_FALSE(w.sensing(0).reading({3, 45}).sensed());
}

TEST_CASE("a close pair alone on the channel always decodes") {
  auto p = small_params(0.0, 200);
  p.warmup_ms = 0;
  p.channel.fast_fading = FastFading::None;
  p.channel.shadowing_sigma_db = 0.0;
  World w(p, SchedulerKind::SbDs, 2, nullptr, pair_of_pvues());
  std::size_t n = 0;
  for (std::int64_t t = 1; t <= 200; ++t) {
    for (const auto& r : w.step_subframe(t)) {
      ++n;
      if (r.outcome != Outcome::Collision) CHECK(r.outcome == Outcome::Reception);
    }
  }
  CHECK(n >= 18);
  CHECK_THROWS_AS(w.step_subframe(202), DomainError);
}

TEST_CASE("runs are bit-identical per seed") {
  const auto p = small_params(80.0, 2500);
  const auto a = run_simulation(p, SchedulerKind::SbSps, 9, nullptr);
  const auto b = run_simulation(p, SchedulerKind::SbSps, 9, nullptr);
  const auto c = run_simulation(p, SchedulerKind::SbSps, 10, nullptr);
  CHECK(records_csv(a) == records_csv(b));
  CHECK(records_csv(a) != records_csv(c));
}

TEST_CASE("estimator-based schedulers need weights") {
  CHECK_THROWS_AS(run_simulation(small_params(), SchedulerKind::PrCara, 1, nullptr), MissingArtifact);
  IdentityEstimator id;
  const auto r = run_simulation(small_params(40.0, 2000), SchedulerKind::PrCara, 1, &id);
  CHECK(r.metrics.reliability.total() > 0);
}

TEST_CASE("leaving events on an ideal channel take the minimum attempts") {
  auto p = small_params(40.0, 4000);
  p.scenario.traffic = TrafficMode::LeaveEvent;
  p.ideal_channel = true;
  for (auto kind : {SchedulerKind::SbSps, SchedulerKind::ExtSciAvoid}) {
    const auto r = run_simulation(p, kind, 5, nullptr);
    REQUIRE(r.events.size() >= 5);
    for (const auto& e : r.events) CHECK(e.attempts == 3);
    CHECK(r.metrics.event_attempts == 3.0);
    CHECK(r.metrics.reliability.pdr == 1.0);
  }
}

TEST_CASE("joining events complete") {
  auto p = small_params(40.0, 3000);
  p.scenario.traffic = TrafficMode::JoinEvent;
  const auto r = run_simulation(p, SchedulerKind::SbDs, 6, nullptr);
  REQUIRE_FALSE(r.events.empty());
  for (const auto& e : r.events) {
    CHECK(e.kind == EventKind::Joining);
    CHECK(e.attempts >= 4);
    CHECK(e.end_ms > e.start_ms);
  }
}

TEST_CASE("IPG agrees with the pairwise scan") {
  Rng rng(21);
  std::uniform_int_distribution<int> len(0, 60);
  std::uniform_real_distribution<double> loss(0.0, 0.9);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(rng);
    std::bernoulli_distribution lost(loss(rng));
    std::uniform_int_distribution<int> jitter(1, 20);
    std::vector<TxRecord> recs;
    for (int l = 0; l < n; ++l) {
      TxRecord r;
      r.index = l;
      r.cell = {0, 20 * l + jitter(rng)};
      r.outcome = lost(rng) ? Outcome::Error : Outcome::Reception;
      recs.push_back(r);
    }
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto want = oracle::ipg_gaps(recs);
    const auto got = compute_ipg(recs);
    if (want.empty()) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    REQUIRE(got.has_value());
    CHECK(got->gaps_ms == want);
  }
}

TEST_CASE("empirical quantile") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(ecdf_quantile(v, 0.9) == 9.0);
  CHECK(ecdf_quantile(v, 0.91) == 10.0);
  CHECK(ecdf_quantile(v, 1.0) == 10.0);
  CHECK_THROWS_AS(ecdf_quantile({}, 0.5), UndefinedMetrics);
}

TEST_CASE("Student t half width") {
  const std::vector<double> two{1.0, 3.0};
  const auto s = summarize_samples(two);
  // t(0.975, 1) = 12.7062; sd = sqrt(2).
  CHECK(s.ci_half_width == doctest::Approx(12.7062047 * std::sqrt(2.0) / std::sqrt(2.0)).epsilon(1e-6));
  const std::vector<double> one{4.0};
  CHECK(std::isnan(summarize_samples(one).ci_half_width));
  const std::vector<double> with_nan{1.0, NAN, 3.0};
  CHECK(summarize_samples(with_nan).n == 2);
}

TEST_CASE("Monte Carlo is independent of the thread count") {
  const auto p = small_params(40.0, 2000);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto a = run_monte_carlo(p, SchedulerKind::SbDs, seeds, nullptr, 1);
  const auto b = run_monte_carlo(p, SchedulerKind::SbDs, seeds, nullptr, 3);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(a.replicas[i].seed == seeds[i]);
    CHECK(a.replicas[i].metrics.reliability.pdr == b.replicas[i].metrics.reliability.pdr);
  }
  CHECK(a.aggregate.pdr.mean == b.aggregate.pdr.mean);
  std::ostringstream out;
  write_aggregate_csv(out, std::vector<AggregateRow>{a.aggregate});
  CHECK(out.str().rfind("rho,scheduler,", 0) == 0);
}

TEST_CASE("invalid parameters are rejected") {
  auto p = small_params();
  p.decode.gamma_sci_db = 5.0;
  CHECK_THROWS_AS(World(p, SchedulerKind::SbSps, 1, nullptr), ConfigError);
  p = small_params();
  p.scenario.density_per_km = -3;
  CHECK_THROWS_AS(World(p, SchedulerKind::SbSps, 1, nullptr), ConfigError);
}
