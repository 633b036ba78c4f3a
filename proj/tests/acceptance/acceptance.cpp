// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "prcara/error.hpp"
#include "prcara/rssi_estimator.hpp"
#include "prcara/sci_codec.hpp"
#include "prcara/sensing.hpp"
#include "prcara/sim_engine.hpp"

using namespace prcara;

namespace {

// Desk-scale setup shared by the trend checks: the default 30 s scenario.
constexpr std::int64_t kDeskDurationMs = 30000;
constexpr int kDeskSeeds = 20;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::vector<std::uint64_t> desk_seeds() {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= kDeskSeeds; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

SimParams desk_params(double rho) {
  SimParams p;
  p.scenario.density_per_km = rho;
  p.scenario.sim_duration_ms = kDeskDurationMs;
  p.grid.horizon = kDeskDurationMs;
  return p;
}

std::string fmt(const MetricSummary& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4f [%.4f, %.4f]", s.mean, s.lo(), s.hi());
  return buf;
}

bool conserved(const RunMetrics& m, std::size_t records) {
  const auto& r = m.reliability;
  return std::fabs(r.pdr + r.per + r.pcr - 1.0) <= 1e-12 && r.total() == records;
}

// -------------------------------------------------------------------------
// Shared state: the trained estimator and the Monte Carlo aggregates.

struct Shared {
  std::unique_ptr<NeuralEstimator> estimator;
  std::map<std::pair<int, SchedulerKind>, MonteCarloResult> runs;
  std::size_t conservation_failures = 0;
  std::size_t replicas_checked = 0;

  const AggregateRow& row(int rho, SchedulerKind k) {
    auto key = std::pair{rho, k};
    auto it = runs.find(key);
    if (it == runs.end()) {
      const auto seeds = desk_seeds();
      auto mc = run_monte_carlo(desk_params(rho), k, seeds, estimator.get(), jobs(), true);
      for (const auto& rep : mc.replicas) {
        ++replicas_checked;
        if (!conserved(rep.metrics, rep.records.size())) ++conservation_failures;
      }
      // Records are only kept for the conservation check.
      for (auto& rep : mc.replicas) rep.records = {};
      it = runs.emplace(key, std::move(mc)).first;
    }
    return it->second.aggregate;
  }
};

Shared shared;

// -------------------------------------------------------------------------

Verdict c1_conservation() {
  std::size_t runs = 0;
  std::size_t bad = 0;
  for (auto kind : kAllSchedulers) {
    for (double rho : {40.0, 200.0}) {
      auto p = desk_params(rho);
      p.scenario.sim_duration_ms = 3000;
      p.grid.horizon = 3000;
      for (std::uint64_t seed : {101, 102}) {
        const auto r = run_simulation(p, kind, seed, shared.estimator.get());
        ++runs;
        if (!conserved(r.metrics, r.records.size())) ++bad;
      }
    }
  }
  std::ostringstream d;
  d << runs << " runs, " << bad << " violations of |pdr+per+pcr-1| <= 1e-12 or count mismatch";
  return {bad == 0, d.str()};
}

Verdict c2_csr_oracle() {
  Rng rng(2024);
  std::uniform_int_distribution<int> subchannels(1, 10);
  std::uniform_real_distribution<double> value(-125.0, -40.0);
  std::uniform_real_distribution<double> fraction(0.0, 0.6);
  std::bernoulli_distribution coarse(0.3);
  std::size_t mismatches = 0;
  std::size_t failures_agreed = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = subchannels(rng);
    std::uniform_int_distribution<int> frames(1, 200 / c);
    const auto subset = window_subset(VehicleId{0}, 1, 0, frames(rng), c);
    std::bernoulli_distribution reserve(fraction(rng));
    std::vector<double> v(subset.size());
    std::vector<std::uint8_t> res(subset.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = coarse(rng) ? std::round(value(rng) / 3.0) * 3.0 : value(rng);
      res[i] = reserve(rng) ? 1 : 0;
    }
    const auto got = build_csr(v, res, subset, {});
    const auto want = oracle::csr(v, res, subset.cells, -110.0, 3.0, 0.0);
    if (got.has_value() != want.has_value()) {
      ++mismatches;
      continue;
    }
    if (!got) {
      ++failures_agreed;
      continue;
    }
    bool same = got->rsrp_threshold_dbm == want->threshold && got->entries.size() == want->cells.size();
    for (std::size_t i = 0; same && i < want->cells.size(); ++i) same = got->entries[i].cell == want->cells[i];
    if (!same) ++mismatches;
  }
  std::ostringstream d;
  d << "1000 instances (<= 200 cells), " << mismatches << " mismatches, " << failures_agreed
    << " agreed construction failures";
  return {mismatches == 0, d.str()};
}

Verdict c3_sci_codec() {
  Rng rng(77);
  std::uniform_int_distribution<int> u(0, 255);
  std::size_t mismatches = 0;
  bool saw0 = false;
  bool saw127 = false;
  for (int i = 0; i < 100000; ++i) {
    ExtendedSci s;
    s.priority = static_cast<std::uint8_t>(u(rng) % 8);
    s.ri1 = static_cast<std::uint8_t>(u(rng) % 32);
    s.ri2 = static_cast<std::uint8_t>(i == 0 ? 0 : i == 1 ? 127 : u(rng) % 128);
    s.rri_code = static_cast<std::uint8_t>(u(rng) % 16);
    s.mcs = static_cast<std::uint8_t>(u(rng) % 32);
    s.dmrs_and_misc = static_cast<std::uint8_t>(u(rng));
    saw0 |= s.ri2 == 0;
    saw127 |= s.ri2 == 127;
    const auto word = encode_sci(s);
    if (word != oracle::sci_word(s) || !(decode_sci(word) == s)) ++mismatches;
  }
  // Announcements at both ends of the offset range.
  const auto far = sci_for_reservation(ResourceIndex{4, 1127}, 1000);
  const auto none = sci_for_reservation(std::nullopt, 1000);
  const bool bounds = reservation_of(decode_sci(encode_sci(far)), 1000) == ResourceIndex{4, 1127} &&
                      !reservation_of(decode_sci(encode_sci(none)), 1000).has_value();
  std::ostringstream d;
  d << "100000 tuples, " << mismatches << " mismatches; ri2 boundaries 0/127 "
    << (saw0 && saw127 && bounds ? "covered" : "MISSING");
  return {mismatches == 0 && saw0 && saw127 && bounds, d.str()};
}

Verdict c4_estimator_numerics() {
  Rng rng(404);
  std::uniform_int_distribution<int> width(2, 12);
  std::uniform_int_distribution<int> depth(1, 5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::size_t checked = 0;
  std::size_t bad = 0;
  for (int net_i = 0; net_i < 12; ++net_i) {
    std::vector<int> dims{5};
    const int hidden = depth(rng);
    for (int h = 0; h < hidden; ++h) dims.push_back(width(rng));
    dims.push_back(1);
    auto net = EstimatorNet::initialized(rng, dims);
    for (auto& l : net.layers()) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.1 * g(rng);
    }
    const int batch = 8;
    std::vector<std::vector<double>> xs(batch, std::vector<double>(5));
    std::vector<double> ys(batch);
    Eigen::MatrixXd in(5, batch);
    Eigen::VectorXd target(batch);
    for (int j = 0; j < batch; ++j) {
      for (int i = 0; i < 5; ++i) in(i, j) = xs[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = g(rng);
      target(j) = ys[static_cast<std::size_t>(j)] = g(rng);
    }
    const auto lg = loss_and_gradient(net, in, target);
    const double h = 1e-6;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto check = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = oracle::mse(net, xs, ys);
        param = keep - h;
        const double down = oracle::mse(net, xs, ys);
        param = keep;
        ++checked;
        if (std::fabs((up - down) / (2 * h) - analytic) > std::max(1e-4, 1e-2 * std::fabs(analytic))) ++bad;
      };
      auto& layer = net.layers()[l];
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) check(layer.weight(r, c), lg.gradients[l].weight(r, c));
        check(layer.bias(r), lg.gradients[l].bias(r));
      }
    }
  }

  Rng data_rng(405);
  std::vector<PowerTerms> terms;
  (void)generate_dataset(data_rng, 100000, GeneratorConfig{}, &terms);
  double worst = 0.0;
  for (const auto& t : terms) {
    worst = std::max(worst, std::fabs(t.label_mw - t.eps_o_mw - t.hidden_mw + t.exposed_mw));
  }
  std::ostringstream d;
  d << "12 nets, " << checked << " parameters, " << bad << " outside max(1e-4, 1e-2|g|); "
    << "power conservation worst " << worst << " mW over 1e5 samples";
  return {bad == 0 && worst <= 1e-12, d.str()};
}

Verdict c5_estimator_learning() {
  Rng rng(505);
  TrainConfig cfg;
  auto full = train(rng, cfg);
  const auto& r = full.report;
  shared.estimator = std::make_unique<NeuralEstimator>(full.net);

  TrainConfig deg = cfg;
  deg.generator.degenerate = true;
  Rng rng2(506);
  const auto identity_net = train(rng2, deg).net;
  Rng fresh(507);
  const auto probe = generate_dataset(fresh, 10000, deg.generator);
  double se = 0.0;
  for (const auto& s : probe) {
    const auto f = normalized_features({s.eps_o_dbm, false, kAbsentDistanceM, false, kAbsentDistanceM});
    const double out = scaling::denormalize_rssi(forward(identity_net, f));
    se += (out - s.eps_o_dbm) * (out - s.eps_o_dbm);
  }
  const double rmse = std::sqrt(se / static_cast<double>(probe.size()));
  const bool pass = r.holdout_mse_db2 < 0.25 * r.baseline_mse_db2 && rmse < 0.5;
  std::ostringstream d;
  d << "holdout MSE " << r.holdout_mse_db2 << " dB^2 vs 0.25 x baseline " << 0.25 * r.baseline_mse_db2
    << "; degenerate RMSE vs identity " << rmse << " dB (< 0.5)";
  return {pass, d.str()};
}

Verdict c6_ipg_oracle() {
  Rng rng(606);
  std::uniform_int_distribution<int> len(0, 80);
  std::uniform_real_distribution<double> loss(0.0, 0.95);
  std::uniform_int_distribution<int> jitter(1, 20);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::bernoulli_distribution lost(loss(rng));
    std::bernoulli_distribution collided(0.3);
    std::vector<TxRecord> recs;
    const int n = len(rng);
    for (int l = 0; l < n; ++l) {
      TxRecord r;
      r.index = l;
      r.cell = {0, 20 * l + jitter(rng)};
      r.outcome = lost(rng) ? (collided(rng) ? Outcome::Collision : Outcome::Error) : Outcome::Reception;
      recs.push_back(r);
    }
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto want = oracle::ipg_gaps(recs);
    const auto got = compute_ipg(recs);
    if (want.empty() ? got.has_value() : (!got || got->gaps_ms != want)) ++bad;
  }
  std::ostringstream d;
  d << "1000 loss patterns, " << bad << " mismatches against the pairwise scan";
  return {bad == 0, d.str()};
}

bool separated_above(const MetricSummary& hi, const MetricSummary& lo) { return hi.lo() > lo.hi(); }

Verdict c7_ds_vs_sps() {
  const auto& sps = shared.row(200, SchedulerKind::SbSps);
  const auto& ds = shared.row(200, SchedulerKind::SbDs);
  return {separated_above(ds.pcr, sps.pcr),
          "rho=200 PCR SbDs " + fmt(ds.pcr) + " vs SbSps " + fmt(sps.pcr)};
}

Verdict c8_ext_sci() {
  const auto& ds = shared.row(200, SchedulerKind::SbDs);
  const auto& ext = shared.row(200, SchedulerKind::ExtSciAvoid);
  return {separated_above(ds.pcr, ext.pcr), "rho=200 PCR ExtSciAvoid " + fmt(ext.pcr) + " vs SbDs " + fmt(ds.pcr)};
}

Verdict c9_proactive_pdr() {
  bool pass = true;
  std::string detail;
  for (int rho : {200, 400}) {
    const auto& pr = shared.row(rho, SchedulerKind::PrCara);
    const auto& sps = shared.row(rho, SchedulerKind::SbSps);
    const auto& ds = shared.row(rho, SchedulerKind::SbDs);
    pass = pass && separated_above(pr.pdr, sps.pdr) && separated_above(pr.pdr, ds.pdr);
    detail += (detail.empty() ? "" : "; ") + std::string("rho=") + std::to_string(rho) + " PDR PrCara " +
              fmt(pr.pdr) + ", SbSps " + fmt(sps.pdr) + ", SbDs " + fmt(ds.pdr);
  }
  return {pass, detail};
}

Verdict c10_vs_min_rssi() {
  const auto& pr = shared.row(400, SchedulerKind::PrCara);
  const auto& mr = shared.row(400, SchedulerKind::MinRssi);
  const bool overlap = !(pr.pdr.lo() > mr.pdr.hi());
  return {pr.pdr.mean >= mr.pdr.mean, "rho=400 PDR PrCara " + fmt(pr.pdr) + " vs MinRssi " + fmt(mr.pdr) +
                                          (overlap ? " (CIs overlap)" : " (CIs separated)")};
}

Verdict c11_leaving_attempts() {
  auto p = desk_params(200);
  p.scenario.traffic = TrafficMode::LeaveEvent;
  const auto seeds = desk_seeds();

  auto ideal = p;
  ideal.ideal_channel = true;
  ideal.scenario.sim_duration_ms = 4000;
  ideal.grid.horizon = 4000;
  std::size_t events = 0;
  bool exact = true;
  for (auto kind : {SchedulerKind::SbSps, SchedulerKind::PrCara}) {
    const std::vector<std::uint64_t> few{1, 2, 3};
    for (const auto& rep : run_monte_carlo(ideal, kind, few, shared.estimator.get(), jobs()).replicas) {
      for (const auto& e : rep.events) {
        ++events;
        exact = exact && e.attempts == 3;
      }
    }
  }

  const auto sps = run_monte_carlo(p, SchedulerKind::SbSps, seeds, shared.estimator.get(), jobs()).aggregate;
  const auto pr = run_monte_carlo(p, SchedulerKind::PrCara, seeds, shared.estimator.get(), jobs()).aggregate;
  const bool in_range = [](const MetricSummary& s) { return s.mean > 3.0 && s.mean < 6.0; }(sps.event_attempts) &&
                        pr.event_attempts.mean > 3.0 && pr.event_attempts.mean < 6.0;
  const bool pass = exact && events > 0 && in_range && pr.event_attempts.mean <= sps.event_attempts.mean;
  std::ostringstream d;
  d << "lossless: " << events << " events, all 3 attempts: " << (exact ? "yes" : "no") << "; rho=200 mean attempts SbSps "
    << fmt(sps.event_attempts) << ", PrCara " << fmt(pr.event_attempts);
  return {pass, d.str()};
}

Verdict c12_determinism() {
  auto p = desk_params(200);
  p.scenario.sim_duration_ms = 3000;
  p.grid.horizon = 3000;
  bool same = true;
  for (auto kind : kAllSchedulers) {
    auto csv = [&] {
      std::ostringstream out;
      write_records_csv(out, run_simulation(p, kind, 1212, shared.estimator.get()).records);
      return out.str();
    };
    same = same && csv() == csv();
  }
  const std::vector<std::uint64_t> seeds{5, 6, 7};
  auto aggregate = [&](int threads) {
    std::ostringstream out;
    const auto mc = run_monte_carlo(p, SchedulerKind::PrCara, seeds, shared.estimator.get(), threads);
    write_aggregate_csv(out, std::vector<AggregateRow>{mc.aggregate});
    return out.str();
  };
  const bool threads_same = aggregate(1) == aggregate(3);
  return {same && threads_same, std::string("record CSVs of 5 schedulers repeated: ") + (same ? "identical" : "DIFFER") +
                                    "; aggregate CSV with 1 vs 3 threads: " + (threads_same ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  // 5 trains the estimator the simulations use, so it runs first.
  const std::vector<Criterion> order{
      {5, "estimator learning", c5_estimator_learning},
      {1, "metric conservation", c1_conservation},
      {2, "CSR oracle equivalence", c2_csr_oracle},
      {3, "SCI codec roundtrip", c3_sci_codec},
      {4, "estimator numerics", c4_estimator_numerics},
      {6, "IPG oracle", c6_ipg_oracle},
      {7, "dynamic scheduling collides more than semi-persistent", c7_ds_vs_sps},
      {8, "subframe sharing lowers collisions", c8_ext_sci},
      {9, "proactive scheduling raises delivery", c9_proactive_pdr},
      {10, "proactive estimate vs minimum RSSI", c10_vs_min_rssi},
      {11, "leaving event attempts", c11_leaving_attempts},
      {12, "determinism", c12_determinism},
  };
  std::map<int, std::string> lines;
  bool all = true;
  for (const auto& c : order) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char head[160];
    std::snprintf(head, sizeof head, "[%s] %2d %s (%.1f s): ", v.pass ? "PASS" : "FAIL", c.id, c.name, secs);
    lines[c.id] = head + v.detail;
    std::cerr << lines[c.id] << std::endl;
    all = all && v.pass;
  }
  // Every desk-scale replica also feeds criterion 1.
  if (shared.conservation_failures > 0) {
    lines[1] = "[FAIL]  1 metric conservation: " + std::to_string(shared.conservation_failures) +
               " desk-scale replicas violate conservation";
    all = false;
  } else {
    lines[1] += "; plus " + std::to_string(shared.replicas_checked) + " desk-scale replicas conserved";
  }
  std::cout << "acceptance (desk scale: " << kDeskDurationMs / 1000 << " s, " << kDeskSeeds << " seeds)\n";
  for (const auto& [id, line] : lines) std::cout << line << '\n';
  std::cout << (all ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
