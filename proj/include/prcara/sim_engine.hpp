#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "prcara/channel.hpp"
#include "prcara/resource_grid.hpp"
#include "prcara/rssi_estimator.hpp"
#include "prcara/scenario.hpp"
#include "prcara/schedulers.hpp"
#include "prcara/sensing.hpp"

namespace prcara {

struct DecodeThresholds {
  /// Transport block, per (payload, MCS). CAM and PAM share MCS 3.
  double gamma0_pam_db = 2.8;
  double gamma0_cam_db = 2.8;
  /// 1-stage SCI.
  double gamma_sci_db = -0.2;

  void validate() const;
};

struct TrafficParams {
  int vue_rri_ms = 100;
  int pvue_rri_ms = 20;
  int vue_rc_min = 5;
  int vue_rc_max = 15;
  int pvue_rc_min = 25;
  int pvue_rc_max = 75;
  int cam_bytes = 300;
  int pam_bytes = 500;
  int event_bytes = 500;
  int mcs = 3;
  int event_retry_ms = 20;
  std::int64_t event_interval_ms = 500;

  void validate() const;
};

struct SimParams {
  Scenario scenario;
  ResourceGrid grid;
  ChannelParams channel;
  LinkBudget budget;
  DecodeThresholds decode;
  TrafficParams traffic;
  CsrOptions csr;
  /// Transmissions before this time only feed sensing.
  std::int64_t warmup_ms = 1000;
  /// Every PAM and event message is delivered.
  bool ideal_channel = false;
  double min_distance_m = 1.0;
  /// Mobility from a trace instead of the synthetic generator.
  std::shared_ptr<const Trace> trace;

  void validate() const;
};

enum class Outcome { Reception, Error, Collision };

std::string_view to_string(Outcome outcome);

struct TxRecord {
  VehicleId sender{};
  VehicleId receiver{};
  /// Packet index l on the sender's stream.
  std::int64_t index = 0;
  ResourceIndex cell;
  Outcome outcome = Outcome::Reception;
  double sinr_db = 0.0;
};

struct Reliability {
  double pdr = 0.0;
  double per = 0.0;
  double pcr = 0.0;
  std::size_t receptions = 0;
  std::size_t errors = 0;
  std::size_t collisions = 0;
  std::size_t total() const { return receptions + errors + collisions; }
};

/// Throws UndefinedMetrics on an empty record set.
Reliability compute_reliability(std::span<const TxRecord> records);

struct IpgStats {
  double mean_ms = 0.0;
  double p90_ms = 0.0;
  /// Sorted gaps; the empirical CDF.
  std::vector<double> gaps_ms;
};

/// Gaps between each received packet and the next received one on the same
/// link. Records must belong to one link; they are ordered by index here.
/// nullopt when fewer than two packets were received.
std::optional<IpgStats> compute_ipg(std::span<const TxRecord> link_records);

/// p-quantile of sorted values: sorted[ceil(p n) - 1].
double ecdf_quantile(std::span<const double> sorted, double p);

struct EventRecord {
  EventKind kind = EventKind::Leaving;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  int attempts = 0;
};

struct RunCounters {
  std::size_t selections = 0;
  std::size_t fallbacks = 0;
  std::size_t pvue_selections = 0;
  std::size_t pvue_fallbacks = 0;
  std::size_t sci_decoded = 0;
  std::size_t events_incomplete = 0;
  std::size_t starved_links = 0;
};

struct RunMetrics {
  Reliability reliability;
  /// NaN when every link starved.
  double ipg_mean_ms = 0.0;
  double ipg_p90_ms = 0.0;
  /// NaN when no event completed.
  double event_processing_ms = 0.0;
  double event_attempts = 0.0;
  std::size_t events_completed = 0;
  RunCounters counters;
};

RunMetrics summarize_run(std::span<const TxRecord> records, std::span<const EventRecord> events,
                         const RunCounters& counters);

struct RunResult {
  std::vector<TxRecord> records;
  std::vector<EventRecord> events;
  RunMetrics metrics;
};

/// One replica: the vehicles, their schedulers and sensing state.
class World {
 public:
  /// `estimator` may be null unless the scheduler needs it; it must outlive
  /// the world.
  World(const SimParams& params, SchedulerKind kind, std::uint64_t seed, const RssiEstimator* estimator);
  /// Explicit vehicles instead of the generator or trace.
  World(const SimParams& params, SchedulerKind kind, std::uint64_t seed, const RssiEstimator* estimator,
        std::vector<Vehicle> vehicles);
  ~World();
  World(World&&) noexcept;
  World& operator=(World&&) noexcept;

  /// Processes subframe t; t must increase by one per call. Returns the PAM
  /// records produced at t (including warm-up).
  std::vector<TxRecord> step_subframe(std::int64_t t);

  /// Runs the whole scenario from subframe 1.
  RunResult run();

  std::size_t vehicle_count() const;
  const Vehicle& vehicle(std::size_t i) const;
  /// Next scheduled periodic cell of vehicle i.
  ResourceIndex scheduled_cell(std::size_t i) const;
  /// Overrides the next periodic cell of vehicle i (scripted tests).
  void schedule(std::size_t i, ResourceIndex cell);
  const SensingMatrix& sensing(std::size_t i) const;
  const RunCounters& counters() const;
  const std::vector<EventRecord>& events() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

RunResult run_simulation(const SimParams& params, SchedulerKind kind, std::uint64_t seed,
                         const RssiEstimator* estimator);

// ---------------------------------------------------------------------------
// Monte Carlo.

struct MetricSummary {
  double mean = 0.0;
  /// 95% Student-t half width; NaN with fewer than two samples.
  double ci_half_width = 0.0;
  std::size_t n = 0;

  double lo() const { return mean - ci_half_width; }
  double hi() const { return mean + ci_half_width; }
};

/// Mean and 95% CI over the finite values.
MetricSummary summarize_samples(std::span<const double> values);

struct AggregateRow {
  double rho = 0.0;
  SchedulerKind kind = SchedulerKind::SbSps;
  std::size_t replicas = 0;
  MetricSummary pdr, per, pcr, ipg_mean, ipg_p90, event_ms, event_attempts;
};

struct ReplicaResult {
  std::uint64_t seed = 0;
  RunMetrics metrics;
  std::vector<TxRecord> records;
  std::vector<EventRecord> events;
};

struct MonteCarloResult {
  std::vector<ReplicaResult> replicas;
  AggregateRow aggregate;
};

AggregateRow aggregate_replicas(double rho, SchedulerKind kind, std::span<const RunMetrics> metrics);

/// Replicas run on `jobs` threads; results are in seed order regardless.
/// A failing replica aborts with ReplicaFailure naming its seed.
MonteCarloResult run_monte_carlo(const SimParams& params, SchedulerKind kind, std::span<const std::uint64_t> seeds,
                                 const RssiEstimator* estimator, int jobs = 1, bool keep_records = false);

void write_records_csv(std::ostream& out, std::span<const TxRecord> records);
void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows);

}  // namespace prcara
