#include "prcara/sim_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include "prcara/error.hpp"
#include "prcara/sci_codec.hpp"

namespace prcara {

void DecodeThresholds::validate() const {
  if (!std::isfinite(gamma0_pam_db) || !std::isfinite(gamma0_cam_db) || !std::isfinite(gamma_sci_db)) {
    throw ConfigError("decode: thresholds must be finite");
  }
  if (gamma_sci_db > gamma0_pam_db || gamma_sci_db > gamma0_cam_db) {
    throw ConfigError("decode: gamma_sci_db must not exceed gamma0");
  }
}

void TrafficParams::validate() const {
  for (int rri : {vue_rri_ms, pvue_rri_ms}) {
    if (rri < 1) throw ConfigError("traffic: rri must be >= 1 ms");
    (void)rri_code_for_ms(rri);
  }
  if (vue_rc_min < 1 || vue_rc_max < vue_rc_min || pvue_rc_min < 1 || pvue_rc_max < pvue_rc_min) {
    throw ConfigError("traffic: rc ranges must satisfy 1 <= min <= max");
  }
  if (cam_bytes < 1 || pam_bytes < 1 || event_bytes < 1) throw ConfigError("traffic: payloads must be >= 1 byte");
  if (mcs < 0 || mcs > 31) throw ConfigError("traffic: mcs must fit 5 bits");
  if (event_retry_ms < 1) throw ConfigError("traffic: event_retry_ms must be >= 1");
  if (event_interval_ms < 1) throw ConfigError("traffic: event_interval_ms must be >= 1");
}

void SimParams::validate() const {
  scenario.validate();
  grid.validate();
  channel.validate();
  budget.validate();
  decode.validate();
  traffic.validate();
  if (grid.num_subchannels > 32) throw ConfigError("grid: at most 32 subchannels fit the SCI");
  if (warmup_ms < 0 || warmup_ms >= scenario.sim_duration_ms) {
    throw ConfigError("warmup_ms must be in [0, sim_duration_ms)");
  }
  if (!(min_distance_m > 0.0)) throw ConfigError("min_distance_m must be > 0");
  if (!(csr.step_db > 0.0)) throw ConfigError("sensing: step_db must be > 0");
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Reception: return "Reception";
    case Outcome::Error: return "Error";
    case Outcome::Collision: return "Collision";
  }
  throw InvariantViolation("unhandled outcome");
}

// ---------------------------------------------------------------------------
// Metrics

Reliability compute_reliability(std::span<const TxRecord> records) {
  if (records.empty()) throw UndefinedMetrics("reliability: no transmissions");
  Reliability r;
  for (const auto& rec : records) {
    switch (rec.outcome) {
      case Outcome::Reception: ++r.receptions; break;
      case Outcome::Error: ++r.errors; break;
      case Outcome::Collision: ++r.collisions; break;
    }
  }
  const double n = static_cast<double>(records.size());
  r.pdr = static_cast<double>(r.receptions) / n;
  r.per = static_cast<double>(r.errors) / n;
  r.pcr = static_cast<double>(r.collisions) / n;
  return r;
}

double ecdf_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw UndefinedMetrics("quantile of an empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("quantile: p must be in (0, 1]");
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::optional<IpgStats> compute_ipg(std::span<const TxRecord> link_records) {
  std::vector<const TxRecord*> received;
  for (const auto& rec : link_records) {
    if (rec.outcome == Outcome::Reception) received.push_back(&rec);
  }
  if (received.size() < 2) return std::nullopt;
  std::sort(received.begin(), received.end(),
            [](const TxRecord* a, const TxRecord* b) { return a->index < b->index; });
  IpgStats stats;
  stats.gaps_ms.reserve(received.size() - 1);
  for (std::size_t i = 0; i + 1 < received.size(); ++i) {
    stats.gaps_ms.push_back(static_cast<double>(std::llabs(received[i + 1]->cell.subframe - received[i]->cell.subframe)));
  }
  std::sort(stats.gaps_ms.begin(), stats.gaps_ms.end());
  stats.mean_ms = std::accumulate(stats.gaps_ms.begin(), stats.gaps_ms.end(), 0.0) /
                  static_cast<double>(stats.gaps_ms.size());
  stats.p90_ms = ecdf_quantile(stats.gaps_ms, 0.9);
  return stats;
}

RunMetrics summarize_run(std::span<const TxRecord> records, std::span<const EventRecord> events,
                         const RunCounters& counters) {
  RunMetrics m;
  m.counters = counters;
  m.reliability = compute_reliability(records);

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<TxRecord>> links;
  for (const auto& rec : records) links[{to_index(rec.sender), to_index(rec.receiver)}].push_back(rec);
  std::vector<double> gaps;
  m.counters.starved_links = 0;
  for (const auto& [key, recs] : links) {
    const auto ipg = compute_ipg(recs);
    if (!ipg) {
      ++m.counters.starved_links;
      continue;
    }
    gaps.insert(gaps.end(), ipg->gaps_ms.begin(), ipg->gaps_ms.end());
  }
  if (gaps.empty()) {
    m.ipg_mean_ms = m.ipg_p90_ms = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::sort(gaps.begin(), gaps.end());
    m.ipg_mean_ms = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    m.ipg_p90_ms = ecdf_quantile(gaps, 0.9);
  }

  m.events_completed = events.size();
  if (events.empty()) {
    m.event_processing_ms = m.event_attempts = std::numeric_limits<double>::quiet_NaN();
  } else {
    double ms = 0.0;
    double attempts = 0.0;
    for (const auto& e : events) {
      ms += static_cast<double>(e.end_ms - e.start_ms);
      attempts += e.attempts;
    }
    m.event_processing_ms = ms / static_cast<double>(events.size());
    m.event_attempts = attempts / static_cast<double>(events.size());
  }
  return m;
}

// ---------------------------------------------------------------------------
// World

namespace {

constexpr std::int64_t kLogRetentionMs = 256;
constexpr std::int64_t kPositionFreshMs = 1000;
constexpr double kNearRangeM = 150.0;
constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 4;

struct LogEntry {
  std::int64_t t = 0;
  int subchannel = 0;
  std::uint32_t sender = 0;
  std::optional<ResourceIndex> announced;
};

struct LatestSci {
  std::int64_t decoded_at = kNever;
  std::optional<ResourceIndex> announced;
  int rri_ms = 0;
};

// What a platoon vehicle learned from decoded SCIs and transport blocks.
struct DecodeLog {
  std::deque<LogEntry> entries;
  std::vector<LatestSci> latest;
  std::vector<std::int64_t> position_at;

  explicit DecodeLog(std::size_t n) : latest(n), position_at(n, kNever) {}

  void prune(std::int64_t now) {
    while (!entries.empty() && entries.front().t < now - kLogRetentionMs) entries.pop_front();
  }
};

struct Agent {
  Vehicle vehicle;
  bool periodic = false;
  int rri_ms = 0;
  std::int64_t generated = 0;  // generation time of the pending packet
  std::int64_t index = 0;      // its packet index
  ResourceIndex cell;          // its cell
  SpsState sps;
  SensingMatrix sensing;
  std::optional<std::size_t> unicast;
  std::vector<std::size_t> targets;
  std::unique_ptr<DecodeLog> log;

  Agent(Vehicle v, int num_subchannels, double noise_dbm)
      : vehicle(std::move(v)), sensing(num_subchannels, kPeriodicSensingMs, noise_dbm) {}
};

struct Transmission {
  std::size_t sender = 0;
  ResourceIndex cell;
  ExtendedSci sci;
  bool pam = false;
  bool cam = false;
  bool event = false;
  std::int64_t index = 0;
  std::optional<std::size_t> receiver;
  EventMessage message;
};

struct EventTx {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  ResourceIndex cell;
  EventMessage message;
};

double wrap_x(double x, double length) {
  double r = std::fmod(x, length);
  return r < 0.0 ? r + length : r;
}

}  // namespace

struct World::Impl {
  SimParams params;
  SchedulerKind kind;
  const RssiEstimator* estimator;
  Rng rng;
  std::vector<Agent> agents;
  std::vector<std::size_t> trace_track;  // agent -> trace track
  std::vector<double> x, y;
  std::vector<std::uint8_t> transmitting;

  double noise_mw = 0.0;
  double noise_dbm = 0.0;
  double gamma0_pam = 0.0;
  double gamma0_cam = 0.0;
  double gamma_sci = 0.0;
  double tx_scale = 0.0;  // effective transmit power times the pathloss constant
  double half_exponent = 0.0;
  double shadow_scale = 0.0;
  double min_d2 = 1.0;

  std::int64_t last_t = 0;
  std::optional<EventFsm> fsm;
  std::optional<EventTx> event_tx;
  std::int64_t next_event_ms = 0;
  std::vector<EventRecord> events;
  RunCounters counters;

  std::normal_distribution<double> normal{0.0, 1.0};
  std::exponential_distribution<double> exponential{1.0};
  std::vector<double> power;  // n_tx x N
  std::vector<double> total;  // N x C, noise included

  Impl(const SimParams& p, SchedulerKind k, std::uint64_t seed, const RssiEstimator* est,
       std::optional<std::vector<Vehicle>> explicit_vehicles)
      : params(p), kind(k), estimator(est) {
    params.validate();
    if (uses_estimator(kind) && estimator == nullptr) {
      throw MissingArtifact(std::string("scheduler ") + std::string(to_string(kind)) + " needs estimator weights");
    }
    noise_dbm = noise_power_dbm(params.budget);
    noise_mw = dbm_to_mw(noise_dbm);
    gamma0_pam = db_to_linear(params.decode.gamma0_pam_db);
    gamma0_cam = db_to_linear(params.decode.gamma0_cam_db);
    gamma_sci = db_to_linear(params.decode.gamma_sci_db);
    const auto law = equivalent_power_law(params.channel);
    tx_scale = params.budget.effective_tx_mw() * law.constant;
    half_exponent = law.exponent / 2.0;
    shadow_scale = params.channel.shadowing_sigma_db * std::log(10.0) / 10.0;
    min_d2 = params.min_distance_m * params.min_distance_m;

    // Geometry from its own stream so every scheduler sees the same road.
    std::vector<Vehicle> vehicles;
    if (explicit_vehicles) {
      vehicles = std::move(*explicit_vehicles);
    } else if (params.trace) {
      vehicles = vehicles_from_trace(*params.trace, params.scenario.road_length_m);
    } else {
      Rng geometry(seed);
      vehicles = generate_highway(geometry, params.scenario);
    }
    std::seed_seq engine_seed{seed, std::uint64_t{0x5e1}};
    rng.seed(engine_seed);
    build_agents(std::move(vehicles));
    next_event_ms = params.warmup_ms;
  }

  std::size_t n() const { return agents.size(); }
  int num_c() const { return params.grid.num_subchannels; }

  void build_agents(std::vector<Vehicle> vehicles) {
    const std::size_t count = vehicles.size();
    if (count == 0) throw ConfigError("world: no vehicles");
    agents.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      agents.emplace_back(std::move(vehicles[i]), num_c(), noise_dbm);
      if (params.trace) trace_track.push_back(i);
    }
    std::map<std::pair<int, int>, std::size_t> slots;
    std::map<int, int> platoon_sizes;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& v = agents[i].vehicle;
      if (v.role == Role::Pvue) {
        if (!v.platoon) throw ConfigError("world: PVUE without platoon slot");
        if (!slots.emplace(std::pair{v.platoon->platoon, v.platoon->index}, i).second) {
          throw ConfigError("world: duplicate platoon slot");
        }
        platoon_sizes[v.platoon->platoon] = std::max(platoon_sizes[v.platoon->platoon], v.platoon->index + 1);
      }
    }
    for (const auto& [p, size] : platoon_sizes) {
      for (int i = 0; i < size; ++i) {
        if (!slots.count({p, i})) throw ConfigError("world: platoon indices must be contiguous from 0");
      }
    }
    std::uniform_int_distribution<int> vue_phase(0, params.traffic.vue_rri_ms - 1);
    std::uniform_int_distribution<int> pvue_phase(0, params.traffic.pvue_rri_ms - 1);
    for (std::size_t i = 0; i < count; ++i) {
      auto& a = agents[i];
      const auto& v = a.vehicle;
      if (v.role == Role::Vue) {
        a.periodic = true;
        a.rri_ms = params.traffic.vue_rri_ms;
        a.sps.rc_min = params.traffic.vue_rc_min;
        a.sps.rc_max = params.traffic.vue_rc_max;
        a.generated = vue_phase(rng);
      } else if (v.role == Role::Pvue) {
        a.periodic = true;
        a.rri_ms = params.traffic.pvue_rri_ms;
        a.sps.rc_min = params.traffic.pvue_rc_min;
        a.sps.rc_max = params.traffic.pvue_rc_max;
        a.generated = pvue_phase(rng);
        const int p = v.platoon->platoon;
        const int idx = v.platoon->index;
        const int size = platoon_sizes[p];
        // PAM goes to the follower; the tail reports to the vehicle ahead.
        a.unicast = slots[{p, idx + 1 < size ? idx + 1 : idx - 1}];
        if (idx > 0) a.targets.push_back(slots[{p, idx - 1}]);
        if (idx + 1 < size) a.targets.push_back(slots[{p, idx + 1}]);
        a.log = std::make_unique<DecodeLog>(count);
      } else {
        a.log = std::make_unique<DecodeLog>(count);
      }
      if (a.periodic) {
        const auto first = window_subset(v.id, 0, a.generated, a.rri_ms, num_c());
        a.cell = random_in_window(first, {}, rng);
      }
    }
    x.assign(count, 0.0);
    y.assign(count, 0.0);
    transmitting.assign(count, 0);
    total.assign(count * static_cast<std::size_t>(num_c()), 0.0);
    if (params.scenario.traffic != TrafficMode::PeriodicOnly) {
      const auto& need = params.scenario.traffic == TrafficMode::JoinEvent ? "a joining vehicle and a platoon"
                                                                           : "a platoon";
      if (slots.empty()) throw ConfigError(std::string("event traffic needs ") + need);
    }
  }

  std::optional<std::size_t> platoon_member(int platoon, int index) const {
    for (std::size_t i = 0; i < n(); ++i) {
      const auto& v = agents[i].vehicle;
      if (v.platoon && v.platoon->platoon == platoon && v.platoon->index == index) return i;
    }
    return std::nullopt;
  }

  void update_positions(std::int64_t t) {
    const double length = params.scenario.road_length_m;
    for (std::size_t i = 0; i < n(); ++i) {
      double xi;
      int lane;
      if (params.trace) {
        const auto s = params.trace->state_at(trace_track[i], t);
        xi = s.x_m;
        lane = s.lane;
      } else {
        const auto& v = agents[i].vehicle;
        xi = v.x_m + v.speed_mps * static_cast<double>(t) / 1000.0;
        lane = v.lane;
      }
      x[i] = wrap_x(xi, length);
      y[i] = lane * params.scenario.lane_width_m;
    }
  }

  double distance(std::size_t a, std::size_t b) const {
    const double length = params.scenario.road_length_m;
    double dx = std::fabs(x[a] - x[b]);
    if (dx > length / 2.0) dx = length - dx;
    const double dy = y[a] - y[b];
    return std::sqrt(std::max(dx * dx + dy * dy, min_d2));
  }

  // -------------------------------------------------------------------------
  // Candidate construction.

  std::optional<CsrList> sensed_csr(const Agent& a, const SelectionSubset& subset, int period, int window) const {
    std::vector<double> values(subset.size());
    std::vector<std::uint8_t> reserved(subset.size());
    for (std::size_t k = 0; k < subset.size(); ++k) {
      const auto& cell = subset.cells[k];
      values[k] = a.sensing.phase_average(cell.subchannel, cell.subframe, period, window).rssi_dbm;
      reserved[k] = a.sensing.is_reserved(cell) ? 1 : 0;
    }
    return build_csr(values, reserved, subset, params.csr);
  }

  std::vector<std::int64_t> target_subframes(const Agent& a, std::span<const std::size_t> targets,
                                             const SelectionSubset& subset) const {
    std::vector<std::int64_t> out;
    if (!a.log) return out;
    for (const auto& e : a.log->entries) {
      if (!e.announced || !subset.contains(*e.announced)) continue;
      if (std::find(targets.begin(), targets.end(), e.sender) != targets.end()) out.push_back(e.announced->subframe);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool position_known(const Agent& a, std::size_t j, std::int64_t now) const {
    return a.log->position_at[j] >= now - kPositionFreshMs;
  }

  ProactiveView proactive_view(std::size_t self, const SelectionSubset& subset, int period, std::int64_t now) const {
    const Agent& a = agents[self];
    const std::int64_t lag = params.traffic.vue_rri_ms;
    const std::size_t cells = subset.size();
    std::vector<std::vector<std::uint32_t>> on_prev(cells), announced_for(cells);
    for (const auto& e : a.log->entries) {
      const ResourceIndex ahead{e.subchannel, e.t + lag};
      if (subset.contains(ahead)) on_prev[subset.offset_of(ahead)].push_back(e.sender);
      if (e.announced && subset.contains(*e.announced)) announced_for[subset.offset_of(*e.announced)].push_back(e.sender);
    }

    ProactiveView view;
    view.cells = subset.cells;
    view.inputs.resize(cells);
    for (std::size_t k = 0; k < cells; ++k) {
      const auto& cell = subset.cells[k];
      auto& in = view.inputs[k];
      const auto past = a.sensing.reading({cell.subchannel, cell.subframe - lag});
      in.eps_o_dbm = past.sensed() ? past.rssi_dbm
                                   : a.sensing.phase_average(cell.subchannel, cell.subframe, period).rssi_dbm;
      auto contains = [](const std::vector<std::uint32_t>& v, std::uint32_t s) {
        return std::find(v.begin(), v.end(), s) != v.end();
      };
      for (auto j : announced_for[k]) {
        if (contains(on_prev[k], j) || !position_known(a, j, now)) continue;
        const double d = distance(self, j);
        if (d > kNearRangeM) continue;
        if (!in.hidden || d < in.hidden_distance_m) in.hidden_distance_m = d;
        in.hidden = true;
      }
      for (auto j : on_prev[k]) {
        if (contains(announced_for[k], j) || !position_known(a, j, now)) continue;
        const auto& latest = a.log->latest[j];
        if (latest.decoded_at < cell.subframe - lag || !latest.announced || latest.rri_ms <= 0) continue;
        const auto& ann = *latest.announced;
        const bool continues = ann.subchannel == cell.subchannel && ann.subframe <= cell.subframe &&
                               (cell.subframe - ann.subframe) % latest.rri_ms == 0;
        if (continues) continue;
        const double d = distance(self, j);
        if (d > kNearRangeM) continue;
        if (!in.exposed || d < in.exposed_distance_m) in.exposed_distance_m = d;
        in.exposed = true;
      }
    }
    estimate_view(view, *estimator);
    return view;
  }

  void count_selection(const Agent& a, const SelectionOutcome& out) {
    ++counters.selections;
    if (out.fallback) ++counters.fallbacks;
    if (a.vehicle.role != Role::Vue) {
      ++counters.pvue_selections;
      if (out.fallback) ++counters.pvue_fallbacks;
    }
    if (out.fallback) {
      spdlog::debug("vehicle {} fell back to a random in-window cell", to_index(a.vehicle.id));
    }
  }

  // Chooses the cell of the next periodic packet and the SCI announcing it.
  std::pair<ResourceIndex, ExtendedSci> select_periodic(std::size_t self, std::int64_t now) {
    Agent& a = agents[self];
    const auto subset = window_subset(a.vehicle.id, a.index + 1, a.generated + a.rri_ms, a.rri_ms, num_c());
    const SchedulerKind k = a.vehicle.role == Role::Vue ? SchedulerKind::SbSps : kind;
    SelectionOutcome out;
    switch (k) {
      case SchedulerKind::SbSps: {
        const bool reuse = a.sps.reselection_counter > 0 && a.sps.current &&
                           subset.contains({a.sps.current->subchannel, a.sps.current->subframe + a.rri_ms});
        const auto csr = reuse ? std::nullopt : sensed_csr(a, subset, a.rri_ms, 0);
        out = sb_sps_select(a.sps, csr, subset, rng);
        break;
      }
      case SchedulerKind::SbDs:
        out = sb_ds_select(sensed_csr(a, subset, a.rri_ms, 0), subset, rng);
        break;
      case SchedulerKind::ExtSciAvoid: {
        const auto reserved = target_subframes(a, a.targets, subset);
        out = ext_sci_avoid_select(sensed_csr(a, subset, a.rri_ms, 0), reserved, subset, rng);
        break;
      }
      case SchedulerKind::MinRssi:
        out.cell = min_rssi_select(proactive_view(self, subset, a.rri_ms, now), subset);
        break;
      case SchedulerKind::PrCara: {
        const auto reserved = target_subframes(a, a.targets, subset);
        out = pr_cara_select(proactive_view(self, subset, a.rri_ms, now), subset, reserved, rng, params.csr);
        break;
      }
    }
    if (!subset.contains(out.cell)) {
      throw InvariantViolation("scheduler returned a cell outside the selection window");
    }
    count_selection(a, out);
    // Legacy SCIs can only signal that the same resource is kept.
    const bool announce = uses_extended_sci(kind) ? true : (k == SchedulerKind::SbSps && out.reused);
    auto sci = sci_for_reservation(announce ? std::optional{out.cell} : std::nullopt, now,
                                   static_cast<std::uint8_t>(params.traffic.mcs));
    sci.rri_code = rri_code_for_ms(a.rri_ms);
    return {out.cell, sci};
  }

  ResourceIndex select_event(std::size_t self, std::size_t receiver, const EventMessage& msg) {
    Agent& a = agents[self];
    const int window = params.traffic.event_retry_ms;
    const int period = params.traffic.pvue_rri_ms;
    const auto subset = window_subset(a.vehicle.id, msg.attempt, msg.generated_ms, window, num_c());
    // Never on top of the sender's own pending periodic packet.
    std::vector<std::int64_t> avoid;
    if (a.periodic && subset.contains(a.cell)) avoid.push_back(a.cell.subframe);
    const std::size_t targets[] = {receiver};
    SelectionOutcome out;
    switch (kind) {
      case SchedulerKind::SbSps:
      case SchedulerKind::SbDs:
        out = ext_sci_avoid_select(sensed_csr(a, subset, period, kAperiodicSensingMs), avoid, subset, rng);
        break;
      case SchedulerKind::ExtSciAvoid: {
        auto reserved = target_subframes(a, targets, subset);
        reserved.insert(reserved.end(), avoid.begin(), avoid.end());
        out = ext_sci_avoid_select(sensed_csr(a, subset, period, kAperiodicSensingMs), reserved, subset, rng);
        break;
      }
      case SchedulerKind::MinRssi: {
        auto view = proactive_view(self, subset, period, msg.generated_ms);
        ProactiveView kept;
        for (std::size_t i = 0; i < view.size(); ++i) {
          if (std::find(avoid.begin(), avoid.end(), view.cells[i].subframe) != avoid.end()) continue;
          kept.cells.push_back(view.cells[i]);
          kept.inputs.push_back(view.inputs[i]);
          kept.eps_p_dbm.push_back(view.eps_p_dbm[i]);
        }
        out.cell = min_rssi_select(kept.cells.empty() ? view : kept, subset);
        break;
      }
      case SchedulerKind::PrCara: {
        auto reserved = target_subframes(a, targets, subset);
        reserved.insert(reserved.end(), avoid.begin(), avoid.end());
        out = pr_cara_select(proactive_view(self, subset, period, msg.generated_ms), subset, reserved, rng,
                             params.csr);
        break;
      }
    }
    if (!subset.contains(out.cell)) throw InvariantViolation("event cell outside the selection window");
    count_selection(a, out);
    return out.cell;
  }

  // -------------------------------------------------------------------------
  // Events.

  void start_event_if_due(std::int64_t t) {
    if (params.scenario.traffic == TrafficMode::PeriodicOnly || fsm || t < next_event_ms) return;
    const auto hv = platoon_member(0, 0);
    if (params.scenario.traffic == TrafficMode::LeaveEvent) {
      const auto lv = platoon_member(0, params.scenario.leaving_index);
      if (!hv || !lv) throw ConfigError("leave event: platoon too small");
      fsm = make_leaving_fsm(agents[*hv].vehicle.id, agents[*lv].vehicle.id, t, params.traffic.event_retry_ms);
    } else {
      const auto fv = platoon_member(0, params.scenario.joining_index + 1);
      std::optional<std::size_t> jv;
      for (std::size_t i = 0; i < n(); ++i) {
        if (agents[i].vehicle.role == Role::Jv) jv = i;
      }
      if (!hv || !fv || !jv) throw ConfigError("join event: needs a leader, a follower and a joining vehicle");
      fsm = make_joining_fsm(agents[*hv].vehicle.id, agents[*jv].vehicle.id, agents[*fv].vehicle.id, t,
                             params.traffic.event_retry_ms);
    }
    for (const auto& msg : start_event(*fsm)) launch(msg);
  }

  std::size_t index_of(VehicleId id) const {
    for (std::size_t i = 0; i < n(); ++i) {
      if (agents[i].vehicle.id == id) return i;
    }
    throw InvariantViolation("unknown vehicle id " + std::to_string(to_index(id)));
  }

  void launch(const EventMessage& msg) {
    const auto s = index_of(msg.sender);
    const auto r = index_of(msg.receiver);
    event_tx = EventTx{s, r, select_event(s, r, msg), msg};
  }

  // -------------------------------------------------------------------------

  std::vector<TxRecord> step(std::int64_t t) {
    if (t != last_t + 1) throw DomainError("step_subframe: subframes must advance by one");
    last_t = t;
    update_positions(t);
    start_event_if_due(t);

    std::vector<Transmission> txs;
    for (std::size_t i = 0; i < n(); ++i) {
      Agent& a = agents[i];
      if (!a.periodic) continue;
      if (a.cell.subframe < t) throw InvariantViolation("missed a scheduled transmission");
      if (a.cell.subframe != t) continue;
      Transmission tx;
      tx.sender = i;
      tx.cell = a.cell;
      tx.index = a.index;
      tx.pam = a.vehicle.role == Role::Pvue;
      tx.cam = !tx.pam;
      tx.receiver = a.unicast;
      auto [next, sci] = select_periodic(i, t);
      tx.sci = sci;
      txs.push_back(tx);
      a.index += 1;
      a.generated += a.rri_ms;
      a.cell = next;
    }
    if (event_tx && event_tx->cell.subframe == t) {
      Transmission tx;
      tx.sender = event_tx->sender;
      tx.cell = event_tx->cell;
      tx.event = true;
      tx.receiver = event_tx->receiver;
      tx.message = event_tx->message;
      tx.sci = sci_for_reservation(std::nullopt, t, static_cast<std::uint8_t>(params.traffic.mcs));
      txs.push_back(tx);
      event_tx.reset();
    }

    std::fill(transmitting.begin(), transmitting.end(), 0);
    for (const auto& tx : txs) {
      transmitting[tx.sender] = 1;
      agents[tx.sender].sensing.mark_own_transmission(t);
    }

    const std::size_t N = n();
    const auto C = static_cast<std::size_t>(num_c());
    power.assign(txs.size() * N, 0.0);
    std::fill(total.begin(), total.end(), noise_mw);
    for (std::size_t k = 0; k < txs.size(); ++k) {
      const auto s = txs[k].sender;
      const auto c = static_cast<std::size_t>(txs[k].cell.subchannel);
      double* row = power.data() + k * N;
      for (std::size_t i = 0; i < N; ++i) {
        if (transmitting[i]) continue;
        const double d = distance(s, i);
        double log_gain = -2.0 * half_exponent * std::log(d);
        if (shadow_scale > 0.0) log_gain += shadow_scale * normal(rng);
        double p = tx_scale * std::exp(log_gain);
        if (params.channel.fast_fading == FastFading::RayleighUnitMean) p *= exponential(rng);
        row[i] = p;
        total[i * C + c] += p;
      }
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!transmitting[i]) agents[i].sensing.record_subframe(t, std::span<const double>(total.data() + i * C, C));
    }

    std::vector<TxRecord> records;
    std::vector<Delivery> deliveries;
    for (std::size_t k = 0; k < txs.size(); ++k) {
      const auto& tx = txs[k];
      const auto c = static_cast<std::size_t>(tx.cell.subchannel);
      const double* row = power.data() + k * N;
      const auto reservation = reservation_of(tx.sci, t);
      const int sender_rri = rri_ms_from_code(tx.sci.rri_code);
      const double gamma0 = tx.cam ? gamma0_cam : gamma0_pam;
      for (std::size_t i = 0; i < N; ++i) {
        if (transmitting[i] || i == tx.sender) continue;
        Agent& rx = agents[i];
        if (!reservation && !rx.log) continue;
        const double sinr = row[i] / (total[i * C + c] - row[i]);
        if (sinr < gamma_sci) continue;
        ++counters.sci_decoded;
        if (reservation) rx.sensing.set_reserved(*reservation);
        if (rx.log) {
          rx.log->entries.push_back({t, tx.cell.subchannel, static_cast<std::uint32_t>(tx.sender), reservation});
          rx.log->latest[tx.sender] = {t, reservation, sender_rri};
          if (sinr >= gamma0) rx.log->position_at[tx.sender] = t;
        }
      }
      if (!tx.receiver) continue;
      const auto r = *tx.receiver;
      Outcome outcome;
      double sinr_db = std::numeric_limits<double>::quiet_NaN();
      if (params.ideal_channel) {
        outcome = Outcome::Reception;
      } else if (transmitting[r]) {
        outcome = Outcome::Collision;
      } else {
        const double sinr = row[r] / (total[r * C + c] - row[r]);
        sinr_db = linear_to_db(sinr);
        outcome = sinr >= gamma0_pam ? Outcome::Reception : Outcome::Error;
      }
      if (tx.pam) {
        records.push_back({agents[tx.sender].vehicle.id, agents[r].vehicle.id, tx.index, tx.cell, outcome, sinr_db});
      } else if (tx.event && outcome == Outcome::Reception) {
        deliveries.push_back({tx.message.leg, tx.message.sender, tx.message.receiver, t});
      }
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (agents[i].log) agents[i].log->prune(t);
    }

    if (fsm) {
      const auto follow_up = step_event_fsm(*fsm, deliveries, t);
      if (fsm->terminal()) {
        events.push_back({fsm->kind, fsm->start_ms, *fsm->end_ms, fsm->attempts});
        fsm.reset();
        const auto interval = params.traffic.event_interval_ms;
        next_event_ms = params.warmup_ms + ((t - params.warmup_ms) / interval + 1) * interval;
      } else {
        for (const auto& msg : follow_up) launch(msg);
      }
    }
    return records;
  }
};

World::World(const SimParams& params, SchedulerKind kind, std::uint64_t seed, const RssiEstimator* estimator)
    : impl_(std::make_unique<Impl>(params, kind, seed, estimator, std::nullopt)) {}

World::World(const SimParams& params, SchedulerKind kind, std::uint64_t seed, const RssiEstimator* estimator,
             std::vector<Vehicle> vehicles)
    : impl_(std::make_unique<Impl>(params, kind, seed, estimator, std::move(vehicles))) {}

World::~World() = default;
World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;

std::vector<TxRecord> World::step_subframe(std::int64_t t) { return impl_->step(t); }

RunResult World::run() {
  RunResult result;
  const auto duration = impl_->params.scenario.sim_duration_ms;
  const auto warmup = impl_->params.warmup_ms;
  for (std::int64_t t = impl_->last_t + 1; t <= duration; ++t) {
    auto records = impl_->step(t);
    if (t > warmup) result.records.insert(result.records.end(), records.begin(), records.end());
  }
  if (impl_->fsm) ++impl_->counters.events_incomplete;
  result.events = impl_->events;
  result.metrics = summarize_run(result.records, result.events, impl_->counters);
  return result;
}

std::size_t World::vehicle_count() const { return impl_->n(); }
const Vehicle& World::vehicle(std::size_t i) const { return impl_->agents.at(i).vehicle; }
ResourceIndex World::scheduled_cell(std::size_t i) const { return impl_->agents.at(i).cell; }
void World::schedule(std::size_t i, ResourceIndex cell) {
  auto& a = impl_->agents.at(i);
  if (!a.periodic) throw DomainError("schedule: vehicle has no periodic traffic");
  if (cell.subframe <= impl_->last_t) throw DomainError("schedule: subframe already processed");
  a.cell = cell;
}
const SensingMatrix& World::sensing(std::size_t i) const { return impl_->agents.at(i).sensing; }
const RunCounters& World::counters() const { return impl_->counters; }
const std::vector<EventRecord>& World::events() const { return impl_->events; }

RunResult run_simulation(const SimParams& params, SchedulerKind kind, std::uint64_t seed,
                         const RssiEstimator* estimator) {
  World world(params, kind, seed, estimator);
  return world.run();
}

// ---------------------------------------------------------------------------
// Monte Carlo

MetricSummary summarize_samples(std::span<const double> values) {
  MetricSummary s;
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  s.n = finite.size();
  if (finite.empty()) {
    s.mean = s.ci_half_width = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(s.n);
  if (s.n < 2) {
    s.ci_half_width = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double ss = 0.0;
  for (double v : finite) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  const boost::math::students_t dist(static_cast<double>(s.n - 1));
  s.ci_half_width = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

AggregateRow aggregate_replicas(double rho, SchedulerKind kind, std::span<const RunMetrics> metrics) {
  AggregateRow row;
  row.rho = rho;
  row.kind = kind;
  row.replicas = metrics.size();
  auto column = [&](auto getter) {
    std::vector<double> v;
    v.reserve(metrics.size());
    for (const auto& m : metrics) v.push_back(getter(m));
    return summarize_samples(v);
  };
  row.pdr = column([](const RunMetrics& m) { return m.reliability.pdr; });
  row.per = column([](const RunMetrics& m) { return m.reliability.per; });
  row.pcr = column([](const RunMetrics& m) { return m.reliability.pcr; });
  row.ipg_mean = column([](const RunMetrics& m) { return m.ipg_mean_ms; });
  row.ipg_p90 = column([](const RunMetrics& m) { return m.ipg_p90_ms; });
  row.event_ms = column([](const RunMetrics& m) { return m.event_processing_ms; });
  row.event_attempts = column([](const RunMetrics& m) { return m.event_attempts; });
  return row;
}

MonteCarloResult run_monte_carlo(const SimParams& params, SchedulerKind kind, std::span<const std::uint64_t> seeds,
                                 const RssiEstimator* estimator, int jobs, bool keep_records) {
  if (seeds.empty()) throw ConfigError("monte carlo: at least one seed is required");
  params.validate();
  if (uses_estimator(kind) && estimator == nullptr) {
    throw MissingArtifact(std::string("scheduler ") + std::string(to_string(kind)) + " needs estimator weights");
  }
  MonteCarloResult result;
  result.replicas.resize(seeds.size());
  std::vector<std::exception_ptr> failures(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        auto run = run_simulation(params, kind, seeds[i], estimator);
        auto& rep = result.replicas[i];
        rep.seed = seeds[i];
        rep.metrics = run.metrics;
        rep.events = std::move(run.events);
        if (keep_records) rep.records = std::move(run.records);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(seeds.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const InvariantViolation&) {
      throw;
    } catch (const std::exception& e) {
      throw ReplicaFailure(seeds[i], e.what());
    }
  }
  std::vector<RunMetrics> metrics;
  for (const auto& rep : result.replicas) metrics.push_back(rep.metrics);
  result.aggregate = aggregate_replicas(params.scenario.density_per_km, kind, metrics);
  return result;
}

void write_records_csv(std::ostream& out, std::span<const TxRecord> records) {
  out << "sender,receiver,index,subchannel,subframe,outcome,sinr_db\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << to_index(r.sender) << ',' << to_index(r.receiver) << ',' << r.index << ',' << r.cell.subchannel << ','
        << r.cell.subframe << ',' << to_string(r.outcome) << ',' << r.sinr_db << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows) {
  out << "rho,scheduler,replicas,pdr,per,pcr,ipg_mean,ipg_p90,event_ms,event_attempts,"
         "ci_pdr,ci_per,ci_pcr,ci_ipg_mean,ci_ipg_p90,ci_event_ms,ci_event_attempts\n"
      << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.rho << ',' << to_string(r.kind) << ',' << r.replicas << ',' << r.pdr.mean << ',' << r.per.mean << ','
        << r.pcr.mean << ',' << r.ipg_mean.mean << ',' << r.ipg_p90.mean << ',' << r.event_ms.mean << ','
        << r.event_attempts.mean << ',' << r.pdr.ci_half_width << ',' << r.per.ci_half_width << ','
        << r.pcr.ci_half_width << ',' << r.ipg_mean.ci_half_width << ',' << r.ipg_p90.ci_half_width << ','
        << r.event_ms.ci_half_width << ',' << r.event_attempts.ci_half_width << '\n';
  }
}

}  // namespace prcara
