#include "prcara/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "prcara/error.hpp"

namespace prcara {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Vue: return "VUE";
    case Role::Pvue: return "PVUE";
    case Role::Jv: return "JV";
  }
  throw InvariantViolation("unhandled role");
}

Role parse_role(std::string_view name) {
  for (auto role : {Role::Vue, Role::Pvue, Role::Jv}) {
    if (to_string(role) == name) return role;
  }
  throw FormatError("unknown role '" + std::string(name) + "'");
}

std::string_view to_string(TrafficMode mode) {
  switch (mode) {
    case TrafficMode::PeriodicOnly: return "PeriodicOnly";
    case TrafficMode::JoinEvent: return "JoinEvent";
    case TrafficMode::LeaveEvent: return "LeaveEvent";
  }
  throw InvariantViolation("unhandled traffic mode");
}

TrafficMode parse_traffic_mode(std::string_view name) {
  for (auto mode : {TrafficMode::PeriodicOnly, TrafficMode::JoinEvent, TrafficMode::LeaveEvent}) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown traffic mode '" + std::string(name) + "'");
}

void Scenario::validate() const {
  if (!(road_length_m > 0.0)) throw ConfigError("scenario: road_length_m must be > 0");
  if (lanes < 1) throw ConfigError("scenario: lanes must be >= 1");
  if (!(lane_width_m > 0.0)) throw ConfigError("scenario: lane_width_m must be > 0");
  if (!(density_per_km >= 0.0)) throw ConfigError("scenario: density must be >= 0");
  if (n_platoons < 1) throw ConfigError("scenario: n_platoons must be >= 1");
  if (platoon_size < 2) throw ConfigError("scenario: platoon_size must be >= 2");
  if (!(intra_gap_m > 0.0)) throw ConfigError("scenario: intra_gap_m must be > 0");
  if (sim_duration_ms < 1) throw ConfigError("scenario: sim_duration_ms must be >= 1");
  if (!(speed_min_mps >= 0.0 && speed_min_mps <= speed_max_mps)) {
    throw ConfigError("scenario: speed range must satisfy 0 <= min <= max");
  }
  if (leaving_index < 1 || leaving_index >= platoon_size) {
    throw ConfigError("scenario: leaving_index must name a non-leader member");
  }
  if (joining_index < 0 || joining_index + 1 >= platoon_size) {
    throw ConfigError("scenario: joining_index must have a follower");
  }
}

int vue_count(const Scenario& scenario) {
  return static_cast<int>(std::lround(scenario.density_per_km * scenario.road_length_m / 1000.0));
}

namespace {

double wrap(double x, double length) {
  double r = std::fmod(x, length);
  return r < 0.0 ? r + length : r;
}

}  // namespace

std::vector<Vehicle> generate_highway(Rng& rng, const Scenario& scenario) {
  scenario.validate();
  const double platoon_span = (scenario.platoon_size - 1) * scenario.intra_gap_m;
  if (scenario.n_platoons * platoon_span >= scenario.road_length_m) {
    throw GeometryError("scenario: platoons do not fit on a " + std::to_string(scenario.road_length_m) + " m road");
  }
  std::uniform_real_distribution<double> along(0.0, scenario.road_length_m);
  std::uniform_real_distribution<double> speed(scenario.speed_min_mps, scenario.speed_max_mps);
  std::uniform_int_distribution<int> lane(0, scenario.lanes - 1);

  std::vector<Vehicle> vehicles;
  std::uint32_t next_id = 0;
  const double first_leader = along(rng);
  for (int p = 0; p < scenario.n_platoons; ++p) {
    const double leader_x = first_leader + p * scenario.road_length_m / scenario.n_platoons;
    const double v = speed(rng);
    for (int i = 0; i < scenario.platoon_size; ++i) {
      vehicles.push_back({VehicleId{next_id++}, Role::Pvue,
                          wrap(leader_x - i * scenario.intra_gap_m, scenario.road_length_m), 0, v,
                          PlatoonSlot{p, i}});
    }
  }
  if (scenario.traffic == TrafficMode::JoinEvent) {
    const auto& front = vehicles[static_cast<std::size_t>(scenario.joining_index)];
    vehicles.push_back({VehicleId{next_id++}, Role::Jv,
                        wrap(front.x_m - scenario.intra_gap_m / 2.0, scenario.road_length_m), -1, front.speed_mps,
                        std::nullopt});
  }
  const int n_vue = vue_count(scenario);
  for (int k = 0; k < n_vue; ++k) {
    Vehicle v;
    v.id = VehicleId{next_id++};
    v.x_m = along(rng);
    v.lane = lane(rng);
    v.speed_mps = speed(rng);
    vehicles.push_back(v);
  }
  return vehicles;
}

// ---------------------------------------------------------------------------

Trace::Trace(std::vector<VehicleTrack> tracks) : tracks_(std::move(tracks)) {
  if (tracks_.empty()) throw FormatError("trace: no vehicles");
  start_ms_ = tracks_.front().samples.front().time_ms;
  end_ms_ = start_ms_;
  for (const auto& t : tracks_) {
    if (t.samples.empty()) throw FormatError("trace: vehicle without samples");
    start_ms_ = std::min(start_ms_, t.samples.front().time_ms);
    end_ms_ = std::max(end_ms_, t.samples.back().time_ms);
  }
}

VehicleState Trace::state_at(std::size_t track, std::int64_t time_ms) const {
  const auto& s = tracks_.at(track).samples;
  if (time_ms <= s.front().time_ms) return {s.front().x_m, s.front().lane, s.front().speed_mps};
  if (time_ms >= s.back().time_ms) return {s.back().x_m, s.back().lane, s.back().speed_mps};
  auto hi = std::upper_bound(s.begin(), s.end(), time_ms,
                             [](std::int64_t t, const TraceSample& x) { return t < x.time_ms; });
  const auto& b = *hi;
  const auto& a = *(hi - 1);
  if (a.time_ms == time_ms) return {a.x_m, a.lane, a.speed_mps};
  const double w = static_cast<double>(time_ms - a.time_ms) / static_cast<double>(b.time_ms - a.time_ms);
  return {a.x_m + w * (b.x_m - a.x_m), a.lane, a.speed_mps + w * (b.speed_mps - a.speed_mps)};
}

void export_trace(std::ostream& out, std::span<const Vehicle> vehicles, std::int64_t duration_ms,
                  std::int64_t spacing_ms) {
  if (spacing_ms < 1 || spacing_ms > Trace::kMaxSpacingMs) throw DomainError("trace: spacing must be in [1, 100] ms");
  if (duration_ms < 0) throw DomainError("trace: negative duration");
  out << "time_ms,vehicle_id,role,x_m,lane,speed_mps\n" << std::setprecision(17);
  for (std::int64_t t = 0;; t = std::min(t + spacing_ms, duration_ms)) {
    for (const auto& v : vehicles) {
      out << t << ',' << to_index(v.id) << ',' << to_string(v.role) << ','
          << v.x_m + v.speed_mps * static_cast<double>(t) / 1000.0 << ',' << v.lane << ',' << v.speed_mps << '\n';
    }
    if (t == duration_ms) break;
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& field, const char* what, std::size_t line) {
  std::istringstream in(field);
  T value{};
  in >> value;
  if (!in || !in.eof() || field.empty()) {
    throw FormatError("trace: bad " + std::string(what) + " '" + field + "'", line);
  }
  return value;
}

}  // namespace

Trace read_trace(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("trace: empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_ms,vehicle_id,role,x_m,lane,speed_mps") throw FormatError("trace: unexpected header", 1);

  std::map<std::uint32_t, VehicleTrack> tracks;
  std::optional<std::int64_t> first_time;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6) throw FormatError("trace: expected 6 columns", line_no);
    TraceSample s;
    s.time_ms = parse_number<std::int64_t>(fields[0], "time_ms", line_no);
    const auto id = parse_number<std::uint32_t>(fields[1], "vehicle_id", line_no);
    Role role;
    try {
      role = parse_role(fields[2]);
    } catch (const FormatError& e) {
      throw FormatError(std::string("trace: ") + e.what(), line_no);
    }
    s.x_m = parse_number<double>(fields[3], "x_m", line_no);
    s.lane = parse_number<int>(fields[4], "lane", line_no);
    s.speed_mps = parse_number<double>(fields[5], "speed_mps", line_no);
    if (!std::isfinite(s.x_m) || !std::isfinite(s.speed_mps)) throw FormatError("trace: non-finite value", line_no);
    if (!first_time) first_time = s.time_ms;

    auto it = tracks.find(id);
    if (it == tracks.end()) {
      if (s.time_ms != *first_time) {
        throw FormatError("trace: vehicle " + std::to_string(id) + " appears mid-trace", line_no);
      }
      it = tracks.emplace(id, VehicleTrack{VehicleId{id}, role, {}}).first;
    } else {
      const auto& prev = it->second.samples.back();
      if (it->second.role != role) throw FormatError("trace: role of vehicle " + std::to_string(id) + " changed", line_no);
      if (s.time_ms <= prev.time_ms) throw FormatError("trace: non-monotonic timestamp", line_no);
      if (s.time_ms - prev.time_ms > Trace::kMaxSpacingMs) {
        throw FormatError("trace: snapshot spacing exceeds 100 ms", line_no);
      }
    }
    it->second.samples.push_back(s);
  }
  if (tracks.empty()) throw FormatError("trace: no samples", line_no);
  std::vector<VehicleTrack> out;
  out.reserve(tracks.size());
  for (auto& [id, track] : tracks) out.push_back(std::move(track));
  return Trace(std::move(out));
}

Trace ingest_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("trace: cannot open " + path.string());
  return read_trace(in);
}

std::vector<Vehicle> vehicles_from_trace(const Trace& trace, double road_length_m) {
  if (!(road_length_m > 0.0)) throw ConfigError("trace: road length must be > 0");
  std::vector<Vehicle> vehicles;
  for (std::size_t i = 0; i < trace.tracks().size(); ++i) {
    const auto& track = trace.tracks()[i];
    const auto state = trace.state_at(i, trace.start_ms());
    vehicles.push_back({track.id, track.role, wrap(state.x_m, road_length_m), state.lane, state.speed_mps,
                        std::nullopt});
  }
  // One platoon: PVUEs ordered by unwrapped position, front first.
  std::vector<std::size_t> pvues;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (vehicles[i].role == Role::Pvue) pvues.push_back(i);
  }
  std::sort(pvues.begin(), pvues.end(), [&](std::size_t a, std::size_t b) {
    return trace.state_at(a, trace.start_ms()).x_m > trace.state_at(b, trace.start_ms()).x_m;
  });
  for (std::size_t k = 0; k < pvues.size(); ++k) vehicles[pvues[k]].platoon = PlatoonSlot{0, static_cast<int>(k)};
  return vehicles;
}

// ---------------------------------------------------------------------------

EventFsm make_leaving_fsm(VehicleId hv, VehicleId lv, std::int64_t start_ms, int retry_ms) {
  EventFsm fsm;
  fsm.kind = EventKind::Leaving;
  fsm.legs = {{"leave_request", lv, hv}, {"leave_permission", hv, lv}, {"leave_confirmation", lv, hv}};
  fsm.start_ms = start_ms;
  fsm.retry_ms = retry_ms;
  return fsm;
}

EventFsm make_joining_fsm(VehicleId hv, VehicleId jv, VehicleId fv_jv, std::int64_t start_ms, int retry_ms) {
  EventFsm fsm;
  fsm.kind = EventKind::Joining;
  fsm.legs = {{"join_request", jv, hv},
              {"join_alert_stretch", hv, fv_jv},
              {"join_permission", hv, jv},
              {"join_confirmation", jv, hv}};
  fsm.start_ms = start_ms;
  fsm.retry_ms = retry_ms;
  return fsm;
}

namespace {

EventMessage emit(EventFsm& fsm, std::int64_t now_ms) {
  const auto& leg = fsm.legs.at(fsm.phase);
  fsm.attempts += 1;
  fsm.pending_since_ms = now_ms;
  return {fsm.phase, leg.sender, leg.receiver, now_ms, fsm.attempts};
}

}  // namespace

std::vector<EventMessage> start_event(EventFsm& fsm) {
  if (fsm.legs.empty()) throw DomainError("event: no legs");
  if (fsm.retry_ms < 1) throw DomainError("event: retry timer must be >= 1 ms");
  if (fsm.started) throw DomainError("event: already started");
  fsm.started = true;
  return {emit(fsm, fsm.start_ms)};
}

std::vector<EventMessage> step_event_fsm(EventFsm& fsm, std::span<const Delivery> delivered, std::int64_t now_ms) {
  if (!fsm.started) throw DomainError("event: not started");
  if (fsm.terminal()) throw DomainError("event: already complete");
  const auto& leg = fsm.legs[fsm.phase];
  for (const auto& d : delivered) {
    if (d.leg != fsm.phase || d.sender != leg.sender || d.receiver != leg.receiver) continue;
    fsm.phase += 1;
    if (fsm.phase == fsm.legs.size()) {
      fsm.end_ms = d.at_ms;
      return {};
    }
    return {emit(fsm, d.at_ms)};
  }
  if (now_ms - fsm.pending_since_ms >= fsm.retry_ms) return {emit(fsm, now_ms)};
  return {};
}

}  // namespace prcara
