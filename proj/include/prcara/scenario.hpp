#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prcara/units.hpp"

namespace prcara {

enum class Role { Vue, Pvue, Jv };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct PlatoonSlot {
  int platoon = 0;
  /// 0 is the leader.
  int index = 0;
};

struct Vehicle {
  VehicleId id{};
  Role role = Role::Vue;
  /// Position along the road at time 0, in [0, road_length).
  double x_m = 0.0;
  /// 0 is the rightmost lane; the merge ramp is lane -1.
  int lane = 0;
  double speed_mps = 0.0;
  std::optional<PlatoonSlot> platoon;
};

enum class TrafficMode { PeriodicOnly, JoinEvent, LeaveEvent };

std::string_view to_string(TrafficMode mode);
TrafficMode parse_traffic_mode(std::string_view name);

struct Scenario {
  double road_length_m = 2000.0;
  int lanes = 3;
  double lane_width_m = 3.5;
  double density_per_km = 40.0;
  int n_platoons = 1;
  int platoon_size = 5;
  double intra_gap_m = 10.0;
  std::int64_t sim_duration_ms = 30000;
  TrafficMode traffic = TrafficMode::PeriodicOnly;
  double speed_min_mps = 25.0;
  double speed_max_mps = 35.0;
  /// Platoon member that leaves in LeaveEvent runs.
  int leaving_index = 2;
  /// The joining vehicle merges behind this member in JoinEvent runs.
  int joining_index = 2;

  void validate() const;
};

/// round(density * road length in km).
int vue_count(const Scenario& scenario);

/// VUEs uniform on the road and over lanes; platoons in lane 0 with constant
/// gaps; a joining vehicle on the ramp for JoinEvent runs. Ids are assigned
/// platoon members first, then the joining vehicle, then VUEs.
std::vector<Vehicle> generate_highway(Rng& rng, const Scenario& scenario);

// ---------------------------------------------------------------------------
// Traces: CSV `time_ms,vehicle_id,role,x_m,lane,speed_mps`.

struct TraceSample {
  std::int64_t time_ms = 0;
  double x_m = 0.0;
  int lane = 0;
  double speed_mps = 0.0;
};

struct VehicleTrack {
  VehicleId id{};
  Role role = Role::Vue;
  std::vector<TraceSample> samples;
};

struct VehicleState {
  double x_m = 0.0;
  int lane = 0;
  double speed_mps = 0.0;
};

class Trace {
 public:
  static constexpr std::int64_t kMaxSpacingMs = 100;

  explicit Trace(std::vector<VehicleTrack> tracks);

  const std::vector<VehicleTrack>& tracks() const { return tracks_; }
  std::int64_t start_ms() const { return start_ms_; }
  std::int64_t end_ms() const { return end_ms_; }
  /// Linear interpolation of x and speed; lane of the preceding snapshot.
  /// Clamped to the first/last snapshot outside the covered range.
  VehicleState state_at(std::size_t track, std::int64_t time_ms) const;

 private:
  std::vector<VehicleTrack> tracks_;
  std::int64_t start_ms_ = 0;
  std::int64_t end_ms_ = 0;
};

/// Snapshots every spacing_ms over [0, duration_ms], x unwrapped (x0 + v t).
void export_trace(std::ostream& out, std::span<const Vehicle> vehicles, std::int64_t duration_ms,
                  std::int64_t spacing_ms = Trace::kMaxSpacingMs);

/// Parses and validates. FormatError carries the offending line.
Trace read_trace(std::istream& in);
Trace ingest_trace(const std::filesystem::path& path);

/// Vehicles at the trace start. PVUEs are ordered front to back into one
/// platoon per contiguous group.
std::vector<Vehicle> vehicles_from_trace(const Trace& trace, double road_length_m);

// ---------------------------------------------------------------------------
// Event protocols.

enum class EventKind { Joining, Leaving };

struct EventLeg {
  std::string name;
  VehicleId sender{};
  VehicleId receiver{};
};

struct EventMessage {
  std::size_t leg = 0;
  VehicleId sender{};
  VehicleId receiver{};
  std::int64_t generated_ms = 0;
  int attempt = 1;
};

struct Delivery {
  std::size_t leg = 0;
  VehicleId sender{};
  VehicleId receiver{};
  std::int64_t at_ms = 0;
};

struct EventFsm {
  EventKind kind = EventKind::Leaving;
  std::vector<EventLeg> legs;
  std::size_t phase = 0;
  int attempts = 0;
  std::int64_t start_ms = 0;
  std::optional<std::int64_t> end_ms;
  int retry_ms = 20;
  /// Generation time of the message currently in flight.
  std::int64_t pending_since_ms = 0;
  bool started = false;

  bool terminal() const { return end_ms.has_value(); }
  int minimum_attempts() const { return static_cast<int>(legs.size()); }
  std::optional<std::int64_t> processing_ms() const {
    if (!end_ms) return std::nullopt;
    return *end_ms - start_ms;
  }
};

/// request LV->HV, permission HV->LV, confirmation LV->HV.
EventFsm make_leaving_fsm(VehicleId hv, VehicleId lv, std::int64_t start_ms, int retry_ms = 20);
/// request JV->HV, alert+stretch HV->FV-JV, permission HV->JV, confirmation JV->HV.
EventFsm make_joining_fsm(VehicleId hv, VehicleId jv, VehicleId fv_jv, std::int64_t start_ms, int retry_ms = 20);

/// Emits the first leg at start_ms.
std::vector<EventMessage> start_event(EventFsm& fsm);

/// Advances on delivery of the current leg (the next leg is generated at the
/// delivery time) and re-sends the current leg once the retry timer expires.
std::vector<EventMessage> step_event_fsm(EventFsm& fsm, std::span<const Delivery> delivered, std::int64_t now_ms);

}  // namespace prcara
