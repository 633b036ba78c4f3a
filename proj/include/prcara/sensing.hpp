#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "prcara/resource_grid.hpp"

namespace prcara {

inline constexpr int kPeriodicSensingMs = 1000;
inline constexpr int kAperiodicSensingMs = 100;

struct CellReading {
  double rssi_dbm = 0.0;
  int samples = 0;
  bool sensed() const { return samples > 0; }
};

/// Per-vehicle RSSI history over a sliding window of subframes, plus the
/// reservations learned from decoded SCIs.
///
/// Samples are kept per absolute subframe in a ring of `window_ms` slots, so
/// averages can be folded by any period at query time. Averaging is done in
/// linear power. Subframes in which the owner transmitted are never sensed.
class SensingMatrix {
 public:
  SensingMatrix(int num_subchannels, int window_ms, double noise_floor_dbm);

  int num_subchannels() const { return num_subchannels_; }
  int window_ms() const { return window_ms_; }
  double noise_floor_dbm() const { return noise_floor_dbm_; }
  /// Latest subframe written or marked; -1 before any activity.
  std::int64_t newest() const { return newest_; }

  void mark_own_transmission(std::int64_t subframe);
  bool transmitted_in(std::int64_t subframe) const;

  /// Adds one sample. Throws HalfDuplexViolation when the owner transmitted in
  /// cell.subframe.
  void record_rssi(const ResourceIndex& cell, double rssi_dbm);
  /// Stores one sample per subchannel for `subframe`, in mW.
  void record_subframe(std::int64_t subframe, std::span<const double> rssi_mw);

  /// Exact-subframe reading; unsensed when outside the window.
  CellReading reading(const ResourceIndex& cell) const;

  /// Linear mean over the same-phase subframes target - k*period (k >= 1)
  /// that lie inside the last `window_ms` subframes (0 = full window).
  /// Unsensed phases report the noise floor with samples = 0.
  CellReading phase_average(int subchannel, std::int64_t target_subframe, int period_ms, int window_ms = 0) const;

  void set_reserved(const ResourceIndex& cell);
  bool is_reserved(const ResourceIndex& cell) const;

  /// Debug dump: `c,t_phase,rssi_dbm,samples,reserved`, folded by period_ms.
  void write_csv(std::ostream& out, int period_ms) const;

  /// Reservations further ahead than this are not stored.
  static constexpr int kReservationHorizon = 256;

 private:
  std::size_t slot(std::int64_t subframe) const;
  void claim_slot(std::int64_t subframe);
  bool in_window(std::int64_t subframe, int window_ms) const;

  int num_subchannels_;
  int window_ms_;
  double noise_floor_dbm_;
  std::int64_t newest_ = -1;
  std::vector<std::int64_t> stamp_;
  std::vector<std::uint8_t> own_tx_;
  std::vector<double> sum_mw_;
  std::vector<std::uint32_t> count_;
  std::vector<std::int64_t> reserved_;
};

/// Per-cell averaged RSSI over the subset, folded by subset.rri_ms.
std::vector<CellReading> average_per_csr(const SensingMatrix& matrix, const SelectionSubset& subset,
                                         int window_ms = 0);

struct CsrOptions {
  double init_threshold_dbm = -110.0;
  double step_db = 3.0;
  double ceiling_dbm = 0.0;
};

struct CsrEntry {
  ResourceIndex cell;
  double rssi_dbm = 0.0;
};

struct CsrList {
  std::vector<CsrEntry> entries;
  double rsrp_threshold_dbm = 0.0;
};

/// Minimum CSR size for a subset of n cells: ceil(0.2 n).
constexpr std::size_t csr_quota(std::size_t subset_size) { return (subset_size + 4) / 5; }

/// Candidate list construction:
///  1. keep unreserved cells whose value is <= threshold;
///  2. while fewer than 20% of the subset are kept, raise the threshold by
///     step_db (failing once it would exceed ceiling_dbm);
///  3. keep the ceil(20%) lowest, ties broken by (t, c).
/// `values_dbm` and `reserved` are aligned with subset.cells; an empty
/// `reserved` span means nothing is reserved.
std::optional<CsrList> build_csr(std::span<const double> values_dbm, std::span<const std::uint8_t> reserved,
                                 const SelectionSubset& subset, const CsrOptions& options = {});

}  // namespace prcara
