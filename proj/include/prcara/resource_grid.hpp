#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "prcara/units.hpp"

namespace prcara {

/// One (subchannel, subframe) cell of the resource pool. Subchannels are
/// 0-based, subframes are 1-based absolute milliseconds.
struct ResourceIndex {
  int subchannel = 0;
  std::int64_t subframe = 1;

  /// Orders by subframe first, then subchannel; this is the deterministic
  /// tie-break used by every selector.
  friend constexpr auto operator<=>(const ResourceIndex& a, const ResourceIndex& b) {
    if (auto cmp = a.subframe <=> b.subframe; cmp != 0) return cmp;
    return a.subchannel <=> b.subchannel;
  }
  friend constexpr bool operator==(const ResourceIndex&, const ResourceIndex&) = default;
};

struct ResourceGrid {
  int num_subchannels = 5;
  std::int64_t horizon = 30000;
  int subchannel_width_rb = 10;
  double bandwidth_hz = 20e6;

  void validate() const;
  bool contains(const ResourceIndex& cell) const {
    return cell.subchannel >= 0 && cell.subchannel < num_subchannels && cell.subframe >= 1 &&
           cell.subframe <= horizon;
  }
};

/// The cells a transmission may use: every subchannel over the subframes
/// (first_subframe - 1, last_subframe]. Cells are sorted by (t, c).
struct SelectionSubset {
  VehicleId owner{};
  std::int64_t transmission_index = 1;
  int rri_ms = 1;
  std::int64_t first_subframe = 1;
  std::int64_t last_subframe = 1;
  int num_subchannels = 1;
  std::vector<ResourceIndex> cells;

  bool contains(const ResourceIndex& cell) const {
    return cell.subframe >= first_subframe && cell.subframe <= last_subframe && cell.subchannel >= 0 &&
           cell.subchannel < num_subchannels;
  }
  /// Position of `cell` inside `cells`; requires contains(cell).
  std::size_t offset_of(const ResourceIndex& cell) const {
    return static_cast<std::size_t>(cell.subframe - first_subframe) * static_cast<std::size_t>(num_subchannels) +
           static_cast<std::size_t>(cell.subchannel);
  }
  std::size_t size() const { return cells.size(); }
};

/// The k-th RRI partition of the grid: (k-1)*rri < t <= k*rri.
SelectionSubset selection_subset(VehicleId owner, std::int64_t transmission_index, int rri_ms,
                                 const ResourceGrid& grid);

/// Selection window for a packet generated at `generated_at`: t in
/// [generated_at + 1, generated_at + window_ms]. Not bounded by a horizon.
SelectionSubset window_subset(VehicleId owner, std::int64_t transmission_index, std::int64_t generated_at,
                              int window_ms, int num_subchannels);

/// True iff exactly one chosen cell lies in the subset and none lies outside.
bool assert_single_allocation(std::span<const ResourceIndex> chosen, const SelectionSubset& subset);

}  // namespace prcara
