#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "prcara/resource_grid.hpp"
#include "prcara/rssi_estimator.hpp"
#include "prcara/sensing.hpp"

namespace prcara {

enum class SchedulerKind { SbSps, SbDs, ExtSciAvoid, MinRssi, PrCara };

inline constexpr std::array<SchedulerKind, 5> kAllSchedulers{SchedulerKind::SbSps, SchedulerKind::SbDs,
                                                             SchedulerKind::ExtSciAvoid, SchedulerKind::MinRssi,
                                                             SchedulerKind::PrCara};

std::string_view to_string(SchedulerKind kind);
/// Throws ConfigError on unknown names.
SchedulerKind parse_scheduler(std::string_view name);

/// Senders announce their next resource in every SCI, not only on SPS reuse.
bool uses_extended_sci(SchedulerKind kind);
/// Needs the proactive RSSI estimator.
bool uses_estimator(SchedulerKind kind);

struct SpsState {
  /// Cell of the last transmission; reuse shifts it by one RRI.
  std::optional<ResourceIndex> current;
  int reselection_counter = 0;
  int rc_min = 5;
  int rc_max = 15;

  void validate() const;
};

struct SelectionOutcome {
  ResourceIndex cell;
  /// The candidate list could not be built and a random in-window cell was used.
  bool fallback = false;
  bool reused = false;
};

/// Uniform in-window pick. Cells in `avoid_subframes` are skipped unless that
/// leaves nothing.
ResourceIndex random_in_window(const SelectionSubset& subset, std::span<const std::int64_t> avoid_subframes, Rng& rng);

/// Reuses the current resource while RC > 0 (RC -= 1); otherwise picks
/// uniformly from the CSR and draws RC in [rc_min, rc_max].
SelectionOutcome sb_sps_select(SpsState& state, const std::optional<CsrList>& csr, const SelectionSubset& subset,
                               Rng& rng);

SelectionOutcome sb_ds_select(const std::optional<CsrList>& csr, const SelectionSubset& subset, Rng& rng);

/// Uniform pick among CSR entries outside `reserved_subframes`; the full CSR
/// is used when every entry is reserved.
SelectionOutcome ext_sci_avoid_select(const std::optional<CsrList>& csr,
                                      std::span<const std::int64_t> reserved_subframes,
                                      const SelectionSubset& subset, Rng& rng);

/// Estimated RSSI of the candidate cells. Entries may come in any order.
struct ProactiveView {
  std::vector<ResourceIndex> cells;
  std::vector<ProactiveInput> inputs;
  std::vector<double> eps_p_dbm;

  std::size_t size() const { return cells.size(); }
};

/// Fills view.eps_p_dbm. Without any hidden or exposed information the sensed
/// RSSI is used directly.
void estimate_view(ProactiveView& view, const RssiEstimator& estimator);

/// Argmin of the estimate; ties go to the smallest (t, c).
ResourceIndex min_rssi_select(const ProactiveView& view, const SelectionSubset& subset);

/// Drops cells in reserved subframes, runs the threshold loop on the estimate
/// and picks uniformly from the lowest 20%.
SelectionOutcome pr_cara_select(const ProactiveView& view, const SelectionSubset& subset,
                                std::span<const std::int64_t> reserved_subframes, Rng& rng,
                                const CsrOptions& options = {});

}  // namespace prcara
