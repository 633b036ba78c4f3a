#include "prcara/schedulers.hpp"

#include <algorithm>
#include <string>

#include "prcara/error.hpp"

namespace prcara {

std::string_view to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::SbSps: return "SbSps";
    case SchedulerKind::SbDs: return "SbDs";
    case SchedulerKind::ExtSciAvoid: return "ExtSciAvoid";
    case SchedulerKind::MinRssi: return "MinRssi";
    case SchedulerKind::PrCara: return "PrCara";
  }
  throw InvariantViolation("unhandled scheduler kind");
}

SchedulerKind parse_scheduler(std::string_view name) {
  for (auto kind : kAllSchedulers) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown scheduler '" + std::string(name) + "'");
}

bool uses_extended_sci(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::SbSps:
    case SchedulerKind::SbDs: return false;
    case SchedulerKind::ExtSciAvoid:
    case SchedulerKind::MinRssi:
    case SchedulerKind::PrCara: return true;
  }
  throw InvariantViolation("unhandled scheduler kind");
}

bool uses_estimator(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::SbSps:
    case SchedulerKind::SbDs:
    case SchedulerKind::ExtSciAvoid: return false;
    case SchedulerKind::MinRssi:
    case SchedulerKind::PrCara: return true;
  }
  throw InvariantViolation("unhandled scheduler kind");
}

void SpsState::validate() const {
  if (rc_min < 1 || rc_max < rc_min) throw ConfigError("sps: rc range must satisfy 1 <= min <= max");
  if (reselection_counter < 0) throw InvariantViolation("sps: negative reselection counter");
  if ((reselection_counter > 0) != current.has_value()) {
    throw InvariantViolation("sps: resource present iff RC > 0");
  }
}

namespace {

bool in_sorted(std::span<const std::int64_t> sorted, std::int64_t t) {
  return std::binary_search(sorted.begin(), sorted.end(), t);
}

std::vector<std::int64_t> sorted_copy(std::span<const std::int64_t> values) {
  std::vector<std::int64_t> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
const T& uniform_pick(const std::vector<T>& items, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

}  // namespace

ResourceIndex random_in_window(const SelectionSubset& subset, std::span<const std::int64_t> avoid_subframes,
                               Rng& rng) {
  if (subset.cells.empty()) throw DomainError("selection subset is empty");
  const auto avoid = sorted_copy(avoid_subframes);
  std::vector<ResourceIndex> free;
  free.reserve(subset.cells.size());
  for (const auto& cell : subset.cells) {
    if (!in_sorted(avoid, cell.subframe)) free.push_back(cell);
  }
  return free.empty() ? uniform_pick(subset.cells, rng) : uniform_pick(free, rng);
}

SelectionOutcome sb_sps_select(SpsState& state, const std::optional<CsrList>& csr, const SelectionSubset& subset,
                               Rng& rng) {
  if (state.reselection_counter > 0 && state.current) {
    ResourceIndex next{state.current->subchannel, state.current->subframe + subset.rri_ms};
    if (subset.contains(next)) {
      state.current = next;
      state.reselection_counter -= 1;
      if (state.reselection_counter == 0) state.current.reset();
      return {next, false, true};
    }
  }
  auto outcome = sb_ds_select(csr, subset, rng);
  std::uniform_int_distribution<int> rc(state.rc_min, state.rc_max);
  state.reselection_counter = rc(rng);
  state.current = outcome.cell;
  return outcome;
}

SelectionOutcome sb_ds_select(const std::optional<CsrList>& csr, const SelectionSubset& subset, Rng& rng) {
  if (!csr || csr->entries.empty()) return {random_in_window(subset, {}, rng), true, false};
  return {uniform_pick(csr->entries, rng).cell, false, false};
}

SelectionOutcome ext_sci_avoid_select(const std::optional<CsrList>& csr,
                                      std::span<const std::int64_t> reserved_subframes,
                                      const SelectionSubset& subset, Rng& rng) {
  if (!csr || csr->entries.empty()) return {random_in_window(subset, reserved_subframes, rng), true, false};
  const auto reserved = sorted_copy(reserved_subframes);
  std::vector<CsrEntry> kept;
  kept.reserve(csr->entries.size());
  for (const auto& e : csr->entries) {
    if (!in_sorted(reserved, e.cell.subframe)) kept.push_back(e);
  }
  if (kept.empty()) return {uniform_pick(csr->entries, rng).cell, false, false};
  return {uniform_pick(kept, rng).cell, false, false};
}

void estimate_view(ProactiveView& view, const RssiEstimator& estimator) {
  if (view.inputs.size() != view.cells.size()) throw DimensionMismatch("view: inputs not aligned with cells");
  view.eps_p_dbm.resize(view.cells.size());
  const bool any_info = std::any_of(view.inputs.begin(), view.inputs.end(),
                                    [](const ProactiveInput& in) { return in.hidden || in.exposed; });
  if (!any_info) {
    for (std::size_t i = 0; i < view.inputs.size(); ++i) view.eps_p_dbm[i] = view.inputs[i].eps_o_dbm;
    return;
  }
  estimator.estimate(view.inputs, view.eps_p_dbm);
}

ResourceIndex min_rssi_select(const ProactiveView& view, const SelectionSubset& subset) {
  if (view.eps_p_dbm.size() != view.cells.size()) throw DimensionMismatch("view: estimate not aligned with cells");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < view.cells.size(); ++i) {
    if (!subset.contains(view.cells[i])) continue;
    if (!best || view.eps_p_dbm[i] < view.eps_p_dbm[*best] ||
        (view.eps_p_dbm[i] == view.eps_p_dbm[*best] && view.cells[i] < view.cells[*best])) {
      best = i;
    }
  }
  if (!best) throw DomainError("min_rssi_select: view does not cover the subset");
  return view.cells[*best];
}

SelectionOutcome pr_cara_select(const ProactiveView& view, const SelectionSubset& subset,
                                std::span<const std::int64_t> reserved_subframes, Rng& rng,
                                const CsrOptions& options) {
  if (view.eps_p_dbm.size() != view.cells.size()) throw DimensionMismatch("view: estimate not aligned with cells");
  const std::size_t n = subset.cells.size();
  std::vector<double> values(n, 0.0);
  std::vector<std::uint8_t> covered(n, 0);
  for (std::size_t i = 0; i < view.cells.size(); ++i) {
    if (!subset.contains(view.cells[i])) continue;
    const auto k = subset.offset_of(view.cells[i]);
    values[k] = view.eps_p_dbm[i];
    covered[k] = 1;
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw DomainError("pr_cara_select: view does not cover the subset");
  }
  const auto reserved = sorted_copy(reserved_subframes);
  std::vector<std::uint8_t> excluded(n, 0);
  for (std::size_t k = 0; k < n; ++k) excluded[k] = in_sorted(reserved, subset.cells[k].subframe) ? 1 : 0;

  const auto csr = build_csr(values, excluded, subset, options);
  if (!csr || csr->entries.empty()) return {random_in_window(subset, reserved, rng), true, false};
  return {uniform_pick(csr->entries, rng).cell, false, false};
}

}  // namespace prcara
