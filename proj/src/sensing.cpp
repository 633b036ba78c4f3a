#include "prcara/sensing.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

#include "prcara/error.hpp"
#include "prcara/units.hpp"

namespace prcara {

SensingMatrix::SensingMatrix(int num_subchannels, int window_ms, double noise_floor_dbm)
    : num_subchannels_(num_subchannels), window_ms_(window_ms), noise_floor_dbm_(noise_floor_dbm) {
  if (num_subchannels < 1) throw DomainError("sensing: num_subchannels must be >= 1");
  if (window_ms < 1) throw DomainError("sensing: window_ms must be >= 1");
  const auto slots = static_cast<std::size_t>(window_ms);
  const auto cells = slots * static_cast<std::size_t>(num_subchannels);
  stamp_.assign(slots, -1);
  own_tx_.assign(slots, 0);
  sum_mw_.assign(cells, 0.0);
  count_.assign(cells, 0);
  reserved_.assign(static_cast<std::size_t>(kReservationHorizon) * static_cast<std::size_t>(num_subchannels), -1);
}

std::size_t SensingMatrix::slot(std::int64_t subframe) const {
  const auto w = static_cast<std::int64_t>(window_ms_);
  return static_cast<std::size_t>(((subframe % w) + w) % w);
}

void SensingMatrix::claim_slot(std::int64_t subframe) {
  const auto s = slot(subframe);
  if (stamp_[s] != subframe) {
    stamp_[s] = subframe;
    own_tx_[s] = 0;
    const auto base = s * static_cast<std::size_t>(num_subchannels_);
    std::fill_n(sum_mw_.begin() + static_cast<std::ptrdiff_t>(base), num_subchannels_, 0.0);
    std::fill_n(count_.begin() + static_cast<std::ptrdiff_t>(base), num_subchannels_, 0u);
  }
  newest_ = std::max(newest_, subframe);
}

bool SensingMatrix::in_window(std::int64_t subframe, int window_ms) const {
  const int w = window_ms > 0 ? std::min(window_ms, window_ms_) : window_ms_;
  return subframe <= newest_ && subframe > newest_ - w && stamp_[slot(subframe)] == subframe;
}

void SensingMatrix::mark_own_transmission(std::int64_t subframe) {
  claim_slot(subframe);
  const auto s = slot(subframe);
  own_tx_[s] = 1;
  const auto base = s * static_cast<std::size_t>(num_subchannels_);
  std::fill_n(sum_mw_.begin() + static_cast<std::ptrdiff_t>(base), num_subchannels_, 0.0);
  std::fill_n(count_.begin() + static_cast<std::ptrdiff_t>(base), num_subchannels_, 0u);
}

bool SensingMatrix::transmitted_in(std::int64_t subframe) const {
  const auto s = slot(subframe);
  return stamp_[s] == subframe && own_tx_[s] != 0;
}

void SensingMatrix::record_rssi(const ResourceIndex& cell, double rssi_dbm) {
  if (cell.subchannel < 0 || cell.subchannel >= num_subchannels_) {
    throw DomainError("sensing: subchannel " + std::to_string(cell.subchannel) + " out of range");
  }
  if (transmitted_in(cell.subframe)) {
    throw HalfDuplexViolation("sensing: owner transmitted in subframe " + std::to_string(cell.subframe));
  }
  claim_slot(cell.subframe);
  const auto i = slot(cell.subframe) * static_cast<std::size_t>(num_subchannels_) +
                 static_cast<std::size_t>(cell.subchannel);
  sum_mw_[i] += dbm_to_mw(rssi_dbm);
  count_[i] += 1;
}

void SensingMatrix::record_subframe(std::int64_t subframe, std::span<const double> rssi_mw) {
  if (rssi_mw.size() != static_cast<std::size_t>(num_subchannels_)) {
    throw DomainError("sensing: expected one sample per subchannel");
  }
  if (transmitted_in(subframe)) {
    throw HalfDuplexViolation("sensing: owner transmitted in subframe " + std::to_string(subframe));
  }
  claim_slot(subframe);
  const auto base = slot(subframe) * static_cast<std::size_t>(num_subchannels_);
  for (std::size_t c = 0; c < rssi_mw.size(); ++c) {
    sum_mw_[base + c] = rssi_mw[c];
    count_[base + c] = 1;
  }
}

CellReading SensingMatrix::reading(const ResourceIndex& cell) const {
  if (cell.subchannel < 0 || cell.subchannel >= num_subchannels_ || !in_window(cell.subframe, 0)) {
    return {noise_floor_dbm_, 0};
  }
  const auto i = slot(cell.subframe) * static_cast<std::size_t>(num_subchannels_) +
                 static_cast<std::size_t>(cell.subchannel);
  if (count_[i] == 0) return {noise_floor_dbm_, 0};
  return {mw_to_dbm(sum_mw_[i] / count_[i]), static_cast<int>(count_[i])};
}

CellReading SensingMatrix::phase_average(int subchannel, std::int64_t target_subframe, int period_ms,
                                         int window_ms) const {
  if (period_ms < 1) throw DomainError("sensing: period must be >= 1 ms");
  if (subchannel < 0 || subchannel >= num_subchannels_ || newest_ < 0) return {noise_floor_dbm_, 0};
  const int w = window_ms > 0 ? std::min(window_ms, window_ms_) : window_ms_;
  const std::int64_t oldest = newest_ - w + 1;
  // First same-phase subframe at or before newest_, strictly before target.
  std::int64_t t = target_subframe - period_ms;
  if (t > newest_) t -= ((t - newest_ + period_ms - 1) / period_ms) * period_ms;
  double sum = 0.0;
  std::uint64_t count = 0;
  for (; t >= oldest; t -= period_ms) {
    const auto s = slot(t);
    if (stamp_[s] != t) continue;
    const auto i = s * static_cast<std::size_t>(num_subchannels_) + static_cast<std::size_t>(subchannel);
    sum += sum_mw_[i];
    count += count_[i];
  }
  if (count == 0) return {noise_floor_dbm_, 0};
  return {mw_to_dbm(sum / static_cast<double>(count)), static_cast<int>(count)};
}

void SensingMatrix::set_reserved(const ResourceIndex& cell) {
  if (cell.subchannel < 0 || cell.subchannel >= num_subchannels_) return;
  const auto h = static_cast<std::int64_t>(kReservationHorizon);
  const auto i = static_cast<std::size_t>(((cell.subframe % h) + h) % h) * static_cast<std::size_t>(num_subchannels_) +
                 static_cast<std::size_t>(cell.subchannel);
  reserved_[i] = cell.subframe;
}

bool SensingMatrix::is_reserved(const ResourceIndex& cell) const {
  if (cell.subchannel < 0 || cell.subchannel >= num_subchannels_) return false;
  const auto h = static_cast<std::int64_t>(kReservationHorizon);
  const auto i = static_cast<std::size_t>(((cell.subframe % h) + h) % h) * static_cast<std::size_t>(num_subchannels_) +
                 static_cast<std::size_t>(cell.subchannel);
  return reserved_[i] == cell.subframe;
}

void SensingMatrix::write_csv(std::ostream& out, int period_ms) const {
  if (period_ms < 1) throw DomainError("sensing: period must be >= 1 ms");
  out << "c,t_phase,rssi_dbm,samples,reserved\n";
  for (int phase = 0; phase < period_ms; ++phase) {
    // The next subframe after newest_ with this phase.
    std::int64_t target = newest_ + 1;
    const auto p = static_cast<std::int64_t>(period_ms);
    target += ((phase - target % p) % p + p) % p;
    for (int c = 0; c < num_subchannels_; ++c) {
      const auto r = phase_average(c, target, period_ms);
      bool reserved = false;
      for (std::int64_t t = target; t <= newest_ + kReservationHorizon; t += period_ms) {
        if (is_reserved({c, t})) {
          reserved = true;
          break;
        }
      }
      out << c << ',' << phase << ',' << r.rssi_dbm << ',' << r.samples << ',' << (reserved ? 1 : 0) << '\n';
    }
  }
}

std::vector<CellReading> average_per_csr(const SensingMatrix& matrix, const SelectionSubset& subset, int window_ms) {
  std::vector<CellReading> out;
  out.reserve(subset.cells.size());
  for (const auto& cell : subset.cells) {
    out.push_back(matrix.phase_average(cell.subchannel, cell.subframe, subset.rri_ms, window_ms));
  }
  return out;
}

std::optional<CsrList> build_csr(std::span<const double> values_dbm, std::span<const std::uint8_t> reserved,
                                 const SelectionSubset& subset, const CsrOptions& options) {
  const std::size_t n = subset.cells.size();
  if (values_dbm.size() != n) throw DomainError("build_csr: values not aligned with subset");
  if (!reserved.empty() && reserved.size() != n) throw DomainError("build_csr: reserved flags not aligned");
  if (n == 0) return std::nullopt;

  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (reserved.empty() || reserved[i] == 0) order.push_back(i);
  }
  // Cells are in (t, c) order already, so a stable sort keeps that tie-break.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values_dbm[a] < values_dbm[b]; });

  const std::size_t quota = csr_quota(n);
  double threshold = options.init_threshold_dbm;
  for (;;) {
    const auto kept = static_cast<std::size_t>(
        std::upper_bound(order.begin(), order.end(), threshold,
                         [&](double thr, std::size_t i) { return thr < values_dbm[i]; }) -
        order.begin());
    if (kept * 5 >= n) break;
    threshold += options.step_db;
    if (threshold > options.ceiling_dbm) return std::nullopt;
  }

  CsrList csr;
  csr.rsrp_threshold_dbm = threshold;
  csr.entries.reserve(quota);
  for (std::size_t k = 0; k < quota; ++k) csr.entries.push_back({subset.cells[order[k]], values_dbm[order[k]]});
  return csr;
}

}  // namespace prcara
