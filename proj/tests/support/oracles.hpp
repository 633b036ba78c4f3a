#pragma once

// Slow, independent reference implementations used by the unit and
// acceptance tests. None of them call the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "prcara/resource_grid.hpp"
#include "prcara/rssi_estimator.hpp"
#include "prcara/sci_codec.hpp"
#include "prcara/sensing.hpp"
#include "prcara/sim_engine.hpp"

namespace oracle {

struct CsrResult {
  std::vector<prcara::ResourceIndex> cells;
  double threshold = 0.0;
};

// Candidate list by direct enumeration: recount the cells under each
// threshold, then pick the lowest ones by repeated minimum search.
inline std::optional<CsrResult> csr(const std::vector<double>& values, const std::vector<std::uint8_t>& reserved,
                                    const std::vector<prcara::ResourceIndex>& cells, double init, double step,
                                    double ceiling) {
  const std::size_t n = cells.size();
  if (n == 0) return std::nullopt;
  std::size_t quota = 0;
  while (quota * 5 < n) ++quota;
  double threshold = init;
  for (;;) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!reserved[i] && values[i] <= threshold) ++kept;
    }
    if (kept >= quota) break;
    threshold += step;
    if (threshold > ceiling) return std::nullopt;
  }
  CsrResult out;
  out.threshold = threshold;
  std::vector<bool> taken(n, false);
  for (std::size_t k = 0; k < quota; ++k) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < n; ++i) {
      if (reserved[i] || taken[i]) continue;
      if (!best) {
        best = i;
        continue;
      }
      const auto key = [&](std::size_t j) { return std::tuple(values[j], cells[j].subframe, cells[j].subchannel); };
      if (key(i) < key(*best)) best = i;
    }
    taken[*best] = true;
    out.cells.push_back(cells[*best]);
  }
  return out;
}

// For every received packet, scan all packets for the received one with the
// smallest larger index; the gap is the subframe difference.
inline std::vector<double> ipg_gaps(const std::vector<prcara::TxRecord>& records) {
  std::vector<double> gaps;
  for (const auto& a : records) {
    if (a.outcome != prcara::Outcome::Reception) continue;
    const prcara::TxRecord* next = nullptr;
    for (const auto& b : records) {
      if (b.outcome != prcara::Outcome::Reception || b.index <= a.index) continue;
      if (!next || b.index < next->index) next = &b;
    }
    if (next) gaps.push_back(static_cast<double>(next->cell.subframe - a.cell.subframe));
  }
  std::sort(gaps.begin(), gaps.end());
  return gaps;
}

// Packs the SCI through a string of '0'/'1' characters.
inline std::uint32_t sci_word(const prcara::ExtendedSci& s) {
  auto bits = [](unsigned v, int width) {
    std::string out;
    for (int b = width - 1; b >= 0; --b) out.push_back(((v >> b) & 1u) ? '1' : '0');
    return out;
  };
  const std::string text = bits(s.priority, 3) + bits(s.ri1, 5) + bits(s.ri2, 7) + bits(s.rri_code, 4) +
                           bits(s.mcs, 5) + bits(s.dmrs_and_misc, 8);
  std::uint32_t word = 0;
  for (char ch : text) word = word * 2 + (ch == '1' ? 1u : 0u);
  return word;
}

// Scalar forward pass with explicit loops.
inline double forward(const prcara::EstimatorNet& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    std::vector<double> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double sum = layers[l].bias(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) sum += w(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = (l + 1 < layers.size()) ? std::max(0.0, sum) : sum;
    }
    a = std::move(z);
  }
  return a.front();
}

// Mean squared error of the scalar forward pass on normalized data.
inline double mse(const prcara::EstimatorNet& net, const std::vector<std::vector<double>>& xs,
                  const std::vector<double>& ys) {
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = forward(net, xs[i]) - ys[i];
    total += e * e;
  }
  return total / static_cast<double>(xs.size());
}

}  // namespace oracle
