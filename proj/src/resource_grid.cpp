#include "prcara/resource_grid.hpp"

#include <string>

#include "prcara/error.hpp"

namespace prcara {

void ResourceGrid::validate() const {
  if (num_subchannels < 1) throw ConfigError("grid: num_subchannels must be >= 1");
  if (horizon < 1) throw ConfigError("grid: horizon must be >= 1");
  if (subchannel_width_rb < 1) throw ConfigError("grid: subchannel_width_rb must be >= 1");
  if (!(bandwidth_hz > 0.0)) throw ConfigError("grid: bandwidth_hz must be > 0");
}

SelectionSubset window_subset(VehicleId owner, std::int64_t transmission_index, std::int64_t generated_at,
                              int window_ms, int num_subchannels) {
  if (window_ms < 1) throw DomainError("selection window must be >= 1 ms");
  if (num_subchannels < 1) throw DomainError("num_subchannels must be >= 1");
  SelectionSubset subset;
  subset.owner = owner;
  subset.transmission_index = transmission_index;
  subset.rri_ms = window_ms;
  subset.first_subframe = generated_at + 1;
  subset.last_subframe = generated_at + window_ms;
  subset.num_subchannels = num_subchannels;
  subset.cells.reserve(static_cast<std::size_t>(window_ms) * static_cast<std::size_t>(num_subchannels));
  for (std::int64_t t = subset.first_subframe; t <= subset.last_subframe; ++t) {
    for (int c = 0; c < num_subchannels; ++c) subset.cells.push_back({c, t});
  }
  return subset;
}

SelectionSubset selection_subset(VehicleId owner, std::int64_t transmission_index, int rri_ms,
                                 const ResourceGrid& grid) {
  if (transmission_index < 1) throw DomainError("transmission index must be >= 1");
  if (rri_ms < 1) throw DomainError("rri_ms must be >= 1");
  if (transmission_index * rri_ms > grid.horizon) {
    throw HorizonExceeded("window " + std::to_string(transmission_index) + "x" + std::to_string(rri_ms) +
                          " ms extends past horizon " + std::to_string(grid.horizon));
  }
  return window_subset(owner, transmission_index, (transmission_index - 1) * rri_ms, rri_ms,
                       grid.num_subchannels);
}

bool assert_single_allocation(std::span<const ResourceIndex> chosen, const SelectionSubset& subset) {
  std::size_t inside = 0;
  for (const auto& cell : chosen) {
    if (!subset.contains(cell)) return false;
    ++inside;
  }
  return inside == 1;
}

}  // namespace prcara
