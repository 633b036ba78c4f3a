#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prcara/rssi_estimator.hpp"
#include "prcara/schedulers.hpp"
#include "prcara/sim_engine.hpp"

namespace prcara {

/// Everything a run needs, as read from one JSON document.
struct RunConfig {
  SimParams sim;
  std::vector<SchedulerKind> schedulers;
  std::vector<double> densities;
  std::vector<std::uint64_t> seeds;
  TrainConfig training;
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> trace_path;
  std::filesystem::path output_dir = "results";
  /// Write per-replica record CSVs next to the aggregate.
  bool write_records = false;

  void validate() const;
};

/// Table I setup: rho 40..400 step 40, 100 seeds, 30 s, all schedulers.
RunConfig default_config();

/// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every field, stable across runs.
std::string config_to_json(const RunConfig& config);

/// FNV-1a 64 over the canonical JSON.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace prcara
