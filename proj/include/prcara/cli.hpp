#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prcara/config.hpp"

namespace prcara {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitInvariant = 4 };

/// Maps a library exception onto the process exit code.
int exit_code_for(const std::exception& e);

struct RangeAudit {
  std::size_t rows = 0;
  std::size_t hidden = 0;
  std::size_t exposed = 0;
  /// Near distances of present nodes outside [near_min, near_max].
  std::size_t near_out_of_range = 0;
  double label_min_dbm = 0.0;
  double label_max_dbm = 0.0;
};

/// Writes `n` generated samples as CSV and audits their ranges.
RangeAudit cmd_gen_data(const RunConfig& config, std::uint64_t seed, std::size_t n, const std::filesystem::path& out);

/// Trains on the dataset (or on freshly generated samples when none is given)
/// and writes the weights plus a JSON-lines report, one line per epoch and a
/// final summary line.
TrainingReport cmd_train(const RunConfig& config, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& dataset, const std::filesystem::path& weights_out,
                         const std::filesystem::path& report_out);

/// Loads the weights when the configuration needs an estimator. Throws
/// MissingArtifact if it does and none is configured.
std::shared_ptr<const RssiEstimator> load_estimator(const RunConfig& config);

/// Every (density, scheduler) pair of the configuration. Writes
/// aggregate.csv, manifest.json and optionally per-replica records into the
/// output directory.
std::vector<AggregateRow> cmd_simulate(const RunConfig& config, int jobs);

/// Writes a trace synthesized from the generator for the first density.
void cmd_trace_export(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// Throws FormatError on the first violation.
Trace cmd_trace_validate(const std::filesystem::path& path);

}  // namespace prcara
