#include "prcara/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "prcara/error.hpp"

#ifndef PRCARA_VERSION
#define PRCARA_VERSION "0.0.0"
#endif

namespace prcara {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvariantViolation*>(&e) || dynamic_cast<const HalfDuplexViolation*>(&e)) {
    return kExitInvariant;
  }
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  return kExitRuntime;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::string format_rho(double rho) {
  std::ostringstream s;
  s << rho;
  return s.str();
}

}  // namespace

RangeAudit cmd_gen_data(const RunConfig& config, std::uint64_t seed, std::size_t n, const std::filesystem::path& out) {
  if (n == 0) throw ConfigError("gen-data: n must be >= 1");
  Rng rng(seed);
  const auto samples = generate_dataset(rng, n, config.training.generator);
  auto file = open_for_write(out);
  write_dataset_csv(file, samples);
  file.flush();
  if (!file) throw Error("failed writing '" + out.string() + "'");

  RangeAudit audit;
  audit.rows = samples.size();
  audit.label_min_dbm = audit.label_max_dbm = samples.front().eps_p_dbm;
  const auto& g = config.training.generator;
  auto out_of_range = [&](double d) { return d < g.near_min_m || d > g.near_max_m; };
  for (const auto& s : samples) {
    if (s.i_h) {
      ++audit.hidden;
      if (out_of_range(s.d_h_m)) ++audit.near_out_of_range;
    }
    if (s.i_e) {
      ++audit.exposed;
      if (out_of_range(s.d_e_m)) ++audit.near_out_of_range;
    }
    audit.label_min_dbm = std::min(audit.label_min_dbm, s.eps_p_dbm);
    audit.label_max_dbm = std::max(audit.label_max_dbm, s.eps_p_dbm);
  }
  return audit;
}

TrainingReport cmd_train(const RunConfig& config, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& dataset, const std::filesystem::path& weights_out,
                         const std::filesystem::path& report_out) {
  Rng rng(seed);
  TrainResult result = [&] {
    if (!dataset) return train(rng, config.training);
    std::ifstream in(*dataset);
    if (!in) throw MissingArtifact("cannot open dataset '" + dataset->string() + "'");
    return train_on(rng, read_dataset_csv(in), config.training);
  }();
  save_weights(result.net, weights_out);

  auto report = open_for_write(report_out);
  for (const auto& e : result.report.epochs) {
    report << json{{"epoch", e.epoch}, {"train_mse_db2", e.train_mse_db2}, {"holdout_mse_db2", e.holdout_mse_db2}}.dump()
           << '\n';
  }
  const auto& r = result.report;
  report << json{{"summary", true},
                 {"holdout_mse_db2", r.holdout_mse_db2},
                 {"baseline_mse_db2", r.baseline_mse_db2},
                 {"holdout_label_variance_db2", r.holdout_label_variance_db2},
                 {"train_size", r.train_size},
                 {"holdout_size", r.holdout_size},
                 {"learning_rate", r.learning_rate}}
                .dump()
         << '\n';
  return result.report;
}

std::shared_ptr<const RssiEstimator> load_estimator(const RunConfig& config) {
  const bool needed = std::any_of(config.schedulers.begin(), config.schedulers.end(), uses_estimator);
  if (!needed) return nullptr;
  if (!config.weights) {
    throw MissingArtifact("MinRssi and PrCara need estimator weights; pass --weights or set estimator.weights");
  }
  if (!std::filesystem::exists(*config.weights)) {
    throw MissingArtifact("estimator weights '" + config.weights->string() + "' not found");
  }
  return std::make_shared<NeuralEstimator>(load_weights(*config.weights));
}

std::vector<AggregateRow> cmd_simulate(const RunConfig& config, int jobs) {
  config.validate();
  const auto estimator = load_estimator(config);
  SimParams base = config.sim;
  if (config.trace_path) base.trace = std::make_shared<const Trace>(ingest_trace(*config.trace_path));

  std::filesystem::create_directories(config.output_dir);
  std::vector<AggregateRow> rows;
  for (double rho : config.densities) {
    SimParams params = base;
    params.scenario.density_per_km = rho;
    for (auto kind : config.schedulers) {
      spdlog::info("simulating rho={} scheduler={} over {} seeds", rho, to_string(kind), config.seeds.size());
      auto mc = run_monte_carlo(params, kind, config.seeds, estimator.get(), jobs, config.write_records);
      for (const auto& rep : mc.replicas) {
        if (rep.metrics.counters.pvue_fallbacks) {
          spdlog::debug("seed {}: {} platoon selections fell back to random", rep.seed,
                        rep.metrics.counters.pvue_fallbacks);
        }
        if (!config.write_records) continue;
        auto out = open_for_write(config.output_dir / ("records_rho" + format_rho(rho) + "_" +
                                                       std::string(to_string(kind)) + "_seed" +
                                                       std::to_string(rep.seed) + ".csv"));
        write_records_csv(out, rep.records);
      }
      rows.push_back(mc.aggregate);
    }
  }

  auto aggregate = open_for_write(config.output_dir / "aggregate.csv");
  write_aggregate_csv(aggregate, rows);

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  json manifest = {{"version", PRCARA_VERSION},
                   {"config_hash", hash},
                   {"seeds", config.seeds},
                   {"gamma0_pam_db", config.sim.decode.gamma0_pam_db},
                   {"gamma0_cam_db", config.sim.decode.gamma0_cam_db},
                   {"gamma_sci_db", config.sim.decode.gamma_sci_db},
                   {"config", json::parse(config_to_json(config))}};
  auto m = open_for_write(config.output_dir / "manifest.json");
  m << manifest.dump(2) << '\n';
  return rows;
}

void cmd_trace_export(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& out) {
  Scenario scenario = config.sim.scenario;
  scenario.density_per_km = config.densities.front();
  Rng rng(seed);
  const auto vehicles = generate_highway(rng, scenario);
  auto file = open_for_write(out);
  export_trace(file, vehicles, scenario.sim_duration_ms);
}

Trace cmd_trace_validate(const std::filesystem::path& path) { return ingest_trace(path); }

}  // namespace prcara
