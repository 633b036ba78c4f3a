// prcara: dataset generation, estimator training, simulation and trace tools.
//
// Exit codes: 0 ok, 2 config error, 3 runtime error, 4 invariant violation.

#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "prcara/cli.hpp"
#include "prcara/error.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<double> rho;
  std::vector<std::string> schedulers;
  std::string out;
  int jobs = 0;
  std::string weights;
};

prcara::RunConfig resolve(const Common& c) {
  auto config = c.config_path.empty() ? prcara::default_config() : prcara::load_config(c.config_path);
  if (c.seed) config.seeds = {*c.seed};
  if (!c.rho.empty()) config.densities = c.rho;
  if (!c.schedulers.empty()) {
    config.schedulers.clear();
    for (const auto& s : c.schedulers) config.schedulers.push_back(prcara::parse_scheduler(s));
  }
  if (!c.out.empty()) config.output_dir = c.out;
  if (!c.weights.empty()) config.weights = c.weights;
  config.validate();
  return config;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON configuration (defaults to the built-in setup)");
  app->add_option("--seed", c.seed, "Single seed, overriding the configured list");
  app->add_option("--rho", c.rho, "Densities in vehicles/km, overriding the configured sweep");
  app->add_option("--scheduler", c.schedulers, "SbSps, SbDs, ExtSciAvoid, MinRssi or PrCara");
  app->add_option("--out", c.out, "Output path or directory");
  app->add_option("--jobs", c.jobs, "Worker threads (default: available cores)");
  app->add_option("--weights", c.weights, "Estimator weight file");
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("PRCARA_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  } else {
    spdlog::set_level(spdlog::level::warn);
  }

  CLI::App app{"Platoon-aware sidelink scheduling simulator"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate an estimator training set");
  add_common(gen, common);
  std::size_t n_rows = 100000;
  gen->add_option("-n,--samples", n_rows, "Number of samples");

  auto* train = app.add_subcommand("train", "Train the proactive RSSI estimator");
  add_common(train, common);
  std::string dataset;
  std::string report = "training_report.jsonl";
  train->add_option("--dataset", dataset, "Dataset CSV (generated on the fly when omitted)");
  train->add_option("--report", report, "JSON-lines training report");

  auto* sim = app.add_subcommand("simulate", "Run the configured density and scheduler sweep");
  add_common(sim, common);
  bool records = false;
  sim->add_flag("--records", records, "Also write per-replica record CSVs");

  auto* trace = app.add_subcommand("trace", "Mobility trace utilities");
  trace->require_subcommand(1);
  auto* texport = trace->add_subcommand("export", "Synthesize a trace from the generator");
  add_common(texport, common);
  auto* tvalidate = trace->add_subcommand("validate", "Check a trace file");
  std::string trace_file;
  tvalidate->add_option("file", trace_file, "Trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? prcara::kExitOk : prcara::kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto config = resolve(common);
      const std::string out = common.out.empty() ? "dataset.csv" : common.out;
      const auto audit = prcara::cmd_gen_data(config, config.seeds.front(), n_rows, out);
      std::cout << "rows=" << audit.rows << " hidden=" << audit.hidden << " exposed=" << audit.exposed
                << " near_out_of_range=" << audit.near_out_of_range << " label_dbm=[" << audit.label_min_dbm << ", "
                << audit.label_max_dbm << "]\n";
      if (audit.near_out_of_range) {
        std::cerr << "range audit: " << audit.near_out_of_range << " near distances outside the configured range\n";
        return prcara::kExitRuntime;
      }
    } else if (train->parsed()) {
      const auto config = resolve(common);
      const std::string out = common.out.empty() ? "weights.prcw" : common.out;
      std::optional<std::filesystem::path> data;
      if (!dataset.empty()) data = dataset;
      const auto r = prcara::cmd_train(config, config.seeds.front(), data, out, report);
      std::cout << "holdout_mse_db2=" << r.holdout_mse_db2 << " baseline_mse_db2=" << r.baseline_mse_db2
                << " weights=" << out << '\n';
    } else if (sim->parsed()) {
      auto config = resolve(common);
      config.write_records = config.write_records || records;
      const int jobs = common.jobs > 0 ? common.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
      const auto rows = prcara::cmd_simulate(config, jobs);
      for (const auto& r : rows) {
        std::cout << "rho=" << r.rho << " scheduler=" << prcara::to_string(r.kind) << " pdr=" << r.pdr.mean
                  << " per=" << r.per.mean << " pcr=" << r.pcr.mean << " ipg_p90=" << r.ipg_p90.mean << '\n';
      }
      std::cout << "results in " << config.output_dir.string() << '\n';
    } else if (texport->parsed()) {
      const auto config = resolve(common);
      const std::string out = common.out.empty() ? "trace.csv" : common.out;
      prcara::cmd_trace_export(config, config.seeds.front(), out);
      std::cout << "trace written to " << out << '\n';
    } else if (tvalidate->parsed()) {
      const auto t = prcara::cmd_trace_validate(trace_file);
      std::cout << "ok: " << t.tracks().size() << " vehicles, " << t.start_ms() << ".." << t.end_ms() << " ms\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return prcara::exit_code_for(e);
  }
  return prcara::kExitOk;
}
