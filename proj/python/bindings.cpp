#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "prcara/cli.hpp"
#include "prcara/config.hpp"
#include "prcara/error.hpp"
#include "prcara/sci_codec.hpp"
#include "prcara/sensing.hpp"
#include "prcara/sim_engine.hpp"

namespace py = pybind11;
using namespace prcara;

namespace {

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  d["mean"] = s.mean;
  d["ci_half_width"] = s.ci_half_width;
  d["n"] = s.n;
  return d;
}

py::dict row_dict(const AggregateRow& r) {
  py::dict d;
  d["rho"] = r.rho;
  d["scheduler"] = std::string(to_string(r.kind));
  d["replicas"] = r.replicas;
  d["pdr"] = summary_dict(r.pdr);
  d["per"] = summary_dict(r.per);
  d["pcr"] = summary_dict(r.pcr);
  d["ipg_mean"] = summary_dict(r.ipg_mean);
  d["ipg_p90"] = summary_dict(r.ipg_p90);
  d["event_ms"] = summary_dict(r.event_ms);
  d["event_attempts"] = summary_dict(r.event_attempts);
  return d;
}

}  // namespace

PYBIND11_MODULE(_prcara, m) {
  m.doc() = "Sidelink platoon scheduling simulator";

  static py::exception<Error> base(m, "PrcaraError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingArtifact>(m, "MissingArtifact", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<EncodeError>(m, "EncodeError", base.ptr());

  py::class_<ExtendedSci>(m, "ExtendedSci")
      .def(py::init<>())
      .def_readwrite("priority", &ExtendedSci::priority)
      .def_readwrite("ri1", &ExtendedSci::ri1)
      .def_readwrite("ri2", &ExtendedSci::ri2)
      .def_readwrite("rri_code", &ExtendedSci::rri_code)
      .def_readwrite("mcs", &ExtendedSci::mcs)
      .def_readwrite("dmrs_and_misc", &ExtendedSci::dmrs_and_misc)
      .def("__eq__", [](const ExtendedSci& a, const ExtendedSci& b) { return a == b; })
      .def("__repr__", [](const ExtendedSci& s) { return "ExtendedSci(" + to_debug_string(s) + ")"; });
  m.def("encode_sci", &encode_sci);
  m.def("decode_sci", &decode_sci);

  m.def(
      "build_csr",
      [](const std::vector<double>& values, const std::vector<std::uint8_t>& reserved, int window_ms,
         int num_subchannels) -> py::object {
        const auto subset = window_subset(VehicleId{0}, 1, 0, window_ms, num_subchannels);
        const auto csr = build_csr(values, reserved, subset);
        if (!csr) return py::none();
        py::list cells;
        for (const auto& e : csr->entries) cells.append(py::make_tuple(e.cell.subchannel, e.cell.subframe));
        return cells;
      },
      py::arg("values_dbm"), py::arg("reserved"), py::arg("window_ms"), py::arg("num_subchannels"),
      "Candidate cells as (subchannel, subframe) for a window starting at subframe 1, or None.");

  m.def("default_config_json", [] { return config_to_json(default_config()); });
  m.def(
      "simulate",
      [](const std::string& config_json, int jobs) {
        const auto config = parse_config(config_json);
        std::vector<AggregateRow> rows;
        {
          py::gil_scoped_release release;
          rows = cmd_simulate(config, jobs);
        }
        py::list out;
        for (const auto& r : rows) out.append(row_dict(r));
        return out;
      },
      py::arg("config_json"), py::arg("jobs") = 1, "Runs the sweep and returns one dict per aggregate row.");
  m.def(
      "run_records_csv",
      [](const std::string& config_json, const std::string& scheduler, std::uint64_t seed) {
        const auto config = parse_config(config_json);
        SimParams p = config.sim;
        p.scenario.density_per_km = config.densities.front();
        const auto estimator = load_estimator(config);
        std::ostringstream out;
        {
          py::gil_scoped_release release;
          const auto r = run_simulation(p, parse_scheduler(scheduler), seed, estimator.get());
          write_records_csv(out, r.records);
        }
        return out.str();
      },
      py::arg("config_json"), py::arg("scheduler"), py::arg("seed"));
}
