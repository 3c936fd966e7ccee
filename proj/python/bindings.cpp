#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dwim/cli.hpp"
#include "dwim/flagmask.hpp"
#include "dwim/serialize.hpp"

namespace py = pybind11;
using namespace dwim;

namespace {

json record(const std::string& text) {
  auto j = json::parse(text);
  require_schema(j, "<record>", 1);
  return j;
}

}  // namespace

PYBIND11_MODULE(_dwim, m) {
  m.doc() = "Bindings for the dwim core; records travel as JSON strings.";
  m.attr("SCHEMA_VERSION") = std::string(kSchemaVersion);
  m.attr("MASK_TOKEN") = std::string(kMaskToken);

  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = cli::run(args, out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand in process; returns (status, stdout, stderr).");

  m.def(
      "render_sample",
      [](const std::string& text) {
        const auto s = record(text).get<MaskSample>();
        return py::dict(py::arg("task_id") = s.task_id, py::arg("variant") = std::string(to_string(s.variant)),
                        py::arg("prompt") = mask::render_sample_context(s),
                        py::arg("completion") = mask::render_sample_target(s), py::arg("reward") = s.reward);
      },
      py::arg("record"), "Prompt and completion text for one mask-sample record.");

  m.def(
      "flag_workflow",
      [](const std::string& text) {
        const auto w = record(text).get<Workflow>();
        const auto r = mask::flag_actions(w);
        return json{{"workflow_id", r.workflow_id}, {"flags", r.flags}, {"rule_hits", r.rule_hits}}.dump();
      },
      py::arg("record"), "Flag report for one workflow record, as JSON.");

  m.def("normalize_answer", &normalize_answer, py::arg("answer"));
}
