// SPDX-License-Identifier: Apache-2.0

// JSON text crosses the boundary; python/structchem/__init__.py decodes it.

#include "structchem/cli.hpp"
#include "structchem/dataset.hpp"
#include "structchem/errors.hpp"
#include "structchem/grade.hpp"
#include "structchem/parse.hpp"
#include "structchem/run_record.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace structchem;

namespace {

std::string load_dataset_json(std::string const& path, std::vector<std::string> const& field_map)
{
    LoadOptions o;
    o.field_map = parse_field_map(field_map);
    auto const ds = load_dataset(path, o);
    nlohmann::json out;
    out["name"] = ds.name;
    out["problems"] = dataset_to_json(ds);
    out["count_wo_solutions"] = ds.problems_wo_solutions.size();
    out["count_with_solutions"] = ds.problems_with_solutions.size();
    return out.dump();
}

std::string parse_generation_json(std::string const& text)
{
    auto const g = parse_generation(text);
    nlohmann::ordered_json out;
    out["formulae"] = to_json(g.formulae);
    out["reasoning"] = to_json(g.reasoning);
    out["warnings"] = g.warnings;
    return out.dump();
}

std::string extract_answer_json(std::string const& text)
{
    auto const a = extract_final_answer(text);
    nlohmann::ordered_json out{{"value", a.value}, {"raw_sentence", a.raw_sentence}};
    out["unit_text"] = a.unit_text ? nlohmann::ordered_json(*a.unit_text) : nlohmann::ordered_json(nullptr);
    return out.dump();
}

std::string aggregate_json(std::string const& grades, bool by_dataset, bool by_method, bool by_mode)
{
    std::vector<GradeResult> results;
    for (auto const& g : nlohmann::json::parse(grades))
        results.push_back(grade_from_json(g));
    return to_json(aggregate(results, {by_dataset, by_method, by_mode})).dump();
}

py::tuple run_cli(std::vector<std::string> const& args)
{
    std::ostringstream out;
    std::ostringstream err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = cli_main(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "structchem core bindings";

    py::register_exception<Error>(m, "StructchemError", PyExc_RuntimeError);

    m.def("grade_answer", &grade_answer, py::arg("predicted"), py::arg("gold"));
    m.def("load_dataset_json", &load_dataset_json, py::arg("path"), py::arg("field_map") = std::vector<std::string>{});
    m.def("parse_generation_json", &parse_generation_json, py::arg("text"));
    m.def("extract_answer_json", &extract_answer_json, py::arg("text"));
    m.def("format_generation_json",
          [](std::string const& formulae, std::string const& reasoning) {
              return format_generation(formula_set_from_json(nlohmann::json::parse(formulae)),
                                       reasoning_trace_from_json(nlohmann::json::parse(reasoning)));
          },
          py::arg("formulae"), py::arg("reasoning"));
    m.def("aggregate_json", &aggregate_json, py::arg("grades"), py::arg("by_dataset") = true, py::arg("by_method") = true,
          py::arg("by_mode") = true);
    m.def("cli", &run_cli, py::arg("args"));
}
