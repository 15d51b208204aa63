#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ddfeec/bspline.hpp"
#include "ddfeec/config.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/experiments.hpp"
#include "ddfeec/parallel.hpp"
#include "ddfeec/whitney.hpp"

namespace py = pybind11;
using namespace ddfeec;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
std::string solve_text(const std::string& text, const std::string& base_dir) {
    const SolveConfig c = parse_solve_config(nlohmann::json::parse(text), base_dir);
    auto sys = build_system(c);
    return run_solve(*sys, c).to_json().dump();
}

std::string solve_file(const std::string& path) {
    const SolveConfig c = load_solve_config(path);
    auto sys = build_system(c);
    return run_solve(*sys, c).to_json().dump();
}

py::dict study(const std::string& id, const std::vector<double>& levels, const std::string& data_dir,
               const std::string& out_dir, bool retrain, int epochs) {
    StudyOptions o;
    o.levels = levels;
    o.data_dir = data_dir;
    o.out_dir = out_dir;
    o.retrain = retrain;
    o.epochs = epochs;
    StudyReport r;
    {
        py::gil_scoped_release release;
        r = run_study(id, o);
    }
    py::dict d;
    d["csv"] = r.csv();
    d["report"] = r.to_json().dump();
    d["passed"] = r.passed();
    return d;
}

// Coarse POU values at reference points, one row per point.
Eigen::MatrixXd pou_values(const std::string& element, const Eigen::MatrixX2d& points) {
    const FeecElement e = load_element(element);
    std::vector<Point> pts(points.rows());
    for (Eigen::Index k = 0; k < points.rows(); ++k) pts[k] = {points(k, 0), points(k, 1)};
    return eval_pou(e.pou, pts).values;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mortar domain decomposition with FEM and trainable Whitney-form subdomain solvers";

    // translators run newest first, so the base class goes first
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<OutOfDomain>(m, "OutOfDomain", PyExc_ValueError);
    py::register_exception<ConvergenceFailure>(m, "ConvergenceFailure", PyExc_RuntimeError);
    py::register_exception<UnisolvencyWarning>(m, "UnisolvencyWarning", PyExc_RuntimeError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

    m.def("solve_file", &solve_file, py::arg("path"), py::call_guard<py::gil_scoped_release>());
    m.def("solve_text", &solve_text, py::arg("text"), py::arg("base_dir") = ".",
          py::call_guard<py::gil_scoped_release>());
    m.def("study", &study, py::arg("id"), py::arg("levels") = std::vector<double>{}, py::arg("data_dir") = "",
          py::arg("out_dir") = "", py::arg("retrain") = false, py::arg("epochs") = 0);
    m.def("study_ids", &study_ids);
    m.def("default_data_dir", &default_data_dir);
    m.def("fitted_rate", &fitted_rate, py::arg("h"), py::arg("err"));
    m.def("realize_knots", &realize_knots, py::arg("logits"));
    m.def("pou_values", &pou_values, py::arg("element"), py::arg("points"));
    m.def("set_threads", &set_thread_count, py::arg("n"));
}
