#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>

#include "alstream/alpolicy.hpp"
#include "alstream/config.hpp"
#include "alstream/lattice.hpp"
#include "alstream/nnet.hpp"
#include "alstream/orchestrator.hpp"
#include "alstream/seed.hpp"
#include "alstream/simulator.hpp"

namespace py = pybind11;
using namespace alstream;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

WorkflowConfig make_config(const std::string& preset, const std::map<std::string, std::string>& overrides) {
    auto cfg = preset_config(preset);
    for (const auto& [key, value] : overrides) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) throw ConfigError("expected section.key, got '" + key + "'");
        set_config_value(cfg, key.substr(0, dot), key.substr(dot + 1), value);
    }
    return cfg;
}

// Rows are samples on the Python side.
Dataset make_batch(const Eigen::MatrixXd& inputs, const std::vector<int>& labels, const Eigen::MatrixXd& targets,
                   const Eigen::MatrixXd& masks) {
    Dataset d;
    d.inputs = inputs.transpose();
    d.labels = labels;
    d.targets = targets.transpose();
    d.masks = masks.transpose();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "C++ core of alstream";

    py::enum_<SymmetryClass>(m, "SymmetryClass")
        .value("Cubic", SymmetryClass::Cubic)
        .value("Trigonal", SymmetryClass::Trigonal)
        .value("Tetragonal", SymmetryClass::Tetragonal);

    py::class_<CellParams>(m, "CellParams")
        .def_static("cubic", &CellParams::cubic, py::arg("a"))
        .def_static("trigonal", &CellParams::trigonal, py::arg("a"), py::arg("alpha"))
        .def_static("tetragonal", &CellParams::tetragonal, py::arg("a"), py::arg("c"))
        .def_readonly("symmetry", &CellParams::symmetry)
        .def_readonly("a", &CellParams::a)
        .def_readonly("c", &CellParams::c)
        .def_readonly("alpha", &CellParams::alpha)
        .def(py::self == py::self)
        .def("__repr__", [](const CellParams& p) {
            return "CellParams(" + std::string(class_name(p.symmetry)) + ", a=" + std::to_string(p.a) +
                   ", c=" + std::to_string(p.c) + ", alpha=" + std::to_string(p.alpha) + ")";
        });

    m.def("d_spacing",
          [](const CellParams& cell, std::array<int, 3> hkl) { return d_spacing(cell, {hkl[0], hkl[1], hkl[2]}); },
          py::arg("cell"), py::arg("hkl"));

    m.def("tof_grid", [] {
        const TofGrid g;
        Eigen::VectorXd t(static_cast<Eigen::Index>(g.n_bins));
        for (std::size_t i = 0; i < g.n_bins; ++i) t(static_cast<Eigen::Index>(i)) = g.center(i);
        return t;
    });

    m.def("sample_uniform",
          [](std::array<std::size_t, 3> counts, std::uint64_t seed, const std::string& preset) {
              return sample_uniform(ParamSpace::preset(preset), counts, seed);
          },
          py::arg("counts"), py::arg("seed"), py::arg("preset") = "E1");

    m.def("sweep_grid",
          [](const GridCounts& counts, const std::string& preset) {
              return sweep_grid(ParamSpace::preset(preset), counts).params;
          },
          py::arg("counts"), py::arg("preset") = "E1");

    m.def("simulate_profile",
          [](const CellParams& cell, std::uint64_t seed, const std::string& preset, double noise_std) {
              SimConfig cfg;
              cfg.noise_std = noise_std;
              const auto p = simulate_profile(cell, ParamSpace::preset(preset), cfg, seed);
              return Eigen::Map<const Eigen::VectorXd>(p.intensity.data(), static_cast<Eigen::Index>(p.intensity.size()))
                  .eval();
          },
          py::arg("cell"), py::arg("seed") = 0, py::arg("preset") = "E1", py::arg("noise_std") = 0.01);

    py::class_<ModelState>(m, "ModelState")
        .def_static("initialized",
                    [](std::size_t input, std::size_t h1, std::size_t h2, std::uint64_t seed) {
                        return ModelState::initialized({input, h1, h2}, seed);
                    },
                    py::arg("input"), py::arg("hidden1") = 256, py::arg("hidden2") = 64, py::arg("seed") = 0)
        .def_static("zeros",
                    [](std::size_t input, std::size_t h1, std::size_t h2) { return ModelState::zeros({input, h1, h2}); },
                    py::arg("input"), py::arg("hidden1") = 256, py::arg("hidden2") = 64)
        .def_static("load", &load_model)
        .def("save", [](const ModelState& s, const std::string& path) { save_model(path, s); })
        .def_property_readonly("parameter_count", &ModelState::parameter_count)
        .def_property_readonly("input_dim", [](const ModelState& s) { return s.dims().input; })
        .def_readwrite("bv", &ModelState::bv);

    m.def("forward",
          [](const ModelState& model, const Eigen::MatrixXd& inputs) {
              const auto p = forward(model, Eigen::MatrixXd(inputs.transpose()));
              return py::make_tuple(Eigen::MatrixXd(p.logits.transpose()), Eigen::MatrixXd(p.y_hat.transpose()),
                                    Eigen::VectorXd(p.log_var.transpose()));
          },
          py::arg("model"), py::arg("inputs"), "inputs: (N, input_dim); returns logits, y_hat, log_var");

    m.def("loss",
          [](const ModelState& model, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
             const Eigen::MatrixXd& targets, const Eigen::MatrixXd& masks) {
              const auto l = loss(model, make_batch(inputs, labels, targets, masks));
              return py::dict(py::arg("total") = l.total, py::arg("class_loss") = l.class_loss,
                              py::arg("reg_loss") = l.reg_loss);
          },
          py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("targets"), py::arg("masks"));

    m.def("weights",
          [](const ModelState& model, const Eigen::MatrixXd& inputs) {
              StudySet s;
              s.inputs = inputs.transpose();
              s.params.assign(static_cast<std::size_t>(inputs.rows()), CellParams{});
              return compute_weights(model, s);
          },
          py::arg("model"), py::arg("inputs"), "Normalized predicted variance over the rows of inputs");

    m.def("sample_al",
          [](const ModelState& model, std::size_t study_size, std::size_t n, std::uint64_t seed,
             const std::string& preset, double tau_multiplier) {
              const auto cfg = preset_config(preset);
              StudySet study;
              {
                  py::gil_scoped_release release;
                  study = build_study_set(cfg.space, cfg.sim, study_size, model.dims().input,
                                          derive_seed(seed, "sim-study"));
              }
              const auto d = make_density(study, compute_weights(model, study), cfg.al.make_prior(cfg.space),
                                          tau_multiplier);
              py::dict out;
              out["centers"] = d.centers;
              out["weights"] = d.weights;
              out["samples"] = sample(d, n, derive_seed(seed, "al-sample"));
              return out;
          },
          py::arg("model"), py::arg("study_size"), py::arg("n"), py::arg("seed") = 0, py::arg("preset") = "E1-desk",
          py::arg("tau_multiplier") = 1.0);

    m.def("preset_config",
          [](const std::string& preset, const std::map<std::string, std::string>& overrides) {
              return dump_config(make_config(preset, overrides));
          },
          py::arg("preset") = "E1-desk", py::arg("overrides") = std::map<std::string, std::string>{},
          "Resolved configuration as INI text");

    m.def("run_workflow",
          [](const std::string& mode, std::uint64_t seed, const std::string& preset,
             const std::map<std::string, std::string>& overrides) {
              auto cfg = make_config(preset, overrides);
              cfg.mode = parse_mode(mode);
              cfg.seed = seed;
              RunReport r;
              {
                  py::gil_scoped_release release;
                  r = run_workflow(cfg);
              }
              return to_python(to_json(r));
          },
          py::arg("mode") = "serial", py::arg("seed") = 0, py::arg("preset") = "E1-desk",
          py::arg("overrides") = std::map<std::string, std::string>{}, "Runs a workflow; returns the report as a dict");

    m.def("compare_reports",
          [](const std::vector<py::object>& reports) {
              std::vector<RunReport> rs;
              for (const auto& r : reports) rs.push_back(report_from_json(from_python(r)));
              const auto cmp = compare_runs(rs);
              auto out = to_python(cmp.to_json());
              out["table"] = cmp.render();
              return out;
          },
          py::arg("reports"));

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
