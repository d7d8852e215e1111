#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctat/config.hpp"
#include "ctat/io.hpp"
#include "ctat/rays.hpp"
#include "ctat/recon.hpp"
#include "ctat/selftest.hpp"

namespace py = pybind11;
using namespace ctat;

namespace {

py::array_t<double> to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  py::array_t<double> a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<double> from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

// One experiment config plus the operators built from it.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg)
      : cfg_(std::move(cfg)),
        grid_(cfg_.grid()),
        speed_(sample_speed(cfg_.speed, grid_)),
        op_(speed_, cfg_.detector, cfg_.pml(grid_), cfg_.interpolation) {}

  const ExperimentConfig& config() const { return cfg_; }

  py::array_t<double> phantom() const {
    return to_array(make_phantom(cfg_.phantom, grid_).f, {grid_.n, grid_.n});
  }

  py::array_t<double> speed() const { return to_array(speed_.c, {grid_.n, grid_.n}); }

  py::array_t<double> forward(const py::array_t<double, py::array::c_style | py::array::forcecast>& f) const {
    check_size(f.size(), op_.image_size(), "image");
    return to_array(op_.apply(from_array(f)), {op_.time().nt, static_cast<py::ssize_t>(op_.theta().size())});
  }

  py::array_t<double> adjoint(const py::array_t<double, py::array::c_style | py::array::forcecast>& g) const {
    check_size(g.size(), op_.data_size(), "data");
    return to_array(op_.adjoint(from_array(g)), {grid_.n, grid_.n});
  }

  py::dict reconstruct(const py::array_t<double, py::array::c_style | py::array::forcecast>& g) const {
    check_size(g.size(), op_.data_size(), "data");
    const TimeCutoff chi = time_cutoff_chi(cfg_.chi_T, cfg_.chi_T1, op_.time());
    const ReconProblem problem(op_, chi.weights, support_mask(grid_, cfg_.support_radius), cfg_.tikhonov);
    const auto data = from_array(g);
    ReconResult r;
    {
      py::gil_scoped_release release;
      if (cfg_.method == ReconMethod::Landweber) {
        LandweberOptions lo;
        lo.iterations = cfg_.iterations;
        lo.step = cfg_.step;
        lo.tol = cfg_.tol;
        lo.norm_iters = cfg_.norm_iters;
        lo.seed = cfg_.seed;
        r = landweber(problem, data, lo);
      } else {
        CgOptions co;
        co.iterations = cfg_.iterations;
        co.tol = cfg_.tol;
        r = cg_normal(problem, data, co);
      }
    }
    py::dict out;
    out["estimate"] = to_array(r.estimate.f, {grid_.n, grid_.n});
    out["residual_history"] = r.residual_history;
    out["iterations"] = r.iterations;
    out["step_size"] = r.step_size;
    out["stop_reason"] = r.stop_reason;
    return out;
  }

  std::vector<py::dict> visibility() const {
    const SpeedModel model(cfg_.speed);
    const auto wf = phantom_edges(make_phantom(cfg_.phantom, grid_), cfg_.edge_threshold);
    const VisibilityReport rep = ctat::visibility(model, wf, cfg_.aperture(), cfg_.detector, cfg_.vis);
    std::vector<py::dict> out;
    for (const auto& e : rep.entries) {
      py::dict d;
      d["y"] = py::make_tuple(e.cv.y.x, e.cv.y.y);
      d["xi"] = py::make_tuple(e.cv.xi.x, e.cv.xi.y);
      d["verdict"] = to_string(e.verdict);
      if (e.has_witness) {
        d["t"] = e.witness.t;
        d["theta"] = e.witness.theta;
      }
      out.push_back(d);
    }
    return out;
  }

  int nt() const { return op_.time().nt; }
  double dt() const { return op_.time().dt; }
  std::vector<double> theta() const { return op_.theta(); }
  double h() const { return grid_.h; }

 private:
  static void check_size(py::ssize_t got, std::size_t want, const char* what) {
    if (static_cast<std::size_t>(got) != want) {
      throw py::value_error(std::string(what) + " has " + std::to_string(got) + " values, expected " +
                            std::to_string(want));
    }
  }

  ExperimentConfig cfg_;
  Grid2D grid_;
  SpeedField speed_;
  MeasurementOperator op_;
};

DetectorConfig make_detector(const std::string& mode, double R, double r) {
  return detector_mode_from_string(mode) == DetectorMode::Small ? DetectorConfig::small(R, r) : DetectorConfig::large(r);
}

}  // namespace

PYBIND11_MODULE(_ctat, m) {
  m.doc() = "thermoacoustic tomography core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "ArrayFileError", PyExc_IOError);

  py::class_<Experiment>(m, "Experiment")
      .def_static("from_file", [](const std::string& p) { return Experiment(load_config(p)); })
      .def_static("from_string", [](const std::string& s) { return Experiment(parse_config(s)); })
      .def("phantom", &Experiment::phantom)
      .def("speed", &Experiment::speed)
      .def("forward", &Experiment::forward, py::arg("f"))
      .def("adjoint", &Experiment::adjoint, py::arg("g"))
      .def("reconstruct", &Experiment::reconstruct, py::arg("data"))
      .def("visibility", &Experiment::visibility)
      .def_property_readonly("nt", &Experiment::nt)
      .def_property_readonly("dt", &Experiment::dt)
      .def_property_readonly("theta", &Experiment::theta)
      .def_property_readonly("h", &Experiment::h)
      .def_property_readonly("seed", [](const Experiment& e) { return e.config().seed; });

  m.def(
      "read_array",
      [](const std::string& path) {
        const ArrayFile a = read_array(path);
        std::vector<py::ssize_t> shape(a.dims.begin(), a.dims.end());
        return py::make_tuple(to_array(a.data, shape), a.meta.dump());
      },
      py::arg("path"), "(array, sidecar meta as JSON text)");
  m.def(
      "write_array",
      [](const std::string& path, const py::array_t<double, py::array::c_style | py::array::forcecast>& arr,
         const std::string& meta_json) {
        ArrayFile a;
        for (py::ssize_t i = 0; i < arr.ndim(); ++i) a.dims.push_back(static_cast<std::uint64_t>(arr.shape(i)));
        a.data = from_array(arr);
        a.meta = nlohmann::json::parse(meta_json);
        write_array(path, a);
      },
      py::arg("path"), py::arg("array"), py::arg("meta_json") = "{}");

  m.def(
      "adjoint_mismatch",
      [](const std::string& mode, int n, int pairs, std::uint64_t seed, bool broken) {
        py::gil_scoped_release release;
        return adjoint_mismatch(detector_mode_from_string(mode), n, pairs, seed, broken);
      },
      py::arg("mode"), py::arg("n") = 64, py::arg("pairs") = 5, py::arg("seed") = 2024, py::arg("broken") = false);

  m.def(
      "selftest",
      [](const std::string& level, bool broken) {
        std::vector<CheckResult> r;
        {
          py::gil_scoped_release release;
          r = run_selftest(level, broken);
        }
        std::vector<py::dict> out;
        for (const auto& c : r) {
          py::dict d;
          d["name"] = c.name;
          d["pass"] = c.pass;
          d["detail"] = c.detail;
          out.push_back(d);
        }
        return out;
      },
      py::arg("level") = "quick", py::arg("break_adjoint") = false);

  m.def(
      "canonical_image",
      [](std::pair<double, double> y, std::pair<double, double> xi, const std::string& mode, double R, double r,
         const std::string& speed_kind) {
        SpeedSpec spec = speed::Constant{1.0};
        if (speed_kind == "paper_default") {
          spec = speed::PaperDefault{};
        } else if (speed_kind != "constant") {
          throw py::value_error("speed must be constant or paper_default");
        }
        const CanonicalImage img =
            canonical_image(SpeedModel(spec), {{y.first, y.second}, {xi.first, xi.second}}, make_detector(mode, R, r));
        std::vector<py::dict> out;
        for (const auto& e : img.events) {
          py::dict d;
          d["t"] = e.t;
          d["theta"] = e.theta;
          d["tau"] = e.tau;
          d["omega"] = e.omega.dot(unit_angle(e.theta).perp());
          d["lambda"] = e.lambda;
          d["branch"] = e.branch;
          out.push_back(d);
        }
        return out;
      },
      py::arg("y"), py::arg("xi"), py::arg("mode") = "small", py::arg("R") = 2.0, py::arg("r") = 0.8,
      py::arg("speed") = "constant");

  m.def("coverage_time", [](const std::string& mode, double R, double r) {
    return coverage_time(make_detector(mode, R, r));
  }, py::arg("mode"), py::arg("R"), py::arg("r"));
}
