#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ensot/cli.hpp"
#include "ensot/ctrl_measure.hpp"
#include "ensot/discrete_tracking.hpp"
#include "ensot/gaussian_tracking.hpp"
#include "ensot/lti.hpp"
#include "ensot/observability.hpp"
#include "ensot/transport.hpp"

namespace py = pybind11;

namespace ensot {
namespace {

IntegrationOptions steps(int steps_per_unit) {
  IntegrationOptions opts;
  opts.steps_per_unit = steps_per_unit;
  return opts;
}

LinearSystem make_system(const Matrix& a, const Matrix& b, const std::optional<Matrix>& c) {
  if (c) return LinearSystem(a, b, *c);
  return LinearSystem(a, b);
}

py::dict transport_dict(const TransportResult& r) {
  py::dict d;
  d["plan"] = r.plan;
  d["value"] = r.value;
  d["u"] = r.u;
  d["v"] = r.v;
  d["pivots"] = r.pivots;
  return d;
}

DiscreteMeasure measure(const Matrix& atoms, const Vector& weights) {
  return DiscreteMeasure::from_unnormalized(atoms, weights);
}

}  // namespace

PYBIND11_MODULE(_ensot, m) {
  m.doc() = "Ensemble state tracking by optimal transport";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<LinearSystem>(m, "LinearSystem")
      .def(py::init(&make_system), py::arg("A"), py::arg("B"), py::arg("C") = py::none())
      .def_property_readonly("state_dim", &LinearSystem::state_dim)
      .def_property_readonly("input_dim", &LinearSystem::input_dim)
      .def_property_readonly("output_dim", &LinearSystem::output_dim);

  m.def("state_transition",
        [](const LinearSystem& s, double t, double tp, int n) {
          return state_transition(s, t, tp, steps(n));
        },
        py::arg("system"), py::arg("t"), py::arg("t_prime"), py::arg("steps_per_unit") = 1000);
  m.def("controllability_gramian",
        [](const LinearSystem& s, double t, double tp, int n) {
          return controllability_gramian(s, t, tp, steps(n));
        },
        py::arg("system"), py::arg("t"), py::arg("t_prime"), py::arg("steps_per_unit") = 1000);
  m.def("observability_gramian",
        [](const LinearSystem& s, double t0, double t1, int n) {
          return observability_gramian(s, t0, t1, steps(n));
        },
        py::arg("system"), py::arg("t0"), py::arg("t1"), py::arg("steps_per_unit") = 1000);
  m.def("min_energy_cost",
        [](const LinearSystem& s, const Vector& x0, const Vector& x1, double t0, double t1) {
          return min_energy_cost(s, x0, x1, t0, t1);
        },
        py::arg("system"), py::arg("x0"), py::arg("x1"), py::arg("t0") = 0.0,
        py::arg("t1") = 1.0);
  m.def("is_observable_pair", &is_observable_pair, py::arg("A"), py::arg("C"));

  m.def("solve_kantorovich",
        [](const Matrix& src, const Vector& a, const Matrix& dst, const Vector& b,
           const Matrix& cost) {
          return transport_dict(solve_kantorovich(measure(src, a), measure(dst, b), cost));
        },
        py::arg("source_atoms"), py::arg("source_weights"), py::arg("target_atoms"),
        py::arg("target_weights"), py::arg("cost"));
  m.def("wasserstein_p",
        [](const Matrix& src, const Vector& a, const Matrix& dst, const Vector& b, double p) {
          return wasserstein_p(measure(src, a), measure(dst, b), p);
        },
        py::arg("source_atoms"), py::arg("source_weights"), py::arg("target_atoms"),
        py::arg("target_weights"), py::arg("p") = 2.0);
  m.def("lqr_cost_matrix",
        [](const LinearSystem& s, double t0, double t1, const Matrix& src, const Matrix& dst) {
          return lqr_cost_matrix(s, t0, t1, src, dst);
        },
        py::arg("system"), py::arg("t0"), py::arg("t1"), py::arg("source_atoms"),
        py::arg("target_atoms"));
  m.def("transformed_w2",
        [](const LinearSystem& s, const Matrix& src, const Vector& a, const Matrix& dst,
           const Vector& b) { return transformed_w2(s, measure(src, a), measure(dst, b)); },
        py::arg("system"), py::arg("source_atoms"), py::arg("source_weights"),
        py::arg("target_atoms"), py::arg("target_weights"));

  m.def("track_gaussian",
        [](const LinearSystem& s, const std::vector<Vector>& means,
           const std::vector<Matrix>& covs, int samples) {
          require(means.size() == covs.size(), ErrorKind::kDimensionMismatch,
                  "one covariance per mean is required");
          std::vector<GaussianMeasure> outputs;
          for (size_t k = 0; k < means.size(); ++k) outputs.emplace_back(means[k], covs[k]);
          const GaussianTrack t = track_gaussian(s, outputs, samples);
          py::dict d;
          d["times"] = t.times;
          d["means"] = t.means;
          d["covariances"] = t.covariances;
          d["state_means"] = t.state_means;
          d["state_covariances"] = t.state_covariances;
          d["covariance_objective"] = t.covariance_objective;
          return d;
        },
        py::arg("system"), py::arg("output_means"), py::arg("output_covariances"),
        py::arg("samples_per_interval") = 200);

  m.def("solve_tracking",
        [](const LinearSystem& s, const std::vector<Vector>& axes,
           const std::vector<std::pair<Matrix, Vector>>& outputs, const std::string& mode) {
          std::vector<DiscreteMeasure> mus;
          for (const auto& [atoms, weights] : outputs) mus.push_back(measure(atoms, weights));
          require(mode == "coupled" || mode == "fixed_marginal", ErrorKind::kInvalidArgument,
                  "mode must be 'coupled' or 'fixed_marginal'");
          TrackingProblem p{s, mus, Grid(axes),
                            mode == "coupled" ? TrackingMode::kCoupled
                                              : TrackingMode::kFixedMarginal,
                            {}, {}};
          const TrackingSolution sol = solve_tracking(p);
          py::dict d;
          d["nodes"] = sol.nodes;
          d["marginals"] = sol.marginals;
          d["plans"] = sol.plans;
          d["objective"] = sol.objective;
          return d;
        },
        py::arg("system"), py::arg("grid_axes"), py::arg("outputs"),
        py::arg("mode") = "coupled");

  m.def("ensemble_observable_lti",
        [](const Matrix& a, const Matrix& c) {
          const EnsembleObservabilityReport r = ensemble_observable_lti(a, c);
          py::dict d;
          d["observable"] = r.observable;
          d["pivot_columns"] = r.pivot_columns;
          d["witness"] = r.witness;
          d["method"] = r.method;
          return d;
        },
        py::arg("A"), py::arg("C"));

  m.def("controllability_measure_box",
        [](const Matrix& field_m, const Vector& field_b, const Vector& lower,
           const Vector& upper, const Matrix& mu0, const Vector& w0, const Matrix& mu1,
           const Vector& w1, double t_max) {
          const ControllabilityMeasure s = controllability_measure(
              VectorField::linear(field_m, field_b), ControlRegion::box(lower, upper),
              measure(mu0, w0), measure(mu1, w1), t_max);
          return s.s;
        },
        py::arg("field_matrix"), py::arg("field_offset"), py::arg("lower"), py::arg("upper"),
        py::arg("mu0_atoms"), py::arg("mu0_weights"), py::arg("mu1_atoms"),
        py::arg("mu1_weights"), py::arg("t_max"));

  m.def("run_cli",
        [](const std::string& config, const std::string& out_dir) {
          std::ostringstream out, err;
          RunOptions opts;
          opts.out_dir = out_dir;
          const int code = run(config, out, err, opts);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("config_json"), py::arg("out_dir") = "");
}

}  // namespace ensot
