#include "ensot/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ensot/ctrl_measure.hpp"
#include "ensot/discrete_tracking.hpp"
#include "ensot/gaussian_tracking.hpp"
#include "ensot/io.hpp"
#include "ensot/lti.hpp"
#include "ensot/observability.hpp"
#include "ensot/transport.hpp"

namespace ensot {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorKind::kConfig, msg); }

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kNotNormalized:
    case ErrorKind::kNotSymmetric:
    case ErrorKind::kNotPsd:
    case ErrorKind::kUnbalanced:
    case ErrorKind::kZeroMass:
      return kExitValidation;
    default:
      return kExitNumerical;
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

const json& need(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) config_error("missing key '" + key + "' in " + where);
  return obj.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) config_error(what + " must be a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) config_error(what + " must be an integer");
  return j.get<int>();
}

Vector vector_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) config_error(what + " must be a nonempty array of numbers");
  Vector v(j.size());
  for (size_t k = 0; k < j.size(); ++k) v(k) = number(j[k], what);
  return v;
}

Matrix matrix_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
    config_error(what + " must be a nonempty array of rows");
  const size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) config_error(what + " has ragged rows");
    for (size_t c = 0; c < cols; ++c) m(r, c) = number(j[r][c], what);
  }
  return m;
}

MatrixFunction matrix_function_of(const json& j, const std::string& what) {
  if (j.is_array()) return MatrixFunction(matrix_of(j, what));
  check_keys(j, {"times", "values"}, what);
  const Vector times = vector_of(need(j, "times", what), what + ".times");
  const json& values = need(j, "values", what);
  if (!values.is_array() || values.size() != static_cast<size_t>(times.size()))
    config_error(what + ".values must hold one matrix per time");
  std::vector<Matrix> mats;
  for (size_t k = 0; k < values.size(); ++k)
    mats.push_back(matrix_of(values[k], what + ".values[" + std::to_string(k) + "]"));
  return MatrixFunction::piecewise(std::vector<double>(times.data(), times.data() + times.size()),
                                   std::move(mats));
}

LinearSystem system_of(const json& j) {
  check_keys(j, {"A", "B", "C"}, "system");
  MatrixFunction a = matrix_function_of(need(j, "A", "system"), "system.A");
  MatrixFunction b = matrix_function_of(need(j, "B", "system"), "system.B");
  if (j.contains("C")) return LinearSystem(a, b, matrix_function_of(j.at("C"), "system.C"));
  return LinearSystem(a, b);
}

IntegrationOptions integration_of(const json& cfg) {
  IntegrationOptions opts;
  if (cfg.contains("integration")) {
    const json& j = cfg.at("integration");
    check_keys(j, {"steps_per_unit"}, "integration");
    if (j.contains("steps_per_unit")) {
      opts.steps_per_unit = integer(j.at("steps_per_unit"), "integration.steps_per_unit");
      if (opts.steps_per_unit < 2) config_error("integration.steps_per_unit must be >= 2");
    }
  }
  return opts;
}

bool is_gaussian(const json& j) { return j.is_object() && j.contains("mean"); }

GaussianMeasure gaussian_of(const json& j, const std::string& what) {
  check_keys(j, {"mean", "cov"}, what);
  return GaussianMeasure(vector_of(need(j, "mean", what), what + ".mean"),
                         matrix_of(need(j, "cov", what), what + ".cov"));
}

struct Context {
  json cfg;
  fs::path base_dir;
  fs::path out_dir;
  IntegrationOptions integration;
  json summary = json::object();
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& text) {
    const fs::path p = out_dir / name;
    write_text_file(p.string(), text);
    files.push_back(p.string());
  }
  void write_csv(const std::string& name, const CsvTable& t) { write(name, to_csv(t)); }
};

DiscreteMeasure discrete_of(const json& j, const std::string& what, const Context& ctx) {
  if (!j.is_object()) config_error(what + " must be an object");
  if (j.contains("csv")) {
    check_keys(j, {"csv"}, what);
    if (!j.at("csv").is_string()) config_error(what + ".csv must be a path string");
    fs::path p = j.at("csv").get<std::string>();
    if (p.is_relative()) p = ctx.base_dir / p;
    return measure_from_table(read_csv_file(p.string()));
  }
  check_keys(j, {"atoms", "weights"}, what);
  const Matrix atoms = matrix_of(need(j, "atoms", what), what + ".atoms").transpose();
  Vector weights;
  if (j.contains("weights")) {
    weights = vector_of(j.at("weights"), what + ".weights");
  } else {
    weights = Vector::Constant(atoms.cols(), 1.0 / atoms.cols());
  }
  return DiscreteMeasure(atoms, weights);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

const std::set<std::string> kCommon = {"command", "out_dir", "seed", "integration"};

std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert(kCommon.begin(), kCommon.end());
  return keys;
}

double optional_number(const json& cfg, const std::string& key, double fallback) {
  return cfg.contains(key) ? number(cfg.at(key), key) : fallback;
}

void cmd_gramian(Context& ctx) {
  check_keys(ctx.cfg, with_common({"system", "t0", "t1"}), "config");
  const LinearSystem sys = system_of(need(ctx.cfg, "system", "config"));
  const double t0 = optional_number(ctx.cfg, "t0", 0.0), t1 = optional_number(ctx.cfg, "t1", 1.0);
  if (!(t0 < t1)) config_error("gramian needs t0 < t1");
  const Matrix w10 = controllability_gramian(sys, t1, t0, ctx.integration);
  const Matrix w01 = controllability_gramian(sys, t0, t1, ctx.integration);
  const Matrix m = observability_gramian(sys, t0, t1, ctx.integration);
  ctx.write_csv("gramian_W_t1_t0.csv", matrix_table(w10));
  ctx.write_csv("gramian_W_t0_t1.csv", matrix_table(w01));
  ctx.write_csv("gramian_M.csv", matrix_table(m));
  ctx.summary["W_t1_t0"] = matrix_json(w10);
  ctx.summary["W_t0_t1"] = matrix_json(w01);
  ctx.summary["M"] = matrix_json(m);
}

void cmd_min_energy(Context& ctx) {
  check_keys(ctx.cfg, with_common({"system", "x0", "x1", "t0", "t1"}), "config");
  const LinearSystem sys = system_of(need(ctx.cfg, "system", "config"));
  const Vector x0 = vector_of(need(ctx.cfg, "x0", "config"), "x0");
  const Vector x1 = vector_of(need(ctx.cfg, "x1", "config"), "x1");
  require(x0.size() == sys.state_dim() && x1.size() == sys.state_dim(),
          ErrorKind::kDimensionMismatch, "x0 and x1 must match the state dimension");
  const double t0 = optional_number(ctx.cfg, "t0", 0.0), t1 = optional_number(ctx.cfg, "t1", 1.0);
  if (!(t0 < t1)) config_error("min-energy needs t0 < t1");
  const double cost = min_energy_cost(sys, x0, x1, t0, t1, ctx.integration);
  const ClosedLoopTrajectory traj =
      simulate_closed_loop(min_energy_control(sys, x0, x1, t0, t1, ctx.integration), x0);
  CsvTable t;
  t.header.push_back("t");
  for (int a = 0; a < sys.state_dim(); ++a) t.header.push_back("x_" + std::to_string(a + 1));
  for (int a = 0; a < sys.input_dim(); ++a) t.header.push_back("u_" + std::to_string(a + 1));
  t.rows.resize(static_cast<Eigen::Index>(traj.times.size()), t.header.size());
  for (size_t k = 0; k < traj.times.size(); ++k) {
    t.rows(k, 0) = traj.times[k];
    t.rows.block(k, 1, 1, sys.state_dim()) = traj.states[k].transpose();
    t.rows.block(k, 1 + sys.state_dim(), 1, sys.input_dim()) = traj.controls[k].transpose();
  }
  ctx.write_csv("trajectory.csv", t);
  ctx.summary["cost"] = cost;
  ctx.summary["simulated_energy"] = traj.energy;
  ctx.summary["endpoint_error"] = (traj.states.back() - x1).norm();
}

void cmd_wasserstein(Context& ctx) {
  check_keys(ctx.cfg, with_common({"source", "target", "p", "system", "t0", "t1"}), "config");
  const DiscreteMeasure mu = discrete_of(need(ctx.cfg, "source", "config"), "source", ctx);
  const DiscreteMeasure nu = discrete_of(need(ctx.cfg, "target", "config"), "target", ctx);
  require(mu.dim() == nu.dim(), ErrorKind::kDimensionMismatch,
          "source and target dimensions differ");
  TransportResult r;
  if (ctx.cfg.contains("system")) {
    if (ctx.cfg.contains("p")) config_error("'p' applies only without a system (W2 is used)");
    const LinearSystem sys = system_of(ctx.cfg.at("system"));
    require(sys.state_dim() == mu.dim(), ErrorKind::kDimensionMismatch,
            "measures must live in the state space");
    const double t0 = optional_number(ctx.cfg, "t0", 0.0),
                 t1 = optional_number(ctx.cfg, "t1", 1.0);
    r = solve_kantorovich(mu, nu, lqr_cost_matrix(sys, t0, t1, mu.atoms(), nu.atoms(),
                                                  ctx.integration));
    ctx.summary["lqr_cost"] = r.value;
    ctx.summary["transformed_w2_squared"] = 2.0 * r.value;
  } else {
    const double p = optional_number(ctx.cfg, "p", 2.0);
    require(p >= 1.0, ErrorKind::kInvalidArgument, "p must be at least 1");
    r = solve_kantorovich(mu, nu, distance_cost(mu.atoms(), nu.atoms(), p));
    ctx.summary["p"] = p;
    ctx.summary["distance"] = std::pow(std::max(0.0, r.value), 1.0 / p);
  }
  ctx.write_csv("plan.csv", plan_table(r.plan));
  ctx.summary["pivots"] = r.pivots;
}

// Gaussian output laws in the discrete pipeline are sampled at the distinct
// projections C(k) z of the grid nodes, so every output atom owns a bin.
DiscreteMeasure output_on_projections(const GaussianMeasure& g, const Matrix& projections) {
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < projections.cols(); ++i) {
    bool seen = false;
    for (int k : keep)
      seen = seen || (projections.col(k) - projections.col(i)).norm() < kAtomMergeTol;
    if (!seen) keep.push_back(static_cast<int>(i));
  }
  Matrix atoms(projections.rows(), keep.size());
  for (size_t k = 0; k < keep.size(); ++k) atoms.col(k) = projections.col(keep[k]);
  const Matrix prec = pd_inverse(g.covariance());
  Vector w(atoms.cols());
  for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
    const Vector d = atoms.col(k) - g.mean();
    w(k) = std::exp(-0.5 * d.dot(prec * d));
  }
  return DiscreteMeasure::from_unnormalized(atoms, w);
}

void cmd_track(Context& ctx) {
  check_keys(ctx.cfg, with_common({"system", "outputs", "grid", "mode", "interpolation_samples"}),
             "config");
  const LinearSystem sys = system_of(need(ctx.cfg, "system", "config"));
  const json& g = need(ctx.cfg, "grid", "config");
  check_keys(g, {"min", "max", "nodes"}, "grid");
  const Vector lo = vector_of(need(g, "min", "grid"), "grid.min");
  const Vector hi = vector_of(need(g, "max", "grid"), "grid.max");
  const json& nodes_j = need(g, "nodes", "grid");
  if (!nodes_j.is_array() || nodes_j.size() != static_cast<size_t>(lo.size()))
    config_error("grid.nodes must list a node count per axis");
  require(lo.size() == sys.state_dim() && hi.size() == sys.state_dim(),
          ErrorKind::kDimensionMismatch, "grid dimension differs from the state dimension");
  std::vector<Vector> axes;
  for (Eigen::Index a = 0; a < lo.size(); ++a) {
    const int n = integer(nodes_j[a], "grid.nodes");
    if (n < 1) config_error("grid.nodes must be positive");
    if (n > 1 && !(lo(a) < hi(a))) config_error("grid.min must be below grid.max");
    axes.push_back(n == 1 ? Vector(Vector::Constant(1, lo(a)))
                          : Vector(Vector::LinSpaced(n, lo(a), hi(a))));
  }
  const Grid grid(axes);
  TrackingMode mode = TrackingMode::kCoupled;
  if (ctx.cfg.contains("mode")) {
    const json& m = ctx.cfg.at("mode");
    if (m == "coupled") {
      mode = TrackingMode::kCoupled;
    } else if (m == "fixed_marginal") {
      mode = TrackingMode::kFixedMarginal;
    } else {
      config_error("mode must be 'coupled' or 'fixed_marginal'");
    }
  }
  const json& outs = need(ctx.cfg, "outputs", "config");
  if (!outs.is_array() || outs.size() < 2) config_error("outputs must list two or more measures");
  std::vector<DiscreteMeasure> outputs;
  const Matrix nodes = grid.nodes();
  for (size_t k = 0; k < outs.size(); ++k) {
    const std::string what = "outputs[" + std::to_string(k) + "]";
    const Matrix proj = sys.C(static_cast<double>(k)) * nodes;
    if (is_gaussian(outs[k])) {
      const GaussianMeasure gm = gaussian_of(outs[k], what);
      require(gm.dim() == proj.rows(), ErrorKind::kDimensionMismatch,
              what + " does not match the output dimension");
      outputs.push_back(output_on_projections(gm, proj));
    } else {
      outputs.push_back(discrete_of(outs[k], what, ctx));
      require(outputs.back().dim() == proj.rows(), ErrorKind::kDimensionMismatch,
              what + " does not match the output dimension");
    }
  }
  const int samples = ctx.cfg.contains("interpolation_samples")
                          ? integer(ctx.cfg.at("interpolation_samples"), "interpolation_samples")
                          : 10;
  if (samples < 1) config_error("interpolation_samples must be positive");

  TrackingProblem problem{sys, outputs, grid, mode, ctx.integration, {}};
  const TrackingSolution sol = solve_tracking(problem);
  for (int k = 0; k <= sol.intervals(); ++k)
    ctx.write_csv("marginal_" + std::to_string(k) + ".csv", measure_table(sol.marginal(k)));
  for (int k = 0; k < sol.intervals(); ++k)
    ctx.write_csv("plan_" + std::to_string(k) + ".csv", plan_table(sol.plans[k], 1e-14));
  CsvTable interp;
  interp.header.push_back("t");
  for (int a = 0; a < sys.state_dim(); ++a) interp.header.push_back("x_" + std::to_string(a + 1));
  interp.header.push_back("weight");
  std::vector<Eigen::RowVectorXd> rows;
  for (int k = 0; k < sol.intervals(); ++k) {
    for (int s = (k == 0 ? 0 : 1); s <= samples; ++s) {
      const double t = k + static_cast<double>(s) / samples;
      const DiscreteMeasure mu = displacement_interpolate(sol, sys, t, ctx.integration);
      for (int i = 0; i < mu.size(); ++i) {
        Eigen::RowVectorXd r(sys.state_dim() + 2);
        r << t, mu.atom(i).transpose(), mu.weight(i);
        rows.push_back(r);
      }
    }
  }
  interp.rows.resize(static_cast<Eigen::Index>(rows.size()), sys.state_dim() + 2);
  for (size_t r = 0; r < rows.size(); ++r) interp.rows.row(r) = rows[r];
  ctx.write_csv("interpolant.csv", interp);
  ctx.summary["objective"] = sol.objective;
  ctx.summary["mode"] = mode == TrackingMode::kCoupled ? "coupled" : "fixed_marginal";
  ctx.summary["grid_nodes"] = grid.size();
}

void cmd_track_gaussian(Context& ctx) {
  check_keys(ctx.cfg, with_common({"system", "outputs", "samples_per_interval"}), "config");
  const LinearSystem sys = system_of(need(ctx.cfg, "system", "config"));
  const json& outs = need(ctx.cfg, "outputs", "config");
  if (!outs.is_array() || outs.size() < 2) config_error("outputs must list two or more Gaussians");
  std::vector<GaussianMeasure> outputs;
  for (size_t k = 0; k < outs.size(); ++k) {
    const std::string what = "outputs[" + std::to_string(k) + "]";
    if (!is_gaussian(outs[k])) config_error(what + " must be a Gaussian {mean, cov}");
    outputs.push_back(gaussian_of(outs[k], what));
    require(outputs.back().dim() == sys.C(static_cast<double>(k)).rows(),
            ErrorKind::kDimensionMismatch, what + " does not match the output dimension");
  }
  const int samples = ctx.cfg.contains("samples_per_interval")
                          ? integer(ctx.cfg.at("samples_per_interval"), "samples_per_interval")
                          : 200;
  if (samples < 1) config_error("samples_per_interval must be positive");
  const GaussianTrack track = track_gaussian(sys, outputs, samples, {}, ctx.integration);
  ctx.write_csv("track.csv", time_series_table(track.times, track.means, track.covariances));
  std::vector<double> marks;
  for (size_t k = 0; k < outputs.size(); ++k) marks.push_back(static_cast<double>(k));
  ctx.write("ribbon.svg", ribbon_svg(track.times, track.means, track.covariances, marks));
  json means = json::array(), covs = json::array();
  for (const Vector& m : track.state_means) means.push_back(vector_json(m));
  for (const Matrix& s : track.state_covariances) covs.push_back(matrix_json(s));
  ctx.summary["state_means"] = means;
  ctx.summary["state_covariances"] = covs;
  ctx.summary["covariance_objective"] = track.covariance_objective;
}

void cmd_observability(Context& ctx) {
  check_keys(ctx.cfg, with_common({"A", "C", "points", "time_grid"}), "config");
  const Matrix a = matrix_of(need(ctx.cfg, "A", "config"), "A");
  const Matrix c = matrix_of(need(ctx.cfg, "C", "config"), "C");
  const EnsembleObservabilityReport r = ensemble_observable_lti(a, c);
  json report;
  report["observable"] = r.observable;
  report["method"] = r.method;
  if (r.observable) {
    report["pivot_columns"] = r.pivot_columns;
  } else {
    report["witness"] = vector_json(r.witness);
    const auto pair = unobservable_counterexample(a, c);
    std::vector<double> times;
    for (int k = 0; k < 50; ++k) times.push_back(2.0 * k / 49);
    report["counterexample"] = {
        {"mu1", matrix_json(pair->first.atoms().transpose())},
        {"mu2", matrix_json(pair->second.atoms().transpose())},
        {"max_output_w1",
         output_discrepancy(a, c, pair->first, pair->second, times, ctx.integration)}};
  }
  if (ctx.cfg.contains("points")) {
    const Matrix points = matrix_of(ctx.cfg.at("points"), "points").transpose();
    std::vector<double> grid = default_kernel_time_grid();
    if (ctx.cfg.contains("time_grid")) {
      const Vector tg = vector_of(ctx.cfg.at("time_grid"), "time_grid");
      grid.assign(tg.data(), tg.data() + tg.size());
    }
    try {
      report["kernel_time"] = kernel_intersection_time(a, c, points, grid, ctx.integration);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNotFound) throw;
      report["kernel_time"] = nullptr;
    }
  }
  ctx.write("report.json", report.dump(2) + "\n");
  ctx.summary = report;
}

VectorField field_of(const json& j) {
  const std::string what = "field";
  if (!j.is_object() || !j.contains("type")) config_error("field needs a 'type'");
  const json& type = j.at("type");
  if (type == "constant") {
    check_keys(j, {"type", "value"}, what);
    return VectorField::constant(vector_of(need(j, "value", what), "field.value"));
  }
  if (type == "linear") {
    check_keys(j, {"type", "M", "b"}, what);
    const Matrix m = matrix_of(need(j, "M", what), "field.M");
    const Vector b = j.contains("b") ? vector_of(j.at("b"), "field.b") : Vector::Zero(m.rows());
    return VectorField::linear(m, b);
  }
  if (type == "grid") {
    check_keys(j, {"type", "min", "max", "nodes", "samples"}, what);
    const Vector lo = vector_of(need(j, "min", what), "field.min");
    const Vector hi = vector_of(need(j, "max", what), "field.max");
    const json& n = need(j, "nodes", what);
    if (!n.is_array() || n.size() != static_cast<size_t>(lo.size()) || hi.size() != lo.size())
      config_error("field grid bounds and node counts must agree");
    std::vector<Vector> axes;
    for (Eigen::Index a = 0; a < lo.size(); ++a) {
      const int count = integer(n[a], "field.nodes");
      if (count < 2 || !(lo(a) < hi(a))) config_error("field grid axes need >= 2 increasing nodes");
      axes.push_back(Vector::LinSpaced(count, lo(a), hi(a)));
    }
    return VectorField::interpolated(
        Grid(axes), matrix_of(need(j, "samples", what), "field.samples").transpose());
  }
  config_error("field.type must be 'constant', 'linear' or 'grid'");
}

ControlRegion region_of(const json& j) {
  const std::string what = "region";
  if (!j.is_object() || !j.contains("type")) config_error("region needs a 'type'");
  ControlRegion r = [&] {
    if (j.at("type") == "box") {
      check_keys(j, {"type", "lower", "upper", "transform"}, what);
      return ControlRegion::box(vector_of(need(j, "lower", what), "region.lower"),
                                vector_of(need(j, "upper", what), "region.upper"));
    }
    if (j.at("type") == "ball") {
      check_keys(j, {"type", "center", "radius", "transform"}, what);
      return ControlRegion::ball(vector_of(need(j, "center", what), "region.center"),
                                 number(need(j, "radius", what), "region.radius"));
    }
    config_error("region.type must be 'box' or 'ball'");
  }();
  if (j.contains("transform")) r = r.transformed(matrix_of(j.at("transform"), "region.transform"));
  return r;
}

void cmd_ctrl_measure(Context& ctx) {
  check_keys(ctx.cfg, with_common({"field", "region", "mu0", "mu1", "t_max", "steps"}), "config");
  const VectorField v = field_of(need(ctx.cfg, "field", "config"));
  const ControlRegion d = region_of(need(ctx.cfg, "region", "config"));
  const DiscreteMeasure mu0 = discrete_of(need(ctx.cfg, "mu0", "config"), "mu0", ctx);
  const DiscreteMeasure mu1 = discrete_of(need(ctx.cfg, "mu1", "config"), "mu1", ctx);
  require(v.dim() == d.dim() && mu0.dim() == v.dim() && mu1.dim() == v.dim(),
          ErrorKind::kDimensionMismatch, "field, region and measures must share a dimension");
  const double t_max = number(need(ctx.cfg, "t_max", "config"), "t_max");
  HittingOptions hopts;
  if (ctx.cfg.contains("steps")) hopts.steps = integer(ctx.cfg.at("steps"), "steps");
  const ReachCdf f = reach_cdf(v, d, mu0, FlowDirection::kForward, t_max, hopts);
  const ReachCdf h = reach_cdf(v, d, mu1, FlowDirection::kBackward, t_max, hopts);
  ctx.write_csv("cdf_forward.csv", cdf_table(f.times, f.cumulative));
  ctx.write_csv("cdf_backward.csv", cdf_table(h.times, h.cumulative));
  const ControllabilityMeasure s = controllability_measure(v, d, mu0, mu1, t_max, hopts);
  ctx.summary["S"] = s.s;
  if (s.paired) {
    ctx.summary["paired_M"] = *s.paired;
    ctx.summary["paired_agrees"] = s.paired_agrees;
  }
}

const std::map<std::string, std::function<void(Context&)>>& commands() {
  static const std::map<std::string, std::function<void(Context&)>> table = {
      {"gramian", cmd_gramian},
      {"min-energy", cmd_min_energy},
      {"wasserstein", cmd_wasserstein},
      {"track", cmd_track},
      {"track-gaussian", cmd_track_gaussian},
      {"observability", cmd_observability},
      {"ctrl-measure", cmd_ctrl_measure},
  };
  return table;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& msg, int code) {
  err << json{{"error", {{"kind", kind}, {"message", msg}, {"exit_code", code}}}}.dump() << "\n";
}

}  // namespace

int run(const std::string& config_json, std::ostream& out, std::ostream& err,
        const RunOptions& opts) {
  try {
    Context ctx;
    try {
      ctx.cfg = json::parse(config_json);
    } catch (const json::parse_error& e) {
      config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!ctx.cfg.is_object()) config_error("config must be a JSON object");
    const json& cmd = need(ctx.cfg, "command", "config");
    if (!cmd.is_string() || !commands().count(cmd.get<std::string>()))
      config_error("unknown command " + cmd.dump());
    if (ctx.cfg.contains("seed") && !ctx.cfg.at("seed").is_number_unsigned())
      config_error("seed must be a nonnegative integer");
    ctx.base_dir = opts.base_dir.empty() ? fs::current_path() : fs::path(opts.base_dir);
    std::string dir = opts.out_dir;
    if (dir.empty() && ctx.cfg.contains("out_dir")) {
      if (!ctx.cfg.at("out_dir").is_string()) config_error("out_dir must be a path string");
      dir = ctx.cfg.at("out_dir").get<std::string>();
    }
    ctx.out_dir = dir.empty() ? fs::path(".") : fs::path(dir);
    ctx.integration = integration_of(ctx.cfg);
    fs::create_directories(ctx.out_dir);
    const std::string name = cmd.get<std::string>();
    commands().at(name)(ctx);
    ctx.summary["command"] = name;
    ctx.summary["files"] = ctx.files;
    ctx.write("summary.json", ctx.summary.dump(2) + "\n");
    out << ctx.summary.dump(2) << "\n";
    return kExitOk;
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    report_error(err, std::string(to_string(e.kind())), e.what(), code);
    return code;
  } catch (const json::exception& e) {
    report_error(err, "ConfigError", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "ConfigError", e.what(), kExitValidation);
    return kExitValidation;
  }
}

int run_file(const std::string& path, std::ostream& out, std::ostream& err,
             const RunOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    report_error(err, "ConfigError", "cannot read config " + path, kExitValidation);
    return kExitValidation;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  RunOptions resolved = opts;
  if (resolved.base_dir.empty()) resolved.base_dir = fs::absolute(path).parent_path().string();
  return run(ss.str(), out, err, resolved);
}

}  // namespace ensot
