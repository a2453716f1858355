#include "qlcontrol/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <boost/crc.hpp>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double unit_coordinate(const SpatialDomain& dom, int node, int axis) {
    return (dom.coordinate(node, axis) - dom.bounds(axis).lo) / dom.bounds(axis).length();
}

ScalarField sine_profile(const Grid& grid, int mode) {
    const auto& dom = grid.domain();
    ScalarField v = ScalarField::Zero(grid.node_count());
    for (int node = 0; node < grid.node_count(); ++node) {
        if (dom.is_boundary(node)) continue;
        double x = std::sin(mode * std::numbers::pi * unit_coordinate(dom, node, 0));
        if (grid.dim() > 1) x *= std::sin(mode * std::numbers::pi * unit_coordinate(dom, node, 1));
        v[node] = x;
    }
    return v;
}

ScalarField hat_profile(const Grid& grid, double center, double width) {
    const auto& dom = grid.domain();
    ScalarField v = ScalarField::Zero(grid.node_count());
    for (int node = 0; node < grid.node_count(); ++node) {
        if (dom.is_boundary(node)) continue;
        double x = 1.0;
        for (int a = 0; a < grid.dim(); ++a) {
            x *= std::max(0.0, 1.0 - std::abs(unit_coordinate(dom, node, a) - center) / width);
        }
        v[node] = x;
    }
    return v;
}

NonlinearityModel base_model(const ExperimentConfig& c) {
    if (c.model_name == "cubic") return NonlinearityModel::make_cubic(c.model_beta, c.model_range);
    if (c.model_name == "porous") return NonlinearityModel::make_porous(c.model_m, c.model_eps, c.model_range);
    return NonlinearityModel::make_linear(c.model_c, c.model_range);
}

json field_stats(const Grid& grid, const ScalarField& v) {
    return {{"l2", lq_norm(grid, v, 2.0)}, {"sup", lq_norm(grid, v, kInf)}};
}

json membership_json(const BMembership& m) {
    json flags = json::array();
    for (bool b : m.pass_flags) flags.push_back(b);
    return {{"zeta_list", m.zeta_list}, {"zeta", m.zeta},          {"first_half", m.first_half},
            {"second_half", m.second_half}, {"values", m.values}, {"time_derivative", m.time_derivative},
            {"gradient_sup", m.gradient_sup}, {"pass_flags", flags}, {"pass", m.pass}};
}

const char* method_name(MinimizeMethod m) {
    switch (m) {
    case MinimizeMethod::ConjugateGradient:
        return "cg";
    case MinimizeMethod::SpaceTimeDirect:
        return "direct";
    default:
        return "auto";
    }
}

json weight_bounds(const WeightFields& w, const CarlemanParameters& p) {
    bool ok = true;
    double alpha_min = kInf, alpha_max = -kInf, phi_min = kInf, phi_max = -kInf;
    for (int k = 0; k < w.layers(); ++k) {
        for (Eigen::Index i = 0; i < w.alpha[k].size(); ++i) {
            const double a = w.alpha[k][i], f = w.phi[k][i];
            ok = ok && w.alpha0[k] <= a && a <= w.alpha0[k] * (1.0 - p.eta);
            ok = ok && w.phi0[k] <= f && f <= w.phi0[k] / p.eta;
            alpha_min = std::min(alpha_min, a);
            alpha_max = std::max(alpha_max, a);
            phi_min = std::min(phi_min, f);
            phi_max = std::max(phi_max, f);
        }
    }
    return {{"eta", p.eta},         {"gamma", p.gamma},     {"alpha_min", alpha_min}, {"alpha_max", alpha_max},
            {"phi_min", phi_min}, {"phi_max", phi_max}, {"max_exponent", -2.0 * p.s * alpha_min},
            {"bounds_hold", ok}};
}

json estimates_json(const EstimateReport& r) {
    return {{"q", r.q},
            {"control_norm", r.control_norm},
            {"time_weighted_norm", r.time_weighted_norm},
            {"terminal_weighted_norm", r.terminal_weighted_norm},
            {"sup_deviation", r.sup_deviation},
            {"data_l2", r.data_l2},
            {"data_sup", r.data_sup},
            {"driver", r.driver}};
}

json carleman_json(const CarlemanSummary& s) {
    int degenerate = 0;
    for (const auto& r : s.reports) degenerate += r.degenerate ? 1 : 0;
    return {{"samples", s.reports.size()}, {"max_C", s.max_C}, {"zeta", s.zeta},
            {"energy_violation", s.energy_violation}, {"degenerate", degenerate}};
}

json observability_json(const ObservabilitySummary& s) {
    return {{"samples", s.reports.size()},
            {"max_constant_initial", s.max_constant_initial},
            {"max_constant_first_half", s.max_constant_first_half},
            {"zeta", s.zeta},
            {"energy_violation", s.energy_violation}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    fn(out);
}

json config_echo(const ExperimentConfig& c) {
    json echo = json::object();
    for (const auto& [sec, body] : c.tree) {
        for (const auto& [key, value] : body) echo[sec + "." + key] = value.data();
    }
    return echo;
}

SpaceTimeField nodal_coefficient(const NonlinearityModel& model, const SpaceTimeField& z) {
    SpaceTimeField b = z;
    for (auto& layer : b.layers) layer = layer.unaryExpr([&](double v) { return model.da(v); });
    return b;
}

SpaceTimeField constant_field(const Grid& grid, const TimeGrid& time, double value) {
    SpaceTimeField b = SpaceTimeField::zeros(grid, time);
    for (auto& layer : b.layers) layer.setConstant(value);
    return b;
}

/// Writes the report and returns the outcome; the report is the only file the checksum covers.
RunOutcome finish(json report, const fs::path& directory, int exit_code, const std::string& status,
                  const std::string& message) {
    report["exit_code"] = exit_code;
    report["status"] = status;
    report["message"] = message;
    RunOutcome o;
    o.exit_code = exit_code;
    o.status = status;
    o.message = message;
    o.directory = directory;
    const std::string text = report.dump(2) + "\n";
    o.checksum = report_checksum(text);
    write_text(directory / "report.json", text);
    write_text(directory / "report.crc32", o.checksum + "\n");
    o.report = std::move(report);
    return o;
}

void control_pipeline(const ExperimentConfig& c, const Instance& inst, const fs::path& dir, json& report,
                      int& exit_code, std::string& status, std::string& message) {
    const Grid& grid = inst.grid;
    ControlSetup setup;
    setup.grid = &grid;
    setup.region = inst.region;
    setup.psi = inst.psi;
    setup.lambda = c.lambda;
    setup.s = c.s;
    setup.proof_regime = c.proof_regime;

    PicardOptions opts;
    opts.max_outer = c.max_outer;
    opts.tol_sup = c.tol_sup;
    opts.minimize.method = c.method;
    opts.minimize.tolerance = c.cg_tolerance;
    opts.minimize.max_iterations = c.cg_max_iterations;
    opts.newton.tolerance = c.newton_tolerance;

    const QiLadder ladder = qi_ladder(std::max(2, grid.dim()), c.q_final);
    const TwoPhasePlan plan =
        two_phase_run(inst.model, inst.y0, inst.f, inst.y_s, setup, inst.time, c.T0_fraction, ladder, c.zetas, opts);
    const PicardState& st = plan.control_phase;

    const double data_l2 = lq_norm(grid, inst.y0 - inst.y_s, 2.0);
    const double rel_terminal = data_l2 > 0.0 ? plan.resimulated_terminal_error / data_l2 : 0.0;

    json trace = json::array();
    for (const auto& row : st.trace) {
        trace.push_back({{"iteration", row.iteration},
                         {"sup_distance", row.sup_distance},
                         {"functional", row.functional},
                         {"terminal_error", row.terminal_error},
                         {"membership", row.membership}});
    }
    report["weights"] = weight_bounds(st.weights, st.params);
    report["two_phase"] = {{"T0", plan.T0}, {"T0_layer", plan.T0_layer}, {"control_horizon", st.time.horizon},
                           {"control_steps", st.time.steps}};
    report["fixed_point"] = {{"iterations", st.iteration},
                             {"converged", st.converged},
                             {"sup_distance", st.sup_distance},
                             {"terminal_error", plan.terminal_error},
                             {"resimulation_distance", st.resimulation_distance},
                             {"resimulated_terminal_error", plan.resimulated_terminal_error},
                             {"relative_terminal_error", rel_terminal},
                             {"ladder", ladder.q_values},
                             {"trace", trace},
                             {"membership", membership_json(st.membership)}};
    const OptimalityState& opt = st.optimality;
    report["optimality"] = {{"functional", opt.functional_value},
                            {"control_cost", opt.control_cost},
                            {"tracking_cost", opt.tracking_cost},
                            {"gradient_norm", opt.gradient_norm},
                            {"relative_gradient_norm", opt.relative_gradient_norm},
                            {"pontryagin_residual", opt.pontryagin_residual},
                            {"iterations", opt.cg_iterations},
                            {"max_iterations_hit", opt.max_iterations_hit},
                            {"method", method_name(opt.method)},
                            {"duality_audit",
                             {{"cost", opt.audit.cost},
                              {"jump_term", opt.audit.jump_term},
                              {"defect_term", opt.audit.defect_term},
                              {"relative_gap", opt.audit.relative_gap}}}};
    report["energy_audit"] = {{"max_violation", st.energy.max_violation},
                              {"worst_layer", st.energy.worst_layer},
                              {"pass", st.energy.pass}};
    report["estimates"] =
        estimates_json(theorem_estimates(grid, st.y, st.u, inst.y_s, st.weights, st.params, c.q_final));

    // Decay of |y(t_k) - y_s|_2 over the last tenth of the horizon, on the re-simulated trajectory.
    const Trajectory resim = solve_quasilinear_controlled(inst.model, &plan.u, inst.y0, inst.f, inst.time, grid,
                                                          inst.region.indicator, opts.newton);
    const int K = inst.time.steps;
    const int tail_start = K - std::max(2, K / 10);
    bool monotone = true;
    double prev = kInf;
    json tail = json::array();
    for (int k = tail_start; k <= K; ++k) {
        const double d = lq_norm(grid, resim.state[k] - inst.y_s, 2.0);
        tail.push_back(d);
        // Increases below the accepted terminal error are round-off, not growth.
        monotone = monotone && d <= prev + c.terminal_tolerance * data_l2;
        prev = d;
    }
    report["decay"] = {{"first_layer", tail_start}, {"norms", tail}, {"slack", c.terminal_tolerance * data_l2}, {"monotone", monotone}};

    if (c.carleman_samples > 0 || c.observability_samples > 0) {
        SampleOptions so;
        so.seed = c.seed;
        const SpaceTimeField ones = constant_field(grid, st.time, 1.0);
        const SpaceTimeField bz = nodal_coefficient(inst.model, st.z);
        json d;
        if (c.carleman_samples > 0) {
            so.samples = c.carleman_samples;
            d["carleman_unit"] = carleman_json(carleman_check(grid, ones, st.weights, st.params, inst.region, so));
            d["carleman_iterate"] = carleman_json(carleman_check(grid, bz, st.weights, st.params, inst.region, so));
        }
        if (c.observability_samples > 0) {
            so.samples = c.observability_samples;
            d["observability_unit"] =
                observability_json(observability_check(grid, ones, st.weights, st.params, inst.region, so));
            d["observability_iterate"] =
                observability_json(observability_check(grid, bz, st.weights, st.params, inst.region, so));
        }
        report["diagnostics"] = d;
    }

    if (c.write_trajectories) {
        write_with(dir / "y.bin", [&](std::ostream& o) { write_binary(o, grid, plan.y); }, true);
        write_with(dir / "u.bin", [&](std::ostream& o) { write_binary(o, grid, plan.u); }, true);
        write_with(dir / "p.bin", [&](std::ostream& o) { write_binary(o, grid, st.p.p); }, true);
        write_with(dir / "uncontrolled.bin", [&](std::ostream& o) { write_binary(o, grid, st.Y); }, true);
        write_with(dir / "y.csv", [&](std::ostream& o) { write_spacetime_csv(o, grid, plan.y); });
        write_with(dir / "u.csv", [&](std::ostream& o) { write_spacetime_csv(o, grid, plan.u); });
        write_with(dir / "p.csv", [&](std::ostream& o) { write_spacetime_csv(o, grid, st.p.p); });
        write_with(dir / "weights.csv", [&](std::ostream& o) { write_weights_csv(o, grid.domain(), st.weights); });
    }
    write_with(dir / "trace.csv", [&](std::ostream& o) { write_trace_csv(o, st); });
    write_with(dir / "history.csv", [&](std::ostream& o) {
        o << "iteration,functional,gradient_norm\n" << std::setprecision(17);
        for (const auto& h : opt.history) o << h.iteration << ',' << h.functional << ',' << h.gradient_norm << '\n';
    });

    json manifest;
    manifest["dims"] = grid.dim();
    for (int a = 0; a < grid.dim(); ++a) {
        manifest["axes"].push_back({{"lo", grid.domain().bounds(a).lo},
                                    {"hi", grid.domain().bounds(a).hi},
                                    {"nodes", grid.domain().nodes(a)}});
    }
    manifest["horizon"] = inst.time.horizon;
    manifest["steps"] = inst.time.steps;
    manifest["T0"] = plan.T0;
    manifest["control_horizon"] = st.time.horizon;
    manifest["model"] = {{"name", inst.model.name}, {"linear", inst.model.linear}};
    manifest["params"] = {{"lambda", st.params.lambda}, {"s", st.params.s}, {"eta", st.params.eta},
                          {"gamma", st.params.gamma}};
    manifest["files"] = {{"y.bin", "state on [0, T]"},
                         {"u.bin", "control on [0, T], zero before T0"},
                         {"p.bin", "normalized adjoint on [T0, T]"},
                         {"uncontrolled.bin", "uncontrolled state on [T0, T]"}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    if (!st.converged) {
        exit_code = kExitSolver;
        status = "no_convergence";
        message = "fixed-point loop stopped at sup distance " + std::to_string(st.sup_distance);
    } else if (!(rel_terminal <= c.terminal_tolerance)) {
        exit_code = kExitDiagnostic;
        status = "terminal_tolerance";
        message = "relative terminal error above tolerance";
    } else if (!monotone) {
        exit_code = kExitDiagnostic;
        status = "decay";
        message = "distance to the stationary state increases near T";
    }
}

void smoothing_pipeline(const ExperimentConfig& c, const Instance& inst, json& report) {
    SmoothingOptions so;
    so.horizon = c.smoothing_horizon;
    so.steps = c.smoothing_steps;
    so.q = c.q_final;
    so.height = c.smoothing_height;
    so.center = c.initial_center;
    const SmoothingResult r = smoothing_scan(inst.model, inst.grid, inst.y_s, inst.f, c.smoothing_widths, so);
    json pts = json::array();
    for (const auto& p : r.points) {
        pts.push_back({{"parameter", p.parameter},
                       {"data_norm", p.data_norm},
                       {"measure", p.measure},
                       {"stationarity", p.stationarity}});
    }
    report["smoothing"] = {{"q", so.q},
                           {"expected_slope", 2.0 / so.q},
                           {"points", pts},
                           {"slope", r.fit.slope},
                           {"stationarity_slope", r.stationarity_fit.slope}};
}

void diagnostics_pipeline(const ExperimentConfig& c, const Instance& inst, json& report) {
    const auto params = make_carleman_parameters(c.lambda, c.s, inst.time.horizon, inst.psi, c.proof_regime);
    const WeightFields w = evaluate_weights(inst.psi, params, inst.time.midpoints());
    const SpaceTimeField ones = constant_field(inst.grid, inst.time, 1.0);
    SampleOptions so;
    so.seed = c.seed;
    so.samples = std::max(1, c.carleman_samples);
    report["weights"] = weight_bounds(w, params);
    report["carleman_unit"] = carleman_json(carleman_check(inst.grid, ones, w, params, inst.region, so));
    so.samples = std::max(1, c.observability_samples);
    report["observability_unit"] = observability_json(observability_check(inst.grid, ones, w, params, inst.region, so));
}

json base_report(const ExperimentConfig& c) {
    json report;
    report["name"] = c.name;
    report["pipeline"] = c.pipeline;
    report["seed"] = c.seed;
    report["config"] = config_echo(c);
    return report;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ConfigInvalid:
        return kExitConfig;
    case ErrorKind::DiagnosticViolation:
        return kExitDiagnostic;
    default:
        return kExitSolver;
    }
}

std::string report_checksum(const std::string& text) {
    boost::crc_32_type crc;
    crc.process_bytes(text.data(), text.size());
    std::ostringstream out;
    out << std::hex << std::setw(8) << std::setfill('0') << crc.checksum();
    return out.str();
}

Instance build_instance(const ExperimentConfig& c) {
    SpatialDomain dom = c.bounds.size() == 1
                            ? SpatialDomain::interval(c.bounds[0], c.nodes[0])
                            : SpatialDomain::rectangle(c.bounds[0], c.bounds[1], c.nodes[0], c.nodes[1]);
    ControlRegion region = make_control_region(dom, c.omega, c.omega0);
    WeightFunctionPsi psi = construct_psi(dom, region);
    Grid grid(std::move(dom));

    NonlinearityModel model = base_model(c);
    ScalarField y_s = c.stationary_profile == "sine" ? ScalarField(c.stationary_amplitude * sine_profile(grid, 1))
                                                     : ScalarField(ScalarField::Zero(grid.node_count()));
    ScalarField shape;
    if (c.initial_family == "sine") {
        shape = sine_profile(grid, c.initial_mode);
    } else if (c.initial_family == "bump") {
        shape = hat_profile(grid, c.initial_center, c.initial_width);
    } else {
        shape = random_smooth_field(grid, c.seed);
    }
    const double norm = lq_norm(grid, shape, 2.0);
    if (!(norm > 0.0)) throw Error(ErrorKind::ConfigInvalid, "initial: profile vanishes on this grid");
    ScalarField y0 = y_s + (c.initial_amplitude / norm) * shape;

    if (c.globalize && !model.linear) {
        const double lo = std::min(y_s.minCoeff(), y0.minCoeff()) - c.globalize_margin;
        const double hi = std::max(y_s.maxCoeff(), y0.maxCoeff()) + c.globalize_margin;
        if (lo < c.model_range.lo || hi > c.model_range.hi) {
            throw Error(ErrorKind::ConfigInvalid, "model.range: data leave the model range");
        }
        model = globalize(model, {lo, hi});
    }
    ScalarField f = manufactured_forcing(model, y_s, grid);
    return Instance{std::move(grid), std::move(region), std::move(psi), std::move(model),
                    std::move(y_s),  std::move(f),      std::move(y0),  TimeGrid::make(c.horizon, c.steps)};
}

RunOutcome run_experiment(const ExperimentConfig& c, const fs::path& directory) {
    fs::create_directories(directory);
    json report = base_report(c);
    int exit_code = kExitOk;
    std::string status = "ok", message;
    try {
        const Instance inst = build_instance(c);
        const PsiReport pr = verify_psi(inst.grid.domain(), inst.psi, inst.region);
        report["psi"] = {{"description", inst.psi.description},
                         {"sup_norm", inst.psi.sup_norm},
                         {"min_interior_value", pr.min_interior_value},
                         {"min_grad_outside_omega0", pr.min_grad_outside_omega0},
                         {"max_boundary_abs", pr.max_boundary_abs},
                         {"pass", pr.pass}};
        const StationaryState rt = solve_stationary(inst.model, inst.f, inst.grid);
        report["stationary"] = {{"profile", c.stationary_profile},
                                {"model", inst.model.name},
                                {"residual", rt.residual_norm},
                                {"roundtrip_distance", lq_norm(inst.grid, rt.y_s - inst.y_s, kInf)},
                                {"y_s", field_stats(inst.grid, inst.y_s)}};
        report["data"] = field_stats(inst.grid, inst.y0 - inst.y_s);
        if (c.write_trajectories) {
            write_with(directory / "stationary.csv", [&](std::ostream& o) { write_field_csv(o, inst.grid, inst.y_s); });
        }
        if (c.pipeline == "control") {
            control_pipeline(c, inst, directory, report, exit_code, status, message);
        } else if (c.pipeline == "smoothing") {
            smoothing_pipeline(c, inst, report);
        } else {
            diagnostics_pipeline(c, inst, report);
        }
    } catch (const Error& e) {
        exit_code = exit_code_for(e.kind());
        status = to_string(e.kind());
        message = e.what();
    } catch (const std::exception& e) {
        exit_code = kExitSolver;
        status = "failure";
        message = e.what();
    }
    return finish(std::move(report), directory, exit_code, status, message);
}

RunOutcome run_experiment(const std::string& config_path) {
    try {
        const ExperimentConfig c = load_config(config_path);
        return run_experiment(c, c.output_dir);
    } catch (const Error& e) {
        RunOutcome o;
        o.exit_code = exit_code_for(e.kind());
        o.status = to_string(e.kind());
        o.message = e.what();
        return o;
    }
}

SweepOutcome run_sweep(const ExperimentConfig& config, const std::string& axis, const std::vector<double>& values,
                       const fs::path& directory, int threads) {
    if (values.empty()) throw Error(ErrorKind::ConfigInvalid, "sweep.values: no sweep values");
    std::vector<ExperimentConfig> configs;
    for (double v : values) {
        std::ostringstream text;
        text << std::setprecision(17) << v;
        configs.push_back(with_override(config, axis, text.str()));
    }
    fs::create_directories(directory);
    SweepOutcome out;
    out.points.resize(values.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            out.points[i] = run_experiment(configs[i], directory / ("point_" + std::to_string(i)));
        }
    };
    std::vector<std::thread> pool;
    const int n = std::clamp(threads, 1, static_cast<int>(values.size()));
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json pts = json::array();
    std::vector<double> data, control, terminal, sup;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const RunOutcome& o = out.points[i];
        out.exit_code = std::max(out.exit_code, o.exit_code);
        json p = {{"value", values[i]}, {"exit_code", o.exit_code}, {"status", o.status}, {"checksum", o.checksum}};
        if (o.report.contains("estimates")) {
            const json& e = o.report["estimates"];
            p["estimates"] = e;
            data.push_back(e["data_l2"].get<double>());
            control.push_back(e["control_norm"].get<double>());
            terminal.push_back(e["terminal_weighted_norm"].get<double>());
            sup.push_back(e["sup_deviation"].get<double>());
        }
        if (o.report.contains("fixed_point")) {
            p["relative_terminal_error"] = o.report["fixed_point"]["relative_terminal_error"];
        }
        pts.push_back(p);
    }
    out.summary = {{"axis", axis}, {"points", pts}, {"exit_code", out.exit_code}};
    if (data.size() >= 3) {
        const auto slope = [&](const std::vector<double>& y) -> json {
            try {
                return fit_power_law(data, y).slope;
            } catch (const Error&) {
                return nullptr;
            }
        };
        out.summary["fits"] = {{"control_norm", slope(control)},
                               {"terminal_weighted_norm", slope(terminal)},
                               {"sup_deviation", slope(sup)}};
    }
    write_text(directory / "sweep.json", out.summary.dump(2) + "\n");
    return out;
}

RunOutcome run_check(const std::string& name, const ExperimentConfig& c, const fs::path& directory) {
    fs::create_directories(directory);
    json report = base_report(c);
    report["check"] = name;
    int exit_code = kExitOk;
    std::string status = "ok", message;
    try {
        const Instance inst = build_instance(c);
        const Grid& grid = inst.grid;
        const auto params = make_carleman_parameters(c.lambda, c.s, inst.time.horizon, inst.psi, c.proof_regime);
        const WeightFields w = evaluate_weights(inst.psi, params, inst.time.midpoints());
        std::mt19937_64 rng(c.seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const auto random_b = [&](std::uint64_t seed) {
            SpaceTimeField b = SpaceTimeField::zeros(grid, inst.time);
            const ScalarField b1 = random_smooth_field(grid, seed), b2 = random_smooth_field(grid, seed + 1);
            for (int k = 0; k <= inst.time.steps; ++k) {
                const double t = inst.time.time(k) / inst.time.horizon;
                b[k] = (1.5 + 0.25 * std::cos(3.0 * t) * b1.array().tanh() + 0.25 * b2.array().tanh() * t).matrix();
            }
            return b;
        };
        const auto random_source = [&](std::uint64_t seed) {
            SpaceTimeField g = SpaceTimeField::zeros(grid, inst.time);
            const ScalarField g1 = random_smooth_field(grid, seed), g2 = random_smooth_field(grid, seed + 1);
            for (int k = 1; k <= inst.time.steps; ++k) {
                g[k] = g1 + std::sin(std::numbers::pi * inst.time.time(k) / inst.time.horizon) * g2;
            }
            return g;
        };

        if (name == "duality" || name == "energy") {
            const int instances = 50;
            double worst = 0.0;
            EnergyAudit energy;
            for (int i = 0; i < instances; ++i) {
                const std::uint64_t base = c.seed * 1000 + 10 * static_cast<std::uint64_t>(i);
                const LinearStepper stepper(grid, inst.time, coefficients_from_nodal(grid, random_b(base)));
                SpaceTimeField u = random_source(base + 2);
                for (auto& layer : u.layers) layer = layer.cwiseProduct(inst.region.indicator);
                const SpaceTimeField g = random_source(base + 4);
                const ScalarField y0 = random_smooth_field(grid, base + 6);
                const ScalarField pT = random_smooth_field(grid, base + 7);
                const Trajectory y = solve_linearized(stepper, u, y0, ScalarField::Zero(grid.node_count()),
                                                      inst.region.indicator);
                const AdjointTrajectory p = solve_adjoint(stepper, g, pT);
                worst = std::max(worst, std::abs(duality_defect(grid, y.state, u, p.p, g)));
                const EnergyAudit a = energy_audit(stepper, p.p, &g);
                if (energy.worst_layer < 0 || a.max_violation > energy.max_violation) energy = a;
            }
            report["duality"] = {{"instances", instances}, {"max_abs_defect", worst}, {"pass", worst <= 1e-10}};
            report["energy_audit"] = {{"max_violation", energy.max_violation},
                                      {"worst_layer", energy.worst_layer},
                                      {"pass", energy.pass}};
            const bool ok = name == "duality" ? worst <= 1e-10 : energy.pass;
            if (!ok) {
                exit_code = kExitDiagnostic;
                status = "violation";
                message = name + " check failed";
            }
        } else if (name == "weights") {
            bool all = true;
            json rows = json::array();
            for (int i = 0; i < 20; ++i) {
                const double lambda = 0.5 + 4.5 * unit(rng);
                const auto p = make_carleman_parameters(lambda, c.s, inst.time.horizon, inst.psi);
                const json b = weight_bounds(evaluate_weights(inst.psi, p, inst.time.midpoints()), p);
                all = all && b["bounds_hold"].get<bool>();
                rows.push_back({{"lambda", lambda}, {"bounds_hold", b["bounds_hold"]}});
            }
            report["weights"] = {{"configurations", rows}, {"pass", all}};
            if (!all) {
                exit_code = kExitDiagnostic;
                status = "violation";
                message = "weight bounds violated";
            }
            if (c.write_trajectories) {
                write_with(directory / "weights.csv", [&](std::ostream& o) { write_weights_csv(o, grid.domain(), w); });
            }
        } else if (name == "psi") {
            const PsiReport pr = verify_psi(grid.domain(), inst.psi, inst.region);
            report["psi"] = {{"description", inst.psi.description},
                             {"sup_norm", inst.psi.sup_norm},
                             {"min_interior_value", pr.min_interior_value},
                             {"min_grad_outside_omega0", pr.min_grad_outside_omega0},
                             {"max_boundary_abs", pr.max_boundary_abs},
                             {"pass", pr.pass}};
            if (!pr.pass) {
                exit_code = kExitDiagnostic;
                status = "violation";
                message = "psi conditions violated";
            }
        } else if (name == "carleman") {
            SampleOptions so;
            so.seed = c.seed;
            so.samples = c.carleman_samples > 0 ? c.carleman_samples : 100;
            report["carleman_unit"] = carleman_json(
                carleman_check(grid, constant_field(grid, inst.time, 1.0), w, params, inst.region, so));
        } else if (name == "observability") {
            SampleOptions so;
            so.seed = c.seed;
            so.samples = c.observability_samples > 0 ? c.observability_samples : 100;
            report["observability_unit"] = observability_json(
                observability_check(grid, constant_field(grid, inst.time, 1.0), w, params, inst.region, so));
        } else if (name == "smoothing") {
            smoothing_pipeline(c, inst, report);
        } else {
            throw Error(ErrorKind::ConfigInvalid,
                        "check: unknown diagnostic '" + name +
                            "' (expected duality, energy, weights, psi, carleman, observability, smoothing)");
        }
    } catch (const Error& e) {
        exit_code = exit_code_for(e.kind());
        status = to_string(e.kind());
        message = e.what();
    } catch (const std::exception& e) {
        exit_code = kExitSolver;
        status = "failure";
        message = e.what();
    }
    return finish(std::move(report), directory, exit_code, status, message);
}

ExperimentConfig default_config() {
    std::istringstream in(R"([run]
name = linear_1d_default
[domain]
kind = interval
x_lo = 0
x_hi = 1
nx = 129
[region]
omega_x_lo = 0.3
omega_x_hi = 0.7
omega0_x_lo = 0.4
omega0_x_hi = 0.6
[model]
name = linear
[time]
horizon = 1
steps = 256
[carleman]
lambda = 1
s = 0.004
)");
    return parse_config(in);
}

}  // namespace qlc
