// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "qlcontrol/diagnostics.hpp"
#include "qlcontrol/error.hpp"
#include "qlcontrol/experiment.hpp"

using namespace qlc;

namespace {

constexpr double pi = std::numbers::pi;

struct Verdict {
    bool pass = true;
    std::vector<std::string> details;

    template <typename... Args>
    static std::string format(const char* fmt, Args... args) {
        if constexpr (sizeof...(Args) == 0) {
            return fmt;
        } else {
            char buf[512];
            std::snprintf(buf, sizeof buf, fmt, args...);
            return buf;
        }
    }
    void note(const char* fmt, auto... args) { details.push_back(format(fmt, args...)); }
    // records a sub-check and folds it into the verdict
    void expect(bool ok, const char* fmt, auto... args) {
        details.push_back((ok ? "ok   " : "FAIL ") + format(fmt, args...));
        pass = pass && ok;
    }
};

Grid unit_interval(int nodes) { return Grid(SpatialDomain::interval({0.0, 1.0}, nodes)); }

ScalarField mask_of(const Grid& g, double lo, double hi) {
    return g.sample([lo, hi](double x, double) { return lo <= x && x <= hi ? 1.0 : 0.0; });
}

SpaceTimeField constant_field(const Grid& g, const TimeGrid& tg, double v) {
    SpaceTimeField b = SpaceTimeField::zeros(g, tg);
    for (auto& layer : b.layers) layer.setConstant(v);
    return b;
}

SpaceTimeField random_coefficient(const Grid& g, const TimeGrid& tg, std::uint64_t seed) {
    SpaceTimeField b = SpaceTimeField::zeros(g, tg);
    const ScalarField r1 = random_smooth_field(g, seed), r2 = random_smooth_field(g, seed + 1);
    for (int k = 0; k <= tg.steps; ++k) {
        const double t = tg.time(k) / tg.horizon;
        b[k] = (1.2 + 0.5 * (r1.array() * std::cos(2.0 * t)).tanh() + 0.3 * (r2.array() * t).tanh()).matrix();
    }
    return b;
}

SpaceTimeField random_source(const Grid& g, const TimeGrid& tg, std::uint64_t seed) {
    SpaceTimeField s = SpaceTimeField::zeros(g, tg);
    const ScalarField r1 = random_smooth_field(g, seed), r2 = random_smooth_field(g, seed + 1);
    for (int k = 1; k <= tg.steps; ++k) s[k] = r1 + std::sin(5.0 * tg.time(k)) * r2;
    return s;
}

double field_dot(const Grid& g, const SpaceTimeField& a, const SpaceTimeField& b) {
    double s = 0.0;
    for (int k = 1; k <= a.steps(); ++k) s += inner(g, a[k], b[k]);
    return a.time.dt() * s;
}

/// Everything needed to set up a 1D control problem on the unit interval with omega = (0.3, 0.7).
struct Bench {
    SpatialDomain domain;
    Grid grid;
    ControlSetup setup;

    explicit Bench(int nodes, double s = 0.005)
        : domain(SpatialDomain::interval({0.0, 1.0}, nodes)), grid(domain) {
        setup.grid = &grid;
        setup.region = make_control_region(domain, {{0.3, 0.7}}, {{0.4, 0.6}});
        setup.psi = construct_psi(domain, setup.region);
        setup.lambda = 1.0;
        setup.s = s;
    }
    Bench(const Bench&) = delete;

    ScalarField sine(double amp, int mode = 1) const {
        return grid.sample([amp, mode](double x, double) { return amp * std::sin(mode * pi * x); });
    }
    ScalarField random_data(const ScalarField& y_s, double size, std::uint64_t seed) const {
        const ScalarField shape = random_smooth_field(grid, seed);
        return y_s + size * shape / lq_norm(grid, shape, 2.0);
    }
};

// ---------------------------------------------------------------------------------------------

Verdict duality() {
    Verdict v;
    const Grid g = unit_interval(32);
    const TimeGrid tg = TimeGrid::make(1.0, 128);
    const ScalarField mask = mask_of(g, 0.3, 0.7);
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const std::uint64_t seed = 1000 + 100 * i;
        const LinearStepper stepper(g, tg, coefficients_from_nodal(g, random_coefficient(g, tg, seed)));
        const SpaceTimeField u = random_source(g, tg, seed + 10);
        const SpaceTimeField gsrc = random_source(g, tg, seed + 20);
        const ScalarField y0 = random_smooth_field(g, seed + 30);
        const ScalarField pT = random_smooth_field(g, seed + 31);
        const auto y = solve_linearized(stepper, u, y0, ScalarField::Zero(g.node_count()), mask);
        SpaceTimeField src = u;
        for (auto& layer : src.layers) layer = layer.cwiseProduct(mask);
        const auto p = solve_adjoint(stepper, gsrc, pT);
        worst = std::max(worst, std::abs(duality_defect(g, y.state, src, p.p, gsrc)));
    }
    v.expect(worst <= 1e-10, "50 instances on 32 x 128, max |defect| = %.3e (limit 1e-10)", worst);
    return v;
}

Verdict gradient() {
    Verdict v;
    const auto model = globalize(NonlinearityModel::make_cubic(1.0), {-1.0, 1.0});
    for (const auto& [nodes, steps] : {std::pair{17, 16}, std::pair{33, 32}, std::pair{65, 64}}) {
        const Bench b(nodes, 0.01);
        const TimeGrid tg = TimeGrid::make(1.0, steps);
        ControlProblem cp;
        cp.grid = &b.grid;
        cp.model = model;
        cp.time = tg;
        cp.params = make_carleman_parameters(1.0, 0.01, 1.0, b.setup.psi);
        cp.weights = evaluate_weights(b.setup.psi, cp.params, tg.midpoints());
        cp.region = b.setup.region;
        const ScalarField y_s = b.sine(0.1);
        cp.f = manufactured_forcing(model, y_s, b.grid);
        cp.y0 = b.random_data(y_s, 0.05, 5);
        cp.z = solve_uncontrolled(model, cp.y0, cp.f, tg, b.grid).state;
        cp.target = TrackingTarget::make(cp.z, y_s);
        const ReducedFunctional rf(cp);

        std::mt19937_64 rng(nodes);
        std::normal_distribution<double> normal;
        auto random_control = [&](double scale) {
            SpaceTimeField u = SpaceTimeField::zeros(b.grid, tg);
            const ScalarField a = random_smooth_field(b.grid, rng()), c = random_smooth_field(b.grid, rng());
            const double c1 = normal(rng), c2 = normal(rng);
            for (int k = 1; k <= steps; ++k) {
                const double t = tg.midpoint(k);
                u[k] = scale * (c1 * std::sin(pi * t) * a + c2 * std::sin(2 * pi * t) * c)
                                   .cwiseProduct(b.setup.region.indicator);
            }
            return u;
        };
        const SpaceTimeField u = random_control(0.1);
        const SpaceTimeField grad = rf.gradient(u);
        double worst = 0.0;
        for (int dir = 0; dir < 20; ++dir) {
            const SpaceTimeField d = random_control(1.0);
            const double h = 1e-5;
            SpaceTimeField up = u, um = u;
            for (int k = 0; k <= steps; ++k) {
                up[k] += h * d[k];
                um[k] -= h * d[k];
            }
            const double fd = (rf.value(up) - rf.value(um)) / (2 * h);
            const double an = field_dot(b.grid, grad, d);
            worst = std::max(worst, std::abs(fd - an) / std::abs(an));
        }
        v.expect(worst <= 1e-5, "grid %d x %d, 20 directions, max relative error %.3e", nodes, steps, worst);
    }
    return v;
}

/// Order from the last two of a sequence of errors on grids refined by 2.
double observed_order(const std::vector<double>& err) {
    const std::size_t n = err.size();
    return std::log2(err[n - 2] / err[n - 1]);
}

Verdict manufactured() {
    Verdict v;
    const auto cubic = NonlinearityModel::make_cubic(1.0);
    {
        const Grid g = unit_interval(129);
        const ScalarField y_s = g.sample([](double x, double) { return 0.1 * std::sin(pi * x); });
        const ScalarField f = manufactured_forcing(cubic, y_s, g);
        const auto st = solve_stationary(cubic, f, g);
        const double err = (st.y_s - y_s).cwiseAbs().maxCoeff();
        v.expect(err <= 1e-10, "stationary round trip, cubic, max error %.3e", err);
        const auto tr = solve_uncontrolled(cubic, y_s, f, TimeGrid::make(1.0, 64), g);
        double drift = 0.0;
        for (const auto& layer : tr.state.layers) drift = std::max(drift, (layer - y_s).cwiseAbs().maxCoeff());
        v.expect(drift <= 1e-10, "stationary state under time stepping, max drift %.3e", drift);
    }
    {
        const Grid g = unit_interval(129);
        const TimeGrid tg = TimeGrid::make(0.1, 512);
        const ScalarField mode = g.sample([](double x, double) { return std::sin(pi * x); });
        const auto lin = NonlinearityModel::make_linear(1.0);
        const auto fwd = solve_uncontrolled(lin, mode, ScalarField::Zero(g.node_count()), tg, g);
        const ScalarField exact = std::exp(-pi * pi * tg.horizon) * mode;
        const double ef = lq_norm(g, fwd.state[tg.steps] - exact, 2.0) / lq_norm(g, exact, 2.0);
        v.expect(ef <= 0.02, "heat mode forward, relative L2 error %.3e", ef);
        const auto adj = solve_adjoint(g, constant_field(g, tg, 1.0), SpaceTimeField::zeros(g, tg), mode, tg);
        double ea = 0.0;
        for (int k : {0, 128, 256, 384}) {
            const ScalarField ex = std::exp(-pi * pi * (tg.horizon - tg.time(k))) * mode;
            ea = std::max(ea, lq_norm(g, adj.p[k] - ex, 2.0) / lq_norm(g, ex, 2.0));
        }
        v.expect(ea <= 0.02, "heat mode adjoint, relative L2 error %.3e", ea);
    }

    // Quasilinear manufactured solutions with a space-time source S = y_t - (a(y))_xx.
    auto run = [&](int nodes, int steps, double horizon, const std::function<double(double, double)>& y,
                   const std::function<double(double, double)>& yt, const std::function<double(double, double)>& yx,
                   const std::function<double(double, double)>& yxx) {
        const Grid g = unit_interval(nodes);
        const TimeGrid tg = TimeGrid::make(horizon, steps);
        SpaceTimeField src = SpaceTimeField::zeros(g, tg);
        for (int k = 1; k <= steps; ++k) {
            const double t = tg.time(k);
            src[k] = g.sample([&](double x, double) {
                const double val = y(x, t), dx = yx(x, t);
                return yt(x, t) - cubic.da(val) * yxx(x, t) - cubic.dda(val) * dx * dx;
            });
        }
        const ScalarField y0 = g.sample([&](double x, double) { return y(x, 0.0); });
        const auto tr = solve_quasilinear_controlled(cubic, &src, y0, ScalarField::Zero(g.node_count()), tg, g,
                                                     ScalarField::Ones(g.node_count()));
        const ScalarField exact = g.sample([&](double x, double) { return y(x, horizon); });
        return (tr.state[steps] - exact).cwiseAbs().maxCoeff();
    };
    {
        // linear in time, so implicit Euler has no time error and only the spatial error remains
        auto y = [](double x, double t) { return 0.4 * std::sin(pi * x) + 0.3 * t * std::sin(2 * pi * x); };
        auto yt = [](double x, double) { return 0.3 * std::sin(2 * pi * x); };
        auto yx = [](double x, double t) { return 0.4 * pi * std::cos(pi * x) + 0.6 * pi * t * std::cos(2 * pi * x); };
        auto yxx = [](double x, double t) {
            return -0.4 * pi * pi * std::sin(pi * x) - 1.2 * pi * pi * t * std::sin(2 * pi * x);
        };
        std::vector<double> err;
        for (int nodes : {33, 65, 129, 257}) err.push_back(run(nodes, 16, 0.5, y, yt, yx, yxx));
        const double order = observed_order(err);
        v.expect(order >= 1.9, "spatial order %.3f (max errors %.2e %.2e %.2e %.2e)", order, err[0], err[1], err[2],
                 err[3]);
    }
    {
        auto y = [](double x, double t) { return 0.5 * std::exp(-t) * std::sin(pi * x); };
        auto yt = [](double x, double t) { return -0.5 * std::exp(-t) * std::sin(pi * x); };
        auto yx = [](double x, double t) { return 0.5 * pi * std::exp(-t) * std::cos(pi * x); };
        auto yxx = [](double x, double t) { return -0.5 * pi * pi * std::exp(-t) * std::sin(pi * x); };
        std::vector<double> err;
        for (int steps : {16, 32, 64, 128}) err.push_back(run(257, steps, 1.0, y, yt, yx, yxx));
        const double order = observed_order(err);
        v.expect(order >= 0.9, "temporal order %.3f (max errors %.2e %.2e %.2e %.2e)", order, err[0], err[1], err[2],
                 err[3]);
    }
    return v;
}

Verdict penalized() {
    Verdict v;
    const double horizon = 0.05, s = 2e-5;
    std::vector<double> constants;
    for (const auto& [nodes, steps] : {std::pair{65, 128}, std::pair{129, 256}}) {
        const Bench b(nodes, s);
        const TimeGrid tg = TimeGrid::make(horizon, steps);
        const auto lin = NonlinearityModel::make_linear(1.0);
        PenalizedProblem pp;
        pp.grid = &b.grid;
        pp.model = lin;
        pp.time = tg;
        pp.params = make_carleman_parameters(1.0, s, horizon, b.setup.psi);
        pp.weights = evaluate_weights(b.setup.psi, pp.params, tg.midpoints());
        pp.region = b.setup.region;
        pp.y_s = b.sine(0.1);
        pp.f = manufactured_forcing(lin, pp.y_s, b.grid);
        pp.y0 = pp.y_s + b.sine(0.01);
        pp.z = solve_uncontrolled(lin, pp.y0, pp.f, tg, b.grid).state;
        std::vector<double> eps;
        for (int i = 0; i <= 8; ++i) eps.push_back(1e7 * std::pow(0.5, i));
        const auto r = penalized_minimize(pp, eps);
        const double data2 = std::pow(lq_norm(b.grid, pp.y0 - pp.y_s, 2.0), 2);
        bool monotone = true;
        double C = 0.0, Cmin = kInf;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i > 0 && r[i].terminal_error > r[i - 1].terminal_error) monotone = false;
            C = std::max(C, r[i].bound_value / data2);
            Cmin = std::min(Cmin, r[i].bound_value / data2);
        }
        v.expect(monotone, "grid %d x %d: terminal error %.3e -> %.3e over 8 halvings of eps, nonincreasing", nodes,
                 steps, r.front().terminal_error, r.back().terminal_error);
        v.note("grid %d x %d: constant max %.5e, min %.5e over eps", nodes, steps, C, Cmin);
        constants.push_back(C);
    }
    const double ratio = constants[1] / constants[0];
    v.expect(std::abs(ratio - 1.0) <= 0.2, "constant ratio under refinement x2: %.4f", ratio);
    return v;
}

Verdict end_to_end() {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    const Bench b(129, 0.004);
    const auto model = globalize(NonlinearityModel::make_cubic(1.0), {-1.0, 1.0});
    const ScalarField y_s = b.sine(0.1);
    const ScalarField f = manufactured_forcing(model, y_s, b.grid);
    const TimeGrid tg = TimeGrid::make(1.0, 256);
    PicardOptions opts;
    opts.max_outer = 15;
    opts.tol_sup = 1e-8;
    for (double size : {1e-2, 1e-3}) {
        const ScalarField y0 = b.random_data(y_s, size, 11);
        const auto plan = two_phase_run(model, y0, f, y_s, b.setup, tg, 0.125, qi_ladder(2, 4.0), {}, opts);
        const auto& cp = plan.control_phase;
        v.expect(cp.converged && cp.iteration <= 15 && cp.sup_distance <= 1e-8,
                 "data %.0e: %d outer iterations, sup distance %.3e", size, cp.iteration, cp.sup_distance);
        v.expect(plan.resimulated_terminal_error <= 1e-5 * size,
                 "data %.0e: resimulated terminal error %.3e (limit %.1e)", size, plan.resimulated_terminal_error,
                 1e-5 * size);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    v.expect(secs <= 900.0, "runtime %.1f s", secs);
    return v;
}

Verdict smoothing() {
    Verdict v;
    const Grid g = unit_interval(129);
    const auto model = globalize(NonlinearityModel::make_cubic(1.0), {-1.0, 1.0});
    const ScalarField zero = ScalarField::Zero(g.node_count());
    SmoothingOptions opts;
    opts.q = 4.0;
    const auto r = smoothing_scan(model, g, zero, zero, {0.2, 0.1414, 0.1, 0.0707, 0.05}, opts);
    for (const auto& p : r.points) v.note("half-width %.4f: |y0 - y_s| = %.4e, max |t Y_t|_4 = %.4e", p.parameter,
                                          p.data_norm, p.measure);
    v.expect(std::abs(r.fit.slope - 0.5) <= 0.15, "fitted slope %.3f, expected 2/q = 0.5 +- 0.15", r.fit.slope);
    return v;
}

/// Linear interpolation in space and time of a stored field onto another grid of the unit interval.
SpaceTimeField resample(const Grid& from, const SpaceTimeField& field, const Grid& to, const TimeGrid& tg) {
    SpaceTimeField out = SpaceTimeField::zeros(to, tg);
    const int nf = from.node_count();
    const double hf = from.h(0);
    auto at = [&](const ScalarField& layer, double x) {
        const int i = std::min(nf - 2, static_cast<int>(x / hf));
        const double w = x / hf - i;
        return (1.0 - w) * layer[i] + w * layer[i + 1];
    };
    for (int k = 0; k <= tg.steps; ++k) {
        const double pos = tg.time(k) / field.time.dt();
        const int j = std::min(field.steps() - 1, static_cast<int>(pos));
        const double w = pos - j;
        out[k] = to.sample([&](double x, double) { return (1.0 - w) * at(field[j], x) + w * at(field[j + 1], x); });
    }
    return out;
}

Verdict carleman_sampling() {
    Verdict v;
    const auto model = globalize(NonlinearityModel::make_cubic(1.0), {-1.0, 1.0});

    // stored iterate: the last linearization point of a converged cubic fixed-point run
    const Bench store(65, 0.005);
    const ScalarField y_s = store.sine(0.2);
    const ScalarField f = manufactured_forcing(model, y_s, store.grid);
    const auto fp = picard_run(model, store.random_data(y_s, 0.01, 3), f, y_s, store.setup, TimeGrid::make(1.0, 128),
                               qi_ladder(2, 4.0), {}, {});
    v.note("stored iterate: %d outer iterations, sup distance %.2e", fp.iteration, fp.sup_distance);

    struct Key {
        const char* name;
        bool iterate;
    };
    for (const Key key : {Key{"b = 1", false}, Key{"b = a'(z)", true}}) {
        // [refinement][s] -> constants
        double carl[2][2], obs[2][2];
        for (int level = 0; level < 2; ++level) {
            const int nodes = level == 0 ? 65 : 129;
            const int steps = level == 0 ? 512 : 1024;
            const Bench b(nodes);
            const TimeGrid tg = TimeGrid::make(1.0, steps);
            SpaceTimeField coeff = constant_field(b.grid, tg, 1.0);
            if (key.iterate) {
                coeff = resample(store.grid, fp.z, b.grid, tg);
                for (auto& layer : coeff.layers) layer = layer.unaryExpr(model.da);
            }
            for (int si = 0; si < 2; ++si) {
                const double s = si == 0 ? 0.025 : 0.05;
                const auto params = make_carleman_parameters(1.0, s, 1.0, b.setup.psi);
                const auto w = evaluate_weights(b.setup.psi, params, tg.midpoints());
                SampleOptions so;
                so.samples = 100;
                so.seed = 17;
                carl[level][si] = carleman_check(b.grid, coeff, w, params, b.setup.region, so).max_C;
                obs[level][si] = observability_check(b.grid, coeff, w, params, b.setup.region, so).max_constant_initial;
            }
        }
        for (const auto& [label, c] : {std::pair{"carleman", &carl}, std::pair{"observability", &obs}}) {
            const auto& t = *c;
            const bool finite = std::isfinite(t[0][0]) && std::isfinite(t[0][1]) && std::isfinite(t[1][0]) &&
                                std::isfinite(t[1][1]) && t[0][0] > 0 && t[1][1] > 0;
            v.expect(finite, "%s, %s: constants %.4e %.4e (coarse, s = 0.025, 0.05), %.4e %.4e (fine)", label, key.name,
                     t[0][0], t[0][1], t[1][0], t[1][1]);
            const double r0 = t[1][0] / t[0][0], r1 = t[1][1] / t[0][1];
            v.expect(std::abs(r0 - 1.0) <= 0.2 && std::abs(r1 - 1.0) <= 0.2,
                     "%s, %s: refinement ratios %.4f (s = 0.025), %.4f (s = 0.05)", label, key.name, r0, r1);
            v.expect(t[0][1] <= t[0][0] && t[1][1] <= t[1][0],
                     "%s, %s: nonincreasing when s doubles (coarse %.4e -> %.4e, fine %.4e -> %.4e)", label, key.name,
                     t[0][0], t[0][1], t[1][0], t[1][1]);
        }
    }
    return v;
}

Verdict estimate_scaling() {
    Verdict v;
    const double q = 2.2;
    const Bench b(65, 0.005);
    const auto model = globalize(NonlinearityModel::make_cubic(1.0), {-1.0, 1.0});
    const ScalarField y_s = b.sine(0.1);
    const ScalarField f = manufactured_forcing(model, y_s, b.grid);
    const TimeGrid tg = TimeGrid::make(1.0, 128);
    std::vector<double> data, control, terminal, sup_dev, envelope;
    for (int i = 0; i < 5; ++i) {
        const double size = 1e-2 * std::pow(0.5, i);
        const auto st = picard_run(model, b.random_data(y_s, size, 21), f, y_s, b.setup, tg, qi_ladder(2, q), {}, {});
        const auto est = theorem_estimates(b.grid, st.y, st.u, y_s, st.weights, st.params, q);
        data.push_back(est.data_l2);
        control.push_back(est.control_norm);
        terminal.push_back(est.terminal_weighted_norm);
        sup_dev.push_back(est.sup_deviation);
        envelope.push_back(est.sup_deviation / (est.driver + est.data_sup));
        v.note("|y0 - y_s| = %.4e: control %.4e, terminal %.4e, sup %.4e", est.data_l2, est.control_norm,
               est.terminal_weighted_norm, est.sup_deviation);
    }
    const double target = 2.0 / q;
    const double sc = fit_power_law(data, control).slope;
    const double st = fit_power_law(data, terminal).slope;
    v.expect(std::abs(sc - target) <= 0.2, "control norm slope %.3f, expected %.3f +- 0.2", sc, target);
    v.expect(std::abs(st - target) <= 0.2, "weighted terminal norm slope %.3f, expected %.3f +- 0.2", st, target);
    const double cmax = *std::max_element(envelope.begin(), envelope.end());
    const double cmin = *std::min_element(envelope.begin(), envelope.end());
    v.note("sup deviation envelope: C = %.4e (smallest ratio %.4e), slope %.3f", cmax, cmin,
           fit_power_law(data, sup_dev).slope);
    return v;
}

Verdict determinism() {
    Verdict v;
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "qlc_acceptance_determinism";
    ExperimentConfig c = default_config();
    c.seed = 42;
    std::vector<std::string> sums;
    for (int run = 0; run < 2; ++run) {
        fs::remove_all(dir);
        const auto out = run_experiment(c, dir);
        sums.push_back(out.checksum);
        v.note("run %d: exit %d, checksum %s", run + 1, out.exit_code, out.checksum.c_str());
    }
    fs::remove_all(dir);
    v.expect(!sums[0].empty() && sums[0] == sums[1], "identical report checksums");
    return v;
}

Verdict weight_bounds() {
    Verdict v;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> lam(0.1, 6.0), center(0.3, 0.7), width(0.1, 0.25);
    long checked = 0, violations = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const bool plane = trial % 4 == 3;
        const auto d = plane ? SpatialDomain::rectangle({0.0, 1.0}, {0.0, 1.0}, 33, 33)
                             : SpatialDomain::interval({0.0, 1.0}, 129);
        // the planar construction needs omega0 around the center of the square
        const double cx = plane ? 0.5 : center(rng), wx = width(rng);
        std::vector<Interval> omega{{cx - wx, cx + wx}}, omega0{{cx - 0.5 * wx, cx + 0.5 * wx}};
        if (plane) {
            const double wy = width(rng);
            omega.push_back({0.5 - wy, 0.5 + wy});
            omega0.push_back({0.5 - 0.5 * wy, 0.5 + 0.5 * wy});
        }
        const auto region = make_control_region(d, omega, omega0);
        const auto psi = construct_psi(d, region);
        const double horizon = 0.5 + trial * 0.1;
        const auto p = make_carleman_parameters(lam(rng), 1.0, horizon, psi);
        const auto w = evaluate_weights(psi, p, TimeGrid::make(horizon, 64).midpoints());
        for (int k = 0; k < w.layers(); ++k) {
            for (Eigen::Index i = 0; i < w.alpha[k].size(); ++i) {
                ++checked;
                if (!(w.alpha0[k] <= w.alpha[k][i] && w.alpha[k][i] <= w.alpha0[k] * (1.0 - p.eta) &&
                      w.phi0[k] <= w.phi[k][i] && w.phi[k][i] <= w.phi0[k] / p.eta)) {
                    ++violations;
                }
            }
        }
    }
    v.expect(violations == 0, "20 random (lambda, psi) configurations, %ld node-times, %ld violations", checked,
             violations);
    return v;
}

}  // namespace

int main() {
    setvbuf(stdout, nullptr, _IONBF, 0);
    struct Criterion {
        const char* name;
        Verdict (*run)();
    };
    const Criterion criteria[] = {
        {"discrete duality identity", duality},
        {"adjoint gradient vs finite differences", gradient},
        {"manufactured solutions and observed orders", manufactured},
        {"penalized controllability", penalized},
        {"end-to-end local controllability, cubic", end_to_end},
        {"smoothing exponent", smoothing},
        {"Carleman and observability sampling", carleman_sampling},
        {"estimate scaling", estimate_scaling},
        {"determinism", determinism},
        {"weight bounds", weight_bounds},
    };
    int failed = 0;
    int index = 0;
    for (const auto& c : criteria) {
        ++index;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.note("exception: %s", e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %d %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", index, c.name, secs);
        for (const auto& d : v.details) std::printf("    %s\n", d.c_str());
        if (!v.pass) ++failed;
    }
    std::printf("%d of %d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
