#include "qlcontrol/fixed_point.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace {

double sup_distance(const SpaceTimeField& a, const SpaceTimeField& b) {
    double d = 0.0;
    for (int k = 0; k <= a.steps(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return d;
}

SpaceTimeField difference(const SpaceTimeField& a, const std::function<const ScalarField&(int)>& b) {
    SpaceTimeField d = a;
    for (int k = 0; k <= a.steps(); ++k) d[k] = a[k] - b(k);
    return d;
}

}  // namespace

double QiLadder::space_exponent(int i) const {
    return i + 1 <= N ? q_values[i + 1] : q_values[N];
}

QiLadder qi_ladder(int n_dim, double q_final) {
    if (n_dim < 2 || !(q_final > n_dim)) {
        throw Error(ErrorKind::BadExponents, "ladder needs n >= 2 and q > n");
    }
    QiLadder l;
    l.n_dim = n_dim;
    l.q_final = q_final;
    if (n_dim == 2) {
        l.N = 1;
    } else {
        const double r = std::log(static_cast<double>(n_dim)) - std::log(static_cast<double>(n_dim - 2));
        l.N = static_cast<int>(std::ceil((std::log(q_final) - std::log(2.0)) / r)) + 1;
    }
    l.q_values.push_back(2.0);
    for (int i = 1; i < l.N; ++i) {
        l.q_values.push_back(2.0 * std::pow(static_cast<double>(n_dim) / (n_dim - 2), i - 1));
    }
    l.q_values.push_back(q_final);
    return l;
}

BMembership check_membership(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& Y,
                             const ScalarField& y_s, const WeightFields& weights,
                             const CarlemanParameters& params, const QiLadder& ladder,
                             const std::vector<double>& zetas, double zeta) {
    const int K = y.steps();
    const int half = K / 2;
    const SpaceTimeField dY = difference(y, [&](int k) -> const ScalarField& { return Y[k]; });
    const SpaceTimeField dS = difference(y, [&](int) -> const ScalarField& { return y_s; });
    BMembership m;
    m.zeta_list = zetas;
    m.zeta = zeta;
    m.pass = true;
    for (int i = 0; i <= ladder.N; ++i) {
        const double qt = ladder.q_values[i];
        const double qx = ladder.space_exponent(i);
        const double a = weighted_spacetime_norm(grid, dY, weights, -params.s, i, qt, qx, 1, half);
        const double b = weighted_spacetime_norm(grid, dS, weights, -params.s, i, qt, qx, half + 1, K);
        m.first_half.push_back(a);
        m.second_half.push_back(b);
        m.values.push_back(a + b);
        const bool ok = i < static_cast<int>(zetas.size()) && a + b <= zetas[i];
        m.pass_flags.push_back(ok);
        m.pass = m.pass && ok;
    }
    const double dt = y.time.dt();
    for (int k = 1; k <= K; ++k) {
        m.time_derivative = std::max(m.time_derivative, lq_norm(grid, (y[k] - y[k - 1]) / dt, ladder.q_final));
    }
    for (int k = 0; k <= K; ++k) {
        m.gradient_sup = std::max(m.gradient_sup, gradient_magnitude(grid, dS[k]).maxCoeff());
    }
    m.pass_flags.push_back(m.time_derivative <= zeta);
    m.pass_flags.push_back(m.gradient_sup <= zeta);
    m.pass = m.pass && m.time_derivative <= zeta && m.gradient_sup <= zeta;
    return m;
}

std::pair<std::vector<double>, double> default_zetas(const BMembership& measured) {
    double c = 1.0;
    for (std::size_t i = 1; i < measured.values.size(); ++i) {
        if (measured.values[i - 1] > 0.0) c = std::max(c, measured.values[i] / measured.values[i - 1]);
    }
    std::vector<double> z;
    for (std::size_t i = 0; i < measured.values.size(); ++i) {
        z.push_back(i == 0 ? 2.0 * measured.values[0] : 2.0 * c * z.back());
    }
    return {z, 2.0 * std::max(measured.time_derivative, measured.gradient_sup)};
}

PicardState picard_run(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                       const ScalarField& y_s, const ControlSetup& setup, const TimeGrid& time,
                       const QiLadder& ladder, const std::vector<double>& zetas, const PicardOptions& options) {
    const Grid& grid = *setup.grid;
    PicardState st;
    st.time = time;
    st.params = make_carleman_parameters(setup.lambda, setup.s, time.horizon, setup.psi, setup.proof_regime);
    st.weights = evaluate_weights(setup.psi, st.params, time.midpoints());
    st.Y = solve_uncontrolled(model, y0, f, time, grid, options.newton).state;

    ControlProblem problem;
    problem.grid = &grid;
    problem.model = model;
    problem.time = time;
    problem.weights = st.weights;
    problem.params = st.params;
    problem.region = setup.region;
    problem.target = TrackingTarget::make(st.Y, y_s);
    problem.y0 = y0;
    problem.f = f;

    std::vector<double> zeta_list = zetas;
    double zeta = 1.0;
    bool derive_zetas = zetas.empty();

    st.z = st.Y;
    // Zero data: Y stays at y_s up to Newton round-off and no control is needed.
    if ((y0 - y_s).cwiseAbs().maxCoeff() == 0.0) {
        st.y = st.Y;
        st.terminal_error = lq_norm(grid, st.Y[time.steps] - y_s, 2.0);
        st.resimulated_terminal_error = st.terminal_error;
        st.u = SpaceTimeField::zeros(grid, time);
        st.p.p = SpaceTimeField::zeros(grid, time);
        st.p.terminal = ScalarField::Zero(grid.node_count());
        st.converged = true;
        st.iteration = 0;
        if (derive_zetas) {
            std::tie(zeta_list, zeta) =
                default_zetas(check_membership(grid, st.y, st.Y, y_s, st.weights, st.params, ladder, {}, 0.0));
        }
        st.membership = check_membership(grid, st.y, st.Y, y_s, st.weights, st.params, ladder, zeta_list, zeta);
        st.trace.push_back({0, 0.0, 0.0, st.terminal_error, st.membership.values});
        return st;
    }

    for (int it = 1; it <= options.max_outer; ++it) {
        problem.z = st.z;
        const ReducedFunctional rf(problem);
        OptimalityState opt = rf.minimize(options.minimize);
        {
            SpaceTimeField g = SpaceTimeField::zeros(grid, time);
            for (int k = 1; k <= time.steps; ++k) {
                g[k] = st.weights.tracking_weight(k - 1, st.params.s).cwiseProduct(opt.deviation[k]) / st.params.s3l3();
            }
            const EnergyAudit audit = energy_audit(rf.stepper(), opt.p.p, &g);
            if (st.energy.worst_layer < 0 || audit.max_violation > st.energy.max_violation) st.energy = audit;
            if (!audit.pass) {
                throw Error(ErrorKind::DiagnosticViolation,
                            "energy inequality violated at outer iteration " + std::to_string(it) + ", layer " +
                                std::to_string(audit.worst_layer) + ", relative excess " +
                                std::to_string(audit.max_violation));
            }
        }
        const double d = sup_distance(opt.y.state, st.z);
        st.iteration = it;
        st.y = opt.y.state;
        st.u = opt.u;
        st.p = opt.p;
        st.sup_distance = d;
        st.terminal_error = lq_norm(grid, st.y[time.steps] - y_s, 2.0);
        if (derive_zetas) {
            const BMembership first =
                check_membership(grid, st.y, st.Y, y_s, st.weights, st.params, ladder, {}, 0.0);
            std::tie(zeta_list, zeta) = default_zetas(first);
            derive_zetas = false;
        }
        st.membership = check_membership(grid, st.y, st.Y, y_s, st.weights, st.params, ladder, zeta_list, zeta);
        st.trace.push_back({it, d, opt.functional_value, st.terminal_error, st.membership.values});
        st.optimality = std::move(opt);
        // With a linear model the coefficients do not depend on z, so F(F(z)) = F(z) exactly.
        if (model.linear) {
            st.z = st.y;
            st.sup_distance = 0.0;
            st.converged = true;
            break;
        }
        st.z = st.y;
        if (d <= options.tol_sup) {
            st.converged = true;
            break;
        }
    }
    const Trajectory resim =
        solve_quasilinear_controlled(model, &st.u, y0, f, time, grid, setup.region.indicator, options.newton);
    st.resimulation_distance = sup_distance(resim.state, st.y);
    st.resimulated_terminal_error = lq_norm(grid, resim.state[time.steps] - y_s, 2.0);
    if (!st.converged && options.throw_on_failure) {
        throw Error(ErrorKind::NoConvergence, "fixed-point loop did not reach tol_sup in " +
                                                  std::to_string(options.max_outer) + " iterations");
    }
    return st;
}

TwoPhasePlan two_phase_run(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                           const ScalarField& y_s, const ControlSetup& setup, const TimeGrid& time,
                           double T0_fraction, const QiLadder& ladder, const std::vector<double>& zetas,
                           const PicardOptions& options) {
    if (!(T0_fraction >= 0.0 && T0_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "T0 fraction must lie in [0, 1)");
    }
    const Grid& grid = *setup.grid;
    int n0 = static_cast<int>(std::lround(T0_fraction * time.steps));
    if ((time.steps - n0) % 2 != 0) ++n0;
    TwoPhasePlan plan;
    plan.T0_layer = n0;
    plan.T0 = time.time(n0);
    ScalarField start = y0;
    if (n0 > 0) {
        if (n0 < 16 || time.steps - n0 < 16) {
            throw Error(ErrorKind::InvalidArgument, "each phase needs at least 16 time steps");
        }
        const TimeGrid free_time = TimeGrid::make(plan.T0, n0);
        plan.free_phase = solve_uncontrolled(model, y0, f, free_time, grid, options.newton).state;
        start = plan.free_phase[n0];
        // keep zero data exactly zero so the control phase sees the trivial case
        if ((y0 - y_s).cwiseAbs().maxCoeff() == 0.0) start = y_s;
    }
    const TimeGrid control_time = TimeGrid::make(time.horizon - plan.T0, time.steps - n0);
    plan.control_phase = picard_run(model, start, f, y_s, setup, control_time, ladder, zetas, options);

    plan.y.time = time;
    plan.u.time = time;
    for (int k = 0; k <= n0 && n0 > 0; ++k) {
        plan.y.layers.push_back(plan.free_phase[k]);
        plan.u.layers.push_back(ScalarField::Zero(grid.node_count()));
    }
    for (int k = n0 > 0 ? 1 : 0; k <= control_time.steps; ++k) {
        plan.y.layers.push_back(plan.control_phase.y[k]);
        plan.u.layers.push_back(plan.control_phase.u[k]);
    }
    plan.terminal_error = plan.control_phase.terminal_error;
    const Trajectory resim =
        solve_quasilinear_controlled(model, &plan.u, y0, f, time, grid, setup.region.indicator, options.newton);
    plan.resimulated_terminal_error = lq_norm(grid, resim.state[time.steps] - y_s, 2.0);
    return plan;
}

void write_trace_csv(std::ostream& out, const PicardState& state) {
    out << "iteration,sup_distance,functional,terminal_error";
    const std::size_t norms = state.trace.empty() ? 0 : state.trace.front().membership.size();
    for (std::size_t i = 0; i < norms; ++i) out << ",membership_" << i;
    out << '\n';
    out.precision(17);
    for (const auto& row : state.trace) {
        out << row.iteration << ',' << row.sup_distance << ',' << row.functional << ',' << row.terminal_error;
        for (double v : row.membership) out << ',' << v;
        out << '\n';
    }
}

}  // namespace qlc
