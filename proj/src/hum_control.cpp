#include "qlcontrol/hum_control.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace {

using Vec = Eigen::VectorXd;
using Layers = std::vector<Vec>;
using SpMat = Eigen::SparseMatrix<double>;

SpaceTimeField to_field(const Grid& grid, const TimeGrid& time, const Layers& layers) {
    SpaceTimeField out;
    out.time = time;
    for (const auto& v : layers) out.layers.push_back(v.size() ? grid.extend(v) : ScalarField::Zero(grid.node_count()));
    return out;
}

}  // namespace

TrackingTarget TrackingTarget::make(const SpaceTimeField& Y, const ScalarField& y_s) {
    if (Y.steps() % 2 != 0) {
        throw Error(ErrorKind::InvalidArgument, "tracking target needs an even number of time steps");
    }
    TrackingTarget t;
    t.first_half = Y;
    t.second_half = y_s;
    t.switch_layer = Y.steps() / 2;
    t.switch_time = Y.time.time(t.switch_layer);
    return t;
}

TrackingTarget TrackingTarget::stationary(const ScalarField& y_s, const TimeGrid& time) {
    TrackingTarget t;
    t.first_half.time = time;
    t.first_half.layers.assign(1, y_s);
    t.second_half = y_s;
    t.switch_layer = 0;
    t.switch_time = 0.0;
    return t;
}

struct ReducedFunctional::Impl {
    const Grid* grid = nullptr;
    std::unique_ptr<LinearStepper> stepper;
    int K = 0;
    double dt = 0.0;
    double vol = 0.0;
    Vec mask;
    Layers wc, wt;  // per cell k = 1..K, interior
    Layers F;       // deviation source per step
    Vec e0;

    double dot(const Layers& a, const Layers& b) const {
        double s = 0.0;
        for (int k = 1; k <= K; ++k) s += a[k].dot(b[k]);
        return dt * vol * s;
    }

    Layers zeros() const {
        Layers z(K + 1, Vec::Zero(mask.size()));
        return z;
    }

    Layers restrict_control(const SpaceTimeField& u) const {
        Layers out(K + 1, Vec::Zero(mask.size()));
        for (int k = 1; k <= K; ++k) out[k] = mask.cwiseProduct(grid->restrict(u[k]));
        return out;
    }

    Layers forward(const Layers& u, bool homogeneous) const {
        Layers e(K + 1);
        e[0] = homogeneous ? Vec::Zero(mask.size()) : e0;
        for (int k = 1; k <= K; ++k) {
            Vec rhs = e[k - 1] + dt * mask.cwiseProduct(u[k]);
            if (!homogeneous) rhs += F[k];
            e[k] = stepper->solve(k, rhs);
        }
        return e;
    }

    Layers adjoint(const Layers& e) const {
        Layers g(K + 1, Vec::Zero(mask.size()));
        for (int k = 1; k <= K; ++k) g[k] = wt[k].cwiseProduct(e[k]);
        return stepper->backward(Vec::Zero(mask.size()), g);
    }

    Layers gradient(const Layers& u, const Layers& p) const {
        Layers grad(K + 1, Vec::Zero(mask.size()));
        for (int k = 1; k <= K; ++k) {
            grad[k] = 2.0 * mask.cwiseProduct(wc[k].cwiseProduct(u[k]) - p[k - 1]);
        }
        return grad;
    }

    double control_cost(const Layers& u) const {
        double s = 0.0;
        for (int k = 1; k <= K; ++k) s += (mask.array() * wc[k].array() * u[k].array().square()).sum();
        return dt * vol * s;
    }

    double tracking_cost(const Layers& e) const {
        double s = 0.0;
        for (int k = 1; k <= K; ++k) s += (wt[k].array() * e[k].array().square()).sum();
        return dt * vol * s;
    }

    // |grad / 2 w_c| / |u|: the gradient's Riesz representative in the control-weighted inner product,
    // which is also the relative Pontryagin defect |u - m p / w_c| / |u|.
    double relative_riesz(const Layers& grad, const Layers& u) const {
        double num = 0.0, den = 0.0;
        for (int k = 1; k <= K; ++k) {
            num += mask.cwiseProduct(grad[k].cwiseQuotient(2.0 * wc[k])).squaredNorm();
            den += mask.cwiseProduct(u[k]).squaredNorm();
        }
        return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }

    OptimalityState solve_cg(const ControlProblem& problem, const MinimizeOptions& options) const;
    OptimalityState solve_direct(const ControlProblem& problem) const;
    OptimalityState finish(const ControlProblem& problem, const Layers& u, const Layers& e, const Layers& p,
                           MinimizeMethod method) const;
};

ReducedFunctional::ReducedFunctional(const ControlProblem& problem)
    : problem_(&problem), impl_(std::make_unique<Impl>()) {
    const Grid& grid = *problem.grid;
    const int K = problem.time.steps;
    if (problem.z.steps() != K || problem.weights.layers() != K) {
        throw Error(ErrorKind::InvalidArgument, "control problem fields do not match the time grid");
    }
    auto& d = *impl_;
    d.grid = &grid;
    d.K = K;
    d.dt = problem.time.dt();
    d.vol = grid.cell_volume();
    d.mask = grid.restrict(problem.region.indicator);
    d.stepper = std::make_unique<LinearStepper>(grid, problem.time,
                                                coefficients_from_state(grid, problem.model, problem.z));
    d.wc.assign(K + 1, Vec());
    d.wt.assign(K + 1, Vec());
    d.F.assign(K + 1, Vec());
    const Vec f = grid.restrict(problem.f);
    for (int k = 1; k <= K; ++k) {
        d.wc[k] = grid.restrict(problem.weights.control_cost_weight(k - 1, problem.params.s));
        d.wt[k] = grid.restrict(problem.weights.tracking_weight(k - 1, problem.params.s));
        const Vec prev = grid.restrict(problem.target.at(k - 1));
        const Vec cur = grid.restrict(problem.target.at(k));
        d.F[k] = prev - d.stepper->step_matrix(k) * cur + d.dt * f;
    }
    d.e0 = grid.restrict(problem.y0) - grid.restrict(problem.target.at(0));
}

ReducedFunctional::~ReducedFunctional() = default;

const LinearStepper& ReducedFunctional::stepper() const { return *impl_->stepper; }

double ReducedFunctional::value(const SpaceTimeField& u) const {
    const Layers uc = impl_->restrict_control(u);
    const Layers e = impl_->forward(uc, false);
    return impl_->control_cost(uc) + impl_->tracking_cost(e);
}

SpaceTimeField ReducedFunctional::gradient(const SpaceTimeField& u) const {
    const Layers uc = impl_->restrict_control(u);
    const Layers e = impl_->forward(uc, false);
    const Layers p = impl_->adjoint(e);
    return to_field(*impl_->grid, problem_->time, impl_->gradient(uc, p));
}

SpaceTimeField ReducedFunctional::deviation(const SpaceTimeField& u) const {
    return to_field(*impl_->grid, problem_->time, impl_->forward(impl_->restrict_control(u), false));
}

OptimalityState ReducedFunctional::Impl::finish(const ControlProblem& problem, const Layers& u, const Layers& e,
                                                const Layers& p, MinimizeMethod method) const {
    const Grid& g = *grid;
    OptimalityState st;
    st.method = method;
    st.u = to_field(g, problem.time, u);
    st.deviation = to_field(g, problem.time, e);
    st.y.state.time = problem.time;
    for (int k = 0; k <= K; ++k) {
        st.y.state.layers.push_back(g.extend(e[k] + g.restrict(problem.target.at(k))));
    }
    st.y.newton_iterations.assign(K + 1, 0);
    st.y.residuals.assign(K + 1, 0.0);
    const double scale = problem.params.s3l3();
    st.p.p.time = problem.time;
    for (int k = 0; k <= K; ++k) st.p.p.layers.push_back(g.extend(p[k] / scale));
    st.p.terminal = ScalarField::Zero(g.node_count());
    st.control_cost = control_cost(u);
    st.tracking_cost = tracking_cost(e);
    st.functional_value = st.control_cost + st.tracking_cost;

    const Layers grad = gradient(u, p);
    st.gradient_norm = std::sqrt(dot(grad, grad));
    st.relative_gradient_norm = relative_riesz(grad, u);
    st.pontryagin_residual = pontryagin_residual(g, st.u, st.p, problem.weights, problem.params, problem.region);

    double rhs = -vol * e0.dot(p[0]);
    for (int k = 1; k <= K; ++k) rhs -= vol * F[k].dot(p[k - 1]);
    const int sw = problem.target.switch_layer;
    st.audit.cost = st.functional_value;
    if (sw >= 1 && sw < K) {
        st.audit.jump_term =
            vol * (g.restrict(problem.target.second_half) - g.restrict(problem.target.first_half[sw])).dot(p[sw]);
    }
    st.audit.defect_term = rhs - st.audit.jump_term;
    const double denom = std::max({std::abs(st.audit.cost), std::abs(rhs), 1e-300});
    st.audit.relative_gap = std::abs(st.audit.cost - rhs) / denom;
    if (st.audit.cost == 0.0 && rhs == 0.0) st.audit.relative_gap = 0.0;
    return st;
}

OptimalityState ReducedFunctional::Impl::solve_cg(const ControlProblem& problem,
                                                  const MinimizeOptions& options) const {
    const Layers zero = zeros();
    const Layers e_free = forward(zero, false);
    const double q0 = tracking_cost(e_free);
    Layers b = gradient(zero, adjoint(e_free));
    for (auto& v : b) v = -v;

    auto hess = [&](const Layers& v) { return gradient(v, adjoint(forward(v, true))); };
    auto precond = [&](const Layers& r) {
        Layers z(K + 1, Vec::Zero(mask.size()));
        for (int k = 1; k <= K; ++k) z[k] = mask.cwiseProduct(r[k].cwiseQuotient(2.0 * wc[k]));
        return z;
    };
    auto axpy = [&](Layers& y, double a, const Layers& x) {
        for (int k = 1; k <= K; ++k) y[k] += a * x[k];
    };

    Layers u = zero;
    Layers r = b;
    const double rz0 = dot(r, precond(r));
    std::vector<HistoryEntry> history;
    history.push_back({0, q0, std::sqrt(dot(r, r))});
    int it = 0;
    bool converged = rz0 == 0.0;
    // The recursive residual drifts away from b - Hu near the tolerance, so restart from the true residual.
    for (int restart = 0; restart < 4 && !converged && it < options.max_iterations; ++restart) {
        if (restart > 0) {
            r = b;
            axpy(r, -1.0, hess(u));
        }
        Layers z = precond(r);
        Layers d = z;
        double rz = dot(r, z);
        if (relative_riesz(r, u) <= options.tolerance) {
            converged = true;
            break;
        }
        while (it < options.max_iterations) {
            const Layers hd = hess(d);
            const double curvature = dot(d, hd);
            if (!(curvature > 0.0)) break;
            const double step = rz / curvature;
            axpy(u, step, d);
            axpy(r, -step, hd);
            z = precond(r);
            const double rz_new = dot(r, z);
            ++it;
            Layers br = b;
            axpy(br, 1.0, r);
            history.push_back({it, q0 - 0.5 * dot(u, br), std::sqrt(dot(r, r))});
            if (relative_riesz(r, u) <= options.tolerance) {
                converged = restart > 0;
                break;
            }
            const double beta = rz_new / rz;
            rz = rz_new;
            for (int k = 1; k <= K; ++k) d[k] = z[k] + beta * d[k];
        }
    }
    const Layers e = forward(u, false);
    OptimalityState st = finish(problem, u, e, adjoint(e), MinimizeMethod::ConjugateGradient);
    st.cg_iterations = it;
    st.max_iterations_hit = !converged;
    st.history = std::move(history);
    return st;
}

OptimalityState ReducedFunctional::Impl::solve_direct(const ControlProblem& problem) const {
    const int n = static_cast<int>(mask.size());
    const long N = static_cast<long>(n) * K;
    std::vector<Eigen::Triplet<double>> trip;
    auto add_block = [&](int bi, int bj, const SpMat& m) {
        for (int c = 0; c < m.outerSize(); ++c) {
            for (SpMat::InnerIterator itr(m, c); itr; ++itr) {
                trip.emplace_back(bi * n + static_cast<int>(itr.row()), bj * n + static_cast<int>(itr.col()),
                                  itr.value());
            }
        }
    };
    Vec rhs = Vec::Zero(N);
    for (int k = 1; k <= K; ++k) {
        const SpMat& A = stepper->step_matrix(k);
        const Vec wdiag = (vol / dt) * wt[k].cwiseInverse();
        const SpMat WA = wdiag.asDiagonal() * A;
        const SpMat AWA = A * WA;
        add_block(k - 1, k - 1, AWA);
        for (int i = 0; i < n; ++i) {
            const double m = dt * vol * mask[i] / wc[k][i];
            if (m != 0.0) trip.emplace_back((k - 1) * n + i, (k - 1) * n + i, m);
        }
        if (k < K) {
            for (int i = 0; i < n; ++i) trip.emplace_back(k * n + i, k * n + i, wdiag[i]);
            const SpMat AW = SpMat(WA.transpose());
            add_block(k - 1, k, SpMat(-AW));
            add_block(k, k - 1, SpMat(-WA));
        }
        rhs.segment(static_cast<long>(k - 1) * n, n) -= vol * F[k];
    }
    rhs.head(n) -= vol * e0;
    SpMat M(N, N);
    M.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(M);
    if (ldlt.info() != Eigen::Success) {
        throw Error(ErrorKind::LinearSolveStalled, "space-time normal equations are not positive definite");
    }
    Vec P = ldlt.solve(rhs);
    P += ldlt.solve(rhs - M * P);

    Layers p(K + 1, Vec::Zero(n));
    for (int k = 0; k < K; ++k) p[k] = P.segment(static_cast<long>(k) * n, n);
    Layers u(K + 1, Vec::Zero(n)), e(K + 1, Vec::Zero(n));
    e[0] = e0;
    for (int k = 1; k <= K; ++k) {
        u[k] = mask.cwiseProduct(p[k - 1].cwiseQuotient(wc[k]));
        e[k] = (p[k] - stepper->step_matrix(k) * p[k - 1]).cwiseQuotient(dt * wt[k]);
    }
    // Adjoint of the recovered deviation, so the reported gradient measures the KKT residual.
    OptimalityState st = finish(problem, u, e, adjoint(e), MinimizeMethod::SpaceTimeDirect);
    st.cg_iterations = 0;
    return st;
}

OptimalityState ReducedFunctional::minimize(const MinimizeOptions& options) const {
    MinimizeMethod method = options.method;
    if (method == MinimizeMethod::Auto) {
        method = impl_->grid->dim() == 1 ? MinimizeMethod::SpaceTimeDirect : MinimizeMethod::ConjugateGradient;
    }
    if (method == MinimizeMethod::SpaceTimeDirect) return impl_->solve_direct(*problem_);
    return impl_->solve_cg(*problem_, options);
}

double functional_value(const ControlProblem& problem, const SpaceTimeField& u) {
    return ReducedFunctional(problem).value(u);
}

SpaceTimeField gradient_via_adjoint(const ControlProblem& problem, const SpaceTimeField& u) {
    return ReducedFunctional(problem).gradient(u);
}

OptimalityState minimize(const ControlProblem& problem, const MinimizeOptions& options) {
    return ReducedFunctional(problem).minimize(options);
}

std::vector<PenalizedResult> penalized_minimize(const PenalizedProblem& problem,
                                                const std::vector<double>& epsilons) {
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0.0) || (i > 0 && !(epsilons[i] < epsilons[i - 1]))) {
            throw Error(ErrorKind::InvalidArgument, "epsilons must be positive and strictly decreasing");
        }
    }
    const Grid& grid = *problem.grid;
    const int K = problem.time.steps;
    const double dt = problem.time.dt();
    const double vol = grid.cell_volume();
    const LinearStepper stepper(grid, problem.time, coefficients_from_state(grid, problem.model, problem.z));
    const Vec mask = grid.restrict(problem.region.indicator);
    const int n = static_cast<int>(mask.size());
    Layers wc(K + 1), F(K + 1);
    const Vec ys = grid.restrict(problem.y_s);
    const Vec f = grid.restrict(problem.f);
    for (int k = 1; k <= K; ++k) {
        wc[k] = grid.restrict(problem.weights.control_cost_weight(k - 1, problem.params.s));
        F[k] = ys - stepper.step_matrix(k) * ys + dt * f;
    }

    auto control_from = [&](const Vec& pT) {
        const Layers p = stepper.backward(pT, Layers(K + 1, Vec::Zero(n)));
        Layers u(K + 1, Vec::Zero(n));
        for (int k = 1; k <= K; ++k) u[k] = mask.cwiseProduct(p[k - 1].cwiseQuotient(wc[k]));
        return u;
    };
    auto terminal = [&](const Vec& e0, const Layers& u, bool with_defect) {
        Vec e = e0;
        for (int k = 1; k <= K; ++k) {
            Vec rhs = e + dt * mask.cwiseProduct(u[k]);
            if (with_defect) rhs += F[k];
            e = stepper.solve(k, rhs);
        }
        return e;
    };

    const Vec e_free = terminal(grid.restrict(problem.y0) - ys, Layers(K + 1, Vec::Zero(n)), true);
    Eigen::MatrixXd gram(n, n);
    for (int j = 0; j < n; ++j) {
        gram.col(j) = terminal(Vec::Zero(n), control_from(Vec::Unit(n, j)), false);
    }
    gram = 0.5 * (gram + gram.transpose()).eval();

    std::vector<PenalizedResult> out;
    for (double eps : epsilons) {
        Eigen::MatrixXd sys = gram;
        sys.diagonal().array() += eps;
        Eigen::LLT<Eigen::MatrixXd> llt(sys);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::LinearSolveStalled, "penalized dual system is not positive definite");
        }
        const Vec pT = llt.solve(-e_free);
        const Layers u = control_from(pT);
        const Vec eT = terminal(grid.restrict(problem.y0) - ys, u, true);
        PenalizedResult r;
        r.epsilon = eps;
        r.terminal_error = lq_norm(grid, grid.extend(eT), 2.0);
        double cost = 0.0;
        for (int k = 1; k <= K; ++k) cost += (mask.array() * wc[k].array() * u[k].array().square()).sum();
        r.control_cost = dt * vol * cost;
        r.bound_value = r.control_cost + r.terminal_error * r.terminal_error / eps;
        r.u = to_field(grid, problem.time, u);
        r.terminal_adjoint = grid.extend(pT);
        out.push_back(std::move(r));
    }
    return out;
}

SpaceTimeField reconstruct_control(const Grid& grid, const AdjointTrajectory& p, const WeightFields& weights,
                                   const CarlemanParameters& params, const ControlRegion& region) {
    const int K = p.p.steps();
    SpaceTimeField u = SpaceTimeField::zeros(grid, p.p.time);
    const double scale = params.s3l3();
    for (int k = 1; k <= K; ++k) {
        const auto& a = weights.alpha[k - 1];
        const auto& ph = weights.phi[k - 1];
        for (int node = 0; node < grid.node_count(); ++node) {
            if (region.indicator[node] == 0.0) continue;
            const double phi3 = ph[node] * ph[node] * ph[node];
            u[k][node] = weights.exp_clamped(2.0 * params.s * a[node]) * scale * phi3 * p.p[k - 1][node];
        }
    }
    return u;
}

double pontryagin_residual(const Grid& grid, const SpaceTimeField& u, const AdjointTrajectory& p,
                           const WeightFields& weights, const CarlemanParameters& params,
                           const ControlRegion& region) {
    const SpaceTimeField r = reconstruct_control(grid, p, weights, params, region);
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= u.steps(); ++k) {
        num += (region.indicator.array() * (u[k] - r[k]).array().square()).sum();
        den += (region.indicator.array() * u[k].array().square()).sum();
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

double control_cost(const Grid& grid, const SpaceTimeField& u, const WeightFields& weights, double s) {
    double sum = 0.0;
    for (int k = 1; k <= u.steps(); ++k) {
        const ScalarField w = weights.control_cost_weight(k - 1, s);
        sum += inner(grid, w.cwiseProduct(u[k]), u[k]);
    }
    return u.time.dt() * sum;
}

}  // namespace qlc
