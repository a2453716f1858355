#include "qlcontrol/pde_solvers.hpp"

#include <cmath>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

int stride_of(const Grid& grid, int axis) { return axis == 0 ? 1 : grid.domain().nodes(0); }

bool last_along(const Grid& grid, int node, int axis) {
    return grid.domain().multi_index(node)[axis] == grid.domain().nodes(axis) - 1;
}

bool same_faces(const FaceCoefficients& a, const FaceCoefficients& b) {
    if (a.axis.size() != b.axis.size()) return false;
    for (std::size_t i = 0; i < a.axis.size(); ++i) {
        if (a.axis[i].size() != b.axis[i].size() || a.axis[i] != b.axis[i]) return false;
    }
    return true;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Factor storage above this many nonzeros switches the stepper to CG.
constexpr double kFactorBudget = 4.0e7;

}  // namespace

LayerCoefficients coefficients_from_nodal(const Grid& grid, const SpaceTimeField& b) {
    LayerCoefficients c;
    c.layers.resize(b.steps() + 1);
    for (int k = 1; k <= b.steps(); ++k) {
        if (k > 1 && b[k] == b[k - 1]) {
            c.layers[k] = c.layers[k - 1];
        } else {
            c.layers[k] = harmonic_faces(grid, b[k]);
        }
    }
    return c;
}

FaceCoefficients secant_faces(const Grid& grid, const NonlinearityModel& model, const ScalarField& z) {
    FaceCoefficients faces;
    const ScalarField az = z.unaryExpr(model.a);
    for (int a = 0; a < grid.dim(); ++a) {
        const int stride = stride_of(grid, a);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(grid.node_count());
        for (int node = 0; node < grid.node_count(); ++node) {
            if (last_along(grid, node, a)) continue;
            const double z0 = z[node];
            const double z1 = z[node + stride];
            const double dz = z1 - z0;
            if (model.linear || std::abs(dz) <= 1e-7 * (1.0 + std::abs(z0) + std::abs(z1))) {
                c[node] = model.da(0.5 * (z0 + z1));
            } else {
                c[node] = (az[node + stride] - az[node]) / dz;
            }
            if (!(c[node] > 0.0)) {
                throw Error(ErrorKind::NonpositiveCoefficient, "linearized diffusivity is not positive");
            }
        }
        faces.axis.push_back(std::move(c));
    }
    return faces;
}

LayerCoefficients coefficients_from_state(const Grid& grid, const NonlinearityModel& model,
                                          const SpaceTimeField& z) {
    LayerCoefficients c;
    c.layers.resize(z.steps() + 1);
    for (int k = 1; k <= z.steps(); ++k) {
        if (k > 1 && z[k] == z[k - 1]) {
            c.layers[k] = c.layers[k - 1];
        } else {
            c.layers[k] = secant_faces(grid, model, z[k]);
        }
    }
    return c;
}

double min_face_coefficient(const FaceCoefficients& faces, const Grid& grid) {
    double m = kInf;
    for (int a = 0; a < grid.dim(); ++a) {
        for (int node = 0; node < grid.node_count(); ++node) {
            if (!last_along(grid, node, a)) m = std::min(m, faces.axis[a][node]);
        }
    }
    return m;
}

struct LinearStepper::Impl {
    std::vector<int> slot;  // layer -> matrix slot
    std::vector<SpMat> matrices;
    std::vector<std::unique_ptr<Eigen::SimplicialLDLT<SpMat>>> factors;
    bool iterative = false;
};

LinearStepper::LinearStepper(const Grid& grid, const TimeGrid& time, LayerCoefficients coefficients)
    : grid_(&grid), time_(time), coefficients_(std::move(coefficients)), impl_(std::make_unique<Impl>()) {
    if (static_cast<int>(coefficients_.layers.size()) != time_.steps + 1) {
        throw Error(ErrorKind::InvalidArgument, "coefficient layers do not match the time grid");
    }
    const double dt = time_.dt();
    SpMat identity(grid.interior_count(), grid.interior_count());
    identity.setIdentity();
    impl_->slot.assign(time_.steps + 1, -1);
    for (int k = 1; k <= time_.steps; ++k) {
        if (k > 1 && same_faces(coefficients_.layers[k], coefficients_.layers[k - 1])) {
            impl_->slot[k] = impl_->slot[k - 1];
            continue;
        }
        const SparseOperator op = assemble_from_faces(grid, coefficients_.layers[k]);
        impl_->matrices.push_back(identity - dt * op.matrix);
        impl_->slot[k] = static_cast<int>(impl_->matrices.size()) - 1;
    }
    for (std::size_t i = 0; i < impl_->matrices.size(); ++i) {
        if (impl_->iterative) break;
        auto solver = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(impl_->matrices[i]);
        if (solver->info() != Eigen::Success) {
            throw Error(ErrorKind::LinearSolveStalled, "step matrix factorization failed");
        }
        if (i == 0) {
            const double per_layer = static_cast<double>(solver->matrixL().nestedExpression().nonZeros());
            if (per_layer * static_cast<double>(impl_->matrices.size()) > kFactorBudget) {
                impl_->iterative = true;
                break;
            }
        }
        impl_->factors.push_back(std::move(solver));
    }
    if (impl_->iterative) impl_->factors.clear();
}

LinearStepper::~LinearStepper() = default;
LinearStepper::LinearStepper(LinearStepper&&) noexcept = default;
LinearStepper& LinearStepper::operator=(LinearStepper&&) noexcept = default;

const SpMat& LinearStepper::step_matrix(int k) const { return impl_->matrices.at(impl_->slot.at(k)); }

Eigen::VectorXd LinearStepper::solve(int k, const Eigen::VectorXd& rhs) const {
    const int s = impl_->slot.at(k);
    if (!impl_->iterative) return impl_->factors[s]->solve(rhs);
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg(impl_->matrices[s]);
    cg.setTolerance(1e-13);
    cg.setMaxIterations(10 * static_cast<int>(rhs.size()) + 100);
    Eigen::VectorXd x = cg.solve(rhs);
    if (cg.info() != Eigen::Success && cg.error() > 1e-11) {
        throw Error(ErrorKind::LinearSolveStalled,
                    "CG stalled on layer " + std::to_string(k) + " at relative residual " +
                        std::to_string(cg.error()));
    }
    return x;
}

std::vector<Eigen::VectorXd> LinearStepper::forward(const Eigen::VectorXd& y0,
                                                    const std::vector<Eigen::VectorXd>& src) const {
    const double dt = time_.dt();
    std::vector<Eigen::VectorXd> y(time_.steps + 1);
    y[0] = y0;
    for (int k = 1; k <= time_.steps; ++k) y[k] = solve(k, y[k - 1] + dt * src[k]);
    return y;
}

std::vector<Eigen::VectorXd> LinearStepper::backward(const Eigen::VectorXd& pT,
                                                     const std::vector<Eigen::VectorXd>& g) const {
    const double dt = time_.dt();
    std::vector<Eigen::VectorXd> p(time_.steps + 1);
    p[time_.steps] = pT;
    for (int k = time_.steps; k >= 1; --k) p[k - 1] = solve(k, p[k] - dt * g[k]);
    return p;
}

Trajectory solve_uncontrolled(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                              const TimeGrid& tg, const Grid& grid, const NewtonOptions& options) {
    return solve_quasilinear_controlled(model, nullptr, y0, f, tg, grid,
                                        ScalarField::Zero(grid.node_count()), options);
}

Trajectory solve_quasilinear_controlled(const NonlinearityModel& model, const SpaceTimeField* u,
                                        const ScalarField& y0, const ScalarField& f, const TimeGrid& tg,
                                        const Grid& grid, const ScalarField& mask,
                                        const NewtonOptions& options) {
    const double dt = tg.dt();
    const SpMat lap = assemble_elliptic(ScalarField::Ones(grid.node_count()), grid).matrix;
    SpMat identity(grid.interior_count(), grid.interior_count());
    identity.setIdentity();
    const Eigen::VectorXd f_int = grid.restrict(f);
    const Eigen::VectorXd m_int = grid.restrict(mask);

    Trajectory out;
    out.state.time = tg;
    out.state.layers.assign(tg.steps + 1, ScalarField::Zero(grid.node_count()));
    out.state[0] = grid.extend(grid.restrict(y0));
    out.newton_iterations.assign(tg.steps + 1, 0);
    out.residuals.assign(tg.steps + 1, 0.0);

    // J = I - dt L D with D = diag(a'(y)) > 0; solve (D^{-1} - dt L) w = r, dy = D^{-1} w (symmetric)
    Eigen::SimplicialLDLT<SpMat> ldlt;
    bool analyzed = false;
    SpMat sym = identity - dt * lap;
    Eigen::VectorXd prev = grid.restrict(y0);
    for (int k = 1; k <= tg.steps; ++k) {
        Eigen::VectorXd rhs = prev + dt * f_int;
        if (u) rhs += dt * m_int.cwiseProduct(grid.restrict((*u)[k]));
        auto residual = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
            return y - dt * (lap * y.unaryExpr(model.a)) - rhs;
        };
        Eigen::VectorXd y = prev;
        Eigen::VectorXd r = residual(y);
        double rn = max_abs(r);
        const double tol = options.tolerance * (1.0 + max_abs(rhs));
        int it = 0;
        for (; it < options.max_iterations && rn > tol; ++it) {
            const Eigen::VectorXd slope = y.unaryExpr(model.da);
            if (!(slope.minCoeff() > 0.0) || !slope.allFinite()) {
                throw Error(ErrorKind::NewtonDiverged, "singular Newton matrix on layer " + std::to_string(k));
            }
            sym = -dt * lap;
            sym.diagonal() += slope.cwiseInverse();
            if (!analyzed) {
                ldlt.analyzePattern(sym);
                analyzed = true;
            }
            ldlt.factorize(sym);
            if (ldlt.info() != Eigen::Success) {
                throw Error(ErrorKind::NewtonDiverged, "singular Newton matrix on layer " + std::to_string(k));
            }
            const Eigen::VectorXd dy = ldlt.solve(r).cwiseQuotient(slope);
            double step = 1.0;
            bool accepted = false;
            for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
                Eigen::VectorXd trial = y - step * dy;
                Eigen::VectorXd rt = residual(trial);
                const double tn = max_abs(rt);
                if (std::isfinite(tn) && tn < rn) {
                    y = std::move(trial);
                    r = std::move(rt);
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
        }
        if (!(rn <= std::max(options.accept, tol))) {
            throw Error(ErrorKind::NewtonDiverged, "Newton failed on layer " + std::to_string(k) +
                                                       " with residual " + std::to_string(rn));
        }
        out.newton_iterations[k] = it;
        out.residuals[k] = rn;
        out.state[k] = grid.extend(y);
        prev = std::move(y);
    }
    return out;
}

Trajectory solve_linearized(const LinearStepper& stepper, const SpaceTimeField& u, const ScalarField& y0,
                            const ScalarField& f, const ScalarField& mask) {
    const Grid& grid = stepper.grid();
    const TimeGrid& tg = stepper.time();
    const Eigen::VectorXd f_int = grid.restrict(f);
    const Eigen::VectorXd m_int = grid.restrict(mask);
    std::vector<Eigen::VectorXd> src(tg.steps + 1);
    for (int k = 1; k <= tg.steps; ++k) src[k] = m_int.cwiseProduct(grid.restrict(u[k])) + f_int;
    const auto y = stepper.forward(grid.restrict(y0), src);
    Trajectory out;
    out.state.time = tg;
    out.newton_iterations.assign(tg.steps + 1, 0);
    out.residuals.assign(tg.steps + 1, 0.0);
    for (int k = 0; k <= tg.steps; ++k) {
        out.state.layers.push_back(grid.extend(y[k]));
        if (k > 0) {
            out.residuals[k] = max_abs(stepper.step_matrix(k) * y[k] - y[k - 1] - tg.dt() * src[k]);
        }
    }
    return out;
}

Trajectory solve_linearized(const NonlinearityModel& model, const SpaceTimeField& z, const SpaceTimeField& u,
                            const ScalarField& y0, const ScalarField& f, const TimeGrid& tg,
                            const Grid& grid, const ScalarField& mask) {
    const LinearStepper stepper(grid, tg, coefficients_from_state(grid, model, z));
    return solve_linearized(stepper, u, y0, f, mask);
}

AdjointTrajectory solve_adjoint(const LinearStepper& stepper, const SpaceTimeField& g, const ScalarField& pT) {
    const Grid& grid = stepper.grid();
    const TimeGrid& tg = stepper.time();
    std::vector<Eigen::VectorXd> g_int(tg.steps + 1);
    for (int k = 1; k <= tg.steps; ++k) g_int[k] = grid.restrict(g[k]);
    const auto p = stepper.backward(grid.restrict(pT), g_int);
    AdjointTrajectory out;
    out.terminal = pT;
    out.p.time = tg;
    for (int k = 0; k <= tg.steps; ++k) out.p.layers.push_back(grid.extend(p[k]));
    return out;
}

AdjointTrajectory solve_adjoint(const Grid& grid, const SpaceTimeField& b, const SpaceTimeField& g,
                                const ScalarField& pT, const TimeGrid& tg) {
    const LinearStepper stepper(grid, tg, coefficients_from_nodal(grid, b));
    return solve_adjoint(stepper, g, pT);
}

double duality_defect(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& src,
                      const SpaceTimeField& p, const SpaceTimeField& g) {
    const int K = y.steps();
    const double dt = y.time.dt();
    double sum = 0.0;
    for (int k = 1; k <= K; ++k) sum += dt * (inner(grid, src[k], p[k - 1]) + inner(grid, g[k], y[k]));
    return inner(grid, y[K], p[K]) - inner(grid, y[0], p[0]) - sum;
}

EnergyAudit energy_audit(const LinearStepper& stepper, const SpaceTimeField& p, const SpaceTimeField* g) {
    const Grid& grid = stepper.grid();
    const double dt = stepper.time().dt();
    const double vol = grid.cell_volume();
    EnergyAudit audit;
    for (int k = stepper.time().steps; k >= 1; --k) {
        const ScalarField& q = p[k - 1];
        double grad2 = 0.0;
        for (int a = 0; a < grid.dim(); ++a) {
            const int stride = stride_of(grid, a);
            for (int node = 0; node < grid.node_count(); ++node) {
                if (last_along(grid, node, a)) continue;
                const double d = (q[node + stride] - q[node]) / grid.h(a);
                grad2 += d * d * vol;
            }
        }
        const double mu = min_face_coefficient(stepper.coefficients().layers[k], grid);
        const double lhs = inner(grid, q, q) + 2.0 * mu * dt * grad2;
        double rhs = inner(grid, p[k], p[k]);
        if (g) rhs += 2.0 * dt * inner(grid, (*g)[k].cwiseAbs(), q.cwiseAbs());
        const double violation = (lhs - rhs) / std::max(1e-300, std::max(lhs, rhs));
        if (audit.worst_layer < 0 || violation > audit.max_violation) {
            audit.max_violation = violation;
            audit.worst_layer = k;
        }
    }
    audit.pass = audit.max_violation <= 1e-10;
    return audit;
}

}  // namespace qlc
