#include "qlcontrol/nonlinearity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace {

// a' of every catalog model is monotone in |y|, so its extremes on an interval sit at the
// endpoints or at 0.
std::pair<double, double> slope_bounds(const std::function<double(double)>& da, Interval r) {
    double lo = std::min(da(r.lo), da(r.hi));
    double hi = std::max(da(r.lo), da(r.hi));
    if (r.contains(0.0)) {
        lo = std::min(lo, da(0.0));
        hi = std::max(hi, da(0.0));
    }
    return {lo, hi};
}

/// C-infinity step from 1 (tau <= 0) to 0 (tau >= 1) and its first two antiderivatives,
/// tabulated once and evaluated by cubic Hermite interpolation.
class SmoothStep {
public:
    SmoothStep() {
        const int n = kSamples;
        s_.resize(n + 1);
        i1_.resize(n + 1);
        i2_.resize(n + 1);
        for (int j = 0; j <= n; ++j) s_[j] = step(static_cast<double>(j) / n);
        // Cumulative integrals, 8-point Gauss-Legendre per cell:
        // I1(a+h) = I1(a) + int_a^{a+h} S,  I2(a+h) = I2(a) + h I1(a) + int_a^{a+h} (a+h-x) S(x) dx.
        static constexpr std::array<double, 4> x{0.1834346424956498, 0.5255324099163290,
                                                 0.7966664774136267, 0.9602898564975363};
        static constexpr std::array<double, 4> w{0.3626837833783620, 0.3137066458778873,
                                                 0.2223810344533745, 0.1012285362903763};
        const double h = 1.0 / n;
        i1_[0] = 0.0;
        i2_[0] = 0.0;
        for (int j = 0; j < n; ++j) {
            const double a = j * h;
            double int_s = 0.0;
            double int_ramp = 0.0;
            for (int g = 0; g < 4; ++g) {
                for (double sign : {-1.0, 1.0}) {
                    const double t = 0.5 * h * (1.0 + sign * x[g]);
                    const double sv = step(a + t);
                    int_s += 0.5 * h * w[g] * sv;
                    int_ramp += 0.5 * h * w[g] * (h - t) * sv;
                }
            }
            i1_[j + 1] = i1_[j] + int_s;
            i2_[j + 1] = i2_[j] + h * i1_[j] + int_ramp;
        }
    }

    static double step(double tau) {
        if (tau <= 0.0) return 1.0;
        if (tau >= 1.0) return 0.0;
        const double a = std::exp(-1.0 / tau);
        const double b = std::exp(-1.0 / (1.0 - tau));
        return b / (a + b);
    }

    double value(double tau) const { return step(tau); }
    /// integral_0^tau S, for tau >= 0.
    double first(double tau) const {
        if (tau >= 1.0) return i1_.back();
        return hermite(tau, i1_, s_);
    }
    /// integral_0^tau integral_0^sigma S, for tau >= 0.
    double second(double tau) const {
        if (tau >= 1.0) return i2_.back() + i1_.back() * (tau - 1.0);
        return hermite(tau, i2_, i1_);
    }
    double mass() const { return i1_.back(); }

private:
    static constexpr int kSamples = 4096;

    static double hermite(double tau, const std::vector<double>& f, const std::vector<double>& df) {
        const int n = static_cast<int>(f.size()) - 1;
        const double pos = std::clamp(tau, 0.0, 1.0) * n;
        const int j = std::min(static_cast<int>(pos), n - 1);
        const double t = pos - j;
        const double h = 1.0 / n;
        const double h00 = 2 * t * t * t - 3 * t * t + 1;
        const double h10 = t * t * t - 2 * t * t + t;
        const double h01 = -2 * t * t * t + 3 * t * t;
        const double h11 = t * t * t - t * t;
        return h00 * f[j] + h10 * h * df[j] + h01 * f[j + 1] + h11 * h * df[j + 1];
    }

    std::vector<double> s_, i1_, i2_;
};

const SmoothStep& smooth_step() {
    static const SmoothStep table;
    return table;
}

}  // namespace

double NonlinearityModel::inverse(double w) const {
    double lo = -1.0, hi = 1.0;
    for (int expand = 0; a(lo) > w; ++expand) {
        lo *= 2.0;
        if (expand > 60) throw Error(ErrorKind::NewtonDiverged, "cannot bracket a^{-1}");
    }
    for (int expand = 0; a(hi) < w; ++expand) {
        hi *= 2.0;
        if (expand > 60) throw Error(ErrorKind::NewtonDiverged, "cannot bracket a^{-1}");
    }
    double y = std::clamp(w / std::max(da(0.0), 1e-300), lo, hi);
    const double tol = 1e-15 * (1.0 + std::abs(w));
    for (int it = 0; it < 50; ++it) {
        const double r = a(y) - w;
        if (std::abs(r) <= tol) return y;
        if (r > 0) {
            hi = y;
        } else {
            lo = y;
        }
        double next = y - r / da(y);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == y || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(y))) {
            return next;
        }
        y = next;
    }
    throw Error(ErrorKind::NewtonDiverged, "scalar inversion of a did not converge in 50 iterations");
}

NonlinearityModel NonlinearityModel::make_linear(double c, Interval range) {
    if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "linear model needs c > 0");
    NonlinearityModel m;
    m.name = "linear";
    m.a = [c](double y) { return c * y; };
    m.da = [c](double) { return c; };
    m.dda = [](double) { return 0.0; };
    m.valid_range = range;
    m.mu = c;
    m.M_bound = c;
    m.linear = true;
    return m;
}

NonlinearityModel NonlinearityModel::make_cubic(double beta, Interval range) {
    if (!(beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "cubic model needs beta >= 0");
    NonlinearityModel m;
    m.name = "cubic";
    m.a = [beta](double y) { return y + beta * y * y * y; };
    m.da = [beta](double y) { return 1.0 + 3.0 * beta * y * y; };
    m.dda = [beta](double y) { return 6.0 * beta * y; };
    m.valid_range = range;
    std::tie(m.mu, m.M_bound) = slope_bounds(m.da, range);
    m.linear = beta == 0.0;
    return m;
}

NonlinearityModel NonlinearityModel::make_porous(double mexp, double eps, Interval range) {
    if (!(mexp >= 1.0) || !(eps > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "porous model needs m >= 1 and eps > 0");
    }
    const double k = 0.5 * (mexp - 1.0);
    const double e2 = eps * eps;
    NonlinearityModel m;
    m.name = "porous";
    m.a = [k, e2](double y) { return std::pow(y * y + e2, k) * y; };
    m.da = [k, e2, mexp](double y) {
        const double r = y * y + e2;
        return std::pow(r, k - 1.0) * (mexp * y * y + e2);
    };
    m.dda = [k, e2, mexp](double y) {
        const double r = y * y + e2;
        return 2.0 * y * std::pow(r, k - 2.0) * ((k - 1.0) * (mexp * y * y + e2) + mexp * r);
    };
    m.valid_range = range;
    std::tie(m.mu, m.M_bound) = slope_bounds(m.da, range);
    m.linear = mexp == 1.0;
    return m;
}

NonlinearityModel globalize(const NonlinearityModel& model, Interval interval) {
    if (!(interval.lo < interval.hi) || interval.lo < model.valid_range.lo ||
        interval.hi > model.valid_range.hi) {
        throw Error(ErrorKind::IntervalOutsideRange, "globalization interval outside the model's valid range");
    }
    if (model.linear) return model;

    // captured by pointer: the std::function objects get copied a lot
    const SmoothStep* steps = &smooth_step();
    const auto& table = *steps;
    const auto base = std::make_shared<const NonlinearityModel>(model);
    const double lo = interval.lo;
    const double hi = interval.hi;
    const double a_lo = model.a(lo), a_hi = model.a(hi);
    const double d_lo = model.da(lo), d_hi = model.da(hi);
    const double c_lo = model.dda(lo), c_hi = model.dda(hi);

    const auto inner = slope_bounds(model.da, interval);
    double delta = 0.1 * interval.length();
    double far_lo = 0.0, far_hi = 0.0;
    for (int halving = 0;; ++halving) {
        far_lo = d_lo - c_lo * delta * table.mass();
        far_hi = d_hi + c_hi * delta * table.mass();
        if (std::min(far_lo, far_hi) > 0.0) break;
        if (halving > 60) throw Error(ErrorKind::InvalidArgument, "cannot keep A' positive");
        delta *= 0.5;
    }

    NonlinearityModel g;
    g.name = model.name + "-globalized";
    g.valid_range = {-kInf, kInf};
    g.mu = std::min({inner.first, far_lo, far_hi});
    g.M_bound = std::max({inner.second, far_lo, far_hi});
    g.linear = false;
    // Outside the interval: A'' = a''(edge) chi, A' and A integrate it from the edge.
    g.a = [=, &table = *steps](double y) {
        if (y < lo) {
            const double d = lo - y;
            return a_lo - d_lo * d + c_lo * delta * delta * table.second(d / delta);
        }
        if (y > hi) {
            const double d = y - hi;
            return a_hi + d_hi * d + c_hi * delta * delta * table.second(d / delta);
        }
        return base->a(y);
    };
    g.da = [=, &table = *steps](double y) {
        if (y < lo) return d_lo - c_lo * delta * table.first((lo - y) / delta);
        if (y > hi) return d_hi + c_hi * delta * table.first((y - hi) / delta);
        return base->da(y);
    };
    g.dda = [=, &table = *steps](double y) {
        if (y < lo) return c_lo * table.value((lo - y) / delta);
        if (y > hi) return c_hi * table.value((y - hi) / delta);
        return base->dda(y);
    };
    return g;
}

ScalarField laplacian_of_a(const Grid& grid, const NonlinearityModel& model, const ScalarField& field) {
    const auto& dom = grid.domain();
    ScalarField w = field.unaryExpr(model.a);
    for (int node : grid.boundary_nodes()) w[node] = 0.0;
    ScalarField out = ScalarField::Zero(grid.node_count());
    for (int node : grid.interior_nodes()) {
        double sum = 0.0;
        for (int a = 0; a < grid.dim(); ++a) {
            const int stride = a == 0 ? 1 : dom.nodes(0);
            sum += (w[node + stride] - 2.0 * w[node] + w[node - stride]) / (grid.h(a) * grid.h(a));
        }
        out[node] = sum;
    }
    return out;
}

StationaryState solve_stationary(const NonlinearityModel& model, const ScalarField& f, const Grid& grid) {
    if (!f.allFinite()) throw Error(ErrorKind::InvalidArgument, "forcing must be finite");
    const auto lap = assemble_elliptic(ScalarField::Ones(grid.node_count()), grid);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(-lap.matrix);
    const Eigen::VectorXd w = solver.solve(grid.restrict(f));
    StationaryState state;
    state.f = f;
    state.y_s = ScalarField::Zero(grid.node_count());
    for (int i = 0; i < grid.interior_count(); ++i) {
        state.y_s[grid.interior_nodes()[i]] = model.inverse(w[i]);
    }
    const Eigen::VectorXd residual =
        grid.restrict(laplacian_of_a(grid, model, state.y_s)) + grid.restrict(f);
    state.residual_norm = lq_norm(grid, grid.extend(residual), 2.0);
    return state;
}

ScalarField manufactured_forcing(const NonlinearityModel& model, const ScalarField& y_s, const Grid& grid) {
    return -laplacian_of_a(grid, model, y_s);
}

}  // namespace qlc
