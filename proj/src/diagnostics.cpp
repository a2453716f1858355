#include "qlcontrol/diagnostics.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "qlcontrol/error.hpp"

namespace qlc {

ScalarField random_smooth_field(const Grid& grid, std::uint64_t seed, int modes) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& dom = grid.domain();
    const int my = grid.dim() > 1 ? modes : 1;
    std::vector<double> coeff;
    for (int l = 1; l <= my; ++l) {
        for (int j = 1; j <= modes; ++j) {
            const double decay = grid.dim() > 1 ? 1.0 / (j * j + l * l) : 1.0 / (j * j);
            coeff.push_back(normal(rng) * decay);
        }
    }
    ScalarField out = ScalarField::Zero(grid.node_count());
    for (int node = 0; node < grid.node_count(); ++node) {
        if (dom.is_boundary(node)) continue;
        const double xi = (dom.coordinate(node, 0) - dom.bounds(0).lo) / dom.bounds(0).length();
        const double eta =
            grid.dim() > 1 ? (dom.coordinate(node, 1) - dom.bounds(1).lo) / dom.bounds(1).length() : 0.5;
        double v = 0.0;
        std::size_t c = 0;
        for (int l = 1; l <= my; ++l) {
            const double sy = grid.dim() > 1 ? std::sin(l * std::numbers::pi * eta) : 1.0;
            for (int j = 1; j <= modes; ++j) v += coeff[c++] * std::sin(j * std::numbers::pi * xi) * sy;
        }
        out[node] = v;
    }
    return out;
}

double coefficient_zeta(const Grid& grid, const SpaceTimeField& b) {
    const double dt = b.time.dt();
    const double n = grid.dim();
    double bt = 0.0, gb = 0.0;
    for (int k = 0; k <= b.steps(); ++k) {
        if (k > 0) bt = std::max(bt, lq_norm(grid, (b[k] - b[k - 1]) / dt, n));
        gb = std::max(gb, gradient_magnitude(grid, b[k]).maxCoeff());
    }
    return bt + gb;
}

namespace {

struct WeightedIntegrals {
    double full_p = 0.0;     // int e^{2 s alpha} s^3 l^3 phi^3 p^2
    double full_grad = 0.0;  // int e^{2 s alpha} s l phi |grad p|^2
    double omega_p = 0.0;    // int_omega e^{2 s alpha} phi^3 p^2
    double source = 0.0;     // int e^{2 s alpha} g^2
};

WeightedIntegrals weighted_integrals(const Grid& grid, const SpaceTimeField& p, const SpaceTimeField* g,
                                     const WeightFields& weights, const CarlemanParameters& params,
                                     const ControlRegion& region) {
    WeightedIntegrals w;
    const double dt = p.time.dt();
    const double s = params.s, l = params.lambda;
    const auto& quad = grid.quadrature();
    for (int k = 1; k <= p.steps(); ++k) {
        const auto& a = weights.alpha[k - 1];
        const auto& ph = weights.phi[k - 1];
        const ScalarField& q = p[k - 1];
        const ScalarField grad = gradient_magnitude(grid, q);
        for (int node = 0; node < grid.node_count(); ++node) {
            const double e = weights.exp_clamped(2.0 * s * a[node]);
            const double phi3 = ph[node] * ph[node] * ph[node];
            const double wq = dt * quad[node] * e;
            w.full_p += wq * params.s3l3() * phi3 * q[node] * q[node];
            w.full_grad += wq * s * l * ph[node] * grad[node] * grad[node];
            w.omega_p += wq * region.indicator[node] * phi3 * q[node] * q[node];
            if (g) w.source += wq * (*g)[k][node] * (*g)[k][node];
        }
    }
    return w;
}

}  // namespace

CarlemanSummary carleman_check(const Grid& grid, const SpaceTimeField& b, const WeightFields& weights,
                               const CarlemanParameters& params, const ControlRegion& region,
                               const SampleOptions& options) {
    const TimeGrid& tg = b.time;
    const LinearStepper stepper(grid, tg, coefficients_from_nodal(grid, b));
    CarlemanSummary summary;
    summary.zeta = coefficient_zeta(grid, b);
    for (int i = 0; i < options.samples; ++i) {
        const std::uint64_t base = options.seed * 1000003ULL + 3ULL * static_cast<std::uint64_t>(i);
        SpaceTimeField g = SpaceTimeField::zeros(grid, tg);
        ScalarField pT = ScalarField::Zero(grid.node_count());
        if (!options.zero_data) {
            pT = random_smooth_field(grid, base);
            if (options.with_source) {
                const ScalarField g1 = random_smooth_field(grid, base + 1);
                const ScalarField g2 = random_smooth_field(grid, base + 2);
                for (int k = 1; k <= tg.steps; ++k) {
                    g[k] = g1 + std::cos(std::numbers::pi * tg.midpoint(k) / tg.horizon) * g2;
                }
            }
        }
        const AdjointTrajectory adj = solve_adjoint(stepper, g, pT);
        const EnergyAudit audit = energy_audit(stepper, adj.p, &g);
        summary.energy_violation = std::max(summary.energy_violation, audit.max_violation);
        const WeightedIntegrals w = weighted_integrals(grid, adj.p, &g, weights, params, region);
        CarlemanReport r;
        r.sample = i;
        r.lhs = w.full_p + w.full_grad;
        r.rhs_control = params.s3l3() * w.omega_p;
        r.rhs_source = w.source;
        r.zeta = summary.zeta;
        r.degenerate = r.lhs == 0.0;
        const double denom = r.rhs_control * (1.0 + r.zeta) + r.rhs_source;
        r.empirical_C = r.degenerate ? 0.0 : r.lhs / denom;
        r.descriptor = options.zero_data ? "zero data" : (options.with_source ? "random pT, g" : "random pT");
        summary.max_C = std::max(summary.max_C, r.empirical_C);
        summary.reports.push_back(std::move(r));
    }
    return summary;
}

ObservabilitySummary observability_check(const Grid& grid, const SpaceTimeField& b, const WeightFields& weights,
                                         const CarlemanParameters& params, const ControlRegion& region,
                                         const SampleOptions& options, const ScalarField* pT_given) {
    const TimeGrid& tg = b.time;
    const LinearStepper stepper(grid, tg, coefficients_from_nodal(grid, b));
    ObservabilitySummary summary;
    summary.zeta = coefficient_zeta(grid, b);
    const SpaceTimeField g = SpaceTimeField::zeros(grid, tg);
    const int count = pT_given ? 1 : options.samples;
    for (int i = 0; i < count; ++i) {
        ScalarField pT = ScalarField::Zero(grid.node_count());
        if (pT_given) {
            pT = *pT_given;
        } else if (!options.zero_data) {
            pT = random_smooth_field(grid, options.seed * 1000003ULL + 7919ULL * static_cast<std::uint64_t>(i + 1));
        }
        const AdjointTrajectory adj = solve_adjoint(stepper, g, pT);
        const EnergyAudit audit = energy_audit(stepper, adj.p, nullptr);
        summary.energy_violation = std::max(summary.energy_violation, audit.max_violation);
        const WeightedIntegrals w = weighted_integrals(grid, adj.p, nullptr, weights, params, region);
        ObservabilityReport r;
        r.sample = i;
        r.initial_energy = inner(grid, adj.p[0], adj.p[0]);
        const int half = tg.steps / 2;
        for (int k = 1; k <= half; ++k) r.first_half_energy += tg.dt() * inner(grid, adj.p[k - 1], adj.p[k - 1]);
        r.observed = w.omega_p;
        r.degenerate = r.initial_energy == 0.0 && r.observed == 0.0;
        if (!r.degenerate) {
            r.constant_initial = r.initial_energy / ((1.0 + summary.zeta) * r.observed);
            r.constant_first_half = r.first_half_energy / ((1.0 + summary.zeta) * r.observed);
        }
        summary.max_constant_initial = std::max(summary.max_constant_initial, r.constant_initial);
        summary.max_constant_first_half = std::max(summary.max_constant_first_half, r.constant_first_half);
        summary.reports.push_back(r);
    }
    return summary;
}

PowerFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (lx.size() < 3) throw Error(ErrorKind::FitDegenerate, "power-law fit needs at least 3 positive points");
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) throw Error(ErrorKind::FitDegenerate, "power-law fit needs distinct abscissae");
    PowerFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.points = static_cast<int>(lx.size());
    return fit;
}

SmoothingResult smoothing_scan(const NonlinearityModel& model, const Grid& grid, const ScalarField& y_s,
                               const ScalarField& f, const std::vector<double>& sizes,
                               const SmoothingOptions& options) {
    const TimeGrid tg = TimeGrid::make(options.horizon, options.steps);
    const auto& dom = grid.domain();
    // Rough reference profile: a hat with a kink at its apex.
    auto hat = [&](double x, double c, double w) { return std::max(0.0, 1.0 - std::abs(x - c) / w); };
    SmoothingResult result;
    std::vector<double> norms, measures, stationarity;
    for (double r : sizes) {
        ScalarField d = ScalarField::Zero(grid.node_count());
        for (int node = 0; node < grid.node_count(); ++node) {
            if (dom.is_boundary(node)) continue;
            double v = 1.0;
            for (int a = 0; a < grid.dim(); ++a) {
                const double x = (dom.coordinate(node, a) - dom.bounds(a).lo) / dom.bounds(a).length();
                v *= options.family == SmoothingFamily::amplitude ? hat(x, options.center, 0.2)
                                                                  : hat(x, options.center, r);
            }
            d[node] = options.family == SmoothingFamily::amplitude ? r * v : options.height * v;
        }
        SmoothingPoint pt;
        pt.parameter = r;
        pt.data_norm = lq_norm(grid, d, 2.0);
        if (pt.data_norm > 0.0) {
            const Trajectory Y = solve_uncontrolled(model, y_s + d, f, tg, grid);
            for (int k = 1; k <= tg.steps; ++k) {
                const ScalarField rate = (Y.state[k] - Y.state[k - 1]) * (tg.time(k) / tg.dt());
                pt.measure = std::max(pt.measure, lq_norm(grid, rate, options.q));
            }
            pt.stationarity = lq_norm(grid, laplacian_of_a(grid, model, Y.state[tg.steps]) + f, options.q);
        }
        norms.push_back(pt.data_norm);
        measures.push_back(pt.measure);
        stationarity.push_back(pt.stationarity);
        result.points.push_back(pt);
    }
    result.fit = fit_power_law(norms, measures);
    result.stationarity_fit = fit_power_law(norms, stationarity);
    return result;
}

EstimateReport theorem_estimates(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& u,
                                 const ScalarField& y_s, const WeightFields& weights,
                                 const CarlemanParameters& params, double q) {
    const int K = y.steps();
    const double dt = y.time.dt();
    EstimateReport r;
    r.q = q;
    for (int k = 1; k <= K; ++k) {
        const double w = weights.exp_clamped(-params.s * weights.alpha0[k - 1]);
        r.control_norm = std::max(r.control_norm, w * u[k].cwiseAbs().maxCoeff());
    }
    double sup_lq = 0.0, sup_rate = 0.0, sup_grad = 0.0;
    ScalarField prev = ScalarField::Zero(grid.node_count());
    for (int k = 0; k <= K; ++k) {
        const ScalarField cur = y.time.time(k) * (y[k] - y_s);
        sup_lq = std::max(sup_lq, lq_norm(grid, cur, q));
        sup_grad = std::max(sup_grad, gradient_magnitude(grid, cur).maxCoeff());
        if (k > 0) sup_rate = std::max(sup_rate, lq_norm(grid, (cur - prev) / dt, q));
        prev = cur;
    }
    r.time_weighted_norm = sup_lq + sup_rate + sup_grad;
    for (int k = K / 2; k <= K; ++k) {
        const int cell = std::max(k, 1);
        const double w = weights.exp_clamped(-params.s * weights.alpha0[cell - 1]);
        r.terminal_weighted_norm = std::max(r.terminal_weighted_norm, w * lq_norm(grid, y[k] - y_s, q));
    }
    for (int k = 0; k <= K; ++k) r.sup_deviation = std::max(r.sup_deviation, (y[k] - y_s).cwiseAbs().maxCoeff());
    r.data_l2 = lq_norm(grid, y[0] - y_s, 2.0);
    r.data_sup = lq_norm(grid, y[0] - y_s, kInf);
    r.driver = std::pow(r.data_l2, 2.0 / q);
    return r;
}

}  // namespace qlc
