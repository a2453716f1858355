#include "qlcontrol/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "qlcontrol/error.hpp"

namespace qlc {

namespace {

constexpr int kMinNodes = 8;

void check_axis(const Interval& b, int n) {
    if (!(b.lo < b.hi)) throw Error(ErrorKind::InvalidArgument, "axis bounds must satisfy lo < hi");
    if (n < kMinNodes) throw Error(ErrorKind::GridTooCoarse, "each axis needs at least 8 nodes");
}

// 1 - (1 - xi)^3 on [0,1]: increasing, vanishing first and second derivative at xi = 1.
double rising_cubic(double xi) { return 1.0 - (1.0 - xi) * (1.0 - xi) * (1.0 - xi); }
double rising_cubic_d(double xi) { return 3.0 * (1.0 - xi) * (1.0 - xi); }

}  // namespace

SpatialDomain::SpatialDomain(Kind kind, std::vector<Interval> bounds, std::vector<int> nodes)
    : kind_(kind), bounds_(std::move(bounds)), nodes_(std::move(nodes)) {
    for (std::size_t a = 0; a < bounds_.size(); ++a) check_axis(bounds_[a], nodes_[a]);
}

SpatialDomain SpatialDomain::interval(Interval x, int nodes) {
    return SpatialDomain(Kind::interval, {x}, {nodes});
}

SpatialDomain SpatialDomain::rectangle(Interval x, Interval y, int nx, int ny) {
    return SpatialDomain(Kind::rectangle, {x, y}, {nx, ny});
}

int SpatialDomain::node_count() const {
    int n = 1;
    for (int c : nodes_) n *= c;
    return n;
}

double SpatialDomain::spacing(int axis) const {
    return bounds_.at(axis).length() / (nodes_.at(axis) - 1);
}

std::array<int, 2> SpatialDomain::multi_index(int node) const {
    if (dim() == 1) return {node, 0};
    return {node % nodes_[0], node / nodes_[0]};
}

double SpatialDomain::coordinate(int node, int axis) const {
    const auto idx = multi_index(node);
    const int i = idx[axis];
    if (i == nodes_[axis] - 1) return bounds_[axis].hi;
    return bounds_[axis].lo + i * spacing(axis);
}

bool SpatialDomain::is_boundary(int node) const {
    const auto idx = multi_index(node);
    for (int a = 0; a < dim(); ++a) {
        if (idx[a] == 0 || idx[a] == nodes_[a] - 1) return true;
    }
    return false;
}

bool ControlRegion::in_omega0(const SpatialDomain& domain, int node) const {
    for (int a = 0; a < domain.dim(); ++a) {
        if (!omega0[a].contains(domain.coordinate(node, a))) return false;
    }
    return true;
}

ControlRegion make_control_region(const SpatialDomain& domain, std::vector<Interval> omega,
                                  std::vector<Interval> omega0) {
    const int dim = domain.dim();
    if (static_cast<int>(omega.size()) != dim || static_cast<int>(omega0.size()) != dim) {
        throw Error(ErrorKind::InvalidArgument, "control region dimension does not match domain");
    }
    for (int a = 0; a < dim; ++a) {
        const Interval& dom = domain.bounds(a);
        const double h = domain.spacing(a);
        if (!(omega[a].lo < omega[a].hi) || !(omega0[a].lo < omega0[a].hi)) {
            throw Error(ErrorKind::InvalidArgument, "control intervals must satisfy lo < hi");
        }
        if (!(dom.lo < omega[a].lo && omega[a].hi < dom.hi)) {
            throw Error(ErrorKind::InvalidArgument, "omega must lie strictly inside the domain");
        }
        if (!(omega[a].lo < omega0[a].lo && omega0[a].hi < omega[a].hi)) {
            throw Error(ErrorKind::InvalidArgument, "omega0 must lie strictly inside omega");
        }
        const double slack = 1e-12 * dom.length();
        if (omega[a].lo - dom.lo < h - slack || dom.hi - omega[a].hi < h - slack ||
            omega0[a].lo - omega[a].lo < h - slack || omega[a].hi - omega0[a].hi < h - slack) {
            throw Error(ErrorKind::GridTooCoarse,
                        "strict inclusions omega0 in omega in domain need at least one grid cell");
        }
    }
    ControlRegion region{std::move(omega), std::move(omega0), {}};
    region.indicator = Eigen::VectorXd::Zero(domain.node_count());
    int inside0 = 0;
    for (int node = 0; node < domain.node_count(); ++node) {
        bool inside = true;
        for (int a = 0; a < dim; ++a) inside = inside && region.omega[a].contains(domain.coordinate(node, a));
        region.indicator[node] = inside ? 1.0 : 0.0;
        if (region.in_omega0(domain, node)) ++inside0;
    }
    if (inside0 == 0) throw Error(ErrorKind::GridTooCoarse, "no grid node falls inside omega0");
    return region;
}

double WeightFunctionPsi::grad_norm(int node) const {
    double sq = 0.0;
    for (const auto& g : grad) sq += g[node] * g[node];
    return std::sqrt(sq);
}

WeightFunctionPsi WeightFunctionPsi::from_function(const SpatialDomain& domain, const ValueFn& value,
                                                   const GradFn& gradient, std::string description) {
    const int n = domain.node_count();
    WeightFunctionPsi psi;
    psi.description = std::move(description);
    psi.values.resize(n);
    psi.grad.assign(domain.dim(), Eigen::VectorXd(n));
    for (int node = 0; node < n; ++node) {
        std::array<double, 2> x{domain.coordinate(node, 0),
                                domain.dim() > 1 ? domain.coordinate(node, 1) : 0.0};
        psi.values[node] = domain.is_boundary(node) ? 0.0 : value(x);
        const auto g = gradient(x);
        for (int a = 0; a < domain.dim(); ++a) psi.grad[a][node] = g[a];
    }
    psi.sup_norm = psi.values.cwiseAbs().maxCoeff();
    return psi;
}

WeightFunctionPsi WeightFunctionPsi::from_samples(const SpatialDomain& domain, Eigen::VectorXd values,
                                                  std::string description) {
    const int n = domain.node_count();
    WeightFunctionPsi psi;
    psi.description = std::move(description);
    psi.values = std::move(values);
    psi.grad.assign(domain.dim(), Eigen::VectorXd::Zero(n));
    for (int node = 0; node < n; ++node) {
        const auto idx = domain.multi_index(node);
        for (int a = 0; a < domain.dim(); ++a) {
            const int stride = a == 0 ? 1 : domain.nodes(0);
            const double h = domain.spacing(a);
            const int i = idx[a];
            const int last = domain.nodes(a) - 1;
            if (i == 0) {
                psi.grad[a][node] = (psi.values[node + stride] - psi.values[node]) / h;
            } else if (i == last) {
                psi.grad[a][node] = (psi.values[node] - psi.values[node - stride]) / h;
            } else {
                psi.grad[a][node] = (psi.values[node + stride] - psi.values[node - stride]) / (2 * h);
            }
        }
    }
    psi.sup_norm = psi.values.cwiseAbs().maxCoeff();
    return psi;
}

WeightFunctionPsi construct_psi(const SpatialDomain& domain, const ControlRegion& region) {
    constexpr double pi = std::numbers::pi;
    const int dim = domain.dim();
    bool centered = true;
    for (int a = 0; a < dim; ++a) {
        const double c = domain.bounds(a).center();
        centered = centered && region.omega0[a].lo < c && c < region.omega0[a].hi;
    }

    if (centered) {
        std::vector<Interval> b;
        for (int a = 0; a < dim; ++a) b.push_back(domain.bounds(a));
        auto value = [b, dim](const std::array<double, 2>& x) {
            double v = 1.0;
            for (int a = 0; a < dim; ++a) v *= std::sin(pi * (x[a] - b[a].lo) / b[a].length());
            return v;
        };
        auto grad = [b, dim](const std::array<double, 2>& x) {
            std::array<double, 2> s{}, c{}, g{};
            for (int a = 0; a < dim; ++a) {
                const double arg = pi * (x[a] - b[a].lo) / b[a].length();
                s[a] = std::sin(arg);
                c[a] = std::cos(arg) * pi / b[a].length();
            }
            for (int a = 0; a < dim; ++a) {
                g[a] = c[a];
                for (int o = 0; o < dim; ++o) {
                    if (o != a) g[a] *= s[o];
                }
            }
            return g;
        };
        auto psi = WeightFunctionPsi::from_function(domain, value, grad,
                                                    dim == 1 ? "sine" : "sine-product");
        const auto report = verify_psi(domain, psi, region);
        if (!report.pass) throw Error(ErrorKind::GridTooCoarse, "sampled psi fails its invariants");
        return psi;
    }

    if (dim != 1) {
        throw Error(ErrorKind::RegionUnsupported,
                    "two-dimensional omega0 must contain the domain center");
    }

    // Off-center interval: two cubic pieces rising to 1 at the omega0 midpoint, matched to C^2.
    const Interval b = domain.bounds(0);
    const double peak = (region.omega0[0].center() - b.lo) / b.length();
    auto value = [b, peak](const std::array<double, 2>& x) {
        const double xi = (x[0] - b.lo) / b.length();
        if (xi <= peak) return rising_cubic(xi / peak);
        return rising_cubic((1.0 - xi) / (1.0 - peak));
    };
    auto grad = [b, peak](const std::array<double, 2>& x) {
        const double xi = (x[0] - b.lo) / b.length();
        double g = 0.0;
        if (xi <= peak) {
            g = rising_cubic_d(xi / peak) / peak;
        } else {
            g = -rising_cubic_d((1.0 - xi) / (1.0 - peak)) / (1.0 - peak);
        }
        return std::array<double, 2>{g / b.length(), 0.0};
    };
    auto psi = WeightFunctionPsi::from_function(domain, value, grad, "piecewise-cubic");
    const auto report = verify_psi(domain, psi, region);
    if (!report.pass) throw Error(ErrorKind::GridTooCoarse, "sampled psi fails its invariants");
    return psi;
}

PsiReport verify_psi(const SpatialDomain& domain, const WeightFunctionPsi& psi,
                     const ControlRegion& region) {
    PsiReport report;
    report.min_interior_value = std::numeric_limits<double>::infinity();
    report.min_grad_outside_omega0 = std::numeric_limits<double>::infinity();
    for (int node = 0; node < domain.node_count(); ++node) {
        if (domain.is_boundary(node)) {
            report.max_boundary_abs = std::max(report.max_boundary_abs, std::abs(psi.values[node]));
            continue;
        }
        report.min_interior_value = std::min(report.min_interior_value, psi.values[node]);
        if (!region.in_omega0(domain, node)) {
            report.min_grad_outside_omega0 =
                std::min(report.min_grad_outside_omega0, psi.grad_norm(node));
        }
    }
    report.pass = report.min_interior_value > 0.0 && report.min_grad_outside_omega0 > 0.0 &&
                  report.max_boundary_abs == 0.0;
    return report;
}

CarlemanParameters make_carleman_parameters(double lambda, double s, double horizon,
                                            const WeightFunctionPsi& psi, bool proof_regime) {
    if (!(lambda >= 0.0) || !(s > 0.0) || !(horizon > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "Carleman parameters need lambda >= 0, s > 0, T > 0");
    }
    CarlemanParameters p;
    p.lambda = lambda;
    p.s = s;
    p.horizon = horizon;
    p.eta = std::exp(-lambda * psi.sup_norm);
    p.gamma = std::exp(2.0 * lambda * psi.sup_norm);
    p.proof_regime = proof_regime;
    if (proof_regime && s < p.gamma) {
        throw Error(ErrorKind::InvalidArgument, "proof regime requires s >= exp(2 lambda |psi|)");
    }
    return p;
}

double WeightFields::exp_clamped(double x) const {
    return std::exp(std::clamp(x, -clamp_exponent, clamp_exponent));
}

Eigen::VectorXd WeightFields::control_cost_weight(int layer, double s) const {
    const auto& a = alpha[layer];
    const auto& p = phi[layer];
    Eigen::VectorXd w(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) w[i] = exp_clamped(-2.0 * s * a[i]) / (p[i] * p[i] * p[i]);
    return w;
}

Eigen::VectorXd WeightFields::tracking_weight(int layer, double s) const {
    const auto& a = alpha[layer];
    Eigen::VectorXd w(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) w[i] = exp_clamped(-2.0 * s * a[i]);
    return w;
}

Eigen::VectorXd WeightFields::power_weight(int layer, double c, int i) const {
    const auto& a = alpha[layer];
    const auto& p = phi[layer];
    Eigen::VectorXd w(a.size());
    for (Eigen::Index n = 0; n < a.size(); ++n) w[n] = exp_clamped(c * a[n]) * std::pow(p[n], -i);
    return w;
}

WeightFields evaluate_weights(const WeightFunctionPsi& psi, const CarlemanParameters& params,
                              const std::vector<double>& time_nodes) {
    const double T = params.horizon;
    const double lambda = params.lambda;
    WeightFields w;
    w.times = time_nodes;
    const Eigen::Index n = psi.values.size();
    // Rounding-monotone forms: alpha0 <= alpha <= alpha0 (1 - eta), phi0 <= phi <= phi0 / eta
    // hold exactly in floating point, not just up to a tolerance.
    Eigen::VectorXd rise(n), fall(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rise[i] = std::exp(lambda * psi.values[i]);
        fall[i] = std::exp(-lambda * psi.values[i]);
    }
    for (double t : time_nodes) {
        if (!(t > 0.0 && t < T)) {
            throw Error(ErrorKind::TimeNodeOnBoundary, "weight time node outside (0, T)");
        }
        const double phi0 = 1.0 / (t * (T - t));
        Eigen::VectorXd alpha(n), phi(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            alpha[i] = (rise[i] - params.gamma) * phi0;
            phi[i] = phi0 / fall[i];
        }
        w.alpha.push_back(std::move(alpha));
        w.phi.push_back(std::move(phi));
        w.alpha0.push_back((1.0 - params.gamma) * phi0);
        w.phi0.push_back(phi0);
    }
    return w;
}

void write_weights_csv(std::ostream& out, const SpatialDomain& domain, const WeightFields& weights) {
    out << (domain.dim() == 1 ? "t,x,alpha,phi,alpha0,phi0\n" : "t,x,y,alpha,phi,alpha0,phi0\n");
    out.precision(17);
    for (int k = 0; k < weights.layers(); ++k) {
        for (int node = 0; node < domain.node_count(); ++node) {
            out << weights.times[k] << ',' << domain.coordinate(node, 0) << ',';
            if (domain.dim() > 1) out << domain.coordinate(node, 1) << ',';
            out << weights.alpha[k][node] << ',' << weights.phi[k][node] << ','
                << weights.alpha0[k] << ',' << weights.phi0[k] << '\n';
        }
    }
}

}  // namespace qlc
