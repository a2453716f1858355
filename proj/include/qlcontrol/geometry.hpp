#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace qlc {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    double length() const { return hi - lo; }
    double center() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Tensor-product box in one or two dimensions, sampled on a uniform node lattice.
/// Nodes are numbered with the first axis fastest.
class SpatialDomain {
public:
    enum class Kind { interval, rectangle };

    static SpatialDomain interval(Interval x, int nodes);
    static SpatialDomain rectangle(Interval x, Interval y, int nx, int ny);

    Kind kind() const { return kind_; }
    int dim() const { return static_cast<int>(bounds_.size()); }
    const Interval& bounds(int axis) const { return bounds_.at(axis); }
    int nodes(int axis) const { return nodes_.at(axis); }
    int node_count() const;
    double spacing(int axis) const;

    int node_index(int i, int j = 0) const { return i + nodes_[0] * j; }
    std::array<int, 2> multi_index(int node) const;
    double coordinate(int node, int axis) const;
    bool is_boundary(int node) const;

private:
    SpatialDomain(Kind kind, std::vector<Interval> bounds, std::vector<int> nodes);

    Kind kind_;
    std::vector<Interval> bounds_;
    std::vector<int> nodes_;
};

/// Control set omega and the smaller set omega0 that must contain every critical point of psi.
struct ControlRegion {
    std::vector<Interval> omega;
    std::vector<Interval> omega0;
    Eigen::VectorXd indicator;  // 1 on nodes in omega, 0 elsewhere

    bool in_omega0(const SpatialDomain& domain, int node) const;
};

ControlRegion make_control_region(const SpatialDomain& domain, std::vector<Interval> omega,
                                  std::vector<Interval> omega0);

struct WeightFunctionPsi {
    Eigen::VectorXd values;
    double sup_norm = 0.0;
    std::vector<Eigen::VectorXd> grad;  // one component per axis
    std::string description;

    double grad_norm(int node) const;

    using ValueFn = std::function<double(const std::array<double, 2>&)>;
    using GradFn = std::function<std::array<double, 2>(const std::array<double, 2>&)>;
    static WeightFunctionPsi from_function(const SpatialDomain& domain, const ValueFn& value,
                                           const GradFn& grad, std::string description);
    /// Gradient by centered differences (one-sided on the boundary).
    static WeightFunctionPsi from_samples(const SpatialDomain& domain, Eigen::VectorXd values,
                                          std::string description);
};

WeightFunctionPsi construct_psi(const SpatialDomain& domain, const ControlRegion& region);

struct PsiReport {
    double min_interior_value = 0.0;
    double min_grad_outside_omega0 = 0.0;
    double max_boundary_abs = 0.0;
    bool pass = false;
};

PsiReport verify_psi(const SpatialDomain& domain, const WeightFunctionPsi& psi,
                     const ControlRegion& region);

struct CarlemanParameters {
    double lambda = 1.0;
    double s = 1.0;
    double horizon = 1.0;
    double eta = 1.0;    // exp(-lambda |psi|_inf)
    double gamma = 1.0;  // exp(2 lambda |psi|_inf)
    bool proof_regime = false;

    double s3l3() const { return s * s * s * lambda * lambda * lambda; }
};

CarlemanParameters make_carleman_parameters(double lambda, double s, double horizon,
                                            const WeightFunctionPsi& psi,
                                            bool proof_regime = false);

/// Carleman weights tabulated at a list of interior times (normally the cell midpoints).
struct WeightFields {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> alpha;
    std::vector<Eigen::VectorXd> phi;
    std::vector<double> alpha0;
    std::vector<double> phi0;
    double clamp_exponent = 700.0;

    int layers() const { return static_cast<int>(times.size()); }

    double exp_clamped(double x) const;
    /// exp(-2 s alpha) phi^-3 at one layer (node-indexed).
    Eigen::VectorXd control_cost_weight(int layer, double s) const;
    /// exp(-2 s alpha) at one layer.
    Eigen::VectorXd tracking_weight(int layer, double s) const;
    /// exp(c alpha) phi^-i at one layer.
    Eigen::VectorXd power_weight(int layer, double c, int i) const;
};

WeightFields evaluate_weights(const WeightFunctionPsi& psi, const CarlemanParameters& params,
                              const std::vector<double>& time_nodes);

void write_weights_csv(std::ostream& out, const SpatialDomain& domain, const WeightFields& weights);

}  // namespace qlc
