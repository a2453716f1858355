#pragma once

#include <memory>
#include <vector>

#include "qlcontrol/pde_solvers.hpp"

namespace qlc {

/// Y on [0, T/2] and y_s on (T/2, T]. Layer k <= switch_layer tracks Y^k.
struct TrackingTarget {
    SpaceTimeField first_half;
    ScalarField second_half;
    int switch_layer = 0;
    double switch_time = 0.0;

    static TrackingTarget make(const SpaceTimeField& Y, const ScalarField& y_s);
    /// Constant target y_s on every layer (switch at t = 0).
    static TrackingTarget stationary(const ScalarField& y_s, const TimeGrid& time);
    const ScalarField& at(int k) const { return k <= switch_layer ? first_half[k] : second_half; }
};

struct ControlProblem {
    const Grid* grid = nullptr;
    NonlinearityModel model;
    TimeGrid time;
    WeightFields weights;
    CarlemanParameters params;
    ControlRegion region;
    TrackingTarget target;
    SpaceTimeField z;  // linearization point
    ScalarField y0;
    ScalarField f;
};

struct PenalizedProblem {
    const Grid* grid = nullptr;
    NonlinearityModel model;
    TimeGrid time;
    WeightFields weights;
    CarlemanParameters params;
    ControlRegion region;
    SpaceTimeField z;
    ScalarField y0;
    ScalarField f;
    ScalarField y_s;
    double epsilon = 1.0;
};

enum class MinimizeMethod { Auto, ConjugateGradient, SpaceTimeDirect };

struct MinimizeOptions {
    MinimizeMethod method = MinimizeMethod::Auto;
    double tolerance = 1e-9;
    int max_iterations = 2000;
};

struct HistoryEntry {
    int iteration = 0;
    double functional = 0.0;
    double gradient_norm = 0.0;
};

struct DualityAudit {
    double cost = 0.0;          // control + tracking cost
    double jump_term = 0.0;     // <y_s - Y(T/2), p(T/2)>
    double defect_term = 0.0;   // coefficient-mismatch and initial-data contributions
    double relative_gap = 0.0;
};

struct OptimalityState {
    SpaceTimeField u;
    Trajectory y;
    SpaceTimeField deviation;  // y - target
    AdjointTrajectory p;       // normalized so that u = m e^{2 s alpha} s^3 lambda^3 phi^3 p
    double functional_value = 0.0;
    double control_cost = 0.0;
    double tracking_cost = 0.0;
    double gradient_norm = 0.0;
    double relative_gradient_norm = 0.0;
    double pontryagin_residual = 0.0;
    int cg_iterations = 0;
    bool max_iterations_hit = false;
    MinimizeMethod method = MinimizeMethod::ConjugateGradient;
    DualityAudit audit;
    std::vector<HistoryEntry> history;
};

/// Reduced functional u -> Q_z(u) with the state equation eliminated. Built once per problem.
class ReducedFunctional {
public:
    explicit ReducedFunctional(const ControlProblem& problem);
    ~ReducedFunctional();

    const ControlProblem& problem() const { return *problem_; }
    const LinearStepper& stepper() const;

    double value(const SpaceTimeField& u) const;
    SpaceTimeField gradient(const SpaceTimeField& u) const;
    /// y = target + deviation for control u.
    SpaceTimeField deviation(const SpaceTimeField& u) const;

    OptimalityState minimize(const MinimizeOptions& options = {}) const;

    struct Impl;

private:
    const ControlProblem* problem_;
    std::unique_ptr<Impl> impl_;
};

double functional_value(const ControlProblem& problem, const SpaceTimeField& u);
SpaceTimeField gradient_via_adjoint(const ControlProblem& problem, const SpaceTimeField& u);
OptimalityState minimize(const ControlProblem& problem, const MinimizeOptions& options = {});

struct PenalizedResult {
    double epsilon = 0.0;
    double terminal_error = 0.0;   // |y(T) - y_s|_2
    double control_cost = 0.0;     // int e^{-2 s alpha} phi^{-3} u^2
    double bound_value = 0.0;      // control_cost + terminal_error^2 / epsilon
    SpaceTimeField u;
    ScalarField terminal_adjoint;
};

/// One penalized solve per epsilon; epsilons must be positive and strictly decreasing.
std::vector<PenalizedResult> penalized_minimize(const PenalizedProblem& problem,
                                                const std::vector<double>& epsilons);

/// u^k = m e^{2 s alpha} s^3 lambda^3 phi^3 p^{k-1} on cell k (layer 0 of u is zero).
SpaceTimeField reconstruct_control(const Grid& grid, const AdjointTrajectory& p, const WeightFields& weights,
                                   const CarlemanParameters& params, const ControlRegion& region);

/// Relative Pontryagin residual |u - reconstruct(p)| / |u| over omega.
double pontryagin_residual(const Grid& grid, const SpaceTimeField& u, const AdjointTrajectory& p,
                           const WeightFields& weights, const CarlemanParameters& params,
                           const ControlRegion& region);

/// Q at the tracking layers sum_k dt <w_c m u, u> with w_c = e^{-2 s alpha} phi^{-3}.
double control_cost(const Grid& grid, const SpaceTimeField& u, const WeightFields& weights, double s);

}  // namespace qlc
