#pragma once

#include <iosfwd>
#include <vector>

#include "qlcontrol/hum_control.hpp"

namespace qlc {

struct QiLadder {
    int n_dim = 2;
    double q_final = 4.0;
    int N = 1;
    std::vector<double> q_values;  // q_0 .. q_N

    /// q_{i+1} for the space exponent of norm i; q_{N+1} is taken as q_N.
    double space_exponent(int i) const;
};

QiLadder qi_ladder(int n_dim, double q_final);

struct BMembership {
    std::vector<double> zeta_list;
    double zeta = 1.0;
    std::vector<double> first_half;   // |e^{-s alpha} phi^{-i} (y - Y)| on (0, T/2)
    std::vector<double> second_half;  // |e^{-s alpha} phi^{-i} (y - y_s)| on (T/2, T)
    std::vector<double> values;       // sums, compared against zeta_i
    double time_derivative = 0.0;     // max_k |(y^k - y^{k-1}) / dt|_q
    double gradient_sup = 0.0;        // max |grad (y - y_s)|
    std::vector<bool> pass_flags;     // one per ladder norm, then time derivative, gradient
    bool pass = false;
};

BMembership check_membership(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& Y,
                             const ScalarField& y_s, const WeightFields& weights,
                             const CarlemanParameters& params, const QiLadder& ladder,
                             const std::vector<double>& zetas, double zeta);

/// zeta_0 = 2 x measured, zeta_i = 2 C zeta_{i-1} with C the largest measured ratio of consecutive norms.
std::pair<std::vector<double>, double> default_zetas(const BMembership& measured);

/// Geometry and Carleman inputs shared by every control solve of a run.
struct ControlSetup {
    const Grid* grid = nullptr;
    ControlRegion region;
    WeightFunctionPsi psi;
    double lambda = 1.0;
    double s = 0.01;
    bool proof_regime = false;
};

struct PicardOptions {
    int max_outer = 15;
    double tol_sup = 1e-8;
    MinimizeOptions minimize;
    NewtonOptions newton;
    bool throw_on_failure = false;
};

struct PicardIterate {
    int iteration = 0;
    double sup_distance = 0.0;
    double functional = 0.0;
    double terminal_error = 0.0;
    std::vector<double> membership;
};

struct PicardState {
    int iteration = 0;
    TimeGrid time;
    CarlemanParameters params;
    WeightFields weights;
    SpaceTimeField Y;  // uncontrolled solution
    SpaceTimeField z;
    SpaceTimeField y;
    SpaceTimeField u;
    AdjointTrajectory p;
    OptimalityState optimality;
    double sup_distance = 0.0;
    double terminal_error = 0.0;
    double resimulation_distance = 0.0;
    double resimulated_terminal_error = 0.0;
    BMembership membership;
    EnergyAudit energy;  // worst over all outer iterations
    bool converged = false;
    std::vector<PicardIterate> trace;
};

PicardState picard_run(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                       const ScalarField& y_s, const ControlSetup& setup, const TimeGrid& time,
                       const QiLadder& ladder, const std::vector<double>& zetas, const PicardOptions& options);

struct TwoPhasePlan {
    double T0 = 0.0;
    int T0_layer = 0;
    SpaceTimeField free_phase;
    PicardState control_phase;
    SpaceTimeField y;  // concatenated on [0, T]
    SpaceTimeField u;  // zero on [0, T0]
    double terminal_error = 0.0;
    double resimulated_terminal_error = 0.0;
};

TwoPhasePlan two_phase_run(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                           const ScalarField& y_s, const ControlSetup& setup, const TimeGrid& time,
                           double T0_fraction, const QiLadder& ladder, const std::vector<double>& zetas,
                           const PicardOptions& options);

void write_trace_csv(std::ostream& out, const PicardState& state);

}  // namespace qlc
