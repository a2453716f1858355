#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlcontrol/fixed_point.hpp"

namespace qlc {

/// Smooth random field: truncated sine series with coefficients decaying like 1/j^2.
ScalarField random_smooth_field(const Grid& grid, std::uint64_t seed, int modes = 8);

struct CarlemanReport {
    int sample = 0;
    double lhs = 0.0;          // int e^{2 s alpha} (s^3 l^3 phi^3 p^2 + s l phi |grad p|^2)
    double rhs_control = 0.0;  // int_{Q_omega} e^{2 s alpha} s^3 l^3 phi^3 p^2
    double rhs_source = 0.0;   // int e^{2 s alpha} g^2
    double zeta = 0.0;
    double empirical_C = 0.0;  // lhs / (rhs_control (1 + zeta) + rhs_source)
    bool degenerate = false;
    std::string descriptor;
};

struct CarlemanSummary {
    std::vector<CarlemanReport> reports;
    double max_C = 0.0;
    double zeta = 0.0;
    double energy_violation = 0.0;
};

/// |b_t|_{L^inf(L^n)} + |grad b|_{L^inf(Q)} for a nodal coefficient.
double coefficient_zeta(const Grid& grid, const SpaceTimeField& b);

struct SampleOptions {
    int samples = 100;
    std::uint64_t seed = 1;
    bool with_source = true;
    bool zero_data = false;  // g = 0 and pT = 0 for every sample
};

CarlemanSummary carleman_check(const Grid& grid, const SpaceTimeField& b, const WeightFields& weights,
                               const CarlemanParameters& params, const ControlRegion& region,
                               const SampleOptions& options);

struct ObservabilityReport {
    int sample = 0;
    double initial_energy = 0.0;     // |p(0)|_2^2
    double first_half_energy = 0.0;  // int_0^{T/2} |p|_2^2
    double observed = 0.0;           // int_{Q_omega} e^{2 s alpha} phi^3 p^2
    double constant_initial = 0.0;   // initial_energy / ((1 + zeta) observed)
    double constant_first_half = 0.0;
    bool degenerate = false;
};

struct ObservabilitySummary {
    std::vector<ObservabilityReport> reports;
    double max_constant_initial = 0.0;
    double max_constant_first_half = 0.0;
    double zeta = 0.0;
    double energy_violation = 0.0;
};

/// Backward solves with g = 0 and random smooth terminal data (or a given pT when supplied).
ObservabilitySummary observability_check(const Grid& grid, const SpaceTimeField& b, const WeightFields& weights,
                                         const CarlemanParameters& params, const ControlRegion& region,
                                         const SampleOptions& options, const ScalarField* pT = nullptr);

struct PowerFit {
    double slope = 0.0;
    double intercept = 0.0;  // log-space
    int points = 0;
};

/// Least-squares fit of log y = intercept + slope log x over the points with x, y > 0.
PowerFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

enum class SmoothingFamily {
    amplitude,      // y0 = y_s + r profile
    concentration,  // y0 = y_s + height bump_r, bump of half-width r at fixed height
};

struct SmoothingPoint {
    double parameter = 0.0;
    double data_norm = 0.0;     // |y0 - y_s|_2
    double measure = 0.0;       // max_k |t_k (Y^k - Y^{k-1}) / dt|_q
    double stationarity = 0.0;  // |Delta_h a(Y(T)) + f|_q
};

struct SmoothingResult {
    std::vector<SmoothingPoint> points;
    PowerFit fit;
    PowerFit stationarity_fit;
};

struct SmoothingOptions {
    SmoothingFamily family = SmoothingFamily::concentration;
    double horizon = 0.01;
    int steps = 1024;
    double q = 4.0;
    double height = 0.05;  // concentration family
    double center = 0.37;
};

SmoothingResult smoothing_scan(const NonlinearityModel& model, const Grid& grid, const ScalarField& y_s,
                               const ScalarField& f, const std::vector<double>& sizes,
                               const SmoothingOptions& options);

/// Left-hand sides of the main estimates together with their data drivers.
struct EstimateReport {
    double q = 2.0;
    double control_norm = 0.0;          // |e^{-s alpha0} u|_{L^inf(Q)}
    double time_weighted_norm = 0.0;    // |t (y - y_s)| in W^{1,inf}(L^q) cap L^inf(W^{1,inf})
    double terminal_weighted_norm = 0.0;  // |e^{-s alpha0} (y - y_s)|_{C([T/2,T]; L^q)}
    double sup_deviation = 0.0;         // |y - y_s|_{L^inf(Q)}
    double data_l2 = 0.0;
    double data_sup = 0.0;
    double driver = 0.0;                // data_l2^{2/q}
};

EstimateReport theorem_estimates(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& u,
                                 const ScalarField& y_s, const WeightFields& weights,
                                 const CarlemanParameters& params, double q);

}  // namespace qlc
