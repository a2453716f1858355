#pragma once

#include <functional>
#include <string>

#include "qlcontrol/discretization.hpp"

namespace qlc {

/// Strictly increasing diffusion potential a with a(0) = 0 and certified bounds
/// mu <= a'(y) <= M_bound on valid_range.
struct NonlinearityModel {
    std::string name;
    std::function<double(double)> a;
    std::function<double(double)> da;
    std::function<double(double)> dda;
    Interval valid_range;
    double mu = 1.0;
    double M_bound = 1.0;
    bool linear = false;

    /// a^{-1}(w): Newton safeguarded by bisection on a bracketing interval.
    double inverse(double w) const;

    static NonlinearityModel make_linear(double c, Interval range = {-2.0, 2.0});
    /// a(y) = y + beta y^3, beta >= 0.
    static NonlinearityModel make_cubic(double beta, Interval range = {-2.0, 2.0});
    /// a(y) = (y^2 + eps^2)^((m-1)/2) y, a regularized porous-medium law.
    static NonlinearityModel make_porous(double m, double eps, Interval range = {-2.0, 2.0});
};

/// Extension A of a that agrees with a on `interval`, has bounded A', A'' and A' >= mu_A > 0 on R.
/// The returned model's mu/M_bound are mu_A and sup A'.
NonlinearityModel globalize(const NonlinearityModel& model, Interval interval);

struct StationaryState {
    ScalarField y_s;
    ScalarField f;
    double residual_norm = 0.0;
};

/// Discrete Laplacian of a(field) with unit face coefficients.
ScalarField laplacian_of_a(const Grid& grid, const NonlinearityModel& model, const ScalarField& field);

StationaryState solve_stationary(const NonlinearityModel& model, const ScalarField& f, const Grid& grid);

/// f = -Delta_h a(y_s), so that y_s is exactly stationary for the discrete scheme.
ScalarField manufactured_forcing(const NonlinearityModel& model, const ScalarField& y_s, const Grid& grid);

}  // namespace qlc
