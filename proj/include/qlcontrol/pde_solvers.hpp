#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseCore>

#include "qlcontrol/discretization.hpp"
#include "qlcontrol/nonlinearity.hpp"

namespace qlc {

/// Face coefficients of the operator used in step k (entries k = 1..steps; entry 0 unused).
struct LayerCoefficients {
    std::vector<FaceCoefficients> layers;
};

/// Harmonic means of a nodal diffusivity b^k.
LayerCoefficients coefficients_from_nodal(const Grid& grid, const SpaceTimeField& b);

/// Secant slopes (a(z_j) - a(z_i)) / (z_j - z_i) on every face, so that the operator built from z
/// reproduces Delta_h a(z) when applied to z itself.
FaceCoefficients secant_faces(const Grid& grid, const NonlinearityModel& model, const ScalarField& z);
LayerCoefficients coefficients_from_state(const Grid& grid, const NonlinearityModel& model,
                                          const SpaceTimeField& z);

double min_face_coefficient(const FaceCoefficients& faces, const Grid& grid);

/// Implicit Euler step matrices A_k = I - dt L_k on interior unknowns, each factored once.
/// Consecutive identical layers share a factorization. Immutable after construction.
class LinearStepper {
public:
    LinearStepper(const Grid& grid, const TimeGrid& time, LayerCoefficients coefficients);
    ~LinearStepper();
    LinearStepper(LinearStepper&&) noexcept;
    LinearStepper& operator=(LinearStepper&&) noexcept;

    const Grid& grid() const { return *grid_; }
    const TimeGrid& time() const { return time_; }
    const LayerCoefficients& coefficients() const { return coefficients_; }

    const Eigen::SparseMatrix<double>& step_matrix(int k) const;
    Eigen::VectorXd solve(int k, const Eigen::VectorXd& rhs) const;

    /// y^k = A_k^{-1}(y^{k-1} + dt src^k); src layer 0 is ignored. Interior vectors.
    std::vector<Eigen::VectorXd> forward(const Eigen::VectorXd& y0,
                                         const std::vector<Eigen::VectorXd>& src) const;
    /// p^{k-1} = A_k^{-1}(p^k - dt g^k), p^steps = pT; g layer 0 is ignored. Interior vectors.
    std::vector<Eigen::VectorXd> backward(const Eigen::VectorXd& pT,
                                          const std::vector<Eigen::VectorXd>& g) const;

private:
    struct Impl;
    const Grid* grid_;
    TimeGrid time_;
    LayerCoefficients coefficients_;
    std::unique_ptr<Impl> impl_;
};

struct Trajectory {
    SpaceTimeField state;
    std::vector<int> newton_iterations;
    std::vector<double> residuals;
};

struct AdjointTrajectory {
    SpaceTimeField p;
    ScalarField terminal;
};

struct NewtonOptions {
    double tolerance = 1e-13;      // target max-norm residual
    double accept = 1e-10;         // residual still accepted once Newton stagnates
    int max_iterations = 50;
    int max_halvings = 30;
};

Trajectory solve_uncontrolled(const NonlinearityModel& model, const ScalarField& y0, const ScalarField& f,
                              const TimeGrid& tg, const Grid& grid, const NewtonOptions& options = {});

/// Quasilinear implicit Euler with source m u^k on step k.
Trajectory solve_quasilinear_controlled(const NonlinearityModel& model, const SpaceTimeField* u,
                                        const ScalarField& y0, const ScalarField& f, const TimeGrid& tg,
                                        const Grid& grid, const ScalarField& mask,
                                        const NewtonOptions& options = {});

/// Frozen-coefficient linear equation y_t - div(b grad y) = m u + f with b from z on layer k.
Trajectory solve_linearized(const NonlinearityModel& model, const SpaceTimeField& z, const SpaceTimeField& u,
                            const ScalarField& y0, const ScalarField& f, const TimeGrid& tg,
                            const Grid& grid, const ScalarField& mask);
Trajectory solve_linearized(const LinearStepper& stepper, const SpaceTimeField& u, const ScalarField& y0,
                            const ScalarField& f, const ScalarField& mask);

/// Backward problem p_t + div(b grad p) = g, p(T) = pT, discretely adjoint to the forward stepper.
AdjointTrajectory solve_adjoint(const Grid& grid, const SpaceTimeField& b, const SpaceTimeField& g,
                                const ScalarField& pT, const TimeGrid& tg);
AdjointTrajectory solve_adjoint(const LinearStepper& stepper, const SpaceTimeField& g, const ScalarField& pT);

/// Residual of the summation-by-parts identity
///   <y(T), p(T)> - <y0, p(0)> - sum_k dt (<src^k, p^{k-1}> + <g^k, y^k>)
/// for a forward trajectory with total source src and an adjoint with source g.
double duality_defect(const Grid& grid, const SpaceTimeField& y, const SpaceTimeField& src,
                      const SpaceTimeField& p, const SpaceTimeField& g);

struct EnergyAudit {
    double max_violation = 0.0;  // max over layers of (lhs - rhs) / max(1, rhs)
    int worst_layer = -1;
    bool pass = true;
};

/// Layer-wise discrete energy inequality of the backward problem
///   |p^{k-1}|^2 + 2 mu dt |grad p^{k-1}|^2 <= |p^k|^2 + 2 dt int |g^k p^{k-1}|.
EnergyAudit energy_audit(const LinearStepper& stepper, const SpaceTimeField& p, const SpaceTimeField* g);

}  // namespace qlc
