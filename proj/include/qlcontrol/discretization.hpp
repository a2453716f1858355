#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "qlcontrol/geometry.hpp"

namespace qlc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Node-indexed values on one time layer (boundary nodes included).
using ScalarField = Eigen::VectorXd;

/// Spatial lattice with interior/boundary bookkeeping and trapezoidal quadrature weights.
class Grid {
public:
    explicit Grid(SpatialDomain domain);

    const SpatialDomain& domain() const { return domain_; }
    int dim() const { return domain_.dim(); }
    int node_count() const { return domain_.node_count(); }
    int interior_count() const { return static_cast<int>(interior_.size()); }
    double h(int axis) const { return domain_.spacing(axis); }
    double cell_volume() const;

    const std::vector<int>& interior_nodes() const { return interior_; }
    const std::vector<int>& boundary_nodes() const { return boundary_; }
    /// Interior position of a node, or -1 for boundary nodes.
    int interior_index(int node) const { return interior_index_[node]; }
    const Eigen::VectorXd& quadrature() const { return quadrature_; }

    Eigen::VectorXd restrict(const ScalarField& field) const;
    ScalarField extend(const Eigen::VectorXd& interior) const;

    ScalarField sample(const std::function<double(double, double)>& fn) const;

private:
    SpatialDomain domain_;
    std::vector<int> interior_;
    std::vector<int> boundary_;
    std::vector<int> interior_index_;
    Eigen::VectorXd quadrature_;
};

/// Uniform time lattice t_k = k T / steps, k = 0..steps. Cell k is (t_{k-1}, t_k].
struct TimeGrid {
    double horizon = 1.0;
    int steps = 16;

    static TimeGrid make(double horizon, int steps);

    double dt() const { return horizon / steps; }
    double time(int k) const { return k == steps ? horizon : k * dt(); }
    double midpoint(int cell) const { return (cell - 0.5) * dt(); }
    /// Midpoints of cells 1..steps, the evaluation points of every weight.
    std::vector<double> midpoints() const;
};

/// One ScalarField per time layer k = 0..steps.
struct SpaceTimeField {
    TimeGrid time;
    std::vector<ScalarField> layers;

    static SpaceTimeField zeros(const Grid& grid, const TimeGrid& time);

    int steps() const { return time.steps; }
    ScalarField& operator[](int k) { return layers[k]; }
    const ScalarField& operator[](int k) const { return layers[k]; }
};

/// Diffusivity on cell faces. Entry `node` of axis a is the face between node and its +a neighbor.
struct FaceCoefficients {
    std::vector<Eigen::VectorXd> axis;
};

FaceCoefficients harmonic_faces(const Grid& grid, const ScalarField& b);

struct SparseOperator {
    Eigen::SparseMatrix<double> matrix;  // acts on interior unknowns
    bool symmetric = true;
};

SparseOperator assemble_from_faces(const Grid& grid, const FaceCoefficients& faces);
/// Central flux discretization of div(b grad .) with harmonic-mean face values.
SparseOperator assemble_elliptic(const ScalarField& b, const Grid& grid);
ScalarField apply(const Grid& grid, const SparseOperator& op, const ScalarField& field);

double inner(const Grid& grid, const ScalarField& a, const ScalarField& b);
double lq_norm(const Grid& grid, const ScalarField& field, double q);
/// Centered differences inside, one-sided on the boundary.
std::vector<ScalarField> gradient(const Grid& grid, const ScalarField& field);
ScalarField gradient_magnitude(const Grid& grid, const ScalarField& field);

/// Mixed norm over cells [first_cell, last_cell] of
/// exp(s alpha) phi^{-i} field^k, with field layer k paired with weight layer k-1 (cell k).
double weighted_spacetime_norm(const Grid& grid, const SpaceTimeField& field,
                               const WeightFields& weights, double s, int i, double q_time,
                               double q_space, int first_cell = 1, int last_cell = -1);

/// Plain L^{q_time}(L^{q_space}) norm over the cells [first_cell, last_cell].
double mixed_norm(const Grid& grid, const SpaceTimeField& field, double q_time, double q_space,
                  int first_cell = 1, int last_cell = -1);

void write_field_csv(std::ostream& out, const Grid& grid, const ScalarField& field);
void write_spacetime_csv(std::ostream& out, const Grid& grid, const SpaceTimeField& field);

/// Binary layout: "QLCF", u32 version, u32 dims, u32 layers, u32 count per axis,
/// f64 horizon, then layers x nodes little-endian doubles in row-major order.
void write_binary(std::ostream& out, const Grid& grid, const SpaceTimeField& field);
void write_binary(std::ostream& out, const Grid& grid, const ScalarField& field);

struct BinaryField {
    std::vector<int> counts;
    double horizon = 0.0;
    std::vector<ScalarField> layers;
};
BinaryField read_binary(std::istream& in);

}  // namespace qlc
