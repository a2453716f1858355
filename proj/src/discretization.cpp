#include "qlcontrol/discretization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "qlcontrol/error.hpp"

namespace qlc {

Grid::Grid(SpatialDomain domain) : domain_(std::move(domain)) {
    const int n = domain_.node_count();
    interior_index_.assign(n, -1);
    quadrature_.resize(n);
    for (int node = 0; node < n; ++node) {
        if (domain_.is_boundary(node)) {
            boundary_.push_back(node);
        } else {
            interior_index_[node] = static_cast<int>(interior_.size());
            interior_.push_back(node);
        }
        const auto idx = domain_.multi_index(node);
        double w = 1.0;
        for (int a = 0; a < domain_.dim(); ++a) {
            const bool edge = idx[a] == 0 || idx[a] == domain_.nodes(a) - 1;
            w *= edge ? 0.5 * domain_.spacing(a) : domain_.spacing(a);
        }
        quadrature_[node] = w;
    }
}

double Grid::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= h(a);
    return v;
}

Eigen::VectorXd Grid::restrict(const ScalarField& field) const {
    Eigen::VectorXd out(interior_count());
    for (int i = 0; i < interior_count(); ++i) out[i] = field[interior_[i]];
    return out;
}

ScalarField Grid::extend(const Eigen::VectorXd& interior) const {
    ScalarField out = ScalarField::Zero(node_count());
    for (int i = 0; i < interior_count(); ++i) out[interior_[i]] = interior[i];
    return out;
}

ScalarField Grid::sample(const std::function<double(double, double)>& fn) const {
    ScalarField out(node_count());
    for (int node = 0; node < node_count(); ++node) {
        out[node] = fn(domain_.coordinate(node, 0), dim() > 1 ? domain_.coordinate(node, 1) : 0.0);
    }
    return out;
}

TimeGrid TimeGrid::make(double horizon, int steps) {
    if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "time horizon must be positive");
    if (steps < 16) throw Error(ErrorKind::InvalidArgument, "time grid needs at least 16 steps");
    return TimeGrid{horizon, steps};
}

std::vector<double> TimeGrid::midpoints() const {
    std::vector<double> t(steps);
    for (int k = 1; k <= steps; ++k) t[k - 1] = midpoint(k);
    return t;
}

SpaceTimeField SpaceTimeField::zeros(const Grid& grid, const TimeGrid& time) {
    return SpaceTimeField{time, std::vector<ScalarField>(time.steps + 1, ScalarField::Zero(grid.node_count()))};
}

FaceCoefficients harmonic_faces(const Grid& grid, const ScalarField& b) {
    if (b.minCoeff() <= 0.0) {
        throw Error(ErrorKind::NonpositiveCoefficient, "diffusion coefficient must be positive");
    }
    const auto& dom = grid.domain();
    FaceCoefficients faces;
    for (int a = 0; a < grid.dim(); ++a) {
        const int stride = a == 0 ? 1 : dom.nodes(0);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(grid.node_count());
        for (int node = 0; node < grid.node_count(); ++node) {
            if (dom.multi_index(node)[a] == dom.nodes(a) - 1) continue;
            const double b0 = b[node];
            const double b1 = b[node + stride];
            c[node] = 2.0 * b0 * b1 / (b0 + b1);
        }
        faces.axis.push_back(std::move(c));
    }
    return faces;
}

SparseOperator assemble_from_faces(const Grid& grid, const FaceCoefficients& faces) {
    const auto& dom = grid.domain();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(grid.interior_count()) * (1 + 2 * grid.dim()));
    for (int row = 0; row < grid.interior_count(); ++row) {
        const int node = grid.interior_nodes()[row];
        double diag = 0.0;
        for (int a = 0; a < grid.dim(); ++a) {
            const int stride = a == 0 ? 1 : dom.nodes(0);
            const double inv_h2 = 1.0 / (grid.h(a) * grid.h(a));
            const double c_plus = faces.axis[a][node] * inv_h2;
            const double c_minus = faces.axis[a][node - stride] * inv_h2;
            diag -= c_plus + c_minus;
            const int up = grid.interior_index(node + stride);
            const int down = grid.interior_index(node - stride);
            if (up >= 0) triplets.emplace_back(row, up, c_plus);
            if (down >= 0) triplets.emplace_back(row, down, c_minus);
        }
        triplets.emplace_back(row, row, diag);
    }
    SparseOperator op;
    op.matrix.resize(grid.interior_count(), grid.interior_count());
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    op.symmetric = true;
    return op;
}

SparseOperator assemble_elliptic(const ScalarField& b, const Grid& grid) {
    return assemble_from_faces(grid, harmonic_faces(grid, b));
}

ScalarField apply(const Grid& grid, const SparseOperator& op, const ScalarField& field) {
    return grid.extend(op.matrix * grid.restrict(field));
}

double inner(const Grid& grid, const ScalarField& a, const ScalarField& b) {
    return (grid.quadrature().array() * a.array() * b.array()).sum();
}

double lq_norm(const Grid& grid, const ScalarField& field, double q) {
    if (std::isinf(q)) return field.size() ? field.cwiseAbs().maxCoeff() : 0.0;
    if (!(q >= 1.0)) throw Error(ErrorKind::BadExponent, "L^q norm needs q >= 1");
    double sum = 0.0;
    const auto& w = grid.quadrature();
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        if (field[i] != 0.0) sum += w[i] * std::pow(std::abs(field[i]), q);
    }
    return std::pow(sum, 1.0 / q);
}

std::vector<ScalarField> gradient(const Grid& grid, const ScalarField& field) {
    const auto& dom = grid.domain();
    std::vector<ScalarField> g(grid.dim(), ScalarField::Zero(grid.node_count()));
    for (int node = 0; node < grid.node_count(); ++node) {
        const auto idx = dom.multi_index(node);
        for (int a = 0; a < grid.dim(); ++a) {
            const int stride = a == 0 ? 1 : dom.nodes(0);
            const double h = grid.h(a);
            if (idx[a] == 0) {
                g[a][node] = (field[node + stride] - field[node]) / h;
            } else if (idx[a] == dom.nodes(a) - 1) {
                g[a][node] = (field[node] - field[node - stride]) / h;
            } else {
                g[a][node] = (field[node + stride] - field[node - stride]) / (2.0 * h);
            }
        }
    }
    return g;
}

ScalarField gradient_magnitude(const Grid& grid, const ScalarField& field) {
    const auto g = gradient(grid, field);
    ScalarField m = ScalarField::Zero(grid.node_count());
    for (const auto& c : g) m.array() += c.array().square();
    return m.cwiseSqrt();
}

namespace {

double combine_time(const std::vector<double>& layer_norms, double dt, double q_time) {
    if (std::isinf(q_time)) {
        double m = 0.0;
        for (double v : layer_norms) m = std::max(m, v);
        return m;
    }
    if (!(q_time >= 1.0)) throw Error(ErrorKind::BadExponent, "time exponent needs q >= 1");
    double sum = 0.0;
    for (double v : layer_norms) {
        if (v != 0.0) sum += dt * std::pow(v, q_time);
    }
    return std::pow(sum, 1.0 / q_time);
}

}  // namespace

double weighted_spacetime_norm(const Grid& grid, const SpaceTimeField& field,
                               const WeightFields& weights, double s, int i, double q_time,
                               double q_space, int first_cell, int last_cell) {
    if (last_cell < 0) last_cell = field.steps();
    std::vector<double> norms;
    for (int k = first_cell; k <= last_cell; ++k) {
        const ScalarField w = weights.power_weight(k - 1, s, i);
        norms.push_back(lq_norm(grid, (w.array() * field[k].array()).matrix(), q_space));
    }
    return combine_time(norms, field.time.dt(), q_time);
}

double mixed_norm(const Grid& grid, const SpaceTimeField& field, double q_time, double q_space,
                  int first_cell, int last_cell) {
    if (last_cell < 0) last_cell = field.steps();
    std::vector<double> norms;
    for (int k = first_cell; k <= last_cell; ++k) norms.push_back(lq_norm(grid, field[k], q_space));
    return combine_time(norms, field.time.dt(), q_time);
}

void write_field_csv(std::ostream& out, const Grid& grid, const ScalarField& field) {
    const auto& dom = grid.domain();
    out << (grid.dim() == 1 ? "x,value\n" : "x,y,value\n");
    out.precision(17);
    for (int node = 0; node < grid.node_count(); ++node) {
        out << dom.coordinate(node, 0) << ',';
        if (grid.dim() > 1) out << dom.coordinate(node, 1) << ',';
        out << field[node] << '\n';
    }
}

void write_spacetime_csv(std::ostream& out, const Grid& grid, const SpaceTimeField& field) {
    const auto& dom = grid.domain();
    out << (grid.dim() == 1 ? "t,x,value\n" : "t,x,y,value\n");
    out.precision(17);
    for (int k = 0; k <= field.steps(); ++k) {
        for (int node = 0; node < grid.node_count(); ++node) {
            out << field.time.time(k) << ',' << dom.coordinate(node, 0) << ',';
            if (grid.dim() > 1) out << dom.coordinate(node, 1) << ',';
            out << field[k][node] << '\n';
        }
    }
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw Error(ErrorKind::IoError, "truncated binary field");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void write_binary_layers(std::ostream& out, const Grid& grid, double horizon,
                         const std::vector<ScalarField>& layers) {
    out.write("QLCF", 4);
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dim()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
    for (int a = 0; a < grid.dim(); ++a) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.domain().nodes(a)));
    put_le<double>(out, horizon);
    for (const auto& layer : layers) {
        for (Eigen::Index i = 0; i < layer.size(); ++i) put_le<double>(out, layer[i]);
    }
}

}  // namespace

void write_binary(std::ostream& out, const Grid& grid, const SpaceTimeField& field) {
    write_binary_layers(out, grid, field.time.horizon, field.layers);
}

void write_binary(std::ostream& out, const Grid& grid, const ScalarField& field) {
    write_binary_layers(out, grid, 0.0, {field});
}

BinaryField read_binary(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "QLCF") {
        throw Error(ErrorKind::IoError, "not a binary field file");
    }
    if (get_le<std::uint32_t>(in) != 1) throw Error(ErrorKind::IoError, "unsupported version");
    const auto dims = get_le<std::uint32_t>(in);
    const auto layers = get_le<std::uint32_t>(in);
    if (dims < 1 || dims > 2) throw Error(ErrorKind::IoError, "bad dimension count");
    BinaryField f;
    std::size_t nodes = 1;
    for (std::uint32_t a = 0; a < dims; ++a) {
        f.counts.push_back(static_cast<int>(get_le<std::uint32_t>(in)));
        nodes *= static_cast<std::size_t>(f.counts.back());
    }
    f.horizon = get_le<double>(in);
    f.layers.assign(layers, ScalarField(static_cast<Eigen::Index>(nodes)));
    for (auto& layer : f.layers) {
        for (Eigen::Index i = 0; i < layer.size(); ++i) layer[i] = get_le<double>(in);
    }
    return f;
}

}  // namespace qlc
