#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qlcontrol/diagnostics.hpp"
#include "qlcontrol/error.hpp"
#include "qlcontrol/pde_solvers.hpp"

using namespace qlc;

namespace {

constexpr double pi = std::numbers::pi;

Grid unit_interval(int nodes) { return Grid(SpatialDomain::interval({0.0, 1.0}, nodes)); }

ScalarField sine(const Grid& g, double amp = 1.0) {
    return g.sample([amp](double x, double y) {
        (void)y;
        return amp * std::sin(pi * x);
    });
}

ScalarField mask_of(const Grid& g, double lo, double hi) {
    return g.sample([lo, hi](double x, double) { return lo <= x && x <= hi ? 1.0 : 0.0; });
}

double max_diff(const SpaceTimeField& a, const SpaceTimeField& b) {
    double d = 0.0;
    for (int k = 0; k <= a.steps(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return d;
}

/// Positive coefficient with smooth random variation in space and time.
SpaceTimeField random_coefficient(const Grid& g, const TimeGrid& tg, std::uint64_t seed) {
    SpaceTimeField b = SpaceTimeField::zeros(g, tg);
    const ScalarField r1 = random_smooth_field(g, seed), r2 = random_smooth_field(g, seed + 1);
    for (int k = 0; k <= tg.steps; ++k) {
        const double t = tg.time(k) / tg.horizon;
        b[k] = (1.2 + 0.5 * (r1.array() * std::cos(2.0 * t)).tanh() + 0.3 * (r2.array() * t).tanh()).matrix();
    }
    return b;
}

SpaceTimeField random_source(const Grid& g, const TimeGrid& tg, std::uint64_t seed) {
    SpaceTimeField s = SpaceTimeField::zeros(g, tg);
    const ScalarField r1 = random_smooth_field(g, seed), r2 = random_smooth_field(g, seed + 1);
    for (int k = 1; k <= tg.steps; ++k) s[k] = r1 + std::sin(5.0 * tg.time(k)) * r2;
    return s;
}

}  // namespace

TEST_CASE("stationary initial data stays put") {
    const Grid g = unit_interval(65);
    const auto model = NonlinearityModel::make_cubic(1.0);
    const ScalarField ys = sine(g, 0.3);
    const ScalarField f = manufactured_forcing(model, ys, g);
    const auto tr = solve_uncontrolled(model, ys, f, TimeGrid::make(1.0, 64), g);
    for (const auto& layer : tr.state.layers) CHECK((layer - ys).cwiseAbs().maxCoeff() <= 1e-10);

    const auto zero = solve_uncontrolled(model, ScalarField::Zero(g.node_count()), ScalarField::Zero(g.node_count()),
                                         TimeGrid::make(1.0, 16), g);
    for (const auto& layer : zero.state.layers) CHECK(layer.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("heat mode forward") {
    const Grid g = unit_interval(129);
    const TimeGrid tg = TimeGrid::make(0.1, 512);
    const auto tr = solve_uncontrolled(NonlinearityModel::make_linear(1.0), sine(g), ScalarField::Zero(g.node_count()),
                                       tg, g);
    const ScalarField exact = std::exp(-pi * pi * 0.1) * sine(g);
    CHECK(lq_norm(g, tr.state[tg.steps] - exact, 2.0) <= 0.02 * lq_norm(g, exact, 2.0));
}

TEST_CASE("heat mode adjoint") {
    const Grid g = unit_interval(129);
    const TimeGrid tg = TimeGrid::make(0.1, 512);
    SpaceTimeField b = SpaceTimeField::zeros(g, tg);
    for (auto& layer : b.layers) layer.setOnes();
    const auto p = solve_adjoint(g, b, SpaceTimeField::zeros(g, tg), sine(g), tg);
    for (int k : {0, 128, 256}) {
        const ScalarField exact = std::exp(-pi * pi * (tg.horizon - tg.time(k))) * sine(g);
        CHECK(lq_norm(g, p.p[k] - exact, 2.0) <= 0.02 * lq_norm(g, exact, 2.0));
    }
    const auto zero = solve_adjoint(g, b, SpaceTimeField::zeros(g, tg), ScalarField::Zero(g.node_count()), tg);
    CHECK(max_diff(zero.p, SpaceTimeField::zeros(g, tg)) == 0.0);
}

TEST_CASE("linearized solver consistency") {
    const Grid g = unit_interval(65);
    const TimeGrid tg = TimeGrid::make(0.5, 64);
    const ScalarField mask = mask_of(g, 0.3, 0.7);

    SUBCASE("z = y_s keeps y_s stationary") {
        const auto model = NonlinearityModel::make_cubic(1.0);
        const ScalarField ys = sine(g, 0.2);
        SpaceTimeField z = SpaceTimeField::zeros(g, tg);
        for (auto& layer : z.layers) layer = ys;
        const auto y = solve_linearized(model, z, SpaceTimeField::zeros(g, tg), ys, manufactured_forcing(model, ys, g),
                                        tg, g, mask);
        CHECK(max_diff(y.state, z) <= 1e-12);
    }
    SUBCASE("linear model: frozen and quasilinear schemes coincide") {
        const auto model = NonlinearityModel::make_linear(1.3);
        const ScalarField y0 = random_smooth_field(g, 5);
        const ScalarField f = random_smooth_field(g, 6);
        const auto Y = solve_uncontrolled(model, y0, f, tg, g);
        const auto y = solve_linearized(model, Y.state, SpaceTimeField::zeros(g, tg), y0, f, tg, g, mask);
        CHECK(max_diff(y.state, Y.state) <= 1e-10);

        const SpaceTimeField u = random_source(g, tg, 9);
        SpaceTimeField z = random_source(g, tg, 12);
        const auto q = solve_quasilinear_controlled(model, &u, y0, f, tg, g, mask);
        const auto l = solve_linearized(model, z, u, y0, f, tg, g, mask);
        CHECK(max_diff(q.state, l.state) <= 1e-10);
    }
    SUBCASE("zero control equals the uncontrolled solve bit for bit") {
        const auto model = NonlinearityModel::make_cubic(1.0);
        const ScalarField y0 = random_smooth_field(g, 2);
        const ScalarField f = random_smooth_field(g, 3);
        const SpaceTimeField u = SpaceTimeField::zeros(g, tg);
        const auto a = solve_uncontrolled(model, y0, f, tg, g);
        const auto b = solve_quasilinear_controlled(model, &u, y0, f, tg, g, mask);
        CHECK(max_diff(a.state, b.state) == 0.0);
    }
}

TEST_CASE("localized unit source against the continuous Duhamel sum") {
    const Grid g = unit_interval(129);
    const TimeGrid tg = TimeGrid::make(0.1, 512);
    const double lo = 0.3, hi = 0.7;
    const ScalarField mask = mask_of(g, lo, hi);
    SpaceTimeField u = SpaceTimeField::zeros(g, tg);
    for (int k = 1; k <= tg.steps; ++k) u[k].setOnes();
    const auto y = solve_linearized(NonlinearityModel::make_linear(1.0), SpaceTimeField::zeros(g, tg), u,
                                    ScalarField::Zero(g.node_count()), ScalarField::Zero(g.node_count()), tg, g, mask);
    const double mass = inner(g, y.state[tg.steps], ScalarField::Ones(g.node_count()));
    double oracle = 0.0;
    for (int j = 1; j <= 4000; ++j) {
        const double jp = j * pi;
        const double c = 2.0 * (std::cos(jp * lo) - std::cos(jp * hi)) / jp;
        const double time_factor = (1.0 - std::exp(-jp * jp * tg.horizon)) / (jp * jp);
        const double integral = (1.0 - std::cos(jp)) / jp;
        oracle += c * time_factor * integral;
    }
    CHECK(mass == doctest::Approx(oracle).epsilon(0.01));
}

TEST_CASE("discrete duality identity") {
    for (const auto& [nodes, steps] : {std::pair{16, 16}, std::pair{32, 128}}) {
        const Grid g = unit_interval(nodes);
        const TimeGrid tg = TimeGrid::make(1.0, steps);
        const ScalarField mask = mask_of(g, 0.3, 0.7);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const LinearStepper stepper(g, tg, coefficients_from_nodal(g, random_coefficient(g, tg, 100 * seed)));
            const SpaceTimeField u = random_source(g, tg, 100 * seed + 10);
            const SpaceTimeField gsrc = random_source(g, tg, 100 * seed + 20);
            const ScalarField y0 = random_smooth_field(g, 100 * seed + 30);
            const ScalarField pT = random_smooth_field(g, 100 * seed + 31);
            const ScalarField f = ScalarField::Zero(g.node_count());
            const auto y = solve_linearized(stepper, u, y0, f, mask);
            SpaceTimeField src = u;
            for (auto& layer : src.layers) layer = layer.cwiseProduct(mask);
            const auto p = solve_adjoint(stepper, gsrc, pT);
            CHECK(std::abs(duality_defect(g, y.state, src, p.p, gsrc)) <= 1e-11);
        }
    }
}

TEST_CASE("duality identity in two dimensions") {
    const Grid g(SpatialDomain::rectangle({0.0, 1.0}, {0.0, 1.0}, 12, 10));
    const TimeGrid tg = TimeGrid::make(1.0, 32);
    const LinearStepper stepper(g, tg, coefficients_from_nodal(g, random_coefficient(g, tg, 4)));
    const SpaceTimeField gsrc = random_source(g, tg, 7);
    const SpaceTimeField u = random_source(g, tg, 8);
    const auto y = solve_linearized(stepper, u, random_smooth_field(g, 1), ScalarField::Zero(g.node_count()),
                                    ScalarField::Ones(g.node_count()));
    const auto p = solve_adjoint(stepper, gsrc, random_smooth_field(g, 2));
    CHECK(std::abs(duality_defect(g, y.state, u, p.p, gsrc)) <= 1e-11);
}

TEST_CASE("energy inequality holds for random adjoint solves") {
    const Grid g = unit_interval(48);
    const TimeGrid tg = TimeGrid::make(1.0, 64);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const LinearStepper stepper(g, tg, coefficients_from_nodal(g, random_coefficient(g, tg, seed)));
        const SpaceTimeField gsrc = random_source(g, tg, seed + 50);
        const auto p = solve_adjoint(stepper, gsrc, random_smooth_field(g, seed + 60));
        const auto audit = energy_audit(stepper, p.p, &gsrc);
        CHECK(audit.pass);
        const auto free = solve_adjoint(stepper, SpaceTimeField::zeros(g, tg), random_smooth_field(g, seed + 70));
        CHECK(energy_audit(stepper, free.p, nullptr).pass);
    }
}

TEST_CASE("secant faces reproduce the quasilinear operator") {
    const Grid g = unit_interval(33);
    const auto model = NonlinearityModel::make_cubic(2.0);
    const ScalarField z = random_smooth_field(g, 4);
    const auto op = assemble_from_faces(g, secant_faces(g, model, z));
    CHECK((apply(g, op, z) - laplacian_of_a(g, model, z)).cwiseAbs().maxCoeff() <=
          1e-12 * laplacian_of_a(g, model, z).cwiseAbs().maxCoeff());
}

TEST_CASE("Newton failure names the layer") {
    const Grid g = unit_interval(33);
    NewtonOptions opts;
    opts.max_iterations = 1;
    opts.accept = 1e-14;
    const auto model = NonlinearityModel::make_cubic(5.0);
    try {
        solve_uncontrolled(model, sine(g, 1.5), ScalarField::Zero(g.node_count()), TimeGrid::make(1.0, 16), g, opts);
        FAIL("expected NewtonDiverged");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NewtonDiverged);
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}

TEST_CASE("identical layers share one factorization and match fresh solves") {
    const Grid g = unit_interval(33);
    const TimeGrid tg = TimeGrid::make(1.0, 32);
    SpaceTimeField b = SpaceTimeField::zeros(g, tg);
    for (auto& layer : b.layers) layer.setConstant(1.7);
    const LinearStepper stepper(g, tg, coefficients_from_nodal(g, b));
    const Eigen::VectorXd rhs = g.restrict(random_smooth_field(g, 3));
    const Eigen::VectorXd x = stepper.solve(7, rhs);
    CHECK((stepper.step_matrix(7) * x - rhs).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(&stepper.step_matrix(3) == &stepper.step_matrix(30));
}
