#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "doprec/datagen.hpp"
#include "doprec/errors.hpp"
#include "doprec/fv_solver.hpp"
#include "doprec/mesh.hpp"
#include "support.hpp"

using namespace doprec;
using testing::rel_err;

namespace {

DeviceGeometry small_geometry() {
    DeviceGeometry g;
    g.length = 0.8;
    return g;
}

MeshParams coarse_mesh() {
    MeshParams m;
    m.dx_max = 2.5;
    return m;
}

std::shared_ptr<const DeviceProblem> problem_for(const DopingSpec& spec, const DeviceGeometry& g = small_geometry(),
                                                 const MeshParams& mp = coarse_mesh()) {
    auto mesh = std::make_shared<const Mesh2D>(Mesh2D::build(g, mp));
    return std::make_shared<const DeviceProblem>(mesh, doping_on_mesh(spec, *mesh), MaterialParams{}, g.width);
}

DopingSpec sine(double alpha = 0.1, double lambda = 100) {
    DopingSpec s;
    s.alpha = {alpha};
    s.lambda = {lambda};
    return s;
}

DopingSpec uniform() {
    DopingSpec s;
    return s;
}

struct TraceRow {
    int it;
    double res, upd, lambda;
};

std::vector<TraceRow> parse_trace(const std::string& text) {
    std::vector<TraceRow> rows;
    std::istringstream in(text);
    TraceRow r{};
    while (in >> r.it >> r.res >> r.upd >> r.lambda) rows.push_back(r);
    return rows;
}

}  // namespace

TEST_SUITE("fv_solver") {

TEST_CASE("Bernoulli function") {
    CHECK(bernoulli(0.0) == 1.0);
    CHECK(rel_err(bernoulli(1.0), 1.0 / (std::exp(1.0) - 1.0)) < 1e-15);
    CHECK(bernoulli(1.0) == doctest::Approx(0.581976706869326).epsilon(1e-14));
    for (double x : {1e-8, 1.0, 40.0}) CHECK(rel_err(bernoulli(-x), bernoulli(x) + x) < 1e-12);
    auto r = testing::rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double x = testing::uniform(r, -30, 30);
        const double h = 1e-6;
        const double fd = (bernoulli(x + h) - bernoulli(x - h)) / (2 * h);
        CHECK(std::abs(bernoulli_derivative(x) - fd) < 1e-8);
    }
    CHECK(bernoulli_derivative(0.0) == -0.5);
}

TEST_CASE("Scharfetter-Gummel flux") {
    const double UT = MaterialParams{}.thermal_voltage();
    const double h = 1e-4, mu = 1000.0;
    // Zero field: central diffusive difference.
    const double j0 = sg_flux(h, 0.3, 0.3, 1e15, 2e15, Carrier::Electron, mu, UT);
    CHECK(rel_err(j0, constants::q * mu * UT * (2e15 - 1e15) / h) < 1e-13);
    const double jp = sg_flux(h, 0.3, 0.3, 1e15, 2e15, Carrier::Hole, mu, UT);
    CHECK(rel_err(jp, -constants::q * mu * UT * (2e15 - 1e15) / h) < 1e-13);

    auto r = testing::rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double pk = testing::uniform(r, -1, 1), pl = testing::uniform(r, -1, 1);
        const double nk = std::pow(10, testing::uniform(r, 5, 19)), nl = std::pow(10, testing::uniform(r, 5, 19));
        for (Carrier c : {Carrier::Electron, Carrier::Hole}) {
            const double a = sg_flux(h, pk, pl, nk, nl, c, mu, UT);
            const double b = sg_flux(h, pl, pk, nl, nk, c, mu, UT);
            CHECK(std::abs(a + b) <= 1e-12 * std::max(std::abs(a), 1e-300));
        }
        // Boltzmann equilibrium: n ~ exp(psi/UT), p ~ exp(-psi/UT).
        const double n0 = std::pow(10, testing::uniform(r, 5, 15));
        const double je = sg_flux(h, pk, pl, n0 * std::exp(pk / UT), n0 * std::exp(pl / UT), Carrier::Electron, mu, UT);
        const double scale_e = constants::q * mu * UT / h * n0 * std::max(std::exp(pk / UT), std::exp(pl / UT));
        CHECK(std::abs(je) <= 1e-12 * scale_e);
        const double jh = sg_flux(h, pk, pl, n0 * std::exp(-pk / UT), n0 * std::exp(-pl / UT), Carrier::Hole, mu, UT);
        const double scale_h = constants::q * mu * UT / h * n0 * std::max(std::exp(-pk / UT), std::exp(-pl / UT));
        CHECK(std::abs(jh) <= 1e-12 * scale_h);
    }
}

TEST_CASE("recombination") {
    const MaterialParams m;
    const double ni = intrinsic_density(m);
    CHECK(std::abs(recombination(ni, ni, m)) < 1e-30);
    CHECK(std::abs(recombination(1e16, ni * ni / 1e16, m)) < 1e-6);
    CHECK(recombination(1e16, 1e12, m) > 0);
    CHECK(recombination(1e5, 1e5, m) < 0);
    const double n = 3e15, p = 2e13;
    const double d = n * p - ni * ni;
    const double ref = m.C_d * d + (m.C_n * n + m.C_p * p) * d + d / (m.tau_p * (n + m.n_T) + m.tau_n * (p + m.p_T));
    CHECK(rel_err(recombination(n, p, m), ref) < 1e-13);
}

TEST_CASE("mesh invariants") {
    const auto mesh = Mesh2D::build(small_geometry(), coarse_mesh());
    for (std::size_t i = 1; i < mesh.nx(); ++i) CHECK(mesh.x()[i] > mesh.x()[i - 1]);
    for (std::size_t j = 1; j < mesh.nz(); ++j) CHECK(mesh.z()[j] > mesh.z()[j - 1]);
    const double area = 800.0 * 0.05;
    CHECK(rel_err(mesh.total_area(), area) < 1e-12);
    for (std::size_t k = 0; k < mesh.node_count(); ++k) CHECK(mesh.volume(k) > 0);
    CHECK(mesh.nodes_with(BoundaryTag::ContactD1).size() == mesh.nz());
    CHECK(mesh.nodes_with(BoundaryTag::ContactD2).size() == mesh.nz());
    for (std::size_t k : mesh.nodes_with(BoundaryTag::ContactD1)) CHECK(mesh.x_index(k) == 0);
    for (std::size_t k : mesh.nodes_with(BoundaryTag::ContactD2)) CHECK(mesh.x_index(k) == mesh.nx() - 1);
    const auto full = Mesh2D::build(DeviceGeometry{}, MeshParams{});
    CHECK(full.node_count() > 2500);
    CHECK(full.node_count() < 4000);
}

TEST_CASE("equilibrium for uniform and zero doping") {
    const SolverOptions opts;
    auto p = problem_for(uniform());
    const PdeState s = solve_equilibrium(p, opts);
    const double UT = p->thermal_voltage();
    const double psi0 = electroneutral_potential(MaterialParams{}, 1e16);
    for (double v : s.psi) CHECK(std::abs(v - psi0) / UT <= 1e-9);

    DopingSpec zero;
    zero.C0 = 1e16;
    auto mesh = std::make_shared<const Mesh2D>(Mesh2D::build(small_geometry(), coarse_mesh()));
    auto pz = std::make_shared<const DeviceProblem>(mesh, std::vector<double>(mesh->node_count(), 0.0), MaterialParams{},
                                                    0.5);
    const PdeState z = solve_equilibrium(pz, opts);
    const double ni = intrinsic_density(MaterialParams{});
    for (std::size_t k = 0; k < z.n.size(); ++k) {
        CHECK(rel_err(z.n[k], ni) < 1e-9);
        CHECK(rel_err(z.p[k], ni) < 1e-9);
    }
}

TEST_CASE("equilibrium mass action on a random doping") {
    Rng r(17);
    const DopingSpec spec = sample_doping_spec(r, DopingSampling{});
    auto p = problem_for(spec);
    const PdeState s = solve_equilibrium(p, SolverOptions{});
    const double ni2 = p->intrinsic() * p->intrinsic();
    double worst = 0;
    for (std::size_t k = 0; k < s.n.size(); ++k) worst = std::max(worst, std::abs(s.n[k] * s.p[k] / ni2 - 1));
    CHECK(worst <= 1e-8);
}

TEST_CASE("graded junction converges at second order") {
    auto solve_on = [](std::size_t cells) {
        std::vector<double> x(cells + 1), z{-0.05, -0.01, 0.0};
        for (std::size_t i = 0; i <= cells; ++i) x[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(cells);
        auto mesh = std::make_shared<const Mesh2D>(Mesh2D::tensor(x, z));
        std::vector<double> c(mesh->node_count());
        for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::pow(10.0, 16.5 - 1.5 * std::tanh(mesh->node_x(k) / 0.2));
        auto p = std::make_shared<const DeviceProblem>(mesh, c, MaterialParams{}, 0.5);
        const PdeState s = solve_equilibrium(p, SolverOptions{});
        return std::make_pair(mesh, s);
    };
    const auto [m1, s1] = solve_on(100);
    const auto [m2, s2] = solve_on(200);
    const auto [m3, s3] = solve_on(400);
    for (std::size_t i = 1; i < m3->nx(); ++i) {
        CHECK(s3.psi[m3->node(i, 0)] <= s3.psi[m3->node(i - 1, 0)] + 1e-12);
    }
    double d12 = 0, d23 = 0;
    for (std::size_t i = 0; i < m1->nx(); ++i) {
        d12 = std::max(d12, std::abs(s1.psi[m1->node(i, 0)] - s2.psi[m2->node(2 * i, 0)]));
        d23 = std::max(d23, std::abs(s2.psi[m2->node(2 * i, 0)] - s3.psi[m3->node(4 * i, 0)]));
    }
    CHECK(d23 < 0.3 * d12);
}

TEST_CASE("dark device equals equilibrium and carries no current") {
    auto p = problem_for(sine());
    const SolverOptions opts;
    const PdeState eq = solve_equilibrium(p, opts);
    LaserParams dark;
    dark.P = 0;
    const PdeState s = solve_van_roosbroeck(p, dark, 0.0, 0.0, opts);
    const double UT = p->thermal_voltage();
    for (std::size_t k = 0; k < s.psi.size(); ++k) {
        CHECK(std::abs(s.psi[k] - eq.psi[k]) / UT < 1e-9);
        CHECK(std::abs(s.phi_n[k]) / UT < 1e-9);
        CHECK(std::abs(s.phi_p[k]) / UT < 1e-9);
    }
    CHECK(std::abs(contact_current(s, *p, Contact::D2)) < 1e-15);
    CHECK(std::abs(contact_current(eq, *p, Contact::D1)) < 1e-15);
    CHECK(std::abs(solve_laser_voltage(p, dark, 25.0, 1e6, opts)) <= 1e-10);
}

TEST_CASE("illuminated device conserves current and follows the doping gradient") {
    const SolverOptions opts;
    const LaserParams laser;
    auto p = problem_for(sine());
    // Steepest descent of C at x = 50 um, steepest ascent at x = 0.
    const PdeState down = solve_van_roosbroeck(p, laser, 50.0, 0.0, opts);
    const PdeState up = solve_van_roosbroeck(p, laser, 0.0, 0.0, opts);
    const double i_down = contact_current(down, *p, Contact::D2);
    const double i_up = contact_current(up, *p, Contact::D2);
    CHECK(std::abs(contact_current(down, *p, Contact::D1) + i_down) <= 1e-6 * std::abs(i_down));
    CHECK(i_down * i_up < 0);

    auto flat = problem_for(uniform());
    const PdeState f = solve_van_roosbroeck(flat, laser, 0.0, 0.0, opts);
    CHECK(std::abs(contact_current(f, *flat, Contact::D2)) < 1e-2 * std::abs(i_down));

    // u_P follows -C'(x0).
    const double u_down = solve_laser_voltage(p, laser, 50.0, 1e6, opts);
    const double u_up = solve_laser_voltage(p, laser, 0.0, 1e6, opts);
    CHECK(u_down > 0);
    CHECK(u_up < 0);
    CHECK(solve_laser_voltage(p, laser, 50.0, 0.0, opts) == 0.0);
}

TEST_CASE("circuit relation holds at the converged voltage") {
    const SolverOptions opts;
    const LaserParams laser;
    auto p = problem_for(sine());
    VanRoosbroeckSolver solver(p, opts);
    const double R = 1e6;
    const double u = solver.laser_voltage(laser, 40.0, R);
    const PdeState s = solver.state();
    CHECK(s.u_D2 == doctest::Approx(u).epsilon(1e-15));
    const double i = contact_current(s, *p, Contact::D2);
    CHECK(std::abs(u - R * i) <= 1e-8 * std::max(std::abs(u), 1e-12));
    // Same voltage prescribed directly reproduces the same current.
    const PdeState fixed = solve_van_roosbroeck(p, laser, 40.0, u, opts);
    CHECK(rel_err(contact_current(fixed, *p, Contact::D2), i) < 1e-6);
}

TEST_CASE("mirrored doping and spot negate the voltage") {
    const SolverOptions opts;
    const LaserParams laser;
    Rng r(23);
    DopingSpec spec = sample_doping_spec(r, DopingSampling{});
    DopingSpec mirrored = spec;
    for (auto& a : mirrored.alpha) a = -a;  // sin is odd: C(-x) flips every amplitude
    auto m = Mesh2D::build(small_geometry(), coarse_mesh());
    auto mesh = std::make_shared<const Mesh2D>(m);
    std::vector<double> c1(mesh->node_count()), c2(mesh->node_count());
    for (std::size_t k = 0; k < c1.size(); ++k) {
        c1[k] = spec.clean(mesh->node_x(k));
        c2[k] = spec.clean(-mesh->node_x(k));
    }
    auto p1 = std::make_shared<const DeviceProblem>(mesh, c1, MaterialParams{}, 0.5);
    auto p2 = std::make_shared<const DeviceProblem>(mesh, c2, MaterialParams{}, 0.5);
    for (double x0 : {30.0, 120.0}) {
        const double u1 = solve_laser_voltage(p1, laser, x0, 1e6, opts);
        const double u2 = solve_laser_voltage(p2, laser, -x0, 1e6, opts);
        CHECK(std::abs(u1 + u2) <= 0.02 * std::abs(u1));
    }
}

TEST_CASE("Newton iteration decreases the residual with a quadratic tail") {
    std::ostringstream trace;
    SolverOptions opts;
    opts.trace = &trace;
    auto p = problem_for(uniform());
    solve_van_roosbroeck(p, LaserParams{}, 0.0, 0.0, opts);
    const auto rows = parse_trace(trace.str());
    REQUIRE(rows.size() >= 3);
    // Split the table into Newton runs (iteration counter restarts).
    std::vector<std::vector<TraceRow>> runs;
    for (const auto& row : rows) {
        if (row.it == 0 || runs.empty()) runs.emplace_back();
        runs.back().push_back(row);
    }
    for (const auto& run : runs) {
        bool local = false;
        for (std::size_t k = 1; k < run.size(); ++k) {
            local = local || run[k - 1].upd < 1e-1;
            if (!local || run[k].upd < 1e-13) continue;
            CHECK(run[k].upd <= run[k - 1].upd);
            CHECK(run[k].upd / (run[k - 1].upd * run[k - 1].upd) < 1e3);
        }
        CHECK(run.back().upd <= SolverOptions{}.newton_tol);
    }
}

TEST_CASE("solver options validation") {
    SolverOptions o;
    o.newton_tol = -1;
    CHECK_THROWS_AS(o.validate(), Error);
    o = SolverOptions{};
    o.max_iter = 0;
    CHECK_THROWS_AS(o.validate(), Error);
}

TEST_CASE("iterative linear solver agrees with the direct one") {
    SolverOptions direct, iterative;
    iterative.linear_solver = LinearSolverKind::BiCGSTAB;
    auto p = problem_for(sine());
    const double a = solve_laser_voltage(p, LaserParams{}, 50.0, 1e6, direct);
    const double b = solve_laser_voltage(p, LaserParams{}, 50.0, 1e6, iterative);
    CHECK(rel_err(a, b) < 1e-6);
}

}  // TEST_SUITE
