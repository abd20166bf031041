#include <doctest.h>
#include <gsl/gsl_integration.h>

#include <cmath>

#include "doprec/device_model.hpp"
#include "doprec/errors.hpp"
#include "support.hpp"

using namespace doprec;
using testing::rel_err;

namespace {

struct Quad {
    gsl_integration_workspace* w = gsl_integration_workspace_alloc(2000);
    ~Quad() { gsl_integration_workspace_free(w); }
};

template <class F>
double gsl_call(double x, void* p) {
    return (*static_cast<F*>(p))(x);
}

template <class F>
double integrate_R(F f, gsl_integration_workspace* w) {
    gsl_function g{&gsl_call<F>, &f};
    double r = 0, err = 0;
    gsl_integration_qagi(&g, 1e-12, 1e-10, 2000, w, &r, &err);
    return r;
}

template <class F>
double integrate_lower(F f, gsl_integration_workspace* w) {
    gsl_function g{&gsl_call<F>, &f};
    double r = 0, err = 0;
    gsl_integration_qagil(&g, 0.0, 1e-12, 1e-10, 2000, w, &r, &err);
    return r;
}

}  // namespace

TEST_SUITE("device_model") {

TEST_CASE("intrinsic density for zero gap") {
    MaterialParams m;
    m.E_c = m.E_v = 0;
    m.N_c = m.N_v = 1e19;
    CHECK(rel_err(intrinsic_density(m), 1e19) < 1e-15);
    m.N_c = 4e18;
    CHECK(rel_err(intrinsic_density(m), std::sqrt(4e37)) < 1e-15);
}

TEST_CASE("silicon intrinsic density golden value") {
    const MaterialParams m;
    const long double kT = 1.380649e-23L * 300.0L / 1.602176634e-19L;
    const long double ni = std::sqrt(2.86e19L * 3.10e19L) * std::exp(-1.12L / (2.0L * kT));
    CHECK(rel_err(intrinsic_density(m), static_cast<double>(ni)) < 1e-12);
    CHECK(intrinsic_density(m) > 1e9);
    CHECK(intrinsic_density(m) < 1e11);
}

TEST_CASE("kappa") {
    LaserParams l;
    l.r = 1.0;
    CHECK(kappa(l) == 0.0);
    l.r = 0.3;
    l.P = 0.0;
    CHECK(kappa(l) == 0.0);
    l.P = 1e-3;
    l.lambda_L = 685e-9;
    const long double ref = 1e-3L * 685e-9L * 0.7L / (6.62607015e-34L * 299792458.0L);
    CHECK(rel_err(kappa(l), static_cast<double>(ref)) < 1e-13);
}

TEST_CASE("laser shape peak, symmetry and half-space normalization") {
    const LaserParams l;
    CHECK(rel_err(laser_shape(0, 0, 0, l), 1.0 / (2 * constants::pi * l.sigma_L * l.sigma_L * l.d_A)) < 1e-15);
    CHECK(laser_shape(7, 3, -2, l) == laser_shape(-7, 3, -2, l));
    CHECK(laser_shape(7, 3, -2, l) == laser_shape(7, -3, -2, l));

    Quad qx, qz;
    auto inner = [&](double z) { return integrate_R([&](double x) { return laser_shape_xz(x, z, l); }, qx.w); };
    CHECK(std::abs(integrate_lower(inner, qz.w) - 1.0) < 1e-6);

    Quad qy;
    for (double x : {0.0, 13.0, -40.0}) {
        for (double z : {0.0, -1.0, -9.0}) {
            const double over_y = integrate_R([&](double y) { return laser_shape(x, y, z, l); }, qy.w);
            CHECK(rel_err(over_y, laser_shape_xz(x, z, l)) < 1e-9);
        }
    }
}

TEST_CASE("laser shape is monotone in each coordinate") {
    const LaserParams l;
    auto r = testing::rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = testing::uniform(r, 0, 80), y = testing::uniform(r, 0, 80), z = testing::uniform(r, 0, 30);
        const double d = testing::uniform(r, 1e-3, 10);
        const double s = laser_shape(x, y, -z, l);
        CHECK(laser_shape(x + d, y, -z, l) <= s);
        CHECK(laser_shape(-(x + d), y, -z, l) <= s);
        CHECK(laser_shape(x, y + d, -z, l) <= s);
        CHECK(laser_shape(x, y, -(z + d), l) <= s);
    }
}

TEST_CASE("doping evaluation") {
    DopingSpec s;
    s.C0 = 1e16;
    s.alpha = {0, 0};
    s.lambda = {50, 300};
    for (double x : {-100.0, 0.0, 33.3}) CHECK(doping_eval(s, x) == 1e16);

    s.alpha = {0.1};
    s.lambda = {100};
    CHECK(rel_err(doping_eval(s, 25.0), 1.1e16) < 1e-14);

    auto r = testing::rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        DopingSpec t;
        t.C0 = 1e16;
        double total = 0;
        for (int i = 0; i < 5; ++i) {
            t.alpha.push_back(testing::uniform(r, 0.05, 0.19));
            t.lambda.push_back(std::exp(testing::uniform(r, std::log(10.0), std::log(1000.0))));
            total += t.alpha.back();
        }
        for (int k = 0; k < 16; ++k) {
            const double x = testing::uniform(r, -1500, 1500);
            long double ref = 1.0L;
            for (int i = 0; i < 5; ++i) {
                ref += t.alpha[static_cast<std::size_t>(i)] *
                       std::sin(2.0L * 3.141592653589793238462643383279L * x / t.lambda[static_cast<std::size_t>(i)]);
            }
            CHECK(rel_err(doping_eval(t, x), static_cast<double>(1e16L * ref)) < 1e-12);
            CHECK(doping_eval(t, x) >= t.C0 * (1 - total) * (1 - 1e-14));
        }
    }
}

TEST_CASE("doping spec validation") {
    DopingSpec s;
    s.alpha = {0.3};
    s.lambda = {100};
    CHECK_THROWS_AS(s.validate(), Error);
    s.alpha = {0.1};
    s.lambda = {5};
    CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("electroneutral potential") {
    const MaterialParams m;
    const double ni = intrinsic_density(m), UT = m.thermal_voltage();
    CHECK(electroneutral_potential(m, 0.0) == intrinsic_potential(m));
    const double psi = electroneutral_potential(m, 0.0);
    CHECK(rel_err(electron_density(m, psi, 0), ni) < 1e-12);
    CHECK(rel_err(hole_density(m, psi, 0), ni) < 1e-12);

    for (double C : {1e12, 3e15, 1e18}) {
        const double a = electroneutral_potential(m, C) - intrinsic_potential(m);
        const double b = electroneutral_potential(m, -C) - intrinsic_potential(m);
        CHECK(a == doctest::Approx(-b).epsilon(1e-14));
    }
    // C = 2 n_i: the charge balance p - n + C = 0 solved by bisection.
    const double C = 2 * ni;
    double lo = -1, hi = 1;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double psi_m = intrinsic_potential(m) + mid;
        (hole_density(m, psi_m, 0) - electron_density(m, psi_m, 0) + C > 0 ? lo : hi) = mid;
    }
    CHECK(std::abs(electroneutral_potential(m, C) - intrinsic_potential(m) - 0.5 * (lo + hi)) < 1e-12);
    CHECK(std::abs(electroneutral_potential(m, C) - intrinsic_potential(m) - UT * std::asinh(1.0)) < 1e-12);
}

TEST_CASE("neutrality residual and mass action over random inputs") {
    const MaterialParams m;
    const double ni = intrinsic_density(m);
    auto r = testing::rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double C = (i % 2 ? 1 : -1) * std::pow(10.0, testing::uniform(r, 8, 20));
        const double psi = electroneutral_potential(m, C);
        const double res = hole_density(m, psi, 0) - electron_density(m, psi, 0) + C;
        CHECK(std::abs(res) <= 1e-10 * (std::abs(C) + 2 * ni));

        const double any = testing::uniform(r, -1, 2);
        CHECK(rel_err(electron_density(m, any, 0) * hole_density(m, any, 0), ni * ni) < 1e-12);
    }
}

}  // TEST_SUITE
