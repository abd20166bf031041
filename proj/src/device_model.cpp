#include "doprec/device_model.hpp"

#include <cmath>
#include <string>

#include "doprec/errors.hpp"

namespace doprec {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

void MaterialParams::validate() const {
    require(N_c > 0 && N_v > 0, "material: N_c and N_v must be positive");
    require(E_v <= E_c, "material: E_v must not exceed E_c");
    require(T > 0 && eps > 0, "material: T and eps must be positive");
    require(mu_n > 0 && mu_p > 0, "material: mobilities must be positive");
    require(C_d > 0 && C_n > 0 && C_p > 0, "material: recombination coefficients must be positive");
    require(tau_n > 0 && tau_p > 0, "material: lifetimes must be positive");
    require(n_T > 0 && p_T > 0, "material: SRH reference densities must be positive");
}

double MaterialParams::thermal_voltage() const { return constants::k_B * T / constants::q; }

void LaserParams::validate() const {
    require(P >= 0, "laser: P must be non-negative");
    require(lambda_L > 0, "laser: lambda_L must be positive");
    require(r >= 0 && r <= 1, "laser: reflectivity must lie in [0,1]");
    require(sigma_L > 0 && d_A > 0, "laser: sigma_L and d_A must be positive");
}

void DeviceGeometry::validate() const {
    require(length > 0 && width > 0 && height > 0, "geometry: dimensions must be positive");
    require(probe_length > 0 && probe_length < length,
            "geometry: probe_length must lie in (0, length)");
    require(n >= 2, "geometry: n must be at least 2");
    require(R >= 0, "geometry: R must be non-negative");
}

std::vector<double> DeviceGeometry::probe_grid() const {
    std::vector<double> xs(static_cast<std::size_t>(n));
    const double end_um = 0.5 * probe_length * 1000.0;
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = end_um * i / (n - 1);
    xs.back() = end_um;
    return xs;
}

double WavelengthWarp::operator()(double x) const {
    const double L = half_length;
    double p = k * (x + L) * (x - L);
    if (degree == 3) p *= (x - a);
    return x + p;
}

double WavelengthWarp::derivative(double x) const {
    const double L = half_length;
    if (degree == 3) return 1.0 + k * (3.0 * x * x - 2.0 * a * x - L * L);
    return 1.0 + 2.0 * k * x;
}

double DopingSpec::clean(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        s += alpha[i] * std::sin(2.0 * constants::pi * x / lambda[i]);
    }
    return C0 * (1.0 + s);
}

double DopingSpec::clean_derivative(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double w = 2.0 * constants::pi / lambda[i];
        s += alpha[i] * w * std::cos(w * x);
    }
    return C0 * s;
}

void DopingSpec::validate() const {
    require(C0 > 0, "doping: C0 must be positive");
    require(alpha.size() == lambda.size(), "doping: amplitude/wavelength count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        require(alpha[i] == 0.0 || (alpha[i] >= 0.05 && alpha[i] <= 0.2),
                "doping: amplitudes must be 0 or lie in [0.05, 0.2]");
        require(lambda[i] >= 10.0 && lambda[i] <= 1000.0,
                "doping: wavelengths must lie in [10, 1000] um");
        total += alpha[i];
    }
    require(total < 1.0, "doping: amplitudes must sum below one");
}

void DeviceConfig::validate() const {
    material.validate();
    laser.validate();
    geometry.validate();
}

double intrinsic_density(const MaterialParams& mat) {
    const double kT = mat.thermal_voltage();
    return std::sqrt(mat.N_c * mat.N_v) * std::exp(-(mat.E_c - mat.E_v) / (2.0 * kT));
}

double kappa(const LaserParams& laser) {
    const double photon_energy = constants::h_planck * constants::c_light / laser.lambda_L;
    return laser.P * (1.0 - laser.r) / photon_energy;
}

double laser_shape(double x, double y, double z, const LaserParams& laser) {
    const double s = laser.sigma_L;
    const double pre = 1.0 / (2.0 * constants::pi * s * s * laser.d_A);
    return pre * std::exp(-0.5 * (x * x + y * y) / (s * s)) * std::exp(-std::abs(z) / laser.d_A);
}

double laser_shape_xz(double x, double z, const LaserParams& laser) {
    const double s = laser.sigma_L;
    const double pre = 1.0 / (std::sqrt(2.0 * constants::pi) * s * laser.d_A);
    return pre * std::exp(-0.5 * x * x / (s * s)) * std::exp(-std::abs(z) / laser.d_A);
}

double doping_eval(const DopingSpec& spec, double x) {
    const double t = spec.warp ? (*spec.warp)(x) : x;
    double c = spec.clean(t);
    if (spec.amplitude_noise) c += spec.amplitude_noise->f(t);
    return c;
}

double intrinsic_potential(const MaterialParams& mat) {
    return 0.5 * (mat.E_c + mat.E_v) + 0.5 * mat.thermal_voltage() * std::log(mat.N_v / mat.N_c);
}

double electroneutral_potential(const MaterialParams& mat, double C) {
    const double ni = intrinsic_density(mat);
    return intrinsic_potential(mat) + mat.thermal_voltage() * std::asinh(C / (2.0 * ni));
}

double electron_density(const MaterialParams& mat, double psi, double phi_n) {
    return mat.N_c * std::exp((psi - phi_n - mat.E_c) / mat.thermal_voltage());
}

double hole_density(const MaterialParams& mat, double psi, double phi_p) {
    return mat.N_v * std::exp((phi_p - psi + mat.E_v) / mat.thermal_voltage());
}

}  // namespace doprec
