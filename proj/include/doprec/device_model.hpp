#pragma once

#include <optional>
#include <vector>

#include "doprec/spline.hpp"

namespace doprec {

namespace constants {
inline constexpr double q = 1.602176634e-19;        // elementary charge [C]
inline constexpr double k_B = 1.380649e-23;         // Boltzmann constant [J/K]
inline constexpr double h_planck = 6.62607015e-34;  // Planck constant [J s]
inline constexpr double c_light = 299792458.0;      // speed of light [m/s]
inline constexpr double eps0 = 8.8541878128e-14;    // vacuum permittivity [F/cm]
inline constexpr double pi = 3.14159265358979323846;
}  // namespace constants

// Semiconductor material. Units: densities cm^-3, energies eV, T in K,
// permittivity F/cm, mobilities cm^2/(V s), C_d cm^3/s, C_n/C_p cm^6/s,
// lifetimes s.
struct MaterialParams {
    double N_c = 2.86e19;
    double N_v = 3.10e19;
    double E_c = 1.12;
    double E_v = 0.0;
    double T = 300.0;
    double eps = 11.7 * constants::eps0;
    double mu_n = 1417.0;
    double mu_p = 470.0;
    double C_d = 1.1e-14;
    double C_n = 2.8e-31;
    double C_p = 9.9e-32;
    double tau_n = 1.0e-6;
    double tau_p = 1.0e-6;
    double n_T = 1.0e10;
    double p_T = 1.0e10;

    void validate() const;
    // k_B T / q [V]
    double thermal_voltage() const;
};

// Laser source. P in W, lambda_L in m, sigma_L and d_A in um.
struct LaserParams {
    double P = 1.0e-6;
    double lambda_L = 685.0e-9;
    double r = 0.3;
    double sigma_L = 20.0;
    double d_A = 4.5;

    void validate() const;
};

// Sample geometry in mm; R in Ohm.
struct DeviceGeometry {
    double length = 3.0;
    double width = 0.5;
    double height = 5.0e-5;
    double probe_length = 0.4;
    int n = 96;
    double R = 1.0e6;

    void validate() const;
    // The n laser positions 0 = x_1 < ... < x_n = probe_length / 2, in um.
    std::vector<double> probe_grid() const;
};

// Local amplitude perturbation f_n, a natural cubic spline in x [um]
// with values in cm^-3.
struct AmplitudeNoise {
    NaturalCubicSpline f;
};

// Argument warp t(x) = x + p(x) on [-half_length, half_length] (um), with
// p = k (x + L)(x - L) for degree 2 and p = k (x + L)(x - L)(x - a) for degree 3.
struct WavelengthWarp {
    int degree = 2;
    double k = 0.0;
    double a = 0.0;
    double half_length = 1500.0;

    double operator()(double x) const;
    double derivative(double x) const;
};

// C(x) = C0 (1 + sum_i alpha_i sin(2 pi x / lambda_i)); x and lambda in um.
struct DopingSpec {
    double C0 = 1.0e16;
    std::vector<double> alpha;
    std::vector<double> lambda;
    std::optional<AmplitudeNoise> amplitude_noise;
    std::optional<WavelengthWarp> warp;

    // Parametric part only.
    double clean(double x) const;
    double clean_derivative(double x) const;
    void validate() const;
};

struct DeviceConfig {
    MaterialParams material;
    LaserParams laser;
    DeviceGeometry geometry;

    void validate() const;
};

double intrinsic_density(const MaterialParams& mat);

// Photon rate entering the crystal [1/s].
double kappa(const LaserParams& laser);

// Laser profile at offset (x, y, z) [um] from the spot, z <= 0 inside the
// crystal. Returns [um^-3]; integrates to one over the half-space z <= 0.
double laser_shape(double x, double y, double z, const LaserParams& laser);

// Profile integrated over y: [um^-2], integrates to one over the half-plane.
double laser_shape_xz(double x, double z, const LaserParams& laser);

// Doping at x [um] in cm^-3, with any attached noise: C(t(x)) + f_n(t(x)).
double doping_eval(const DopingSpec& spec, double x);

// Potential [V] where electron and hole densities coincide (phi_n = phi_p = 0).
double intrinsic_potential(const MaterialParams& mat);

// Local electroneutral potential [V] for net doping C [cm^-3].
double electroneutral_potential(const MaterialParams& mat, double C);

// Boltzmann densities [cm^-3] from potentials [V].
double electron_density(const MaterialParams& mat, double psi, double phi_n);
double hole_density(const MaterialParams& mat, double psi, double phi_p);

}  // namespace doprec
