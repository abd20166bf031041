#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "doprec/device_model.hpp"
#include "doprec/mesh.hpp"

namespace doprec {

enum class LinearSolverKind : std::uint8_t { SparseLU, BiCGSTAB };

struct SolverOptions {
    // Max-norm of the Newton update in thermal-voltage units.
    double newton_tol = 1e-9;
    int max_iter = 60;
    // Damping halves from 1 down to this floor before giving up.
    double min_damping = 1.0 / 1024.0;
    // Largest potential change per Newton step [thermal voltages].
    double max_step = 10.0;
    int power_ramp_steps = 4;
    int max_ramp_subdivisions = 10;
    // |u - R i_D| tolerance in thermal-voltage units.
    double circuit_tol = 1e-10;
    LinearSolverKind linear_solver = LinearSolverKind::SparseLU;
    // Newton diagnostics table, one row per iteration, when set.
    std::ostream* trace = nullptr;

    void validate() const;
};

enum class Carrier : std::uint8_t { Electron, Hole };

// B(x) = x / (exp(x) - 1).
double bernoulli(double x);
double bernoulli_derivative(double x);

// Scharfetter-Gummel current density [A/cm^2] from node k to node l for an
// edge of length h_cm. Potentials in V, densities in cm^-3, mobility in
// cm^2/(V s), U_T = k_B T / q.
double sg_flux(double h_cm, double psi_k, double psi_l, double n_k, double n_l, Carrier carrier,
               double mobility, double U_T);

// Net recombination H = direct + Auger + SRH [cm^-3 s^-1].
double recombination(double n, double p, const MaterialParams& mat);

// Immutable device description shared by solver instances: mesh, material,
// nodal doping and the scaling used internally.
class DeviceProblem {
public:
    DeviceProblem(std::shared_ptr<const Mesh2D> mesh, std::vector<double> doping,
                  const MaterialParams& material, double width_mm);

    const Mesh2D& mesh() const { return *mesh_; }
    const MaterialParams& material() const { return mat_; }
    const std::vector<double>& doping() const { return doping_; }
    double width_cm() const { return width_cm_; }

    // Scaling: potentials in U_T, densities in density_unit, lengths in
    // length_unit (Debye length at density_unit).
    double thermal_voltage() const { return U_T_; }
    double density_unit() const { return N_ref_; }
    double length_unit_cm() const { return L0_; }
    double rate_unit() const { return R0_; }
    double intrinsic() const { return n_i_; }
    double psi_intrinsic() const { return psi_int_; }
    // Electroneutral potential per node, scaled and shifted by psi_intrinsic.
    const std::vector<double>& neutral_potential() const { return v0_; }

private:
    std::shared_ptr<const Mesh2D> mesh_;
    MaterialParams mat_;
    std::vector<double> doping_;
    double width_cm_;
    double U_T_, N_ref_, L0_, R0_, n_i_, psi_int_;
    std::vector<double> v0_;
};

struct PdeState {
    std::vector<double> psi, phi_n, phi_p;  // [V]
    std::vector<double> n, p;               // [cm^-3]
    double u_D2 = 0.0;                      // [V]
    // Excitation the state was solved for.
    LaserParams laser;
    double x0 = 0.0;     // spot position [um]
    bool illuminated = false;
};

enum class Contact : std::uint8_t { D1, D2 };

// Newton solver for the van Roosbroeck system. Owns its workspace; one
// instance per worker.
class VanRoosbroeckSolver {
public:
    VanRoosbroeckSolver(std::shared_ptr<const DeviceProblem> problem, SolverOptions options);

    const DeviceProblem& problem() const { return *problem_; }
    const SolverOptions& options() const { return opts_; }

    PdeState equilibrium();

    // Contact voltage u_D2 [V] prescribed.
    PdeState solve(const LaserParams& laser, double x0_um, double u_D2);

    // Contact voltage from u = R i_D. With warm_start the previous
    // circuit-coupled solution seeds Newton; otherwise the laser power is
    // ramped up from equilibrium.
    double laser_voltage(const LaserParams& laser, double x0_um, double R, bool warm_start = false);

    // Last converged state.
    PdeState state() const;
    // Newton iterations spent by the most recent solve call.
    int last_iterations() const { return last_iterations_; }

private:
    struct Excitation {
        LaserParams laser;
        double generation_scale = 0.0;  // kappa / width / R0, times ramp fraction
        double x0 = 0.0;
        bool circuit = false;
        double rho = 0.0;      // R w q N_ref mu_n
        double u_fixed = 0.0;  // scaled, when !circuit
    };
    class Assembler;
    friend double contact_current(const PdeState&, const DeviceProblem&, Contact);

    void ensure_equilibrium();
    void newton(Eigen::VectorXd& X, const Excitation& ex);
    void ramp(Eigen::VectorXd& X, Excitation ex);
    Excitation make_excitation(const LaserParams& laser, double x0_um) const;
    PdeState unpack(const Eigen::VectorXd& X, bool circuit) const;

    std::shared_ptr<const DeviceProblem> problem_;
    SolverOptions opts_;
    std::shared_ptr<Assembler> assembler_;
    Eigen::VectorXd eq_v_;
    bool have_eq_ = false;
    Eigen::VectorXd last_;
    bool last_circuit_ = false;
    bool have_circuit_ = false;
    LaserParams last_laser_;
    double last_x0_ = 0.0;
    int last_iterations_ = 0;
};

// Free-function forms of the solver operations.
PdeState solve_equilibrium(std::shared_ptr<const DeviceProblem> problem, const SolverOptions& opts);
PdeState solve_van_roosbroeck(std::shared_ptr<const DeviceProblem> problem, const LaserParams& laser,
                              double x0_um, double u_D2, const SolverOptions& opts);
double solve_laser_voltage(std::shared_ptr<const DeviceProblem> problem, const LaserParams& laser,
                           double x0_um, double R, const SolverOptions& opts);

// Current [A] leaving the device through a contact, built from the same
// edge fluxes as the assembled system.
double contact_current(const PdeState& state, const DeviceProblem& problem,
                       Contact contact = Contact::D2);

}  // namespace doprec
