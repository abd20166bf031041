#include "doprec/fv_solver.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "doprec/errors.hpp"

namespace doprec {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

void SolverOptions::validate() const {
    if (!(newton_tol > 0)) throw ConfigError("solver: newton_tol must be positive");
    if (max_iter < 1) throw ConfigError("solver: max_iter must be at least 1");
    if (!(min_damping > 0 && min_damping <= 1)) throw ConfigError("solver: min_damping must lie in (0,1]");
    if (power_ramp_steps < 1) throw ConfigError("solver: power_ramp_steps must be at least 1");
    if (!(circuit_tol > 0)) throw ConfigError("solver: circuit_tol must be positive");
}

double bernoulli(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return 1.0 - 0.5 * x + x2 / 12.0 * (1.0 - x2 / 60.0 * (1.0 - x2 / 42.0));
    }
    if (x > 0) return x * std::exp(-x) / -std::expm1(-x);
    return x / std::expm1(x);
}

double bernoulli_derivative(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return -0.5 + x / 6.0 - x * x2 / 180.0 + x * x2 * x2 / 5040.0;
    }
    // B'(x) = B(x) (1 - B(-x)) / x
    return bernoulli(x) * (1.0 - bernoulli(-x)) / x;
}

double sg_flux(double h_cm, double psi_k, double psi_l, double n_k, double n_l, Carrier carrier,
               double mobility, double U_T) {
    const double delta = (psi_l - psi_k) / U_T;
    const double pre = constants::q * mobility * U_T / h_cm;
    if (carrier == Carrier::Electron) {
        return pre * (bernoulli(delta) * n_l - bernoulli(-delta) * n_k);
    }
    return -pre * (bernoulli(-delta) * n_l - bernoulli(delta) * n_k);
}

double recombination(double n, double p, const MaterialParams& mat) {
    const double ni = intrinsic_density(mat);
    const double excess = n * p - ni * ni;
    const double srh = 1.0 / (mat.tau_p * (n + mat.n_T) + mat.tau_n * (p + mat.p_T));
    return excess * (mat.C_d + mat.C_n * n + mat.C_p * p + srh);
}

DeviceProblem::DeviceProblem(std::shared_ptr<const Mesh2D> mesh, std::vector<double> doping,
                             const MaterialParams& material, double width_mm)
    : mesh_(std::move(mesh)), mat_(material), doping_(std::move(doping)), width_cm_(0.1 * width_mm) {
    if (!mesh_) throw InvalidConfig("device problem needs a mesh");
    if (doping_.size() != mesh_->node_count()) throw ShapeMismatch("doping must have one value per node");
    if (!(width_mm > 0)) throw ConfigError("geometry: width must be positive");
    mat_.validate();
    U_T_ = mat_.thermal_voltage();
    n_i_ = intrinsic_density(mat_);
    psi_int_ = intrinsic_potential(mat_);
    double cmax = 0.0;
    for (double c : doping_) cmax = std::max(cmax, std::abs(c));
    N_ref_ = std::max(cmax, n_i_);
    L0_ = std::sqrt(mat_.eps * U_T_ / (constants::q * N_ref_));
    R0_ = N_ref_ * mat_.mu_n * U_T_ / (L0_ * L0_);
    v0_.resize(doping_.size());
    for (std::size_t k = 0; k < doping_.size(); ++k) v0_[k] = std::asinh(doping_[k] / (2.0 * n_i_));
}

namespace {

constexpr double kUmToCm = 1e-4;

struct NullSink {
    void add(std::size_t, std::size_t, double) {}
};

struct TripletSink {
    std::vector<Eigen::Triplet<double>> entries;
    void add(std::size_t r, std::size_t c, double) {
        entries.emplace_back(static_cast<int>(r), static_cast<int>(c), 0.0);
    }
};

struct MatrixSink {
    SpMat* m;
    void add(std::size_t r, std::size_t c, double v) {
        m->coeffRef(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += v;
    }
};

struct IterationRecord {
    double residual;
    double update;
    double damping;
};

// Factorization and Newton loop shared by the equilibrium and coupled systems.
class NewtonWorkspace {
public:
    NewtonWorkspace(SpMat pattern, LinearSolverKind kind) : J_(std::move(pattern)), kind_(kind) {
        J_.makeCompressed();
    }

    SpMat& matrix() {
        std::fill(J_.valuePtr(), J_.valuePtr() + J_.nonZeros(), 0.0);
        return J_;
    }

    void factorize() {
        if (kind_ == LinearSolverKind::SparseLU) {
            if (!analyzed_) {
                lu_.analyzePattern(J_);
                analyzed_ = true;
            }
            lu_.factorize(J_);
            if (lu_.info() != Eigen::Success) throw NonConvergence(0, std::nan(""));
        } else {
            it_.setTolerance(1e-14);
            it_.setMaxIterations(2000);
            it_.compute(J_);
            if (it_.info() != Eigen::Success) throw NonConvergence(0, std::nan(""));
        }
    }

    VectorXd solve(const VectorXd& rhs) {
        if (kind_ == LinearSolverKind::SparseLU) return lu_.solve(rhs);
        return it_.solve(rhs);
    }

    // Scaled residual max_i |F_i| / |J_ii|.
    double scaled_residual(const VectorXd& F) const {
        double r = 0.0;
        for (Eigen::Index i = 0; i < F.size(); ++i) {
            const double d = std::abs(J_.coeff(i, i));
            r = std::max(r, std::abs(F[i]) / (d > 0 ? d : 1.0));
        }
        return r;
    }

private:
    SpMat J_;
    LinearSolverKind kind_;
    bool analyzed_ = false;
    Eigen::SparseLU<SpMat, Eigen::NaturalOrdering<int>> lu_;
    Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> it_;
};

// Damped Newton with the natural monotonicity test on the Newton update.
template <class Eval>
int run_newton(VectorXd& X, Eval&& eval, NewtonWorkspace& ws, const SolverOptions& opts,
               std::vector<IterationRecord>* history) {
    VectorXd F(X.size()), Ft(X.size());
    for (int it = 0; it < opts.max_iter; ++it) {
        SpMat& J = ws.matrix();
        eval(X, F, &J);
        ws.factorize();
        const VectorXd dx = -ws.solve(F);
        const double res = ws.scaled_residual(F);
        const double upd = dx.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(upd)) throw NonConvergence(it + 1, res);

        double lambda = 1.0;
        if (upd <= opts.newton_tol) {
            X += dx;
        } else {
            lambda = std::min(1.0, opts.max_step / upd);
            if (upd > 1e-3 || lambda < 1.0) {
                const double norm0 = dx.norm();
                while (true) {
                    const VectorXd trial = X + lambda * dx;
                    eval(trial, Ft, nullptr);
                    const VectorXd dbar = -ws.solve(Ft);
                    const double nb = dbar.norm();
                    if (std::isfinite(nb) && nb <= (1.0 - 0.25 * lambda) * norm0) {
                        X = trial;
                        break;
                    }
                    lambda *= 0.5;
                    if (lambda < opts.min_damping) throw NonConvergence(it + 1, res);
                }
            } else {
                X += dx;
            }
        }
        if (history) history->push_back({res, upd, lambda});
        if (opts.trace) {
            *opts.trace << it << '\t' << res << '\t' << upd << '\t' << lambda << '\n';
        }
        if (upd <= opts.newton_tol) return it + 1;
    }
    eval(X, F, nullptr);
    throw NonConvergence(opts.max_iter, F.lpNorm<Eigen::Infinity>());
}

}  // namespace

// Assembles the scaled equilibrium Poisson system and the coupled system.
// Coupled unknowns: (v, phi_n, phi_p) per node, then the contact voltage u.
class VanRoosbroeckSolver::Assembler {
public:
    explicit Assembler(const DeviceProblem& pb) : pb_(pb) {
        const Mesh2D& mesh = pb.mesh();
        const double L0 = pb.length_unit_cm();
        N_ = mesh.node_count();
        for (const auto& e : mesh.edges()) {
            edge_coupling_.push_back((e.transversal * kUmToCm / L0) / (e.length * kUmToCm / L0));
        }
        volume_.resize(N_);
        doping_.resize(N_);
        for (std::size_t k = 0; k < N_; ++k) {
            volume_[k] = mesh.volume(k) * kUmToCm * kUmToCm / (L0 * L0);
            doping_[k] = pb.doping()[k] / pb.density_unit();
        }
        nu_ = pb.intrinsic() / pb.density_unit();
        mp_ = pb.material().mu_p / pb.material().mu_n;
    }

    std::size_t nodes() const { return N_; }
    std::size_t circuit_index() const { return 3 * N_; }

    SpMat equilibrium_pattern() const {
        TripletSink sink;
        VectorXd X = VectorXd::Zero(static_cast<Eigen::Index>(N_)), F;
        equilibrium_eval(X, F, sink);
        return to_matrix(sink, N_);
    }

    SpMat coupled_pattern() const {
        TripletSink sink;
        VectorXd X = VectorXd::Zero(static_cast<Eigen::Index>(3 * N_ + 1)), F;
        Excitation ex;
        ex.circuit = true;
        ex.rho = 1.0;
        double flux[2];
        coupled_eval(X, ex, F, sink, flux);
        return to_matrix(sink, 3 * N_ + 1);
    }

    template <class Sink>
    void equilibrium_eval(const VectorXd& X, VectorXd& F, Sink& sink) const {
        const Mesh2D& mesh = pb_.mesh();
        const auto& v0 = pb_.neutral_potential();
        F.setZero(static_cast<Eigen::Index>(N_));
        const auto& edges = mesh.edges();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const std::size_t k = edges[e].k, l = edges[e].l;
            const double a = edge_coupling_[e];
            const double d = a * (X[k] - X[l]);
            if (!mesh.is_contact(k)) {
                F[k] += d;
                sink.add(k, k, a);
                sink.add(k, l, -a);
            }
            if (!mesh.is_contact(l)) {
                F[l] -= d;
                sink.add(l, l, a);
                sink.add(l, k, -a);
            }
        }
        for (std::size_t k = 0; k < N_; ++k) {
            if (mesh.is_contact(k)) {
                F[k] = X[k] - v0[k];
                sink.add(k, k, 1.0);
                continue;
            }
            const double n = nu_ * std::exp(X[k]);
            const double p = nu_ * std::exp(-X[k]);
            F[k] -= volume_[k] * (p - n + doping_[k]);
            sink.add(k, k, volume_[k] * (p + n));
        }
    }

    template <class Sink>
    void coupled_eval(const VectorXd& X, const Excitation& ex, VectorXd& F, Sink& sink,
                      double flux[2]) const {
        const Mesh2D& mesh = pb_.mesh();
        const auto& v0 = pb_.neutral_potential();
        const MaterialParams& mat = pb_.material();
        const std::size_t c = circuit_index();
        F.setZero(static_cast<Eigen::Index>(3 * N_ + 1));
        flux[0] = flux[1] = 0.0;

        // Contact rows of the continuity equations feed the boundary current
        // (electrons +, holes -) and, on D2 with the circuit, the circuit row.
        auto res = [&](std::size_t k, int eq, double val) {
            const BoundaryTag tag = mesh.tag(k);
            if (tag == BoundaryTag::ContactD1 || tag == BoundaryTag::ContactD2) {
                if (eq == 0) return;
                const double s = eq == 1 ? 1.0 : -1.0;
                const int which = tag == BoundaryTag::ContactD1 ? 0 : 1;
                flux[which] += s * val;
                if (which == 1 && ex.circuit) F[c] -= ex.rho * s * val;
                return;
            }
            F[3 * k + eq] += val;
        };
        auto jac = [&](std::size_t k, int eq, std::size_t col, double val) {
            const BoundaryTag tag = mesh.tag(k);
            if (tag == BoundaryTag::ContactD1 || tag == BoundaryTag::ContactD2) {
                if (eq == 0 || tag == BoundaryTag::ContactD1 || !ex.circuit) return;
                const double s = eq == 1 ? 1.0 : -1.0;
                sink.add(c, col, -ex.rho * s * val);
                return;
            }
            sink.add(3 * k + eq, col, val);
        };

        std::vector<double> dens_n(N_), dens_p(N_);
        for (std::size_t k = 0; k < N_; ++k) {
            const double v = X[3 * k], fn = X[3 * k + 1], fp = X[3 * k + 2];
            dens_n[k] = nu_ * std::exp(v - fn);
            dens_p[k] = nu_ * std::exp(fp - v);
        }

        const auto& edges = mesh.edges();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const std::size_t k = edges[e].k, l = edges[e].l;
            const std::size_t vk = 3 * k, vl = 3 * l;
            const double a = edge_coupling_[e];
            const double vK = X[vk], vL = X[vl];

            res(k, 0, a * (vK - vL));
            res(l, 0, a * (vL - vK));
            jac(k, 0, vk, a);
            jac(k, 0, vl, -a);
            jac(l, 0, vl, a);
            jac(l, 0, vk, -a);

            const double delta = vL - vK;
            const double Bm = bernoulli(-delta), Bp = bernoulli(delta);
            const double dBm = bernoulli_derivative(-delta), dBp = bernoulli_derivative(delta);

            // Electron flux k -> l: a B(-delta) n_k (exp(phi_n,k - phi_n,l) - 1).
            const double nk = dens_n[k];
            const double E = std::expm1(X[vk + 1] - X[vl + 1]);
            const double je = a * Bm * nk * E;
            const double je_vl = -a * dBm * nk * E;
            const double je_vk = a * (dBm + Bm) * nk * E;
            const double je_fk = a * Bm * nk;
            const double je_fl = -a * Bm * nk * (E + 1.0);
            res(k, 1, -je);
            res(l, 1, je);
            jac(k, 1, vk, -je_vk);
            jac(k, 1, vl, -je_vl);
            jac(k, 1, vk + 1, -je_fk);
            jac(k, 1, vl + 1, -je_fl);
            jac(l, 1, vk, je_vk);
            jac(l, 1, vl, je_vl);
            jac(l, 1, vk + 1, je_fk);
            jac(l, 1, vl + 1, je_fl);

            // Hole flux, scaled by mu_p/mu_n: a B(delta) p_k (exp(phi_p,l - phi_p,k) - 1).
            const double pk = dens_p[k];
            const double Q = std::expm1(X[vl + 2] - X[vk + 2]);
            const double am = a * mp_;
            const double jh = am * Bp * pk * Q;
            const double jh_vl = am * dBp * pk * Q;
            const double jh_vk = -am * (dBp + Bp) * pk * Q;
            const double jh_fk = -am * Bp * pk;
            const double jh_fl = am * Bp * pk * (Q + 1.0);
            res(k, 2, -jh);
            res(l, 2, jh);
            jac(k, 2, vk, -jh_vk);
            jac(k, 2, vl, -jh_vl);
            jac(k, 2, vk + 2, -jh_fk);
            jac(k, 2, vl + 2, -jh_fl);
            jac(l, 2, vk, jh_vk);
            jac(l, 2, vl, jh_vl);
            jac(l, 2, vk + 2, jh_fk);
            jac(l, 2, vl + 2, jh_fl);
        }

        const double ni = pb_.intrinsic();
        const double Nref = pb_.density_unit();
        const double R0 = pb_.rate_unit();
        for (std::size_t k = 0; k < N_; ++k) {
            const std::size_t vk = 3 * k;
            const double V = volume_[k];
            const double n = dens_n[k], p = dens_p[k];

            res(k, 0, -V * (p - n + doping_[k]));
            jac(k, 0, vk, V * (p + n));
            jac(k, 0, vk + 1, -V * n);
            jac(k, 0, vk + 2, -V * p);

            double gen = 0.0;
            if (ex.generation_scale != 0.0) {
                gen = ex.generation_scale *
                      laser_shape_xz(mesh.node_x(k) - ex.x0, mesh.node_z(k), ex.laser);
            }
            // Recombination in physical units; the excess n p - n_i^2 is
            // evaluated from the quasi-Fermi splitting.
            const double np_ = n * Nref, pp_ = p * Nref;
            const double D = ni * ni * std::expm1(X[vk + 2] - X[vk + 1]);
            const double S = mat.tau_p * (np_ + mat.n_T) + mat.tau_n * (pp_ + mat.p_T);
            const double K = mat.C_d + mat.C_n * np_ + mat.C_p * pp_ + 1.0 / S;
            const double H = D * K / R0;
            const double dH_dn = (pp_ * K + D * (mat.C_n - mat.tau_p / (S * S))) / R0;
            const double dH_dp = (np_ * K + D * (mat.C_p - mat.tau_n / (S * S))) / R0;
            const double H_v = dH_dn * np_ - dH_dp * pp_;
            const double H_fn = -dH_dn * np_;
            const double H_fp = dH_dp * pp_;
            for (int eq = 1; eq <= 2; ++eq) {
                res(k, eq, -V * (gen - H));
                jac(k, eq, vk, V * H_v);
                jac(k, eq, vk + 1, V * H_fn);
                jac(k, eq, vk + 2, V * H_fp);
            }
        }

        for (std::size_t k = 0; k < N_; ++k) {
            const BoundaryTag tag = mesh.tag(k);
            if (tag != BoundaryTag::ContactD1 && tag != BoundaryTag::ContactD2) continue;
            const bool d2 = tag == BoundaryTag::ContactD2;
            const double u = d2 ? X[c] : 0.0;
            const std::size_t vk = 3 * k;
            F[vk] = X[vk] - v0[k] - u;
            F[vk + 1] = X[vk + 1] - u;
            F[vk + 2] = X[vk + 2] - u;
            for (int eq = 0; eq < 3; ++eq) {
                sink.add(vk + eq, vk + eq, 1.0);
                if (d2) sink.add(vk + eq, c, -1.0);
            }
        }
        F[c] += ex.circuit ? X[c] : X[c] - ex.u_fixed;
        sink.add(c, c, 1.0);
    }

private:
    static SpMat to_matrix(const TripletSink& sink, std::size_t n) {
        SpMat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        m.setFromTriplets(sink.entries.begin(), sink.entries.end());
        m.makeCompressed();
        return m;
    }

    const DeviceProblem& pb_;
    std::size_t N_ = 0;
    std::vector<double> edge_coupling_;
    std::vector<double> volume_;
    std::vector<double> doping_;
    double nu_ = 0.0;
    double mp_ = 1.0;

public:
    std::unique_ptr<NewtonWorkspace> eq_ws;
    std::unique_ptr<NewtonWorkspace> full_ws;
    std::vector<IterationRecord> history;
};

VanRoosbroeckSolver::VanRoosbroeckSolver(std::shared_ptr<const DeviceProblem> problem,
                                         SolverOptions options)
    : problem_(std::move(problem)), opts_(options) {
    if (!problem_) throw InvalidConfig("solver needs a device problem");
    opts_.validate();
    assembler_ = std::make_shared<Assembler>(*problem_);
}

void VanRoosbroeckSolver::ensure_equilibrium() {
    if (have_eq_) return;
    Assembler& as = *assembler_;
    if (!as.eq_ws) as.eq_ws = std::make_unique<NewtonWorkspace>(as.equilibrium_pattern(), opts_.linear_solver);
    const auto& v0 = problem_->neutral_potential();
    VectorXd X = Eigen::Map<const VectorXd>(v0.data(), static_cast<Eigen::Index>(v0.size()));
    auto eval = [&](const VectorXd& x, VectorXd& F, SpMat* J) {
        if (J) {
            MatrixSink sink{J};
            as.equilibrium_eval(x, F, sink);
        } else {
            NullSink sink;
            as.equilibrium_eval(x, F, sink);
        }
    };
    as.history.clear();
    last_iterations_ = run_newton(X, eval, *as.eq_ws, opts_, &as.history);
    eq_v_ = std::move(X);
    have_eq_ = true;
}

PdeState VanRoosbroeckSolver::equilibrium() {
    ensure_equilibrium();
    const std::size_t N = assembler_->nodes();
    VectorXd X = VectorXd::Zero(static_cast<Eigen::Index>(3 * N + 1));
    for (std::size_t k = 0; k < N; ++k) X[3 * k] = eq_v_[k];
    PdeState s = unpack(X, false);
    s.illuminated = false;
    return s;
}

VanRoosbroeckSolver::Excitation VanRoosbroeckSolver::make_excitation(const LaserParams& laser,
                                                                     double x0_um) const {
    laser.validate();
    Excitation ex;
    ex.laser = laser;
    ex.x0 = x0_um;
    // kappa S_xz / width, with S_xz converted from um^-2 to cm^-2.
    ex.generation_scale = kappa(laser) * 1e8 / (problem_->width_cm() * problem_->rate_unit());
    return ex;
}

void VanRoosbroeckSolver::newton(VectorXd& X, const Excitation& ex) {
    Assembler& as = *assembler_;
    if (!as.full_ws) as.full_ws = std::make_unique<NewtonWorkspace>(as.coupled_pattern(), opts_.linear_solver);
    auto eval = [&](const VectorXd& x, VectorXd& F, SpMat* J) {
        double flux[2];
        if (J) {
            MatrixSink sink{J};
            as.coupled_eval(x, ex, F, sink, flux);
        } else {
            NullSink sink;
            as.coupled_eval(x, ex, F, sink, flux);
        }
    };
    last_iterations_ += run_newton(X, eval, *as.full_ws, opts_, &as.history);
}

void VanRoosbroeckSolver::ramp(VectorXd& X, Excitation ex) {
    ensure_equilibrium();
    const std::size_t N = assembler_->nodes();
    X = VectorXd::Zero(static_cast<Eigen::Index>(3 * N + 1));
    for (std::size_t k = 0; k < N; ++k) X[3 * k] = eq_v_[k];
    X[static_cast<Eigen::Index>(3 * N)] = ex.circuit ? 0.0 : ex.u_fixed;
    for (std::size_t k = 0; k < N; ++k) {
        if (problem_->mesh().tag(k) == BoundaryTag::ContactD2 && !ex.circuit) {
            for (int eq = 0; eq < 3; ++eq) X[static_cast<Eigen::Index>(3 * k + eq)] += ex.u_fixed;
        }
    }

    const double target = ex.generation_scale;
    double reached = 0.0;
    double step = 1.0 / opts_.power_ramp_steps;
    int subdivisions = 0;
    VectorXd saved = X;
    while (reached < 1.0) {
        const double next = std::min(1.0, reached + step);
        ex.generation_scale = target * next;
        try {
            newton(X, ex);
            reached = next;
            saved = X;
        } catch (const SolverError&) {
            X = saved;
            step *= 0.5;
            if (++subdivisions > opts_.max_ramp_subdivisions) throw DampingExhausted(reached);
        }
    }
}

PdeState VanRoosbroeckSolver::unpack(const VectorXd& X, bool circuit) const {
    const std::size_t N = assembler_->nodes();
    const double UT = problem_->thermal_voltage();
    const double nu = problem_->intrinsic();
    PdeState s;
    s.psi.resize(N);
    s.phi_n.resize(N);
    s.phi_p.resize(N);
    s.n.resize(N);
    s.p.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
        const double v = X[3 * k], fn = X[3 * k + 1], fp = X[3 * k + 2];
        s.psi[k] = UT * v + problem_->psi_intrinsic();
        s.phi_n[k] = UT * fn;
        s.phi_p[k] = UT * fp;
        s.n[k] = nu * std::exp(v - fn);
        s.p[k] = nu * std::exp(fp - v);
    }
    s.u_D2 = UT * X[static_cast<Eigen::Index>(3 * N)];
    (void)circuit;
    return s;
}

PdeState VanRoosbroeckSolver::solve(const LaserParams& laser, double x0_um, double u_D2) {
    Excitation ex = make_excitation(laser, x0_um);
    ex.circuit = false;
    ex.u_fixed = u_D2 / problem_->thermal_voltage();
    assembler_->history.clear();
    last_iterations_ = 0;
    VectorXd X;
    ramp(X, ex);
    X[X.size() - 1] = ex.u_fixed;
    last_ = X;
    last_circuit_ = false;
    last_laser_ = laser;
    last_x0_ = x0_um;
    PdeState s = unpack(X, false);
    s.u_D2 = u_D2;
    s.laser = laser;
    s.x0 = x0_um;
    s.illuminated = true;
    return s;
}

double VanRoosbroeckSolver::laser_voltage(const LaserParams& laser, double x0_um, double R,
                                          bool warm_start) {
    if (!(R >= 0)) throw ConfigError("circuit resistance must be non-negative");
    if (R == 0.0) {
        solve(laser, x0_um, 0.0);
        return 0.0;
    }
    Excitation ex = make_excitation(laser, x0_um);
    ex.circuit = true;
    ex.rho = R * problem_->width_cm() * constants::q * problem_->density_unit() *
             problem_->material().mu_n;
    assembler_->history.clear();
    last_iterations_ = 0;

    VectorXd X;
    bool done = false;
    if (warm_start && have_circuit_ && last_circuit_) {
        X = last_;
        try {
            newton(X, ex);
            done = true;
        } catch (const SolverError&) {
            done = false;
        }
    }
    if (!done) ramp(X, ex);

    // Circuit consistency of the converged state.
    VectorXd F;
    double flux[2];
    NullSink sink;
    assembler_->coupled_eval(X, ex, F, sink, flux);
    const double u = X[X.size() - 1];
    if (!(std::abs(u - ex.rho * flux[1]) <= opts_.circuit_tol * std::max(1.0, std::abs(u)))) {
        throw CircuitNonConvergence("circuit relation residual " + std::to_string(u - ex.rho * flux[1]));
    }

    last_ = X;
    last_circuit_ = true;
    have_circuit_ = true;
    last_laser_ = laser;
    last_x0_ = x0_um;
    return u * problem_->thermal_voltage();
}

PdeState VanRoosbroeckSolver::state() const {
    if (last_.size() == 0) throw SolverError("no converged state available");
    PdeState s = unpack(last_, last_circuit_);
    s.laser = last_laser_;
    s.x0 = last_x0_;
    s.illuminated = true;
    return s;
}

PdeState solve_equilibrium(std::shared_ptr<const DeviceProblem> problem, const SolverOptions& opts) {
    VanRoosbroeckSolver s(std::move(problem), opts);
    return s.equilibrium();
}

PdeState solve_van_roosbroeck(std::shared_ptr<const DeviceProblem> problem, const LaserParams& laser,
                              double x0_um, double u_D2, const SolverOptions& opts) {
    VanRoosbroeckSolver s(std::move(problem), opts);
    return s.solve(laser, x0_um, u_D2);
}

double solve_laser_voltage(std::shared_ptr<const DeviceProblem> problem, const LaserParams& laser,
                           double x0_um, double R, const SolverOptions& opts) {
    VanRoosbroeckSolver s(std::move(problem), opts);
    return s.laser_voltage(laser, x0_um, R);
}

double contact_current(const PdeState& state, const DeviceProblem& problem, Contact contact) {
    const std::size_t N = problem.mesh().node_count();
    if (state.psi.size() != N || state.phi_n.size() != N || state.phi_p.size() != N) {
        throw ShapeMismatch("state does not match the device mesh");
    }
    const double UT = problem.thermal_voltage();
    VectorXd X(static_cast<Eigen::Index>(3 * N + 1));
    for (std::size_t k = 0; k < N; ++k) {
        X[3 * k] = (state.psi[k] - problem.psi_intrinsic()) / UT;
        X[3 * k + 1] = state.phi_n[k] / UT;
        X[3 * k + 2] = state.phi_p[k] / UT;
    }
    X[static_cast<Eigen::Index>(3 * N)] = state.u_D2 / UT;

    VanRoosbroeckSolver::Excitation ex;
    ex.laser = state.laser;
    ex.x0 = state.x0;
    ex.u_fixed = state.u_D2 / UT;
    if (state.illuminated) {
        ex.generation_scale = kappa(state.laser) * 1e8 / (problem.width_cm() * problem.rate_unit());
    }
    VanRoosbroeckSolver::Assembler as(problem);
    VectorXd F;
    double flux[2];
    NullSink sink;
    as.coupled_eval(X, ex, F, sink, flux);
    const double scale = problem.width_cm() * constants::q * problem.density_unit() *
                         problem.material().mu_n * UT;
    return scale * flux[contact == Contact::D1 ? 0 : 1];
}

}  // namespace doprec
