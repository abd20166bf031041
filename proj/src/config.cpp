#include "doprec/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "doprec/errors.hpp"

namespace doprec {

namespace pt = boost::property_tree;

namespace {

struct Field {
    const char* section;
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& what) {
    double v = 0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError(what + ": expected a number, got '" + s + "'");
    return v;
}

int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError(what + ": expected an integer, got '" + s + "'");
    return v;
}

#define DBL(sec, key, expr)                                                                      \
    Field {                                                                                      \
        sec, #key, [](const RunConfig& c) { return fmt(c.expr); },                               \
            [](RunConfig& c, const std::string& v) { c.expr = parse_double(v, sec "." #key); } \
    }
#define INT(sec, key, expr)                                                                   \
    Field {                                                                                   \
        sec, #key, [](const RunConfig& c) { return std::to_string(c.expr); },                 \
            [](RunConfig& c, const std::string& v) { c.expr = parse_int(v, sec "." #key); } \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        DBL("material", N_c, device.material.N_c),
        DBL("material", N_v, device.material.N_v),
        DBL("material", E_c, device.material.E_c),
        DBL("material", E_v, device.material.E_v),
        DBL("material", T, device.material.T),
        DBL("material", eps, device.material.eps),
        DBL("material", mu_n, device.material.mu_n),
        DBL("material", mu_p, device.material.mu_p),
        DBL("material", C_d, device.material.C_d),
        DBL("material", C_n, device.material.C_n),
        DBL("material", C_p, device.material.C_p),
        DBL("material", tau_n, device.material.tau_n),
        DBL("material", tau_p, device.material.tau_p),
        DBL("material", n_T, device.material.n_T),
        DBL("material", p_T, device.material.p_T),
        DBL("laser", P, device.laser.P),
        DBL("laser", lambda_L, device.laser.lambda_L),
        DBL("laser", r, device.laser.r),
        DBL("laser", sigma_L, device.laser.sigma_L),
        DBL("laser", d_A, device.laser.d_A),
        DBL("geometry", length, device.geometry.length),
        DBL("geometry", width, device.geometry.width),
        DBL("geometry", height, device.geometry.height),
        DBL("geometry", probe_length, device.geometry.probe_length),
        INT("geometry", n, device.geometry.n),
        DBL("geometry", R, device.geometry.R),
        DBL("doping", C0, doping.C0),
        INT("doping", terms, doping.terms),
        DBL("doping", zero_probability, doping.zero_probability),
        DBL("doping", alpha_min, doping.alpha_min),
        DBL("doping", alpha_max, doping.alpha_max),
        DBL("doping", lambda_min, doping.lambda_min),
        DBL("doping", lambda_max, doping.lambda_max),
        DBL("noise", k_amp, noise.k_amp),
        INT("noise", knot_count, noise.knot_count),
        DBL("noise", degree3_probability, noise.degree3_probability),
        DBL("noise", warp_strength, noise.warp_strength),
        DBL("mesh", dx_max, mesh.dx_max),
        DBL("mesh", min_wavelength, mesh.min_wavelength),
        INT("mesh", nz, mesh.nz),
        DBL("mesh", z_grading, mesh.z_grading),
        DBL("solver", newton_tol, solver.newton_tol),
        INT("solver", max_iter, solver.max_iter),
        DBL("solver", min_damping, solver.min_damping),
        DBL("solver", max_step, solver.max_step),
        INT("solver", power_ramp_steps, solver.power_ramp_steps),
        INT("solver", max_ramp_subdivisions, solver.max_ramp_subdivisions),
        DBL("solver", circuit_tol, solver.circuit_tol),
        Field{"solver", "linear_solver",
              [](const RunConfig& c) {
                  return std::string(c.solver.linear_solver == LinearSolverKind::SparseLU ? "sparselu" : "bicgstab");
              },
              [](RunConfig& c, const std::string& v) {
                  if (v == "sparselu") c.solver.linear_solver = LinearSolverKind::SparseLU;
                  else if (v == "bicgstab") c.solver.linear_solver = LinearSolverKind::BiCGSTAB;
                  else throw ConfigError("solver.linear_solver: expected sparselu or bicgstab, got '" + v + "'");
              }},
        INT("solver", chunk, chunk),
    };
    return f;
}

#undef DBL
#undef INT

const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields()) {
        if (section == f.section && key == f.key) return f;
    }
    bool known_section = false;
    for (const auto& f : fields()) known_section |= section == f.section;
    if (!known_section) throw ConfigError("unknown config section [" + section + "]");
    throw ConfigError("unknown config key " + section + "." + key);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

void RunConfig::validate() const {
    try {
        device.validate();
        doping.validate();
        noise.validate();
        mesh.validate();
        solver.validate();
    } catch (const InvalidConfig& e) {
        throw ConfigError(e.what());
    }
    if (chunk < 1) throw ConfigError("solver.chunk must be at least 1");
}

SweepOptions RunConfig::sweep_options(int workers) const {
    SweepOptions o;
    o.solver = solver;
    o.mesh = mesh;
    o.workers = workers;
    o.chunk = chunk;
    return o;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override must look like section.key=value: '" + assignment + "'");
    }
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    find_field(section, key).set(cfg, trim(assignment.substr(eq + 1)));
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        pt::ptree tree;
        try {
            pt::read_ini(path, tree);
        } catch (const pt::ini_parser_error& e) {
            throw ConfigError(e.what());
        }
        for (const auto& [section, body] : tree) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError("key '" + section + "' outside any section in " + path);
            }
            for (const auto& [key, value] : body) find_field(section, key).set(cfg, trim(value.data()));
        }
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

std::string canonical_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.section << '.' << f.key << '=' << f.get(cfg) << '\n';
    return os.str();
}

std::string config_ini(const RunConfig& cfg) {
    std::ostringstream os;
    std::string current;
    for (const auto& f : fields()) {
        if (current != f.section) {
            if (!current.empty()) os << '\n';
            current = f.section;
            os << '[' << current << "]\n";
        }
        os << f.key << " = " << f.get(cfg) << '\n';
    }
    return os.str();
}

}  // namespace doprec
