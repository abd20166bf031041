#pragma once

#include <string>
#include <vector>

#include "doprec/datagen.hpp"
#include "doprec/device_model.hpp"
#include "doprec/fv_solver.hpp"
#include "doprec/mesh.hpp"

namespace doprec {

// Everything a run reads from an INI file: sections [material], [laser],
// [geometry], [doping], [noise], [mesh], [solver].
struct RunConfig {
    DeviceConfig device;
    DopingSampling doping;
    NoiseParams noise;
    MeshParams mesh;
    SolverOptions solver;
    int chunk = 24;

    void validate() const;
    SweepOptions sweep_options(int workers) const;
};

// Defaults, then the file (if path is non-empty), then "section.key=value"
// overrides. Unknown sections or keys raise ConfigError.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
void apply_override(RunConfig& cfg, const std::string& assignment);

// Every key with its value, one "section.key=value" per line, in a fixed
// order; the digest input.
std::string canonical_config(const RunConfig& cfg);
std::string config_ini(const RunConfig& cfg);

}  // namespace doprec
