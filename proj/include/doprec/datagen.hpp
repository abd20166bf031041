#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "doprec/device_model.hpp"
#include "doprec/fv_solver.hpp"
#include "doprec/mesh.hpp"

namespace doprec {

using Rng = std::mt19937_64;

constexpr std::uint64_t kNoSeed = UINT64_MAX;

// Mixes a base seed with a stream index into an independent sub-seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct DopingSampling {
    double C0 = 1e16;
    int terms = 5;
    double zero_probability = 0.2;
    double alpha_min = 0.05;
    double alpha_max = 0.2;
    double lambda_min = 10.0;    // [um]
    double lambda_max = 1000.0;  // [um]

    void validate() const;
};

struct NoiseParams {
    double k_amp = 0.02;
    int knot_count = 129;
    // Probability of drawing a cubic rather than a quadratic warp.
    double degree3_probability = 0.5;
    // Warp coefficients are drawn with |p'| up to this value before the
    // p' > -1 rejection test.
    double warp_strength = 0.5;

    void validate() const;
};

DopingSpec sample_doping_spec(Rng& rng, const DopingSampling& sampling);

// Attaches f(x) = natural spline through (x_i, k_amp s_i Delta_C) on
// knot_count equally spaced knots over [-length/2, length/2].
void amplitude_noise(DopingSpec& spec, const NoiseParams& params, double length_um, Rng& rng);

// Attaches t(x) = x + p(x) with p(+-length/2) = 0 and p' > -1.
void wavelength_warp(DopingSpec& spec, const NoiseParams& params, double length_um, Rng& rng);

enum class DatasetTag : std::uint8_t { Clean = 0, Noisy = 1 };
enum class DatasetRole : std::uint8_t { Train, Test, Validation };

struct DatasetRecord {
    std::vector<double> u;  // [V]
    std::vector<double> C;  // [cm^-3]
    DopingSpec beta;
    std::uint64_t beta_seed = kNoSeed;
    std::uint64_t noise_seed = kNoSeed;
};

struct Dataset {
    std::vector<double> sigma_h;  // [um]
    DatasetTag tag = DatasetTag::Clean;
    DatasetRole role = DatasetRole::Train;
    std::vector<DatasetRecord> records;

    std::size_t n() const { return sigma_h.size(); }
    void validate() const;
};

struct SweepOptions {
    SolverOptions solver;
    MeshParams mesh;
    int workers = 1;
    // Spots solved in sequence by one solver instance; fixed so results do
    // not depend on the worker count.
    int chunk = 24;

    void validate() const;
};

struct SweepResult {
    std::vector<double> u;
    std::vector<double> C;
};

// Nodal doping of a spec on a mesh.
std::vector<double> doping_on_mesh(const DopingSpec& spec, const Mesh2D& mesh);

SweepResult forward_sweep(const DopingSpec& spec, const DeviceConfig& device, const SweepOptions& opts);

struct GenerationFailure {
    std::size_t record;
    std::string what;
};

struct GenerationLog {
    std::vector<GenerationFailure> failures;
};

// Records with sampled specs (and noise) and C on the probe grid; u empty.
Dataset sample_records(std::size_t count, DatasetTag tag, DatasetRole role, const DeviceConfig& device,
                       const DopingSampling& sampling, const NoiseParams& noise, std::uint64_t seed);

// Samples and sweeps count records. Failed records are dropped and logged;
// more than 1% failures raise SolverError.
Dataset generate_dataset(std::size_t count, DatasetTag tag, DatasetRole role, const DeviceConfig& device,
                         const DopingSampling& sampling, const NoiseParams& noise, std::uint64_t seed,
                         const SweepOptions& opts, GenerationLog* log = nullptr);

// Re-creates the noise transforms of a noisy record from its noise seed.
void restore_noise(DatasetRecord& record, const NoiseParams& noise, double length_um);

enum class Field : std::uint8_t { U, C };

Eigen::MatrixXd field_matrix(const Dataset& ds, Field field);  // n x N
std::vector<double> svd_spectrum(const Dataset& ds, Field field, std::size_t count);
std::size_t effective_rank(const std::vector<double>& singular_values, double relative_threshold);

// DPRC1 binary format.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);
void write_dataset(const Dataset& ds, std::ostream& out);
Dataset read_dataset(std::istream& in);
void export_csv(const Dataset& ds, const std::string& path);

}  // namespace doprec
