#include "doprec/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include <Eigen/SVD>

#include "doprec/errors.hpp"
#include "doprec/parallel.hpp"

namespace doprec {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over the combined state
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void DopingSampling::validate() const {
    if (!(C0 > 0)) throw ConfigError("doping: C0 must be positive");
    if (terms < 0 || terms > 255) throw ConfigError("doping: terms must lie in [0, 255]");
    if (!(zero_probability >= 0 && zero_probability <= 1)) {
        throw ConfigError("doping: zero_probability must lie in [0,1]");
    }
    if (!(alpha_min > 0 && alpha_min <= alpha_max)) throw ConfigError("doping: bad amplitude range");
    if (!(lambda_min > 0 && lambda_min <= lambda_max)) throw ConfigError("doping: bad wavelength range");
    // Sums reach alpha_max * terms only with probability zero.
    if (terms * alpha_max > 1.0) throw ConfigError("doping: amplitudes could sum to more than one");
}

void Dataset::validate() const {
    for (const auto& r : records) {
        if (r.u.size() != n() || r.C.size() != n()) throw ShapeMismatch("record length differs from n");
        for (double c : r.C) {
            if (!(c > 0)) throw DegenerateData("record doping must be positive");
        }
    }
}

void SweepOptions::validate() const {
    solver.validate();
    mesh.validate();
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (chunk < 1) throw ConfigError("sweep chunk must be at least 1");
}

DopingSpec sample_doping_spec(Rng& rng, const DopingSampling& sampling) {
    DopingSpec spec;
    spec.C0 = sampling.C0;
    std::bernoulli_distribution zero(sampling.zero_probability);
    std::uniform_real_distribution<double> amp(sampling.alpha_min, sampling.alpha_max);
    std::uniform_real_distribution<double> loglam(std::log(sampling.lambda_min), std::log(sampling.lambda_max));
    for (int i = 0; i < sampling.terms; ++i) {
        spec.alpha.push_back(zero(rng) ? 0.0 : amp(rng));
        spec.lambda.push_back(std::clamp(std::exp(loglam(rng)), sampling.lambda_min, sampling.lambda_max));
    }
    return spec;
}

std::vector<double> doping_on_mesh(const DopingSpec& spec, const Mesh2D& mesh) {
    std::vector<double> column(mesh.nx());
    for (std::size_t i = 0; i < mesh.nx(); ++i) column[i] = doping_eval(spec, mesh.x()[i]);
    std::vector<double> out(mesh.node_count());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = column[mesh.x_index(k)];
    return out;
}

namespace {

struct Chunk {
    std::size_t begin;
    std::size_t end;
};

std::vector<Chunk> split(std::size_t n, int chunk) {
    std::vector<Chunk> out;
    const auto c = static_cast<std::size_t>(chunk);
    for (std::size_t b = 0; b < n; b += c) out.push_back({b, std::min(n, b + c)});
    return out;
}

void sweep_chunk(const std::shared_ptr<const DeviceProblem>& problem, const DeviceConfig& device,
                 const std::vector<double>& xs, Chunk ch, const SolverOptions& so, double* u) {
    VanRoosbroeckSolver solver(problem, so);
    for (std::size_t i = ch.begin; i < ch.end; ++i) {
        try {
            u[i] = solver.laser_voltage(device.laser, xs[i], device.geometry.R, i > ch.begin);
        } catch (const SolverError& e) {
            throw SpotFailure(i, e.what());
        }
    }
}

std::vector<double> probe_doping(const DopingSpec& spec, const std::vector<double>& xs) {
    std::vector<double> c(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) c[i] = doping_eval(spec, xs[i]);
    return c;
}

}  // namespace

SweepResult forward_sweep(const DopingSpec& spec, const DeviceConfig& device, const SweepOptions& opts) {
    device.validate();
    opts.validate();
    auto mesh = std::make_shared<const Mesh2D>(Mesh2D::build(device.geometry, opts.mesh));
    auto problem = std::make_shared<const DeviceProblem>(mesh, doping_on_mesh(spec, *mesh), device.material,
                                                         device.geometry.width);
    const auto xs = device.geometry.probe_grid();
    SweepResult res;
    res.u.assign(xs.size(), 0.0);
    res.C = probe_doping(spec, xs);
    const auto chunks = split(xs.size(), opts.chunk);
    parallel_for(chunks.size(), opts.workers, [&](std::size_t c) {
        sweep_chunk(problem, device, xs, chunks[c], opts.solver, res.u.data());
    });
    return res;
}

Dataset sample_records(std::size_t count, DatasetTag tag, DatasetRole role, const DeviceConfig& device,
                       const DopingSampling& sampling, const NoiseParams& noise, std::uint64_t seed) {
    device.validate();
    sampling.validate();
    if (tag == DatasetTag::Noisy) noise.validate();
    Dataset ds;
    ds.sigma_h = device.geometry.probe_grid();
    ds.tag = tag;
    ds.role = role;
    ds.records.resize(count);
    const double length_um = device.geometry.length * 1000.0;
    for (std::size_t j = 0; j < count; ++j) {
        DatasetRecord& r = ds.records[j];
        r.beta_seed = derive_seed(seed, 2 * j);
        Rng rng(r.beta_seed);
        r.beta = sample_doping_spec(rng, sampling);
        if (tag == DatasetTag::Noisy) {
            r.noise_seed = derive_seed(seed, 2 * j + 1);
            restore_noise(r, noise, length_um);
        }
        r.C = probe_doping(r.beta, ds.sigma_h);
    }
    return ds;
}

void restore_noise(DatasetRecord& record, const NoiseParams& noise, double length_um) {
    if (record.noise_seed == kNoSeed) return;
    record.beta.amplitude_noise.reset();
    record.beta.warp.reset();
    Rng rng(record.noise_seed);
    amplitude_noise(record.beta, noise, length_um, rng);
    wavelength_warp(record.beta, noise, length_um, rng);
}

Dataset generate_dataset(std::size_t count, DatasetTag tag, DatasetRole role, const DeviceConfig& device,
                         const DopingSampling& sampling, const NoiseParams& noise, std::uint64_t seed,
                         const SweepOptions& opts, GenerationLog* log) {
    opts.validate();
    Dataset ds = sample_records(count, tag, role, device, sampling, noise, seed);
    if (count == 0) return ds;

    auto mesh = std::make_shared<const Mesh2D>(Mesh2D::build(device.geometry, opts.mesh));
    std::vector<std::shared_ptr<const DeviceProblem>> problems(count);
    for (std::size_t j = 0; j < count; ++j) {
        ds.records[j].u.assign(ds.n(), 0.0);
        problems[j] = std::make_shared<const DeviceProblem>(mesh, doping_on_mesh(ds.records[j].beta, *mesh),
                                                            device.material, device.geometry.width);
    }

    const auto chunks = split(ds.n(), opts.chunk);
    const std::size_t per_record = chunks.size();
    std::vector<std::string> errors(count * per_record);
    parallel_for(count * per_record, opts.workers, [&](std::size_t t) {
        const std::size_t j = t / per_record;
        try {
            sweep_chunk(problems[j], device, ds.sigma_h, chunks[t % per_record], opts.solver,
                        ds.records[j].u.data());
        } catch (const SolverError& e) {
            errors[t] = e.what();
        }
    });

    GenerationLog local;
    std::vector<DatasetRecord> kept;
    kept.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        std::string what;
        for (std::size_t c = 0; c < per_record && what.empty(); ++c) what = errors[j * per_record + c];
        if (what.empty()) {
            kept.push_back(std::move(ds.records[j]));
        } else {
            local.failures.push_back({j, what});
        }
    }
    if (log) *log = local;
    if (local.failures.size() * 100 > count) {
        throw SolverError(std::to_string(local.failures.size()) + " of " + std::to_string(count) +
                          " records failed; first: record " + std::to_string(local.failures.front().record) +
                          ": " + local.failures.front().what);
    }
    ds.records = std::move(kept);
    return ds;
}

Eigen::MatrixXd field_matrix(const Dataset& ds, Field field) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(ds.records.size()));
    for (std::size_t j = 0; j < ds.records.size(); ++j) {
        const auto& v = field == Field::U ? ds.records[j].u : ds.records[j].C;
        if (v.size() != ds.n()) throw ShapeMismatch("record length differs from n");
        for (std::size_t i = 0; i < ds.n(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
    }
    return m;
}

std::vector<double> svd_spectrum(const Dataset& ds, Field field, std::size_t count) {
    if (ds.records.empty()) throw DegenerateData("svd of an empty dataset");
    const Eigen::MatrixXd m = field_matrix(ds, field);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd& s = svd.singularValues();
    const auto k = std::min<std::size_t>(count, static_cast<std::size_t>(s.size()));
    return {s.data(), s.data() + k};
}

std::size_t effective_rank(const std::vector<double>& sv, double relative_threshold) {
    if (sv.empty()) return 0;
    const double cut = relative_threshold * *std::max_element(sv.begin(), sv.end());
    return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s >= cut && s > 0; }));
}

}  // namespace doprec
