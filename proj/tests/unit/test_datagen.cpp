#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Dense>

#include "doprec/datagen.hpp"
#include "doprec/digest.hpp"
#include "doprec/errors.hpp"
#include "support.hpp"

using namespace doprec;
using testing::rel_err;

namespace {

DeviceConfig small_device(int n = 8) {
    DeviceConfig d;
    d.geometry.length = 0.8;
    d.geometry.n = n;
    return d;
}

std::string serialize(const Dataset& ds) {
    std::ostringstream out;
    write_dataset(ds, out);
    return out.str();
}

Dataset identical_records(std::size_t count) {
    Dataset ds = sample_records(1, DatasetTag::Clean, DatasetRole::Train, DeviceConfig{}, DopingSampling{},
                                NoiseParams{}, 3);
    DatasetRecord r = ds.records[0];
    r.u = r.C;
    ds.records.assign(count, r);
    return ds;
}

std::size_t dominant_bin(const std::vector<double>& v) {
    const std::size_t n = v.size();
    double mean = 0;
    for (double x : v) mean += x / static_cast<double>(n);
    std::size_t best = 1;
    double best_mag = -1;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        std::complex<double> s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s += (v[i] - mean) * std::polar(1.0, -2 * constants::pi * static_cast<double>(k * i) / static_cast<double>(n));
        }
        if (std::abs(s) > best_mag) {
            best_mag = std::abs(s);
            best = k;
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("doping specs are deterministic and within range") {
    const DopingSampling s;
    Rng a(42), b(42);
    const DopingSpec x = sample_doping_spec(a, s), y = sample_doping_spec(b, s);
    CHECK(x.alpha == y.alpha);
    CHECK(x.lambda == y.lambda);

    Rng r(1);
    std::size_t zeros = 0, total = 0;
    for (int i = 0; i < 10000; ++i) {
        const DopingSpec d = sample_doping_spec(r, s);
        REQUIRE(d.alpha.size() == 5u);
        CHECK(d.C0 == 1e16);
        for (std::size_t k = 0; k < 5; ++k) {
            const double al = d.alpha[k], la = d.lambda[k];
            CHECK((al == 0.0 || (al >= 0.05 && al <= 0.2)));
            CHECK(la >= 10.0);
            CHECK(la <= 1000.0);
            zeros += al == 0.0;
            ++total;
        }
    }
    const double p = s.zero_probability;
    const double expected = p * static_cast<double>(total);
    const double sigma = std::sqrt(static_cast<double>(total) * p * (1 - p));
    CHECK(std::abs(static_cast<double>(zeros) - expected) <= 3 * sigma);
}

TEST_CASE("wavelengths are log-uniform") {
    Rng r(8);
    std::size_t below = 0, total = 0;
    for (int i = 0; i < 4000; ++i) {
        for (double la : sample_doping_spec(r, DopingSampling{}).lambda) {
            below += la < 100.0;
            ++total;
        }
    }
    const double sigma = std::sqrt(static_cast<double>(total) * 0.25);
    CHECK(std::abs(static_cast<double>(below) - 0.5 * static_cast<double>(total)) <= 3 * sigma);
}

TEST_CASE("sampling validation") {
    DopingSampling s;
    s.alpha_max = 0.3;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = DopingSampling{};
    s.lambda_min = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    NoiseParams n;
    n.knot_count = 3;
    CHECK_THROWS_AS(n.validate(), Error);
}

TEST_CASE("empty dataset") {
    const Dataset ds = generate_dataset(0, DatasetTag::Clean, DatasetRole::Train, small_device(), DopingSampling{},
                                        NoiseParams{}, 1, SweepOptions{});
    CHECK(ds.records.empty());
    CHECK(ds.n() == 8u);
    std::istringstream in(serialize(ds));
    const Dataset back = read_dataset(in);
    CHECK(back.records.empty());
    CHECK(back.sigma_h == ds.sigma_h);
}

TEST_CASE("DPRC round trip and rejection of malformed files") {
    Dataset ds = sample_records(5, DatasetTag::Noisy, DatasetRole::Test, DeviceConfig{}, DopingSampling{},
                                NoiseParams{}, 77);
    for (auto& r : ds.records) {
        r.u.resize(r.C.size());
        for (std::size_t i = 0; i < r.u.size(); ++i) r.u[i] = 1e-3 * std::sin(static_cast<double>(i));
    }
    const std::string bytes = serialize(ds);
    CHECK(bytes.substr(0, 4) == "DPRC");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    std::istringstream in(bytes);
    const Dataset back = read_dataset(in);
    REQUIRE(back.records.size() == 5u);
    CHECK(back.tag == DatasetTag::Noisy);
    CHECK(back.sigma_h == ds.sigma_h);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(back.records[j].u == ds.records[j].u);
        CHECK(back.records[j].C == ds.records[j].C);
        CHECK(back.records[j].beta.alpha == ds.records[j].beta.alpha);
        CHECK(back.records[j].beta.lambda == ds.records[j].beta.lambda);
        CHECK(back.records[j].beta_seed == ds.records[j].beta_seed);
        CHECK(back.records[j].noise_seed == ds.records[j].noise_seed);
    }
    CHECK(serialize(back) == bytes);

    // The noise seed regenerates the transforms exactly.
    DatasetRecord r = back.records[2];
    restore_noise(r, NoiseParams{}, 3000.0);
    for (std::size_t i = 0; i < r.C.size(); ++i) CHECK(doping_eval(r.beta, back.sigma_h[i]) == r.C[i]);

    std::string bad = bytes;
    bad[4] = 2;
    std::istringstream v2(bad);
    CHECK_THROWS_AS(read_dataset(v2), IoError);
    bad = bytes;
    bad[0] = 'X';
    std::istringstream magic(bad);
    CHECK_THROWS_AS(read_dataset(magic), IoError);
    std::istringstream trailing(bytes + "x");
    CHECK_THROWS_AS(read_dataset(trailing), IoError);
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_dataset(truncated), IoError);
}

TEST_CASE("singular value spectrum") {
    const Dataset same = identical_records(12);
    const auto sv = svd_spectrum(same, Field::C, 8);
    CHECK(sv[0] > 0);
    for (std::size_t i = 1; i < sv.size(); ++i) CHECK(sv[i] <= 1e-12 * sv[0]);
    CHECK(effective_rank(sv, 1e-3) == 1u);

    Dataset ds = sample_records(40, DatasetTag::Noisy, DatasetRole::Train, DeviceConfig{}, DopingSampling{},
                                NoiseParams{}, 5);
    for (auto& r : ds.records) r.u = r.C;
    const auto a = svd_spectrum(ds, Field::C, 30);
    for (std::size_t i = 1; i < a.size(); ++i) {
        CHECK(a[i] <= a[i - 1]);
        CHECK(a[i] >= 0);
    }
    Dataset perm = ds;
    std::reverse(perm.records.begin(), perm.records.end());
    std::swap(perm.records[3], perm.records[17]);
    const auto b = svd_spectrum(perm, Field::C, 30);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-10 * a[0]);

    // Gram-matrix eigenvalues.
    const Eigen::MatrixXd M = field_matrix(ds, Field::C);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M * M.transpose());
    const Eigen::VectorXd ev = eig.eigenvalues().reverse();
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(rel_err(a[i], std::sqrt(std::max(0.0, ev[static_cast<Eigen::Index>(i)]))) <= 1e-8);
    }
}

TEST_CASE("sweep output does not depend on the worker count") {
    SweepOptions one, many;
    one.chunk = many.chunk = 3;
    many.workers = 4;
    const DeviceConfig dev = small_device();
    const Dataset a = generate_dataset(2, DatasetTag::Noisy, DatasetRole::Train, dev, DopingSampling{},
                                       NoiseParams{}, 11, one);
    const Dataset b = generate_dataset(2, DatasetTag::Noisy, DatasetRole::Train, dev, DopingSampling{},
                                       NoiseParams{}, 11, many);
    CHECK(serialize(a) == serialize(b));
    CHECK(sha256_hex(serialize(a)) == sha256_hex(serialize(b)));
    for (const auto& r : a.records) {
        for (double c : r.C) CHECK(c > 0);
        for (double u : r.u) CHECK(std::isfinite(u));
    }
}

TEST_CASE("signal follows the doping gradient frequency") {
    const DeviceConfig dev;
    DopingSpec s;
    s.alpha = {0.1};
    s.lambda = {100};
    const SweepResult sine = forward_sweep(s, dev, SweepOptions{});
    const auto xs = dev.geometry.probe_grid();
    std::vector<double> dc(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) dc[i] = -s.clean_derivative(xs[i]);
    const std::size_t ku = dominant_bin(sine.u), kc = dominant_bin(dc);
    CHECK(ku + 1 >= kc);
    CHECK(ku <= kc + 1);

    DopingSpec flat;
    const SweepResult uni = forward_sweep(flat, dev, SweepOptions{});
    double su = 0, sf = 0;
    for (double v : sine.u) su = std::max(su, std::abs(v));
    for (double v : uni.u) sf = std::max(sf, std::abs(v));
    CHECK(sf < 1e-2 * su);
}

TEST_CASE("generated dopings are positive") {
    const Dataset ds = sample_records(500, DatasetTag::Noisy, DatasetRole::Train, DeviceConfig{}, DopingSampling{},
                                      NoiseParams{}, 19);
    for (const auto& r : ds.records) {
        for (double c : r.C) CHECK(c > 0);
    }
}

TEST_CASE("clean mean over the probe window stays near C0 for short wavelengths") {
    const Dataset ds = sample_records(2000, DatasetTag::Clean, DatasetRole::Train, DeviceConfig{}, DopingSampling{},
                                      NoiseParams{}, 23);
    std::size_t eligible = 0, outside = 0;
    double worst = 0;
    for (const auto& r : ds.records) {
        bool shortwave = true;
        for (double la : r.beta.lambda) shortwave = shortwave && la <= 200.0;
        if (!shortwave) continue;
        ++eligible;
        double mean = 0;
        for (double c : r.C) mean += c / static_cast<double>(r.C.size());
        const double dev = std::abs(mean - r.beta.C0) / r.beta.C0;
        worst = std::max(worst, dev);
        outside += dev > 0.02;
    }
    MESSAGE(outside << " of " << eligible << " eligible records outside 2%, worst " << worst);
    CHECK(eligible > 50u);
    CHECK(outside == 0u);
}

TEST_CASE("noisy dopings have at least the clean effective rank") {
    const DeviceConfig dev;
    const Dataset clean = sample_records(200, DatasetTag::Clean, DatasetRole::Train, dev, DopingSampling{},
                                         NoiseParams{}, 31);
    const Dataset noisy = sample_records(200, DatasetTag::Noisy, DatasetRole::Train, dev, DopingSampling{},
                                         NoiseParams{}, 31);
    const auto rc = effective_rank(svd_spectrum(clean, Field::C, 96), 1e-3);
    const auto rn = effective_rank(svd_spectrum(noisy, Field::C, 96), 1e-3);
    CHECK(rn >= rc);
}

}  // TEST_SUITE
