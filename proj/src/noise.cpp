#include <algorithm>
#include <cmath>

#include "doprec/datagen.hpp"
#include "doprec/errors.hpp"

namespace doprec {

namespace {

constexpr int kDenseSamples = 20001;
constexpr int kMaxDraws = 1000;

// Largest |q'| on [-L, L] for q = (x + L)(x - L) or (x + L)(x - L)(x - a).
double max_abs_slope(int degree, double L, double a) {
    if (degree == 2) return 2.0 * L;
    auto dq = [&](double x) { return 3.0 * x * x - 2.0 * a * x - L * L; };
    double m = std::max(std::abs(dq(-L)), std::abs(dq(L)));
    const double vertex = a / 3.0;
    if (vertex > -L && vertex < L) m = std::max(m, std::abs(dq(vertex)));
    return m;
}

// Minimum of t' = 1 + p' over [-L, L]; t' is quadratic so endpoints and vertex suffice.
double min_slope(const WavelengthWarp& w) {
    const double L = w.half_length;
    double m = std::min(w.derivative(-L), w.derivative(L));
    const double vertex = w.degree == 3 ? w.a / 3.0 : 0.0;
    if (vertex > -L && vertex < L) m = std::min(m, w.derivative(vertex));
    return m;
}

}  // namespace

void NoiseParams::validate() const {
    if (!(k_amp >= 0.0 && k_amp <= 0.1)) throw ConfigError("noise: k_amp must lie in [0, 0.1]");
    if (knot_count < 4) throw ConfigError("noise: knot_count must be at least 4");
    if (!(degree3_probability >= 0.0 && degree3_probability <= 1.0)) {
        throw ConfigError("noise: degree3_probability must lie in [0,1]");
    }
    if (!(warp_strength >= 0.0)) throw ConfigError("noise: warp_strength must be non-negative");
}

void amplitude_noise(DopingSpec& spec, const NoiseParams& params, double length_um, Rng& rng) {
    if (spec.amplitude_noise) throw InvalidConfig("doping spec already carries amplitude noise");
    params.validate();
    const double half = 0.5 * length_um;

    double lo = spec.clean(-half), hi = lo;
    std::vector<double> dense(kDenseSamples);
    for (int i = 0; i < kDenseSamples; ++i) {
        const double x = -half + length_um * i / (kDenseSamples - 1);
        dense[static_cast<std::size_t>(i)] = spec.clean(x);
        lo = std::min(lo, dense[static_cast<std::size_t>(i)]);
        hi = std::max(hi, dense[static_cast<std::size_t>(i)]);
    }
    const double range = hi - lo;

    const auto K = static_cast<std::size_t>(params.knot_count);
    std::vector<double> knots(K);
    for (std::size_t i = 0; i < K; ++i) {
        knots[i] = -half + length_um * static_cast<double>(i) / static_cast<double>(K - 1);
    }
    knots.back() = half;

    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        std::vector<double> values(K);
        for (auto& v : values) v = params.k_amp * normal(rng) * range;
        NaturalCubicSpline f(knots, values);
        bool positive = true;
        for (int i = 0; i < kDenseSamples && positive; ++i) {
            const double x = -half + length_um * i / (kDenseSamples - 1);
            positive = dense[static_cast<std::size_t>(i)] + f(x) > 0.0;
        }
        if (positive) {
            spec.amplitude_noise = AmplitudeNoise{std::move(f)};
            return;
        }
    }
    throw DegenerateData("amplitude noise keeps driving the doping non-positive");
}

void wavelength_warp(DopingSpec& spec, const NoiseParams& params, double length_um, Rng& rng) {
    params.validate();
    const double L = 0.5 * length_um;
    std::bernoulli_distribution cubic(params.degree3_probability);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    WavelengthWarp w;
    w.half_length = L;
    w.degree = cubic(rng) ? 3 : 2;
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        w.a = w.degree == 3 ? L * unit(rng) : 0.0;
        w.k = params.warp_strength / max_abs_slope(w.degree, L, w.a) * unit(rng);
        if (min_slope(w) > 1e-9) {
            spec.warp = w;
            return;
        }
    }
    throw DegenerateData("no admissible wavelength warp found");
}

}  // namespace doprec
