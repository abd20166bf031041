#include "doprec/inverse_models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "doprec/errors.hpp"

namespace doprec {

namespace {

constexpr std::array<int, 6> kDeltas{0, 50, -50, 100, -100, -200};

bool in_outer_range(int v) { return v >= 100 && v <= 500 && v % 50 == 0; }

bool is_delta(int d) { return std::find(kDeltas.begin(), kDeltas.end(), d) != kDeltas.end(); }

std::vector<int> split_ints(const std::string& s, char sep) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw InvalidConfig("bad integer '" + item + "'");
        } catch (const std::logic_error&) {
            throw InvalidConfig("bad integer '" + item + "'");
        }
    }
    return out;
}

}  // namespace

LinearModel ls_fit(const Eigen::MatrixXd& U, const Eigen::MatrixXd& C, double svd_threshold) {
    if (U.cols() < 1) throw DegenerateData("least squares needs at least one record");
    if (U.cols() != C.cols()) throw ShapeMismatch("U and C must have the same record count");
    if (U.isZero(0.0)) throw DegenerateData("signal matrix is identically zero");
    const Eigen::MatrixXd G = U * U.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double smax = ev.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev[i]) >= svd_threshold * smax && ev[i] > 0) inv[i] = 1.0 / ev[i];
    }
    const Eigen::MatrixXd& V = eig.eigenvectors();
    const Eigen::MatrixXd pinv = V * inv.asDiagonal() * V.transpose();
    return {C * U.transpose() * pinv};
}

bool MLPConfig::admissible() const {
    if (!in_outer_range(sizes[0]) || !in_outer_range(sizes[5])) return false;
    for (std::size_t i = 1; i < 5; ++i) {
        if (!is_delta(sizes[i] - sizes[i - 1]) || sizes[i] <= 0) return false;
    }
    return true;
}

std::string MLPConfig::to_string() const {
    std::ostringstream s;
    for (std::size_t i = 0; i < sizes.size(); ++i) s << (i ? "," : "") << sizes[i];
    return s.str();
}

MLPConfig MLPConfig::parse(const std::string& text) {
    const auto v = split_ints(text, ',');
    if (v.size() != 6) throw InvalidConfig("MLP config needs six layer sizes, got '" + text + "'");
    MLPConfig c;
    std::copy(v.begin(), v.end(), c.sizes.begin());
    return c;
}

std::vector<MLPConfig> mlp_config_enumerate() {
    std::vector<MLPConfig> out;
    for (int l2 = 100; l2 <= 500; l2 += 50) {
        for (int d3 : kDeltas) {
            for (int d4 : kDeltas) {
                for (int d5 : kDeltas) {
                    for (int d6 : kDeltas) {
                        const int l3 = l2 + d3, l4 = l3 + d4, l5 = l4 + d5, l6 = l5 + d6;
                        if (l3 <= 0 || l4 <= 0 || l5 <= 0 || l6 <= 0) continue;
                        for (int l7 = 100; l7 <= 500; l7 += 50) out.push_back({{l2, l3, l4, l5, l6, l7}});
                    }
                }
            }
        }
    }
    return out;
}

std::uint64_t mlp_config_count() {
    static const std::uint64_t count = mlp_config_enumerate().size();
    return count;
}

MLPConfig mlp_config_sample(std::mt19937_64& rng) {
    static const std::vector<MLPConfig> all = mlp_config_enumerate();
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    return all[pick(rng)];
}

std::vector<GateConfig> resnet_gate_space() {
    std::vector<GateConfig> out;
    for (int k : {3, 5, 7, 9}) {
        for (int c : {8, 16, 24, 32}) {
            for (int s : {1, 2, 4}) out.push_back({k, c, s});
        }
    }
    return out;
}

std::vector<EncoderConfig> resnet_encoder_space() {
    std::vector<EncoderConfig> out;
    for (bool down : {false, true}) {
        for (int b = 1; b <= 3; ++b) out.push_back({BlockType::Basic, b, down});
    }
    for (int b = 1; b <= 3; ++b) out.push_back({BlockType::FixedChannel, b, true});
    return out;
}

std::vector<DecoderConfig> resnet_decoder_space() {
    std::vector<DecoderConfig> out;
    for (int h : {100, 150, 200}) out.push_back({{h}});
    for (int h1 = 100; h1 <= 300; h1 += 50) {
        for (int h2 : {100, 150, 200}) out.push_back({{h1, h2}});
    }
    return out;
}

ResNetSpaceCounts resnet_config_count() {
    const std::size_t g = resnet_gate_space().size();
    const std::size_t e = resnet_encoder_space().size();
    const std::size_t d = resnet_decoder_space().size();
    return {g, e, d, g * e * d};
}

ResNetConfig resnet_config_sample(std::mt19937_64& rng) {
    static const auto gates = resnet_gate_space();
    static const auto encoders = resnet_encoder_space();
    static const auto decoders = resnet_decoder_space();
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    ResNetConfig c;
    c.gate = gates[pick(gates.size())];
    c.encoder = encoders[pick(encoders.size())];
    c.decoder = decoders[pick(decoders.size())];
    return c;
}

bool ResNetConfig::admissible() const {
    const auto g = resnet_gate_space();
    const auto e = resnet_encoder_space();
    const auto d = resnet_decoder_space();
    return std::find(g.begin(), g.end(), gate) != g.end() && std::find(e.begin(), e.end(), encoder) != e.end() &&
           std::find(d.begin(), d.end(), decoder) != d.end();
}

std::string ResNetConfig::to_string() const {
    std::ostringstream s;
    s << "gate=" << gate.kernel << ':' << gate.channels << ':' << gate.stride << ";encoder="
      << (encoder.type == BlockType::Basic ? "basic" : "fixed") << ':' << encoder.blocks << ':'
      << (encoder.downsample ? 1 : 0) << ";decoder=";
    for (std::size_t i = 0; i < decoder.hidden.size(); ++i) s << (i ? ":" : "") << decoder.hidden[i];
    return s.str();
}

ResNetConfig ResNetConfig::parse(const std::string& text) {
    ResNetConfig c;
    bool seen[3] = {false, false, false};
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ';')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw InvalidConfig("bad ResNet config field '" + part + "'");
        const std::string key = part.substr(0, eq), val = part.substr(eq + 1);
        if (key == "gate") {
            const auto v = split_ints(val, ':');
            if (v.size() != 3) throw InvalidConfig("gate needs kernel:channels:stride");
            c.gate = {v[0], v[1], v[2]};
            seen[0] = true;
        } else if (key == "encoder") {
            const auto colon = val.find(':');
            if (colon == std::string::npos) throw InvalidConfig("encoder needs type:blocks:downsample");
            const std::string type = val.substr(0, colon);
            if (type == "basic") {
                c.encoder.type = BlockType::Basic;
            } else if (type == "fixed") {
                c.encoder.type = BlockType::FixedChannel;
            } else {
                throw InvalidConfig("unknown block type '" + type + "'");
            }
            const auto v = split_ints(val.substr(colon + 1), ':');
            if (v.size() != 2) throw InvalidConfig("encoder needs type:blocks:downsample");
            c.encoder.blocks = v[0];
            c.encoder.downsample = v[1] != 0;
            seen[1] = true;
        } else if (key == "decoder") {
            c.decoder.hidden = split_ints(val, ':');
            seen[2] = true;
        } else {
            throw InvalidConfig("unknown ResNet config field '" + key + "'");
        }
    }
    if (!seen[0] || !seen[1] || !seen[2]) throw InvalidConfig("ResNet config needs gate, encoder and decoder");
    return c;
}

std::size_t resnet_base_length(std::size_t n) {
    std::size_t b = 2;
    while (b * 2 <= n && b * 2 <= 256) b *= 2;
    return b;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::LS: return "ls";
        case ModelKind::MLP: return "mlp";
        case ModelKind::ResNet: return "resnet";
    }
    return "unknown";
}

namespace {

std::size_t add_dense(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    Tensor w({out, in}), b({out});
    init_uniform(w, bound, rng);
    init_uniform(b, bound, rng);
    const std::size_t wi = ps.add(name + ".weight", std::move(w));
    ps.add(name + ".bias", std::move(b));
    return wi;
}

std::size_t add_conv(ParamStore& ps, const std::string& name, std::size_t cout, std::size_t cin_per_group,
                     std::size_t k, std::mt19937_64& rng) {
    Tensor w({cout, cin_per_group, k});
    init_uniform(w, std::sqrt(1.0 / static_cast<double>(cin_per_group * k)), rng);
    return ps.add(name + ".weight", std::move(w));
}

std::size_t add_bn(ParamStore& ps, const std::string& name, std::size_t c) {
    const std::size_t gi = ps.add(name + ".gamma", Tensor({c}, 1.0));
    ps.add(name + ".beta", Tensor({c}, 0.0));
    return gi;
}

}  // namespace

Model Model::linear(const LinearModel& ls, std::size_t n) {
    if (static_cast<std::size_t>(ls.A.rows()) != n || static_cast<std::size_t>(ls.A.cols()) != n) {
        throw ShapeMismatch("linear model matrix must be n x n");
    }
    Model m;
    m.kind_ = ModelKind::LS;
    m.n_ = n;
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = ls.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    m.params_.add("A", std::move(a));
    return m;
}

Model Model::mlp(const MLPConfig& config, std::size_t n, std::uint64_t seed) {
    for (int s : config.sizes) {
        if (s < 2) throw InvalidConfig("MLP layer sizes must be at least 2: " + config.to_string());
    }
    if (n < 2) throw InvalidConfig("input length must be at least 2");
    Model m;
    m.kind_ = ModelKind::MLP;
    m.n_ = n;
    m.mlp_ = config;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < config.sizes.size(); ++i) {
        const std::size_t w = add_dense(m.params_, "dense" + std::to_string(i), static_cast<std::size_t>(config.sizes[i]),
                                        static_cast<std::size_t>(config.sizes[i + 1]), rng);
        m.dense_.emplace_back(w, w + 1);
    }
    return m;
}

Model Model::resnet(const ResNetConfig& config, std::size_t n, std::uint64_t seed) {
    const auto& gc = config.gate;
    const auto& ec = config.encoder;
    if (gc.kernel < 1 || gc.channels < 1 || gc.stride < 1 || ec.blocks < 0) {
        throw InvalidConfig("ResNet gate/encoder values must be positive: " + config.to_string());
    }
    if (ec.type == BlockType::FixedChannel && !ec.downsample) {
        throw InvalidConfig("fixed-channel encoders always downsample");
    }
    for (int h : config.decoder.hidden) {
        if (h < 1) throw InvalidConfig("decoder sizes must be positive");
    }
    if (n < 2) throw InvalidConfig("input length must be at least 2");

    Model m;
    m.kind_ = ModelKind::ResNet;
    m.n_ = n;
    m.resnet_ = config;
    m.base_ = resnet_base_length(n);
    std::mt19937_64 rng(seed);
    ParamStore& ps = m.params_;

    auto C = static_cast<std::size_t>(gc.channels);
    const auto K = static_cast<std::size_t>(gc.kernel);
    std::size_t L = conv_output_length(m.base_, K, {static_cast<std::size_t>(gc.stride), K / 2, 1});
    if (L < 1) throw InvalidConfig("gate reduces the signal to nothing: " + config.to_string());
    m.gate_w_ = add_conv(ps, "gate.conv", C, 1, K, rng);
    Tensor gb({C});
    init_uniform(gb, std::sqrt(1.0 / static_cast<double>(K)), rng);
    m.gate_b_ = ps.add("gate.conv.bias", std::move(gb));
    m.gate_bng_ = add_bn(ps, "gate.bn", C);
    m.gate_bnb_ = m.gate_bng_ + 1;
    m.gate_bns_ = ps.add_stats(C);

    for (int b = 0; b < ec.blocks; ++b) {
        const std::string name = "block" + std::to_string(b);
        BlockParams bp{};
        bp.stride = ec.downsample ? 2 : 1;
        bp.channels_in = C;
        bp.channels_out = ec.downsample && ec.type == BlockType::Basic ? 2 * C : C;
        const std::size_t Lmain = conv_output_length(L, 3, {bp.stride, 1, 1});
        bp.conv1 = add_conv(ps, name + ".conv1", bp.channels_out, C, 3, rng);
        bp.bn1g = add_bn(ps, name + ".bn1", bp.channels_out);
        bp.bn1b = bp.bn1g + 1;
        bp.bn1s = ps.add_stats(bp.channels_out);
        bp.conv2 = add_conv(ps, name + ".conv2", bp.channels_out, bp.channels_out, 3, rng);
        bp.bn2g = add_bn(ps, name + ".bn2", bp.channels_out);
        bp.bn2b = bp.bn2g + 1;
        bp.bn2s = ps.add_stats(bp.channels_out);
        if (ec.downsample) {
            bp.has_shortcut = true;
            std::size_t Lsc = 0;
            if (ec.type == BlockType::Basic) {
                bp.sc = add_conv(ps, name + ".shortcut", bp.channels_out, C, 1, rng);
                Lsc = conv_output_length(L, 1, {2, 0, 1});
            } else {
                bp.sc = add_conv(ps, name + ".shortcut", C, 1, 2, rng);
                Lsc = conv_output_length(L, 2, {2, 0, C});
            }
            bp.scg = add_bn(ps, name + ".shortcut_bn", bp.channels_out);
            bp.scb = bp.scg + 1;
            bp.scs = ps.add_stats(bp.channels_out);
            if (Lsc != Lmain) throw InvalidConfig("shortcut and block lengths disagree: " + config.to_string());
        }
        if (Lmain < 1) throw InvalidConfig("encoder reduces the signal to nothing: " + config.to_string());
        L = Lmain;
        C = bp.channels_out;
        m.blocks_.push_back(bp);
    }

    std::size_t width = C * L;
    std::size_t i = 0;
    for (int h : config.decoder.hidden) {
        const std::size_t w = add_dense(ps, "decoder" + std::to_string(i++), width, static_cast<std::size_t>(h), rng);
        m.dense_.emplace_back(w, w + 1);
        width = static_cast<std::size_t>(h);
    }
    const std::size_t w = add_dense(ps, "decoder.out", width, m.base_, rng);
    m.dense_.emplace_back(w, w + 1);
    return m;
}

std::string Model::config_string() const {
    std::string s = "n=" + std::to_string(n_);
    if (kind_ == ModelKind::MLP) s += ";mlp=" + mlp_.to_string();
    if (kind_ == ModelKind::ResNet) s += ";" + resnet_.to_string();
    return s;
}

Var Model::forward_mlp(Graph& g, Var x) {
    Var h = resample_linear(g, x, static_cast<std::size_t>(mlp_.sizes[0]));
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        h = affine(g, h, g.param(params_, dense_[i].first), g.param(params_, dense_[i].second));
        if (i + 1 < dense_.size()) h = relu(g, h);
    }
    return resample_linear(g, h, n_);
}

Var Model::forward_resnet(Graph& g, Var x, Mode mode) {
    const std::size_t B = g.value(x).dim(0);
    Var h = resample_linear(g, x, base_);
    h = reshape(g, h, {B, 1, base_});
    const auto K = static_cast<std::size_t>(resnet_.gate.kernel);
    h = conv1d(g, h, g.param(params_, gate_w_), g.param(params_, gate_b_),
               {static_cast<std::size_t>(resnet_.gate.stride), K / 2, 1});
    h = batchnorm1d(g, h, g.param(params_, gate_bng_), g.param(params_, gate_bnb_), params_.stats(gate_bns_), mode);
    h = relu(g, h);
    for (const auto& bp : blocks_) {
        Var y = conv1d(g, h, g.param(params_, bp.conv1), std::nullopt, {bp.stride, 1, 1});
        y = batchnorm1d(g, y, g.param(params_, bp.bn1g), g.param(params_, bp.bn1b), params_.stats(bp.bn1s), mode);
        y = relu(g, y);
        y = conv1d(g, y, g.param(params_, bp.conv2), std::nullopt, {1, 1, 1});
        y = batchnorm1d(g, y, g.param(params_, bp.bn2g), g.param(params_, bp.bn2b), params_.stats(bp.bn2s), mode);
        Var s = h;
        if (bp.has_shortcut) {
            const bool grouped = resnet_.encoder.type == BlockType::FixedChannel;
            s = conv1d(g, h, g.param(params_, bp.sc), std::nullopt, {2, 0, grouped ? bp.channels_in : 1});
            s = batchnorm1d(g, s, g.param(params_, bp.scg), g.param(params_, bp.scb), params_.stats(bp.scs), mode);
        }
        h = relu(g, add(g, y, s));
    }
    const Tensor& hv = g.value(h);
    h = reshape(g, h, {B, hv.size() / B});
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        h = affine(g, h, g.param(params_, dense_[i].first), g.param(params_, dense_[i].second));
        if (i + 1 < dense_.size()) h = relu(g, h);
    }
    return resample_linear(g, h, n_);
}

Var Model::forward(Graph& g, Var x, Mode mode) {
    const Tensor& xv = g.value(x);
    if (xv.rank() != 2 || xv.dim(1) != n_) {
        throw ShapeMismatch("model expects input (B," + std::to_string(n_) + "), got " + shape_string(xv.shape()));
    }
    switch (kind_) {
        case ModelKind::LS: {
            Var zero = g.constant(Tensor({n_}, 0.0));
            return affine(g, x, g.param(params_, 0), zero);
        }
        case ModelKind::MLP: return forward_mlp(g, x);
        case ModelKind::ResNet: return forward_resnet(g, x, mode);
    }
    throw InvalidConfig("unknown model kind");
}

Eigen::MatrixXd Model::infer(const Eigen::MatrixXd& U) const {
    if (static_cast<std::size_t>(U.cols()) != n_) {
        throw ShapeMismatch("inference input needs " + std::to_string(n_) + " columns");
    }
    const std::size_t B = static_cast<std::size_t>(U.rows());
    Eigen::MatrixXd out(U.rows(), U.cols());
    if (B == 0) return out;
    Tensor x({B, n_});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < n_; ++i) {
            x[b * n_ + i] = (U(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) - standardization.u_mean) /
                            standardization.u_std;
        }
    }
    // Eval-mode forward reads parameters only.
    Graph g;
    Var y = const_cast<Model*>(this)->forward(g, g.constant(std::move(x)), Mode::Eval);
    const Tensor& yv = g.value(y);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < n_; ++i) {
            out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) =
                standardization.C_std * yv[b * n_ + i] + standardization.C_mean;
        }
    }
    return out;
}

std::vector<double> Model::infer(const std::vector<double>& u) const {
    Eigen::MatrixXd U = Eigen::Map<const Eigen::RowVectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
    const Eigen::MatrixXd C = infer(U);
    return {C.data(), C.data() + C.size()};
}

Eigen::MatrixXd Model::linear_matrix() const {
    if (kind_ != ModelKind::LS) throw InvalidConfig("not a linear model");
    const Tensor& a = params_[0].value;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i * n_ + j];
    }
    return A;
}

Model build_mlp(const MLPConfig& config, std::size_t n, std::uint64_t seed) { return Model::mlp(config, n, seed); }

Model build_resnet(const ResNetConfig& config, std::size_t n, std::uint64_t seed) {
    return Model::resnet(config, n, seed);
}

std::size_t param_count(const Model& model) { return model.param_count(); }

Eigen::MatrixXd infer(const Model& model, const Eigen::MatrixXd& U) { return model.infer(U); }

Eigen::MatrixXd infer(const LinearModel& model, const Eigen::MatrixXd& U) {
    if (model.A.cols() != U.rows()) throw ShapeMismatch("signal length does not match the linear model");
    return model.A * U;
}

}  // namespace doprec
