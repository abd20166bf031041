#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "doprec/errors.hpp"
#include "doprec/inverse_models.hpp"

namespace doprec {

namespace {

constexpr char kMagic[] = "DPMD";
constexpr std::uint8_t kVersion = 1;

}  // namespace

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    bin::put_magic(out, kMagic);
    bin::put<std::uint8_t>(out, kVersion);
    bin::put<std::uint8_t>(out, static_cast<std::uint8_t>(model.kind()));
    bin::put_string(out, model.config_string());
    const Standardization& s = model.standardization;
    for (double v : {s.u_mean, s.u_std, s.C_mean, s.C_std}) bin::put<double>(out, v);
    const auto params = model.params().flatten();
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (double v : params) bin::put<double>(out, v);
    // Running statistics of the normalization layers follow the parameters.
    const auto stats = model.params().flatten_stats();
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(stats.size()));
    for (double v : stats) bin::put<double>(out, v);
    if (!out) throw IoError("write failed for " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    bin::expect_magic(in, kMagic, "DPMD");
    const auto version = bin::get<std::uint8_t>(in);
    if (version != kVersion) throw IoError("unsupported DPMD version " + std::to_string(version));
    const auto kind = bin::get<std::uint8_t>(in);
    if (kind > 2) throw IoError("unknown model kind " + std::to_string(kind));
    const std::string config = bin::get_string(in);

    std::size_t n = 0;
    std::string arch;
    {
        const auto semi = config.find(';');
        const std::string head = config.substr(0, semi);
        if (head.rfind("n=", 0) != 0) throw IoError("checkpoint config lacks the input length");
        try {
            n = std::stoul(head.substr(2));
        } catch (const std::logic_error&) {
            throw IoError("bad input length in checkpoint config");
        }
        if (semi != std::string::npos) arch = config.substr(semi + 1);
    }

    Model model = [&] {
        try {
            switch (static_cast<ModelKind>(kind)) {
                case ModelKind::LS: return Model::linear({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))}, n);
                case ModelKind::MLP:
                    if (arch.rfind("mlp=", 0) != 0) throw IoError("checkpoint lacks the MLP layer sizes");
                    return Model::mlp(MLPConfig::parse(arch.substr(4)), n, 0);
                case ModelKind::ResNet: return Model::resnet(ResNetConfig::parse(arch), n, 0);
            }
        } catch (const InvalidConfig& e) {
            throw IoError(std::string("bad checkpoint config: ") + e.what());
        }
        throw IoError("unknown model kind");
    }();

    Standardization& s = model.standardization;
    s.u_mean = bin::get<double>(in);
    s.u_std = bin::get<double>(in);
    s.C_mean = bin::get<double>(in);
    s.C_std = bin::get<double>(in);
    const auto count = bin::get<std::uint32_t>(in);
    if (count != model.param_count()) {
        throw IoError("checkpoint holds " + std::to_string(count) + " parameters, architecture needs " +
                      std::to_string(model.param_count()));
    }
    std::vector<double> params(count);
    for (auto& v : params) v = bin::get<double>(in);
    model.params().assign(params);
    const auto scount = bin::get<std::uint32_t>(in);
    std::vector<double> stats(scount);
    for (auto& v : stats) v = bin::get<double>(in);
    try {
        model.params().assign_stats(stats);
    } catch (const ShapeMismatch&) {
        throw IoError("checkpoint running statistics do not match the architecture");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after checkpoint");
    return model;
}

}  // namespace doprec
