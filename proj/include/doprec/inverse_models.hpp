#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doprec/tensor.hpp"

namespace doprec {

struct LinearModel {
    Eigen::MatrixXd A;  // n x n
};

// Least squares map A minimizing |A U - C|_F over n x N matrices U, C,
// using a pseudoinverse of U U^T that drops eigenvalues below
// svd_threshold * lambda_max.
LinearModel ls_fit(const Eigen::MatrixXd& U, const Eigen::MatrixXd& C, double svd_threshold = 1e-10);

// Hidden layer sizes #L2..#L7.
struct MLPConfig {
    std::array<int, 6> sizes{};

    bool admissible() const;
    std::string to_string() const;
    static MLPConfig parse(const std::string& text);
    bool operator==(const MLPConfig&) const = default;
};

std::uint64_t mlp_config_count();
std::vector<MLPConfig> mlp_config_enumerate();
// Uniform over the admissible configurations.
MLPConfig mlp_config_sample(std::mt19937_64& rng);

enum class BlockType : std::uint8_t { Basic, FixedChannel };

struct GateConfig {
    int kernel = 3;
    int channels = 8;
    int stride = 1;
    bool operator==(const GateConfig&) const = default;
};

struct EncoderConfig {
    BlockType type = BlockType::Basic;
    int blocks = 1;
    bool downsample = false;
    bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
    std::vector<int> hidden;
    bool operator==(const DecoderConfig&) const = default;
};

struct ResNetConfig {
    GateConfig gate;
    EncoderConfig encoder;
    DecoderConfig decoder;

    bool admissible() const;
    std::string to_string() const;
    static ResNetConfig parse(const std::string& text);
    bool operator==(const ResNetConfig&) const = default;
};

struct ResNetSpaceCounts {
    std::size_t gate, encoder, decoder, total;
};

std::vector<GateConfig> resnet_gate_space();
std::vector<EncoderConfig> resnet_encoder_space();
std::vector<DecoderConfig> resnet_decoder_space();
ResNetSpaceCounts resnet_config_count();
ResNetConfig resnet_config_sample(std::mt19937_64& rng);

// Largest power of two <= n, capped at 256.
std::size_t resnet_base_length(std::size_t n);

enum class ModelKind : std::uint8_t { LS = 0, MLP = 1, ResNet = 2 };
std::string to_string(ModelKind kind);

// Affine maps between physical units and the scaled space models work in.
struct Standardization {
    double u_mean = 0.0, u_std = 1.0;
    double C_mean = 0.0, C_std = 1.0;
};

// A built model: architecture, parameters, running statistics and the
// standardization of its inputs and outputs.
class Model {
public:
    static Model linear(const LinearModel& ls, std::size_t n);
    static Model mlp(const MLPConfig& config, std::size_t n, std::uint64_t seed);
    static Model resnet(const ResNetConfig& config, std::size_t n, std::uint64_t seed);

    ModelKind kind() const { return kind_; }
    std::size_t n() const { return n_; }
    const MLPConfig& mlp_config() const { return mlp_; }
    const ResNetConfig& resnet_config() const { return resnet_; }
    std::string config_string() const;
    std::size_t base_length() const { return base_; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t param_count() const { return params_.scalar_count(); }

    Standardization standardization;

    // Forward pass on standardized input of shape (B, n).
    Var forward(Graph& g, Var x, Mode mode);

    // Rows are records, physical units; normalization layers in eval mode.
    Eigen::MatrixXd infer(const Eigen::MatrixXd& U) const;
    std::vector<double> infer(const std::vector<double>& u) const;

    Eigen::MatrixXd linear_matrix() const;

private:
    struct BlockParams {
        std::size_t conv1, bn1g, bn1b, bn1s, conv2, bn2g, bn2b, bn2s;
        bool has_shortcut = false;
        std::size_t sc, scg, scb, scs;
        std::size_t stride, channels_in, channels_out;
    };

    Var forward_mlp(Graph& g, Var x);
    Var forward_resnet(Graph& g, Var x, Mode mode);

    ModelKind kind_ = ModelKind::LS;
    std::size_t n_ = 0;
    std::size_t base_ = 0;
    MLPConfig mlp_;
    ResNetConfig resnet_;
    ParamStore params_;
    std::vector<std::pair<std::size_t, std::size_t>> dense_;  // (weight, bias)
    std::size_t gate_w_ = 0, gate_b_ = 0, gate_bng_ = 0, gate_bnb_ = 0, gate_bns_ = 0;
    std::vector<BlockParams> blocks_;
};

using ModelDescriptor = Model;

Model build_mlp(const MLPConfig& config, std::size_t n, std::uint64_t seed = 0);
Model build_resnet(const ResNetConfig& config, std::size_t n, std::uint64_t seed = 0);
std::size_t param_count(const Model& model);
Eigen::MatrixXd infer(const Model& model, const Eigen::MatrixXd& U);
Eigen::MatrixXd infer(const LinearModel& model, const Eigen::MatrixXd& U);  // U is n x N

// DPMD1 checkpoint.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace doprec
