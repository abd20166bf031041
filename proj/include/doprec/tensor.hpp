#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace doprec {

// Dense row-major float64 array with shape (batch, features) or
// (batch, channels, length).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Same values under a new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> shape) const;
    void fill(double v);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Running statistics of one normalization layer.
struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;
};

class ParamStore {
public:
    std::size_t add(std::string name, Tensor init);
    std::size_t add_stats(std::size_t channels);

    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    RunningStats& stats(std::size_t i) { return stats_[i]; }
    const RunningStats& stats(std::size_t i) const { return stats_[i]; }
    std::size_t stats_count() const { return stats_.size(); }

    // Trainable scalars; running statistics excluded.
    std::size_t scalar_count() const;
    void zero_grad();

    std::vector<double> flatten() const;
    void assign(const std::vector<double>& flat);
    std::vector<double> flatten_stats() const;
    void assign_stats(const std::vector<double>& flat);

private:
    std::vector<Param> params_;
    std::vector<RunningStats> stats_;
};

// Reverse-mode tape. Values are recorded as operations run; backward
// propagates from a scalar loss and accumulates parameter gradients into the
// owning ParamStore.
class Graph {
public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
    };
    using Backward = std::function<void(Graph&, std::size_t self)>;

    Var constant(Tensor value);
    Var param(ParamStore& store, std::size_t index);
    Var record(Tensor value, std::vector<std::size_t> inputs, Backward backward);

    const Tensor& value(Var v) const;
    // Gradient of the last backward pass with respect to v.
    const Tensor& grad(Var v) const;
    Tensor& grad_ref(std::size_t id);
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
    bool empty() const { return nodes_.empty(); }

    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        Backward backward;
        ParamStore* store = nullptr;
        std::size_t param_index = 0;
    };
    std::vector<Node> nodes_;
    bool done_ = false;
};

using Var = Graph::Var;

struct ConvSpec {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

std::size_t conv_output_length(std::size_t L, std::size_t K, const ConvSpec& spec);

// out = x W^T + b; x (B, F_in), W (F_out, F_in), b (F_out).
Var affine(Graph& g, Var x, Var weight, Var bias);
// Cross-correlation; x (B, C_in, L), kernel (C_out, C_in / groups, K).
Var conv1d(Graph& g, Var x, Var kernel, std::optional<Var> bias, const ConvSpec& spec);

enum class Mode { Train, Eval };
struct BatchNormSpec {
    double eps = 1e-5;
    double momentum = 0.1;
};
// Per-channel normalization of (B, C, L) or (B, C) input.
Var batchnorm1d(Graph& g, Var x, Var gamma, Var beta, RunningStats& stats, Mode mode,
                const BatchNormSpec& spec = {});
Var relu(Graph& g, Var x);
// Piecewise-linear resampling of the last axis with aligned endpoints.
Var resample_linear(Graph& g, Var x, std::size_t L_out);
Var add(Graph& g, Var a, Var b);
Var reshape(Graph& g, Var x, std::vector<std::size_t> shape);
// (1/B) sum_b |x_b - target_b|^2.
Var mse_loss(Graph& g, Var x, const Tensor& target);

// Dense interpolation matrix used by resample_linear, (L_out, L_in).
std::vector<double> resample_weights(std::size_t L_in, std::size_t L_out);

struct SgdOptions {
    double lr = 0.01;
    double weight_decay = 0.0;
    std::optional<double> clip_norm;
};
// Global-norm clipping, then w <- w - lr (g + weight_decay w). Returns the
// gradient norm before clipping.
double sgd_step(ParamStore& params, const SgdOptions& opts);

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng);

}  // namespace doprec
