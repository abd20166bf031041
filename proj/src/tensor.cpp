#include "doprec/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "doprec/errors.hpp"

namespace doprec {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != product(shape_)) {
        throw ShapeMismatch("tensor of shape " + shape_string(shape_) + " needs " +
                            std::to_string(product(shape_)) + " values, got " + std::to_string(data_.size()));
    }
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream s;
    s << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "," : "") << shape[i];
    s << ')';
    return s.str();
}

std::size_t ParamStore::add(std::string name, Tensor init) {
    Tensor grad(init.shape());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return params_.size() - 1;
}

std::size_t ParamStore::add_stats(std::size_t channels) {
    stats_.push_back({std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)});
    return stats_.size() - 1;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<double> ParamStore::flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& p : params_) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
    return out;
}

void ParamStore::assign(const std::vector<double>& flat) {
    if (flat.size() != scalar_count()) throw ShapeMismatch("parameter vector length mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p.value.size()), p.value.data());
        off += p.value.size();
    }
}

std::vector<double> ParamStore::flatten_stats() const {
    std::vector<double> out;
    for (const auto& s : stats_) {
        out.insert(out.end(), s.mean.begin(), s.mean.end());
        out.insert(out.end(), s.var.begin(), s.var.end());
    }
    return out;
}

void ParamStore::assign_stats(const std::vector<double>& flat) {
    std::size_t total = 0;
    for (const auto& s : stats_) total += s.mean.size() + s.var.size();
    if (flat.size() != total) throw ShapeMismatch("running statistics length mismatch");
    auto it = flat.begin();
    for (auto& s : stats_) {
        for (auto& v : s.mean) v = *it++;
        for (auto& v : s.var) v = *it++;
    }
}

Graph::Var Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Graph::Var Graph::param(ParamStore& store, std::size_t index) {
    Var v = record(store[index].value, {}, nullptr);
    nodes_[v.id].store = &store;
    nodes_[v.id].param_index = index;
    return v;
}

Graph::Var Graph::record(Tensor value, std::vector<std::size_t> inputs, Backward backward) {
    if (done_) throw GraphNotRecorded("graph already consumed by backward");
    nodes_.push_back({std::move(value), Tensor(), std::move(inputs), std::move(backward), nullptr, 0});
    return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
    if (v.id >= nodes_.size()) throw GraphNotRecorded("variable not recorded in this graph");
    return nodes_[v.id].value;
}

const Tensor& Graph::grad(Var v) const {
    if (v.id >= nodes_.size() || !done_) throw GraphNotRecorded("no gradient recorded for variable");
    return nodes_[v.id].grad;
}

Tensor& Graph::grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Graph::backward(Var loss) {
    if (done_) throw GraphNotRecorded("backward already ran on this graph");
    if (nodes_.empty() || loss.id >= nodes_.size()) throw GraphNotRecorded("loss is not recorded in this graph");
    if (nodes_[loss.id].value.size() != 1) throw ShapeMismatch("backward needs a scalar loss");
    done_ = true;
    for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.backward) n.backward(*this, id);
        if (n.store) {
            Tensor& g = (*n.store)[n.param_index].grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    }
}

double sgd_step(ParamStore& params, const SgdOptions& opts) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (double g : params[i].grad.values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    double scale = 1.0;
    if (opts.clip_norm && norm > *opts.clip_norm) scale = *opts.clip_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            p.value[k] -= opts.lr * (scale * p.grad[k] + opts.weight_decay * p.value[k]);
        }
    }
    return norm;
}

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
}

}  // namespace doprec
