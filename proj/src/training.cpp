#include "doprec/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doprec/errors.hpp"

namespace doprec {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch(std::string(what) + ": prediction " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs target " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
    }
}

double std_or_one(const Eigen::MatrixXd& m, double mean) {
    if (m.size() < 2) return 1.0;
    const double var = (m.array() - mean).square().sum() / static_cast<double>(m.size() - 1);
    return var > 0 ? std::sqrt(var) : 1.0;
}

}  // namespace

TrainData TrainData::from(const Dataset& ds) {
    TrainData d;
    d.U = field_matrix(ds, Field::U).transpose();
    d.C = field_matrix(ds, Field::C).transpose();
    return d;
}

TrainData TrainData::rows(std::size_t begin, std::size_t end) const {
    return {U.middleRows(ix(begin), ix(end - begin)), C.middleRows(ix(begin), ix(end - begin))};
}

double msel(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    same_shape(pred, target, "msel");
    if (pred.rows() == 0) return 0.0;
    return (pred - target).squaredNorm() / static_cast<double>(pred.rows());
}

double test_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double scale) {
    same_shape(pred, target, "test_error");
    if (pred.rows() == 0) return 0.0;
    return (pred - target).cwiseAbs().rowwise().maxCoeff().sum() / static_cast<double>(pred.rows()) / scale;
}

std::vector<double> remove_mean(std::vector<double> v) {
    if (v.empty()) return v;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (auto& x : v) x -= m;
    return v;
}

Standardization fit_standardization(const TrainData& data) {
    Standardization s;
    if (data.size() == 0) return s;
    s.u_mean = data.U.mean();
    s.u_std = std_or_one(data.U, s.u_mean);
    s.C_mean = data.C.mean();
    s.C_std = std_or_one(data.C, s.C_mean);
    return s;
}

Model fit_ls_model(const TrainData& data, double svd_threshold) {
    if (data.size() == 0) throw DegenerateData("least squares needs at least one record");
    const Standardization s = fit_standardization(data);
    const Eigen::MatrixXd Us = (data.U.array() - s.u_mean) / s.u_std;
    const Eigen::MatrixXd Cs = (data.C.array() - s.C_mean) / s.C_std;
    Model m = Model::linear(ls_fit(Us.transpose(), Cs.transpose(), svd_threshold), static_cast<std::size_t>(data.U.cols()));
    m.standardization = s;
    return m;
}

void TrainOptions::validate() const {
    if (!(lr > 0)) throw InvalidConfig("train: lr must be positive");
    if (batch_size < 1) throw InvalidConfig("train: batch_size must be at least 1");
    if (epochs < 1) throw InvalidConfig("train: epochs must be at least 1");
    if (!(weight_decay >= 0)) throw InvalidConfig("train: weight_decay must be non-negative");
    if (clip_norm && !(*clip_norm > 0)) throw InvalidConfig("train: clip_norm must be positive");
}

Trainer::Trainer(Model& model, const TrainData& data, const TrainOptions& opts)
    : model_(model), data_(data), opts_(opts), rng_(opts.seed) {
    opts_.validate();
    if (data.size() == 0) throw DegenerateData("training set is empty");
    if (static_cast<std::size_t>(data.U.cols()) != model.n()) throw ShapeMismatch("training signals do not match n");
    const Standardization& s = model.standardization;
    Us_ = (data.U.array() - s.u_mean) / s.u_std;
    Cs_ = (data.C.array() - s.C_mean) / s.C_std;
}

double Trainer::run_batch(const std::vector<std::size_t>& idx) {
    const std::size_t B = idx.size(), n = model_.n();
    Tensor x({B, n}), y({B, n});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            x[b * n + i] = Us_(ix(idx[b]), ix(i));
            y[b * n + i] = Cs_(ix(idx[b]), ix(i));
        }
    }
    Graph g;
    Var out = model_.forward(g, g.constant(std::move(x)), Mode::Train);
    Var loss = mse_loss(g, out, y);
    const double value = g.value(loss)[0];
    if (!std::isfinite(value)) throw NonFiniteLoss(epoch_ + 1, value);
    model_.params().zero_grad();
    g.backward(loss);
    sgd_step(model_.params(), {opts_.lr, opts_.weight_decay, opts_.clip_norm});
    return value;
}

void Trainer::advance_to(int epoch) {
    const std::size_t N = data_.size();
    std::vector<std::size_t> order(N);
    while (epoch_ < epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (!opts_.full_batch) std::shuffle(order.begin(), order.end(), rng_);
        const std::size_t bs = opts_.full_batch ? N : static_cast<std::size_t>(opts_.batch_size);
        double total = 0.0;
        for (std::size_t b = 0; b < N;) {
            std::size_t e = std::min(N, b + bs);
            // A trailing single record joins the previous batch.
            if (N - e == 1) e = N;
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                               order.begin() + static_cast<std::ptrdiff_t>(e));
            total += run_batch(idx) * static_cast<double>(e - b);
            b = e;
        }
        losses_.push_back(total / static_cast<double>(N));
        ++epoch_;
    }
}

TrainResult train(Model& model, const TrainData& data, const TrainOptions& opts, const std::vector<int>& rungs,
                  const RungCallback& callback, const TrainData* validation, double C0) {
    opts.validate();
    model.standardization = fit_standardization(data);
    Trainer trainer(model, data, opts);
    const TrainData& val = validation ? *validation : data;
    TrainResult res;
    for (int e = 1; e <= opts.epochs; ++e) {
        trainer.advance_to(e);
        if (callback && std::find(rungs.begin(), rungs.end(), e) != rungs.end()) {
            const double te = test_error(model.infer(val.U), val.C, C0);
            if (!callback(e, te)) break;
        }
    }
    res.loss_trace = trainer.losses();
    res.epochs_run = trainer.epoch();
    return res;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
    const auto k = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size())));
    return values[k - 1];
}

ErrorSummary summarize(const std::vector<double>& errors) {
    ErrorSummary s;
    if (errors.empty()) return s;
    s.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    s.p25 = percentile_nearest_rank(errors, 25);
    s.p50 = percentile_nearest_rank(errors, 50);
    s.p75 = percentile_nearest_rank(errors, 75);
    return s;
}

ErrorReport evaluate_predictions(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double C0,
                                 bool mean_removed) {
    same_shape(pred, target, "evaluate");
    ErrorReport r;
    r.C0 = C0;
    r.mean_removed_primary = mean_removed;
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
        const Eigen::RowVectorXd d = pred.row(j) - target.row(j);
        r.errors.push_back(d.cwiseAbs().maxCoeff() / C0);
        // Removing both record means equals removing the mean of the difference.
        r.errors_mean_removed.push_back((d.array() - d.mean()).abs().maxCoeff() / C0);
    }
    r.with_mean = summarize(r.errors);
    r.mean_removed = summarize(r.errors_mean_removed);
    return r;
}

ErrorReport evaluate(const Model& model, const TrainData& test, double C0, bool mean_removed) {
    if (test.size() == 0) throw DegenerateData("test set is empty");
    return evaluate_predictions(model.infer(test.U), test.C, C0, mean_removed);
}

}  // namespace doprec
