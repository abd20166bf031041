#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "doprec/datagen.hpp"
#include "doprec/inverse_models.hpp"

namespace doprec {

// Paired signals and dopings, one record per row.
struct TrainData {
    Eigen::MatrixXd U;
    Eigen::MatrixXd C;

    std::size_t size() const { return static_cast<std::size_t>(U.rows()); }
    static TrainData from(const Dataset& ds);
    TrainData rows(std::size_t begin, std::size_t end) const;
};

double msel(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
// Mean over records of the max-norm error, divided by scale.
double test_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double scale = 1.0);
std::vector<double> remove_mean(std::vector<double> v);

Standardization fit_standardization(const TrainData& data);

// Least squares map fitted between standardized signals and dopings.
Model fit_ls_model(const TrainData& data, double svd_threshold = 1e-10);

struct TrainOptions {
    double lr = 0.06;
    int batch_size = 64;
    int epochs = 200;
    double weight_decay = 0.0;
    std::optional<double> clip_norm;
    std::uint64_t seed = 0;
    // One full-batch gradient step per epoch, no shuffling.
    bool full_batch = false;

    void validate() const;
};

// Called after each epoch listed in `rungs`; returning false stops training.
using RungCallback = std::function<bool(int epoch, double validation_error)>;

struct TrainResult {
    std::vector<double> loss_trace;  // mean training MSEL per epoch, standardized units
    int epochs_run = 0;
};

// Incremental trainer: advance() continues from the current epoch so a
// scheduler can pause and resume a trial.
class Trainer {
public:
    Trainer(Model& model, const TrainData& data, const TrainOptions& opts);
    void advance_to(int epoch);
    int epoch() const { return epoch_; }
    const std::vector<double>& losses() const { return losses_; }

private:
    double run_batch(const std::vector<std::size_t>& idx);

    Model& model_;
    const TrainData& data_;
    TrainOptions opts_;
    std::mt19937_64 rng_;
    Eigen::MatrixXd Us_, Cs_;
    int epoch_ = 0;
    std::vector<double> losses_;
};

// Sets the model standardization from the training data and runs SGD on
// the MSEL in standardized units.
TrainResult train(Model& model, const TrainData& data, const TrainOptions& opts,
                  const std::vector<int>& rungs = {}, const RungCallback& callback = nullptr,
                  const TrainData* validation = nullptr, double C0 = 1.0);

struct ErrorSummary {
    double mean = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0;
};

struct ErrorReport {
    double C0 = 1.0;
    std::vector<double> errors;               // per record, max-norm / C0
    std::vector<double> errors_mean_removed;  // same after removing record means
    ErrorSummary with_mean;
    ErrorSummary mean_removed;
    bool mean_removed_primary = false;

    const ErrorSummary& primary() const { return mean_removed_primary ? mean_removed : with_mean; }
    const std::vector<double>& primary_errors() const {
        return mean_removed_primary ? errors_mean_removed : errors;
    }
};

// Nearest-rank percentile of unsorted values, p in (0, 100].
double percentile_nearest_rank(std::vector<double> values, double p);
ErrorSummary summarize(const std::vector<double>& errors);

ErrorReport evaluate(const Model& model, const TrainData& test, double C0, bool mean_removed = false);
ErrorReport evaluate_predictions(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, double C0,
                                 bool mean_removed = false);

struct TrialSpec {
    ModelKind kind = ModelKind::MLP;
    MLPConfig mlp;
    ResNetConfig resnet;
    TrainOptions train;

    std::string describe() const;
};

using TrialSampler = std::function<TrialSpec(std::mt19937_64&)>;
TrialSampler mlp_trial_sampler();
TrialSampler resnet_trial_sampler();

struct TunerSpec {
    int budget = 16;
    std::vector<int> rungs{25, 50, 100, 200};
    int reduction = 2;
    int workers = 1;
    // Synchronous successive halving; otherwise asynchronous promotion.
    bool synchronous = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrialRecord {
    std::size_t id = 0;
    TrialSpec spec;
    std::vector<double> rung_scores;  // validation error at each reached rung
    bool failed = false;
    std::string failure;
};

struct TuneResult {
    std::size_t best = 0;
    std::vector<TrialRecord> leaderboard;
    std::shared_ptr<Model> best_model;
};

// Scheduler core. evaluate(trial, rung) trains a trial up to rungs[rung] and
// returns its validation score; stop(trial) is called once a trial leaves the
// race. Returns the scores each trial reached, per rung.
struct ScheduleHooks {
    std::function<double(std::size_t trial, std::size_t rung)> evaluate;
    std::function<void(std::size_t trial)> stop;
};
std::vector<std::vector<double>> successive_halving(std::size_t budget, const TunerSpec& spec,
                                                    const ScheduleHooks& hooks);

TuneResult tune(const TrialSampler& sampler, std::size_t n, const TrainData& train, const TrainData& validation,
                const TunerSpec& spec, double C0);

void write_leaderboard(const TuneResult& result, const TunerSpec& spec, const std::string& path);

// Writes <stem>.csv (per-record errors) and <stem>_summary.csv; a ".svg"
// path additionally gets a histogram of the primary errors.
void export_report(const ErrorReport& report, const std::string& path, int bins = 20);
ErrorReport import_report(const std::string& path);

struct Histogram {
    double lo = 0.0, hi = 0.0;
    std::vector<std::size_t> counts;
};
Histogram histogram(const std::vector<double>& values, int bins);
std::string histogram_svg(const Histogram& h, const std::string& title);

}  // namespace doprec
