#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "doprec/errors.hpp"
#include "doprec/parallel.hpp"
#include "doprec/training.hpp"

namespace doprec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(std::log(lo), std::log(hi));
    return std::exp(d(rng));
}

struct Trial {
    TrialRecord record;
    std::unique_ptr<Model> model;
    std::unique_ptr<Trainer> trainer;
};

Model build_trial_model(const TrialSpec& spec, std::size_t n, std::uint64_t seed) {
    switch (spec.kind) {
        case ModelKind::MLP: return Model::mlp(spec.mlp, n, seed);
        case ModelKind::ResNet: return Model::resnet(spec.resnet, n, seed);
        case ModelKind::LS: break;
    }
    throw InvalidConfig("tuner trials must be MLP or ResNet");
}

class Runner {
public:
    Runner(std::size_t n, const TrainData& train, const TrainData& val, double C0, std::uint64_t seed)
        : n_(n), train_(train), val_(val), C0_(C0), seed_(seed), stand_(fit_standardization(train)) {}

    // Trains the trial to `epoch` and returns its validation error; a
    // failing trial scores +inf and is marked failed.
    double advance(Trial& t, int epoch) const {
        if (t.record.failed) return kInf;
        try {
            if (!t.model) {
                t.model = std::make_unique<Model>(build_trial_model(t.record.spec, n_, derive_seed(seed_, 2 * t.record.id + 1)));
                t.model->standardization = stand_;
                t.trainer = std::make_unique<Trainer>(*t.model, train_, t.record.spec.train);
            }
            t.trainer->advance_to(epoch);
            const double te = test_error(t.model->infer(val_.U), val_.C, C0_);
            if (!std::isfinite(te)) throw NonFiniteLoss(epoch, te);
            return te;
        } catch (const std::exception& e) {
            t.record.failed = true;
            t.record.failure = e.what();
            t.trainer.reset();
            t.model.reset();
            return kInf;
        }
    }

    static void release(Trial& t) {
        t.trainer.reset();
        t.model.reset();
    }

private:
    std::size_t n_;
    const TrainData& train_;
    const TrainData& val_;
    double C0_;
    std::uint64_t seed_;
    Standardization stand_;
};

bool better(const std::vector<std::vector<double>>& scores, std::size_t a, std::size_t b, std::size_t rung) {
    const double sa = scores[a][rung], sb = scores[b][rung];
    if (sa != sb) return sa < sb;
    return a < b;
}

}  // namespace

std::string TrialSpec::describe() const {
    std::ostringstream os;
    os << to_string(kind) << ' ' << (kind == ModelKind::ResNet ? resnet.to_string() : mlp.to_string()) << " lr="
       << train.lr << " batch=" << train.batch_size;
    if (train.weight_decay > 0) os << " wd=" << train.weight_decay;
    if (train.clip_norm) os << " clip=" << *train.clip_norm;
    return os.str();
}

TrialSampler mlp_trial_sampler() {
    return [](std::mt19937_64& rng) {
        TrialSpec s;
        s.kind = ModelKind::MLP;
        s.mlp = mlp_config_sample(rng);
        s.train.lr = log_uniform(rng, 1e-3, 1.0);
        s.train.batch_size = 64;
        return s;
    };
}

TrialSampler resnet_trial_sampler() {
    return [](std::mt19937_64& rng) {
        static constexpr int kBatches[] = {64, 128, 256, 384, 512};
        TrialSpec s;
        s.kind = ModelKind::ResNet;
        s.resnet = resnet_config_sample(rng);
        s.train.lr = log_uniform(rng, 5e-3, 1e-1);
        s.train.batch_size = kBatches[std::uniform_int_distribution<int>(0, 4)(rng)];
        s.train.clip_norm = 1.0;
        s.train.weight_decay = 0.0;
        return s;
    };
}

void TunerSpec::validate() const {
    if (budget < 1) throw InvalidConfig("tuner: budget must be at least 1");
    if (rungs.empty()) throw InvalidConfig("tuner: at least one rung is required");
    if (rungs.front() < 1) throw InvalidConfig("tuner: rungs must be positive");
    for (std::size_t i = 1; i < rungs.size(); ++i) {
        if (rungs[i] <= rungs[i - 1]) throw InvalidConfig("tuner: rungs must be strictly increasing");
    }
    if (reduction < 2) throw InvalidConfig("tuner: reduction factor must be at least 2");
    if (workers < 1) throw InvalidConfig("tuner: workers must be at least 1");
}

std::vector<std::vector<double>> successive_halving(std::size_t budget, const TunerSpec& spec,
                                                    const ScheduleHooks& hooks) {
    spec.validate();
    std::vector<std::vector<double>> scores(budget);
    if (spec.synchronous) {
        std::vector<std::size_t> active(budget);
        for (std::size_t i = 0; i < budget; ++i) active[i] = i;
        for (std::size_t r = 0; r < spec.rungs.size(); ++r) {
            std::vector<double> got(active.size());
            parallel_for(active.size(), spec.workers, [&](std::size_t k) { got[k] = hooks.evaluate(active[k], r); });
            for (std::size_t k = 0; k < active.size(); ++k) scores[active[k]].push_back(got[k]);
            if (r + 1 == spec.rungs.size()) break;
            std::sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) { return better(scores, a, b, r); });
            const auto eta = static_cast<std::size_t>(spec.reduction);
            const std::size_t keep = (active.size() + eta - 1) / eta;
            for (std::size_t k = keep; k < active.size(); ++k) {
                if (hooks.stop) hooks.stop(active[k]);
            }
            active.resize(keep);
            std::sort(active.begin(), active.end());
        }
        return scores;
    }

    // Asynchronous promotion: a free worker promotes the best unpromoted
    // trial in the top 1/reduction of a rung, otherwise starts a new trial.
    const std::size_t R = spec.rungs.size();
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::vector<bool>> promoted(budget, std::vector<bool>(R, false));
    std::vector<bool> busy(budget, false);
    std::size_t next = 0, running = 0;
    struct Job {
        std::size_t trial, rung;
    };
    auto pick = [&]() -> std::optional<Job> {
        for (std::size_t k = R - 1; k-- > 0;) {
            std::vector<std::size_t> done;
            for (std::size_t i = 0; i < next; ++i) {
                if (scores[i].size() > k) done.push_back(i);
            }
            std::sort(done.begin(), done.end(), [&](std::size_t a, std::size_t b) { return better(scores, a, b, k); });
            const std::size_t top = done.size() / static_cast<std::size_t>(spec.reduction);
            for (std::size_t j = 0; j < top; ++j) {
                const std::size_t i = done[j];
                if (promoted[i][k] || busy[i] || scores[i].size() != k + 1 || !std::isfinite(scores[i][k])) continue;
                promoted[i][k] = true;
                return Job{i, k + 1};
            }
        }
        if (next < budget) return Job{next++, 0};
        return std::nullopt;
    };
    std::exception_ptr error;
    auto worker = [&] {
        std::unique_lock<std::mutex> lock(mu);
        for (;;) {
            if (error) return;
            auto job = pick();
            if (!job) {
                if (running == 0) {
                    cv.notify_all();
                    return;
                }
                cv.wait(lock);
                continue;
            }
            ++running;
            busy[job->trial] = true;
            lock.unlock();
            double score = kInf;
            try {
                score = hooks.evaluate(job->trial, job->rung);
            } catch (...) {
                lock.lock();
                if (!error) error = std::current_exception();
                --running;
                cv.notify_all();
                return;
            }
            lock.lock();
            scores[job->trial].push_back(score);
            busy[job->trial] = false;
            --running;
            cv.notify_all();
        }
    };
    const int W = std::max(1, spec.workers);
    if (W == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < W; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
    if (hooks.stop) {
        for (std::size_t i = 0; i < budget; ++i) {
            if (scores[i].size() < R) hooks.stop(i);
        }
    }
    return scores;
}

TuneResult tune(const TrialSampler& sampler, std::size_t n, const TrainData& train, const TrainData& validation,
                const TunerSpec& spec, double C0) {
    spec.validate();
    if (train.size() == 0 || validation.size() == 0) throw DegenerateData("tuner needs training and validation records");

    std::mt19937_64 rng(spec.seed);
    std::vector<Trial> trials(static_cast<std::size_t>(spec.budget));
    for (std::size_t i = 0; i < trials.size(); ++i) {
        trials[i].record.id = i;
        trials[i].record.spec = sampler(rng);
        trials[i].record.spec.train.epochs = spec.rungs.back();
        trials[i].record.spec.train.seed = derive_seed(spec.seed, 2 * i);
    }

    const Runner runner(n, train, validation, C0, spec.seed);
    ScheduleHooks hooks;
    hooks.evaluate = [&](std::size_t t, std::size_t r) { return runner.advance(trials[t], spec.rungs[r]); };
    hooks.stop = [&](std::size_t t) { Runner::release(trials[t]); };
    const auto scores = successive_halving(trials.size(), spec, hooks);

    TuneResult res;
    const std::size_t last = spec.rungs.size() - 1;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        trials[i].record.rung_scores = scores[i];
        if (scores[i].size() != last + 1 || trials[i].record.failed) continue;
        if (!best || better(scores, i, *best, last)) best = i;
    }
    for (auto& t : trials) res.leaderboard.push_back(t.record);
    if (!best) throw DegenerateData("every tuner trial failed before the final rung");
    res.best = *best;
    trials[*best].trainer.reset();
    res.best_model = std::shared_ptr<Model>(std::move(trials[*best].model));
    return res;
}

void write_leaderboard(const TuneResult& result, const TunerSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "id,kind,config,lr,batch_size,weight_decay,clip_norm";
    for (int r : spec.rungs) out << ",te_epoch_" << r;
    out << ",status\n";
    out << std::setprecision(10);
    for (const auto& t : result.leaderboard) {
        const auto& s = t.spec;
        out << t.id << ',' << to_string(s.kind) << ",\""
            << (s.kind == ModelKind::ResNet ? s.resnet.to_string() : s.mlp.to_string()) << "\"," << s.train.lr << ','
            << s.train.batch_size << ',' << s.train.weight_decay << ',';
        if (s.train.clip_norm) out << *s.train.clip_norm;
        for (std::size_t r = 0; r < spec.rungs.size(); ++r) {
            out << ',';
            if (r < t.rung_scores.size()) out << t.rung_scores[r];
        }
        const char* status = t.failed ? "failed" : (t.id == result.best ? "best" : (t.rung_scores.size() == spec.rungs.size() ? "finished" : "stopped"));
        out << ',' << status << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace doprec
