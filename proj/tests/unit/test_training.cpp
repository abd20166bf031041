#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doprec/errors.hpp"
#include "doprec/training.hpp"
#include "support.hpp"

using namespace doprec;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = testing::uniform(rng, lo, hi);
    return m;
}

// Rows are records: C = U A0^T + offset + noise.
TrainData linear_task(std::size_t N, Eigen::Index n, std::uint64_t seed, double noise = 0.05) {
    auto rng = testing::rng(seed);
    TrainData d;
    d.U = random_matrix(static_cast<Eigen::Index>(N), n, rng, -2, 3);
    const Eigen::MatrixXd A0 = random_matrix(n, n, rng);
    d.C = d.U * A0.transpose() + noise * random_matrix(static_cast<Eigen::Index>(N), n, rng);
    d.C.array() += 4.0;
    return d;
}

MLPConfig tiny_mlp() { return MLPConfig{{6, 5, 5, 4, 4, 6}}; }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("doprec_test_" + name)).string();
}

}  // namespace

TEST_SUITE("training_eval") {

TEST_CASE("mean square error loss") {
    auto rng = testing::rng(1);
    const Eigen::MatrixXd P = random_matrix(7, 5, rng), T = random_matrix(7, 5, rng);
    CHECK(msel(P, P) == 0.0);
    Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(1, 5);
    e1(0, 0) = 1;
    CHECK(msel(e1, Eigen::MatrixXd::Zero(1, 5)) == 1.0);
    double ref = 0;
    for (Eigen::Index j = 0; j < 7; ++j) {
        for (Eigen::Index i = 0; i < 5; ++i) ref += (P(j, i) - T(j, i)) * (P(j, i) - T(j, i));
    }
    CHECK(std::abs(msel(P, T) - ref / 7) <= 1e-12 * ref);
    CHECK_THROWS_AS(msel(P, Eigen::MatrixXd::Zero(7, 4)), ShapeMismatch);
}

TEST_CASE("test error") {
    auto rng = testing::rng(2);
    const Eigen::MatrixXd P = random_matrix(9, 6, rng), T = random_matrix(9, 6, rng);
    CHECK(test_error(P, P) == 0.0);
    Eigen::MatrixXd off = T;
    off(0, 3) += 0.25;
    CHECK(test_error(off.topRows(1), T.topRows(1)) == doctest::Approx(0.25).epsilon(1e-14));
    double ref = 0;
    for (Eigen::Index j = 0; j < 9; ++j) {
        double m = 0;
        for (Eigen::Index i = 0; i < 6; ++i) m = std::max(m, std::abs(P(j, i) - T(j, i)));
        ref += m;
    }
    CHECK(std::abs(test_error(P, T) - ref / 9) <= 1e-12 * ref);
    CHECK(std::abs(test_error(P, T, 1e16) - ref / 9 / 1e16) <= 1e-12 * ref / 1e16);
    CHECK_THROWS_AS(test_error(P, T.leftCols(2)), ShapeMismatch);
}

TEST_CASE("mean removal") {
    for (double v : remove_mean({3.0, 3.0, 3.0})) CHECK(v == 0.0);
    auto rng = testing::rng(3);
    std::vector<double> x(20);
    for (auto& v : x) v = testing::uniform(rng, -4, 9);
    const auto once = remove_mean(x);
    double mean = 0;
    for (double v : once) mean += v / 20;
    CHECK(std::abs(mean) < 1e-14);
    const auto twice = remove_mean(once);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(twice[i] - once[i]) < 1e-14);

    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXd P = random_matrix(1, 12, rng), T = random_matrix(1, 12, rng, 0, 3);
        std::vector<double> p(P.data(), P.data() + 12), t(T.data(), T.data() + 12);
        const auto pm = remove_mean(p), tm = remove_mean(t);
        const Eigen::MatrixXd PM = Eigen::Map<const Eigen::MatrixXd>(pm.data(), 1, 12);
        const Eigen::MatrixXd TM = Eigen::Map<const Eigen::MatrixXd>(tm.data(), 1, 12);
        const double dmean = std::abs(P.mean() - T.mean());
        CHECK(test_error(PM, TM) <= test_error(P, T) + 2 * dmean + 1e-14);
    }
}

TEST_CASE("percentiles and reports") {
    CHECK(percentile_nearest_rank({0.4, 0.1, 0.3, 0.2}, 25) == 0.1);
    CHECK(percentile_nearest_rank({0.4, 0.1, 0.3, 0.2}, 50) == 0.2);
    CHECK(percentile_nearest_rank({0.4, 0.1, 0.3, 0.2}, 75) == 0.3);
    CHECK(percentile_nearest_rank({0.4, 0.1, 0.3, 0.2}, 100) == 0.4);
    const ErrorSummary s = summarize({0.4, 0.1, 0.3, 0.2});
    CHECK(s.mean == doctest::Approx(0.25).epsilon(1e-15));

    auto rng = testing::rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> e(1 + static_cast<std::size_t>(trial % 17));
        for (auto& v : e) v = testing::uniform(rng, 0, 1);
        const ErrorSummary x = summarize(e);
        CHECK(x.p25 <= x.p50);
        CHECK(x.p50 <= x.p75);
        CHECK(x.mean >= 0);
    }

    const Eigen::MatrixXd T = random_matrix(6, 10, rng, 0.5, 1.5);
    const ErrorReport perfect = evaluate_predictions(T, T, 1.0);
    for (double v : perfect.errors) CHECK(v == 0.0);
    CHECK(perfect.with_mean.mean == 0.0);
    CHECK(perfect.mean_removed.p75 == 0.0);

    Eigen::MatrixXd shifted = T + 0.01 * random_matrix(6, 10, rng);
    for (Eigen::Index j = 0; j < 6; ++j) shifted.row(j).array() += 0.2 * static_cast<double>(j + 1);
    const ErrorReport r = evaluate_predictions(shifted, T, 2.0, true);
    CHECK(r.with_mean.mean >= r.mean_removed.mean);
    CHECK(&r.primary() == &r.mean_removed);
    CHECK(r.with_mean.mean == doctest::Approx(test_error(shifted, T, 2.0)).epsilon(1e-14));
}

TEST_CASE("report export, import and histogram") {
    auto rng = testing::rng(5);
    const Eigen::MatrixXd T = random_matrix(37, 8, rng), P = T + 0.1 * random_matrix(37, 8, rng);
    const ErrorReport r = evaluate_predictions(P, T, 0.5);
    const std::string stem = temp_path("report");
    export_report(r, stem);
    CHECK(std::filesystem::exists(stem + ".csv"));
    CHECK(std::filesystem::exists(stem + "_summary.csv"));
    CHECK_FALSE(std::filesystem::exists(stem + ".svg"));
    const ErrorReport back = import_report(stem);
    CHECK(back.errors == r.errors);
    CHECK(back.errors_mean_removed == r.errors_mean_removed);
    CHECK(back.with_mean.mean == r.with_mean.mean);
    CHECK(back.with_mean.p25 == r.with_mean.p25);
    CHECK(back.with_mean.p50 == r.with_mean.p50);
    CHECK(back.with_mean.p75 == r.with_mean.p75);
    CHECK(back.mean_removed.p75 == r.mean_removed.p75);
    CHECK(back.C0 == r.C0);

    export_report(r, stem + ".svg", 7);
    CHECK(std::filesystem::exists(stem + ".svg"));
    for (const char* suffix : {".csv", "_summary.csv", ".svg"}) std::filesystem::remove(stem + suffix);

    for (int bins : {1, 5, 20}) {
        const Histogram h = histogram(r.errors, bins);
        CHECK(h.counts.size() == static_cast<std::size_t>(bins));
        std::size_t total = 0;
        for (auto c : h.counts) total += c;
        CHECK(total == r.errors.size());
    }
    const Histogram same = histogram({0.3, 0.3, 0.3}, 4);
    std::size_t total = 0;
    for (auto c : same.counts) total += c;
    CHECK(total == 3u);
    CHECK(histogram_svg(histogram(r.errors, 5), "errors").find("<svg") != std::string::npos);
}

TEST_CASE("train options validation") {
    TrainOptions o;
    o.lr = 0;
    CHECK_THROWS_AS(o.validate(), InvalidConfig);
    o = TrainOptions{};
    o.batch_size = 0;
    CHECK_THROWS_AS(o.validate(), InvalidConfig);
    o = TrainOptions{};
    o.epochs = 0;
    CHECK_THROWS_AS(o.validate(), InvalidConfig);
}

TEST_CASE("tiny learning rate barely moves the parameters") {
    const TrainData d = linear_task(64, 6, 6);
    Model m = build_mlp(tiny_mlp(), 6, 3);
    const auto before = m.params().flatten();
    TrainOptions o;
    o.lr = 1e-12;
    o.epochs = 1;
    o.batch_size = 16;
    train(m, d, o);
    const auto after = m.params().flatten();
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        diff += (after[i] - before[i]) * (after[i] - before[i]);
        norm += before[i] * before[i];
    }
    CHECK(std::sqrt(diff) < 1e-6 * std::sqrt(norm));
}

TEST_CASE("linear model trained by SGD approaches the least squares optimum") {
    const TrainData d = linear_task(200, 8, 7);
    const Model ls = fit_ls_model(d);
    const double optimum = msel(ls.infer(d.U), d.C);
    Model m = Model::linear({Eigen::MatrixXd::Zero(8, 8)}, 8);
    TrainOptions o;
    o.lr = 0.05;
    o.batch_size = 20;
    o.epochs = 400;
    o.seed = 3;
    train(m, d, o);
    const double reached = msel(m.infer(d.U), d.C);
    CHECK(reached >= optimum * (1 - 1e-12));
    CHECK(reached <= 1.05 * optimum);
}

TEST_CASE("full-batch loss trace is non-increasing") {
    const TrainData d = linear_task(50, 6, 8);
    Model m = build_mlp(tiny_mlp(), 6, 5);
    TrainOptions o;
    o.lr = 1e-3;
    o.epochs = 60;
    o.full_batch = true;
    const TrainResult r = train(m, d, o);
    REQUIRE(r.loss_trace.size() == 60u);
    for (std::size_t e = 1; e < r.loss_trace.size(); ++e) CHECK(r.loss_trace[e] <= r.loss_trace[e - 1]);
}

TEST_CASE("training is reproducible and reports rungs") {
    const TrainData d = linear_task(90, 6, 9);
    TrainOptions o;
    o.lr = 0.05;
    o.epochs = 12;
    o.batch_size = 16;
    o.seed = 21;
    Model a = build_mlp(tiny_mlp(), 6, 4), b = build_mlp(tiny_mlp(), 6, 4);
    std::vector<int> seen;
    const TrainResult ra = train(a, d, o, {3, 6, 12}, [&](int epoch, double te) {
        seen.push_back(epoch);
        CHECK(std::isfinite(te));
        return true;
    });
    const TrainResult rb = train(b, d, o);
    CHECK(seen == std::vector<int>{3, 6, 12});
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(a.params().flatten() == b.params().flatten());

    Model c = build_mlp(tiny_mlp(), 6, 4);
    const TrainResult rc = train(c, d, o, {3, 6, 12}, [](int epoch, double) { return epoch < 6; });
    CHECK(rc.epochs_run == 6);

    Model bad = Model::linear({Eigen::MatrixXd::Identity(6, 6)}, 6);
    o.lr = 1e12;
    o.epochs = 50;
    CHECK_THROWS_AS(train(bad, d, o), NonFiniteLoss);
}

TEST_CASE("synchronous halving keeps the right number of trials") {
    auto rng = testing::rng(10);
    for (std::size_t budget = 1; budget <= 40; ++budget) {
        std::vector<std::vector<double>> table(budget, std::vector<double>(4));
        for (auto& row : table) {
            for (auto& v : row) v = testing::uniform(rng, 0, 1);
        }
        TunerSpec spec;
        spec.budget = static_cast<int>(budget);
        std::set<std::size_t> stopped;
        ScheduleHooks hooks;
        hooks.evaluate = [&](std::size_t t, std::size_t r) { return table[t][r]; };
        hooks.stop = [&](std::size_t t) { stopped.insert(t); };
        const auto scores = successive_halving(budget, spec, hooks);
        for (std::size_t k = 0; k < 4; ++k) {
            std::size_t reached = 0;
            for (const auto& s : scores) reached += s.size() > k;
            const auto expected = static_cast<double>((budget + (1u << k) - 1) >> k);
            CHECK(std::abs(static_cast<double>(reached) - expected) <= 1.0);
        }
        // No promoted trial scored worse than a stopped one at the same rung.
        for (std::size_t k = 0; k + 1 < 4; ++k) {
            double worst_promoted = -1, best_stopped = 2;
            for (const auto& s : scores) {
                if (s.size() == k + 1) best_stopped = std::min(best_stopped, s[k]);
                if (s.size() > k + 1) worst_promoted = std::max(worst_promoted, s[k]);
            }
            CHECK(worst_promoted <= best_stopped);
        }
        for (std::size_t t = 0; t < budget; ++t) CHECK((stopped.count(t) == 1) == (scores[t].size() < 4));
    }
}

TEST_CASE("dominant trial wins in both scheduling modes") {
    for (bool sync : {true, false}) {
        TunerSpec spec;
        spec.synchronous = sync;
        spec.rungs = {1, 2, 3};
        ScheduleHooks hooks;
        hooks.evaluate = [](std::size_t t, std::size_t r) { return t == 1 ? 0.1 / (1.0 + static_cast<double>(r)) : 0.5; };
        const auto scores = successive_halving(2, spec, hooks);
        CHECK(scores[1].size() > scores[0].size());
        if (sync) CHECK(scores[1].size() == 3u);

        auto rng = testing::rng(sync ? 11 : 12);
        std::vector<std::vector<double>> table(16, std::vector<double>(3));
        for (auto& row : table) {
            for (auto& v : row) v = testing::uniform(rng, 0, 1);
        }
        hooks.evaluate = [&](std::size_t t, std::size_t r) { return table[t][r]; };
        const auto all = successive_halving(16, spec, hooks);
        std::size_t started = 0, finished = 0;
        for (const auto& s : all) {
            started += !s.empty();
            finished += s.size() == 3;
        }
        CHECK(started == 16u);
        CHECK(finished >= 1u);
    }
}

TEST_CASE("tuner end to end") {
    const TrainData all = linear_task(60, 8, 13);
    const TrainData train_set = all.rows(0, 48), val = all.rows(48, 60);
    TunerSpec spec;
    spec.rungs = {2, 4};
    spec.budget = 1;
    spec.seed = 5;
    const TuneResult one = tune(mlp_trial_sampler(), 8, train_set, val, spec, 1.0);
    CHECK(one.best == 0u);
    REQUIRE(one.leaderboard.size() == 1u);
    CHECK(one.leaderboard[0].rung_scores.size() == 2u);
    REQUIRE(one.best_model);
    CHECK(one.best_model->kind() == ModelKind::MLP);

    spec.budget = 4;
    const TuneResult four = tune(mlp_trial_sampler(), 8, train_set, val, spec, 1.0);
    const TuneResult again = tune(mlp_trial_sampler(), 8, train_set, val, spec, 1.0);
    REQUIRE(four.leaderboard.size() == 4u);
    for (const auto& t : four.leaderboard) {
        if (t.rung_scores.size() == 2u) CHECK(four.leaderboard[four.best].rung_scores[1] <= t.rung_scores[1]);
        CHECK(t.spec.train.lr >= 1e-3);
        CHECK(t.spec.train.lr <= 1.0);
        CHECK(t.spec.train.batch_size == 64);
    }
    CHECK(four.best == again.best);
    CHECK(four.best_model->params().flatten() == again.best_model->params().flatten());
    const auto te = test_error(four.best_model->infer(val.U), val.C);
    CHECK(te == doctest::Approx(four.leaderboard[four.best].rung_scores[1]).epsilon(1e-12));

    const std::string lb = temp_path("leaderboard.csv");
    write_leaderboard(four, spec, lb);
    std::ifstream in(lb);
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,kind,config,lr,batch_size,weight_decay,clip_norm,te_epoch_2,te_epoch_4,status");
    std::size_t rows = 0, best = 0;
    for (std::string line; std::getline(in, line);) {
        ++rows;
        best += line.size() >= 5 && line.substr(line.size() - 5) == ",best";
    }
    CHECK(rows == 4u);
    CHECK(best == 1u);
    std::filesystem::remove(lb);

    TunerSpec bad;
    bad.rungs = {4, 2};
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
    bad = TunerSpec{};
    bad.reduction = 1;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

}  // TEST_SUITE
