#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "doprec/datagen.hpp"
#include "doprec/errors.hpp"
#include "doprec/inverse_models.hpp"
#include "doprec/training.hpp"

namespace doprec::cli {

namespace fs = std::filesystem;

namespace {

DatasetTag parse_tag(const std::string& s) { return s == "noisy" ? DatasetTag::Noisy : DatasetTag::Clean; }

DatasetRole parse_role(const std::string& s) {
    if (s == "test") return DatasetRole::Test;
    if (s == "validation") return DatasetRole::Validation;
    return DatasetRole::Train;
}

ModelKind parse_kind(const std::string& s) { return s == "resnet" ? ModelKind::ResNet : ModelKind::MLP; }

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << std::setprecision(17);
    return out;
}

void close_checked(std::ofstream& out, const std::string& path) {
    out.close();
    if (!out) throw IoError("write failed for " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    close_checked(out, path);
}

void print_summary(const ErrorReport& r) {
    auto line = [](const char* label, const ErrorSummary& s) {
        std::cout << label << " mean=" << s.mean << " p25=" << s.p25 << " p50=" << s.p50 << " p75=" << s.p75 << '\n';
    };
    std::cout << "records=" << r.errors.size() << " C0=" << r.C0 << '\n';
    line("with_mean", r.with_mean);
    line("mean_removed", r.mean_removed);
}

struct Series {
    std::vector<double> x, y;
    std::string color;
    bool dashed = false;
    std::string label;
};

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title, bool log_y) {
    constexpr double W = 520, H = 320, left = 70, right = 20, top = 30, bottom = 40;
    const double pw = W - left - right, ph = H - top - bottom;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n"
       << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) os << " stroke-dasharray=\"6,4\"";
        os << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            os << left + pw * (s.x[i] - x0) / (x1 - x0) << ',' << top + ph * (1 - (ty(s.y[i]) - y0) / (y1 - y0)) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 + 14 * static_cast<double>(k) << "\" font-size=\"11\" fill=\""
           << s.color << "\">" << s.label << "</text>\n";
    }
    os << "<text x=\"" << left << "\" y=\"" << H - 12 << "\" font-size=\"11\">" << x0 << "</text>\n"
       << "<text x=\"" << left + pw << "\" y=\"" << H - 12 << "\" font-size=\"11\" text-anchor=\"end\">" << x1 << "</text>\n"
       << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" font-size=\"11\" text-anchor=\"end\">"
       << (log_y ? std::pow(10, y1) : y1) << "</text>\n"
       << "<text x=\"" << left - 4 << "\" y=\"" << top + ph << "\" font-size=\"11\" text-anchor=\"end\">"
       << (log_y ? std::pow(10, y0) : y0) << "</text>\n"
       << "</svg>\n";
    return os.str();
}

std::string file_stem(const std::string& path) { return fs::path(path).stem().string(); }

// Records whose error sits at the 25th, 50th and 75th percentiles.
std::vector<std::pair<int, std::size_t>> percentile_examples(const std::vector<double>& errors) {
    std::vector<std::pair<int, std::size_t>> out;
    for (int p : {25, 50, 75}) {
        const double v = percentile_nearest_rank(errors, p);
        const auto it = std::find(errors.begin(), errors.end(), v);
        out.emplace_back(p, static_cast<std::size_t>(it - errors.begin()));
    }
    return out;
}

void check_model_n(const Model& m, const Dataset& ds) {
    if (m.n() != ds.n()) {
        throw ShapeMismatch("model expects n=" + std::to_string(m.n()) + ", dataset has n=" + std::to_string(ds.n()));
    }
}

void cmd_generate(Context& ctx, std::size_t count, const std::string& out, const std::string& tag,
                  const std::string& role, std::uint64_t seed, const std::string& csv) {
    ctx.seeds["dataset"] = seed;
    GenerationLog log;
    const Dataset ds = generate_dataset(count, parse_tag(tag), parse_role(role), ctx.config.device, ctx.config.doping,
                                        ctx.config.noise, seed, ctx.config.sweep_options(ctx.global.workers), &log);
    for (const auto& f : log.failures) std::cerr << "warning: record " << f.record << " dropped: " << f.what << '\n';
    write_dataset(ds, out);
    ctx.output(out);
    if (!csv.empty()) {
        export_csv(ds, csv);
        ctx.output(csv);
    }
    std::cout << "wrote " << ds.records.size() << " records to " << out << '\n';
}

void cmd_svd(Context& ctx, const std::string& data, const std::string& out, std::size_t count) {
    const Dataset ds = read_dataset(data);
    const std::size_t k = count ? count : ds.n();
    const auto su = svd_spectrum(ds, Field::U, k);
    const auto sc = svd_spectrum(ds, Field::C, k);
    auto f = open_csv(out);
    f << "index,sigma_u,sigma_C\n";
    for (std::size_t i = 0; i < std::max(su.size(), sc.size()); ++i) {
        f << i + 1 << ',';
        if (i < su.size()) f << su[i];
        f << ',';
        if (i < sc.size()) f << sc[i];
        f << '\n';
    }
    close_checked(f, out);
    ctx.output(out);
    std::cout << "effective rank (1e-10): u=" << effective_rank(su, 1e-10) << " C=" << effective_rank(sc, 1e-10) << '\n';
}

void cmd_fit_ls(Context& ctx, const std::string& train_path, const std::string& out, double threshold) {
    const Dataset ds = read_dataset(train_path);
    const Model m = fit_ls_model(TrainData::from(ds), threshold);
    save_model(m, out);
    ctx.output(out);
}

struct TrainArgs {
    std::string kind = "mlp", config, train, out, loss_trace;
    std::uint64_t seed = 0;
    double lr = 0.06, weight_decay = 0.0, clip = 0.0;
    int batch = 64, epochs = 200;
};

void cmd_train(Context& ctx, const TrainArgs& a) {
    const Dataset ds = read_dataset(a.train);
    const TrainData data = TrainData::from(ds);
    ctx.seeds["init"] = derive_seed(a.seed, 1);
    ctx.seeds["shuffle"] = a.seed;
    Model m = [&] {
        try {
            if (parse_kind(a.kind) == ModelKind::ResNet) return Model::resnet(ResNetConfig::parse(a.config), ds.n(), derive_seed(a.seed, 1));
            return Model::mlp(MLPConfig::parse(a.config), ds.n(), derive_seed(a.seed, 1));
        } catch (const InvalidConfig& e) {
            throw ConfigError(e.what());
        }
    }();
    TrainOptions opts;
    opts.lr = a.lr;
    opts.batch_size = a.batch;
    opts.epochs = a.epochs;
    opts.weight_decay = a.weight_decay;
    if (a.clip > 0) opts.clip_norm = a.clip;
    opts.seed = a.seed;
    const TrainResult res = train(m, data, opts);
    save_model(m, a.out);
    ctx.output(a.out);
    if (!a.loss_trace.empty()) {
        auto f = open_csv(a.loss_trace);
        f << "epoch,msel\n";
        for (std::size_t e = 0; e < res.loss_trace.size(); ++e) f << e + 1 << ',' << res.loss_trace[e] << '\n';
        close_checked(f, a.loss_trace);
        ctx.output(a.loss_trace);
    }
    std::cout << "parameters=" << m.param_count() << " final_msel=" << res.loss_trace.back() << '\n';
}

struct TuneArgs {
    std::string kind = "mlp", train, out, leaderboard;
    int budget = 16, reduction = 2;
    std::vector<int> rungs;
    std::uint64_t seed = 0;
    bool async = false;
    double validation_fraction = 0.2;
};

void cmd_tune(Context& ctx, const TuneArgs& a) {
    const Dataset ds = read_dataset(a.train);
    const TrainData all = TrainData::from(ds);
    if (!(a.validation_fraction > 0 && a.validation_fraction < 1)) throw ConfigError("--validation-fraction must lie in (0,1)");
    const auto n_val = static_cast<std::size_t>(std::round(a.validation_fraction * static_cast<double>(all.size())));
    if (n_val == 0 || n_val >= all.size()) throw DegenerateData("training set too small to split off a validation part");
    const std::size_t n_train = all.size() - n_val;
    const TrainData tr = all.rows(0, n_train), val = all.rows(n_train, all.size());

    TunerSpec spec;
    spec.budget = a.budget;
    spec.reduction = a.reduction;
    spec.workers = ctx.global.workers;
    spec.synchronous = !a.async;
    spec.seed = a.seed;
    const bool resnet = parse_kind(a.kind) == ModelKind::ResNet;
    if (!a.rungs.empty()) spec.rungs = a.rungs;
    else if (resnet) spec.rungs = {100, 250, 500};
    try {
        spec.validate();
    } catch (const InvalidConfig& e) {
        throw ConfigError(e.what());
    }
    ctx.seeds["tuner"] = a.seed;

    const TuneResult res = tune(resnet ? resnet_trial_sampler() : mlp_trial_sampler(), ds.n(), tr, val, spec, ctx.config.doping.C0);
    save_model(*res.best_model, a.out);
    ctx.output(a.out);
    if (!a.leaderboard.empty()) {
        write_leaderboard(res, spec, a.leaderboard);
        ctx.output(a.leaderboard);
    }
    const auto& best = res.leaderboard[res.best];
    std::cout << "best trial " << best.id << ": " << best.spec.describe() << " validation_te=" << best.rung_scores.back() << '\n';
}

void cmd_evaluate(Context& ctx, const std::string& model_path, const std::string& test_path, bool remove_mean,
                  const std::string& report) {
    const Model m = load_model(model_path);
    const Dataset ds = read_dataset(test_path);
    check_model_n(m, ds);
    const ErrorReport r = evaluate(m, TrainData::from(ds), ctx.config.doping.C0, remove_mean);
    print_summary(r);
    if (!report.empty()) {
        export_report(r, report);
        const fs::path p(report);
        const std::string stem = (p.parent_path() / p.stem()).string();
        ctx.output(stem + ".csv");
        ctx.output(stem + "_summary.csv");
        if (p.extension() == ".svg") ctx.output(report);
    }
}

void cmd_predict(Context& ctx, const std::string& model_path, const std::string& in, const std::string& out) {
    const Model m = load_model(model_path);
    const Dataset ds = read_dataset(in);
    check_model_n(m, ds);
    const Eigen::MatrixXd pred = m.infer(TrainData::from(ds).U);
    auto f = open_csv(out);
    f << "record";
    for (std::size_t i = 0; i < ds.n(); ++i) f << ",C_" << i;
    f << '\n';
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
        f << j;
        for (Eigen::Index i = 0; i < pred.cols(); ++i) f << ',' << pred(j, i);
        f << '\n';
    }
    close_checked(f, out);
    ctx.output(out);
}

struct FigureArgs {
    std::string which, out, test;
    std::vector<std::string> data, models;
    bool remove_mean = false;
    int bins = 20;
};

void figures_svd(Context& ctx, const FigureArgs& a) {
    if (a.data.empty()) throw ConfigError("figures svd needs at least one --data");
    const std::vector<std::string> colors{"steelblue", "firebrick", "darkgreen", "darkorange", "purple"};
    std::vector<Series> series;
    for (std::size_t d = 0; d < a.data.size(); ++d) {
        const Dataset ds = read_dataset(a.data[d]);
        const auto su = svd_spectrum(ds, Field::U, ds.n());
        const auto sc = svd_spectrum(ds, Field::C, ds.n());
        const std::string csv = (fs::path(a.out) / ("svd_" + file_stem(a.data[d]) + ".csv")).string();
        auto f = open_csv(csv);
        f << "index,sigma_u,sigma_C\n";
        for (std::size_t i = 0; i < su.size(); ++i) f << i + 1 << ',' << su[i] << ',' << sc[i] << '\n';
        close_checked(f, csv);
        ctx.output(csv);
        Series s;
        for (std::size_t i = 0; i < su.size(); ++i) {
            s.x.push_back(static_cast<double>(i + 1));
            s.y.push_back(su[i] / su.front());
        }
        s.color = colors[d % colors.size()];
        s.label = file_stem(a.data[d]);
        series.push_back(std::move(s));
    }
    const std::string svg = (fs::path(a.out) / "svd.svg").string();
    write_text(svg, line_plot_svg(series, "normalized singular values of the signal matrix", true));
    ctx.output(svg);
}

void write_examples(Context& ctx, const Model& m, const Dataset& ds, const ErrorReport& r, const std::string& prefix,
                    bool profiles) {
    const auto picks = percentile_examples(r.primary_errors());
    const std::string list = prefix + "_examples.csv";
    auto f = open_csv(list);
    f << "percentile,record,error\n";
    for (const auto& [p, j] : picks) f << p << ',' << j << ',' << r.primary_errors()[j] << '\n';
    close_checked(f, list);
    ctx.output(list);
    if (!profiles) return;
    for (const auto& [p, j] : picks) {
        const auto& rec = ds.records[j];
        const auto pred = m.infer(rec.u);
        const std::string csv = prefix + "_p" + std::to_string(p) + ".csv";
        auto g = open_csv(csv);
        g << "x_um,C_expected,C_predicted\n";
        for (std::size_t i = 0; i < ds.n(); ++i) g << ds.sigma_h[i] << ',' << rec.C[i] << ',' << pred[i] << '\n';
        close_checked(g, csv);
        ctx.output(csv);
        const std::string svg = prefix + "_p" + std::to_string(p) + ".svg";
        write_text(svg, line_plot_svg({{ds.sigma_h, rec.C, "gray", true, "expected"},
                                       {ds.sigma_h, pred, "steelblue", false, "predicted"}},
                                      "record " + std::to_string(j) + ", percentile " + std::to_string(p), false));
        ctx.output(svg);
    }
}

void figures_models(Context& ctx, const FigureArgs& a, bool profiles) {
    if (a.models.empty() || a.test.empty()) throw ConfigError("figures " + a.which + " needs --model and --test");
    const Dataset ds = read_dataset(a.test);
    const TrainData td = TrainData::from(ds);
    for (const auto& mp : a.models) {
        const Model m = load_model(mp);
        check_model_n(m, ds);
        const ErrorReport r = evaluate(m, td, ctx.config.doping.C0, a.remove_mean);
        const std::string prefix = (fs::path(a.out) / file_stem(mp)).string();
        if (!profiles) {
            export_report(r, prefix + "_errors.svg", a.bins);
            ctx.output(prefix + "_errors.csv");
            ctx.output(prefix + "_errors_summary.csv");
            ctx.output(prefix + "_errors.svg");
        }
        write_examples(ctx, m, ds, r, prefix, profiles);
    }
}

void cmd_figures(Context& ctx, const FigureArgs& a) {
    fs::create_directories(a.out);
    ctx.manifest_path = (fs::path(a.out) / (a.which + ".manifest.json")).string();
    if (a.which == "svd") figures_svd(ctx, a);
    else figures_models(ctx, a, a.which == "examples");
}

}  // namespace

void register_commands(CLI::App& app, Action& action) {
    {
        auto* sc = app.add_subcommand("generate", "Sample doping profiles and record laser sweeps");
        auto count = std::make_shared<std::size_t>(0);
        auto out = std::make_shared<std::string>(), tag = std::make_shared<std::string>("clean"),
             role = std::make_shared<std::string>("train"), csv = std::make_shared<std::string>();
        auto seed = std::make_shared<std::uint64_t>(0);
        sc->add_option("--count", *count, "Number of records")->required();
        sc->add_option("--out", *out, "Output dataset (.dprc)")->required();
        sc->add_option("--tag", *tag, "clean or noisy")->check(CLI::IsMember({"clean", "noisy"}));
        sc->add_option("--role", *role, "train, test or validation")->check(CLI::IsMember({"train", "test", "validation"}));
        sc->add_option("--seed", *seed, "Base seed");
        sc->add_option("--csv", *csv, "Also export the records as CSV");
        sc->callback([&, count, out, tag, role, seed, csv] {
            action = [=](Context& c) { cmd_generate(c, *count, *out, *tag, *role, *seed, *csv); };
        });
    }
    {
        auto* sc = app.add_subcommand("svd", "Singular values of the signal and doping matrices");
        auto data = std::make_shared<std::string>(), out = std::make_shared<std::string>();
        auto count = std::make_shared<std::size_t>(0);
        sc->add_option("--data", *data, "Dataset (.dprc)")->required();
        sc->add_option("--out", *out, "Spectrum CSV")->required();
        sc->add_option("--count", *count, "Number of singular values (default n)");
        sc->callback([&, data, out, count] { action = [=](Context& c) { cmd_svd(c, *data, *out, *count); }; });
    }
    {
        auto* sc = app.add_subcommand("fit-ls", "Fit the least squares inverse map");
        auto train = std::make_shared<std::string>(), out = std::make_shared<std::string>();
        auto thr = std::make_shared<double>(1e-10);
        sc->add_option("--train", *train, "Training dataset")->required();
        sc->add_option("--out", *out, "Model checkpoint (.dpmd)")->required();
        sc->add_option("--threshold", *thr, "Relative pseudoinverse cutoff");
        sc->callback([&, train, out, thr] { action = [=](Context& c) { cmd_fit_ls(c, *train, *out, *thr); }; });
    }
    {
        auto* sc = app.add_subcommand("train", "Train an MLP or ResNet");
        auto a = std::make_shared<TrainArgs>();
        sc->add_option("--kind", a->kind, "mlp or resnet")->check(CLI::IsMember({"mlp", "resnet"}));
        sc->add_option("--config", a->config,
                       "Architecture: six sizes 'l2,...,l7' or 'gate=K:C:S;encoder=basic|fixed:B:D;decoder=h1:h2'")
            ->required();
        sc->add_option("--train", a->train, "Training dataset")->required();
        sc->add_option("--out", a->out, "Model checkpoint (.dpmd)")->required();
        sc->add_option("--seed", a->seed, "Initialization and shuffling seed");
        sc->add_option("--lr", a->lr, "Learning rate");
        sc->add_option("--batch", a->batch, "Batch size");
        sc->add_option("--epochs", a->epochs, "Epochs");
        sc->add_option("--weight-decay", a->weight_decay, "L2 weight decay");
        sc->add_option("--clip", a->clip, "Gradient norm clip (0 disables)");
        sc->add_option("--loss-trace", a->loss_trace, "Per-epoch loss CSV");
        sc->callback([&, a] { action = [=](Context& c) { cmd_train(c, *a); }; });
    }
    {
        auto* sc = app.add_subcommand("tune", "Successive-halving hyperparameter search");
        auto a = std::make_shared<TuneArgs>();
        sc->add_option("--kind", a->kind, "mlp or resnet")->check(CLI::IsMember({"mlp", "resnet"}));
        sc->add_option("--budget", a->budget, "Number of trials");
        sc->add_option("--train", a->train, "Training dataset; the tail is held out for validation")->required();
        sc->add_option("--out", a->out, "Best model checkpoint")->required();
        sc->add_option("--leaderboard", a->leaderboard, "Leaderboard CSV");
        sc->add_option("--rungs", a->rungs, "Epoch checkpoints")->delimiter(',');
        sc->add_option("--reduction", a->reduction, "Reduction factor");
        sc->add_option("--seed", a->seed, "Tuner seed");
        sc->add_flag("--async", a->async, "Asynchronous promotion");
        sc->add_option("--validation-fraction", a->validation_fraction, "Held-out share of the training set");
        sc->callback([&, a] { action = [=](Context& c) { cmd_tune(c, *a); }; });
    }
    {
        auto* sc = app.add_subcommand("evaluate", "Test errors of a model");
        auto model = std::make_shared<std::string>(), test = std::make_shared<std::string>(),
             report = std::make_shared<std::string>();
        auto rm = std::make_shared<bool>(false);
        sc->add_option("--model", *model, "Model checkpoint")->required();
        sc->add_option("--test", *test, "Test dataset")->required();
        sc->add_flag("--remove-mean", *rm, "Report mean-removed errors as primary");
        sc->add_option("--report", *report, "Report path (.csv, or .svg for a histogram too)");
        sc->callback([&, model, test, rm, report] {
            action = [=](Context& c) { cmd_evaluate(c, *model, *test, *rm, *report); };
        });
    }
    {
        auto* sc = app.add_subcommand("predict", "Reconstruct dopings from recorded signals");
        auto model = std::make_shared<std::string>(), in = std::make_shared<std::string>(),
             out = std::make_shared<std::string>();
        sc->add_option("--model", *model, "Model checkpoint")->required();
        sc->add_option("--in", *in, "Dataset with signals")->required();
        sc->add_option("--out", *out, "Prediction CSV")->required();
        sc->callback([&, model, in, out] { action = [=](Context& c) { cmd_predict(c, *model, *in, *out); }; });
    }
    {
        auto* sc = app.add_subcommand("figures", "Figure data: svd, histograms or examples");
        auto a = std::make_shared<FigureArgs>();
        sc->add_option("which", a->which, "svd, histograms or examples")
            ->required()
            ->check(CLI::IsMember({"svd", "histograms", "examples"}));
        sc->add_option("--data", a->data, "Datasets for the svd figure");
        sc->add_option("--model", a->models, "Model checkpoints");
        sc->add_option("--test", a->test, "Test dataset");
        sc->add_option("--out", a->out, "Output directory")->required();
        sc->add_flag("--remove-mean", a->remove_mean, "Mean-removed errors");
        sc->add_option("--bins", a->bins, "Histogram bins");
        sc->callback([&, a] { action = [=](Context& c) { cmd_figures(c, *a); }; });
    }
    {
        auto* sc = app.add_subcommand("rerun", "Repeat a recorded run and compare output digests");
        auto manifest = std::make_shared<std::string>();
        sc->add_option("--manifest", *manifest, "Run manifest (.json)")->required();
        sc->callback([&, manifest] {
            action = [=](Context&) {
                const auto bad = rerun_manifest(*manifest);
                for (const auto& p : bad) std::cout << "mismatch " << p << '\n';
                if (!bad.empty()) throw Error(std::to_string(bad.size()) + " outputs differ from the manifest");
                std::cout << "all outputs reproduced\n";
            };
        });
    }
}

}  // namespace doprec::cli
