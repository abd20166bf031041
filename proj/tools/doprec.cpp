#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cli.hpp"
#include "doprec/errors.hpp"

namespace doprec::cli {

namespace {

int fail(const char* category, int code, const std::string& what) {
    std::cerr << "doprec: error[" << category << "]: " << what << '\n';
    return code;
}

}  // namespace

int run(const std::vector<std::string>& argv) {
    CLI::App app{"Doping profile reconstruction from laser-induced voltages", "doprec"};
    app.set_version_flag("--version", std::string("doprec ") + kToolVersion + " (dataset " + kDatasetFormat +
                                          ", model " + kModelFormat + ")");
    app.require_subcommand(1);

    Context ctx;
    ctx.argv = argv;
    ctx.cwd = std::filesystem::current_path().string();
    ctx.started = now_utc();
    app.add_option("--config", ctx.global.config_path, "INI configuration file");
    app.add_option("--set", ctx.global.overrides, "Override one value: section.key=value");
    app.add_option("--workers", ctx.global.workers, "Worker threads; 1 is bit-deterministic")
        ->check(CLI::PositiveNumber);
    app.add_option("--solver-trace", ctx.global.solver_trace, "Write Newton iteration tables to this file");

    Action action;
    register_commands(app, action);

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        return fail("usage", 2, e.what());
    }

    try {
        ctx.config = load_config(ctx.global.config_path, ctx.global.overrides);
        std::ofstream trace;
        if (!ctx.global.solver_trace.empty()) {
            if (ctx.global.workers != 1) throw ConfigError("--solver-trace needs --workers 1");
            trace.open(ctx.global.solver_trace);
            if (!trace) throw IoError("cannot open " + ctx.global.solver_trace + " for writing");
            ctx.config.solver.trace = &trace;
        }
        action(ctx);
        write_manifest(ctx);
    } catch (const ConfigError& e) {
        return fail("config", 2, e.what());
    } catch (const InvalidConfig& e) {
        return fail("config", 2, e.what());
    } catch (const SolverError& e) {
        return fail("solver", 3, e.what());
    } catch (const IoError& e) {
        return fail("io", 4, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("io", 4, e.what());
    } catch (const Error& e) {
        return fail("runtime", 1, e.what());
    } catch (const std::exception& e) {
        return fail("internal", 1, e.what());
    }
    return 0;
}

}  // namespace doprec::cli

int main(int argc, char** argv) { return doprec::cli::run(std::vector<std::string>(argv, argv + argc)); }
