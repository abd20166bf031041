#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "doprec/config.hpp"

namespace doprec::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kDatasetFormat = "DPRC1";
inline constexpr const char* kModelFormat = "DPMD1";

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    int workers = 1;
    std::string solver_trace;
};

// State shared by one command invocation; commands register seeds and
// outputs for the manifest.
struct Context {
    std::vector<std::string> argv;
    std::string cwd;
    GlobalOptions global;
    RunConfig config;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::string> outputs;
    // Manifest location; defaults to <first output>.manifest.json.
    std::string manifest_path;
    std::string started;

    void output(const std::string& path) { outputs.push_back(path); }
};

using Action = std::function<void(Context&)>;

// Adds every subcommand to app. The returned action runs the parsed one.
void register_commands(CLI::App& app, Action& action);

std::string now_utc();
void write_manifest(const Context& ctx);

// Re-executes a manifest's command line from its working directory and
// compares output digests; returns the mismatching paths.
std::vector<std::string> rerun_manifest(const std::string& path);

// Parses and runs one command line; returns the process exit code.
int run(const std::vector<std::string>& argv);

}  // namespace doprec::cli
