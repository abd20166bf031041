#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cli.hpp"
#include "doprec/digest.hpp"
#include "doprec/errors.hpp"

namespace doprec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const Context& ctx) {
    if (ctx.outputs.empty() && ctx.manifest_path.empty()) return;
    json j;
    j["tool"] = "doprec";
    j["version"] = kToolVersion;
    j["formats"] = {{"dataset", kDatasetFormat}, {"model", kModelFormat}};
    j["command"] = ctx.argv;
    j["cwd"] = ctx.cwd;
    const std::string canonical = canonical_config(ctx.config);
    j["config"] = canonical;
    j["config_digest"] = sha256_hex(canonical);
    j["workers"] = ctx.global.workers;
    j["seeds"] = json::object();
    for (const auto& [name, seed] : ctx.seeds) j["seeds"][name] = seed;
    j["started"] = ctx.started;
    j["finished"] = now_utc();
    j["outputs"] = json::array();
    for (const auto& p : ctx.outputs) j["outputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}});

    const std::string path = ctx.manifest_path.empty() ? ctx.outputs.front() + ".manifest.json" : ctx.manifest_path;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

std::vector<std::string> rerun_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + path + ": " + e.what());
    }
    std::vector<std::string> argv;
    std::vector<std::pair<std::string, std::string>> outputs;
    std::string cwd;
    try {
        argv = j.at("command").get<std::vector<std::string>>();
        cwd = j.at("cwd").get<std::string>();
        for (const auto& o : j.at("outputs")) outputs.emplace_back(o.at("path"), o.at("sha256"));
    } catch (const json::exception& e) {
        throw IoError("manifest " + path + " lacks a field: " + e.what());
    }
    if (argv.size() > 1 && argv[1] == "rerun") throw ConfigError("a rerun manifest cannot be rerun");

    const fs::path here = fs::current_path();
    fs::current_path(cwd);
    int code = 0;
    try {
        code = run(argv);
    } catch (...) {
        fs::current_path(here);
        throw;
    }
    fs::current_path(here);
    if (code != 0) throw Error("rerun exited with code " + std::to_string(code));

    std::vector<std::string> mismatched;
    for (const auto& [p, digest] : outputs) {
        const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : fs::path(cwd) / p;
        if (sha256_file(full.string()) != digest) mismatched.push_back(p);
    }
    return mismatched;
}

}  // namespace doprec::cli
