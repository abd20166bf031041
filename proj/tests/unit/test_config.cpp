#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "doprec/config.hpp"
#include "doprec/digest.hpp"
#include "doprec/errors.hpp"

using namespace doprec;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
    const auto p = std::filesystem::temp_directory_path() / ("doprec_test_" + name);
    std::ofstream(p) << text;
    return p.string();
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults and the shipped configuration agree") {
    const RunConfig d = load_config("");
    CHECK(d.device.geometry.n == 96);
    CHECK(d.doping.terms == 5);
    CHECK(d.noise.knot_count == 129);
    const RunConfig f = load_config(std::string(DOPREC_SOURCE_DIR) + "/config/silicon.ini");
    CHECK(canonical_config(f) == canonical_config(d));
    // The INI rendering parses back to the same values.
    const std::string path = write_temp("roundtrip.ini", config_ini(d));
    CHECK(canonical_config(load_config(path)) == canonical_config(d));
    std::filesystem::remove(path);
}

TEST_CASE("file values and overrides") {
    const std::string path = write_temp("cfg.ini", "[geometry]\nn = 16\n[laser]\nP = 2e-6\n[solver]\nlinear_solver = bicgstab\n");
    const RunConfig c = load_config(path, {"geometry.n=24", "mesh.dx_max=1.25"});
    CHECK(c.device.geometry.n == 24);
    CHECK(c.device.laser.P == 2e-6);
    CHECK(c.mesh.dx_max == 1.25);
    CHECK(c.solver.linear_solver == LinearSolverKind::BiCGSTAB);
    CHECK(canonical_config(c) != canonical_config(load_config("")));
    CHECK(c.sweep_options(3).workers == 3);
    std::filesystem::remove(path);
}

TEST_CASE("configuration errors") {
    CHECK_THROWS_AS(load_config("", {"geometry.bogus=1"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"nosuch.n=1"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"geometry.n=abc"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"geometry.n"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"solver.linear_solver=cholesky"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"geometry.n=0"}), Error);
    const std::string path = write_temp("bad.ini", "[extra]\nkey = 1\n");
    CHECK_THROWS_AS(load_config(path), ConfigError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_config("/nonexistent/doprec.ini"), Error);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string path = write_temp("digest.txt", "abc");
    CHECK(sha256_file(path) == sha256_hex("abc"));
    std::filesystem::remove(path);
}

}  // TEST_SUITE
