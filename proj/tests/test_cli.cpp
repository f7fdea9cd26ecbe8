#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spde/cli.hpp"

using namespace spde::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path tmp_file(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("parse_config: defaults") {
    auto cfg = parse_config({"simulate"});
    CHECK(cfg.command == "simulate");
    CHECK(cfg.modes == 64);
    CHECK(cfg.horizon == 0.25);
    CHECK(cfg.samples == 10000);
    CHECK(cfg.seed == 1);
    CHECK(cfg.bundle == "smooth-default");
    CHECK(cfg.delta == 0.0);
    CHECK(cfg.tau == 0.0);
    CHECK(cfg.out == "simulate.csv");
}

TEST_CASE("parse_config: T = N dt derivation and consistency") {
    auto cfg = parse_config({"simulate", "--dt", "0.01", "--steps", "25"});
    CHECK(cfg.horizon == 0.01 * 25);

    CHECK_THROWS_AS(
        parse_config({"simulate", "--dt", "0.01", "--steps", "25", "--horizon", "0.3"}),
        usage_error);

    auto cfg2 = parse_config({"simulate", "--horizon", "0.5", "--steps", "10"});
    CHECK(cfg2.dt == 0.05);

    auto cfg3 = parse_config({"simulate", "--horizon", "0.5", "--dt", "0.125"});
    CHECK(cfg3.steps == 4);

    CHECK_THROWS_AS(parse_config({"simulate", "--horizon", "0.5", "--dt", "0.3"}), usage_error);
}

TEST_CASE("parse_config: level list validation") {
    auto cfg = parse_config({"weak-order", "--levels", "1/16,1/32,1/64"});
    REQUIRE(cfg.levels.size() == 3);
    CHECK(cfg.levels[0] == 0.0625);

    CHECK_THROWS_AS(parse_config({"weak-order", "--levels", "1/16,1/32,1/24"}), usage_error);
    CHECK_THROWS_AS(parse_config({"weak-order", "--levels", "1/32,1/16"}), usage_error);
    CHECK_THROWS_AS(parse_config({"weak-order", "--levels", "1/16,1/48"}), usage_error);
    CHECK_THROWS_AS(parse_config({"weak-order", "--levels", "1/0"}), usage_error);
    // 0.1 does not divide the default horizon 0.25
    CHECK_THROWS_AS(parse_config({"weak-order", "--levels", "0.1"}), usage_error);
}

TEST_CASE("parse_config: rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config({"simulate", "--nope", "1"}), usage_error);
    CHECK_THROWS_AS(parse_config({"frobnicate"}), usage_error);
    CHECK_THROWS_AS(parse_config({"simulate", "--bundle", "unknown"}), usage_error);
    CHECK_THROWS_AS(parse_config({"simulate", "--format", "xml"}), usage_error);
    CHECK_THROWS_AS(parse_config({}), usage_error);
}

TEST_CASE("parse_config: key = value file with flag override") {
    const auto path = tmp_file("spde_cli_test.cfg");
    {
        std::ofstream f(path);
        f << "# comment\n";
        f << "samples = 500\n";
        f << "modes = 8\n";
        f << "seed = 9\n";
    }
    auto cfg = parse_config({"simulate", "--config", path.string(), "--samples", "123"});
    CHECK(cfg.modes == 8);
    CHECK(cfg.seed == 9);
    CHECK(cfg.samples == 123);  // flag wins over file
    fs::remove(path);
}

TEST_CASE("format_double: 17 significant digits, point decimal") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0 / 3.0) == "0.33333333333333331");
    const double v = 0.1234567890123456789;
    const std::string s = format_double(v);
    CHECK(s.find(',') == std::string::npos);
    CHECK(std::stod(s) == v);  // round-trips exactly
}

TEST_CASE("run: simulate with N = 0 writes the initial state only") {
    const auto out = tmp_file("spde_sim0.csv");
    RunConfig cfg = parse_config({"simulate", "--steps", "0", "--modes", "4", "--out",
                                  out.string()});
    CHECK(run(cfg) == 0);
    const std::string content = slurp(out);
    CHECK(content.substr(0, 7) == "step,t,");
    int rows = 0;
    for (char c : content) rows += (c == '\n');
    CHECK(rows == 2);  // header + initial state
    fs::remove(out);
}

TEST_CASE("run: unwritable output path exits 4") {
    RunConfig cfg = parse_config({"simulate", "--steps", "1", "--dt", "0.01", "--modes", "4",
                                  "--out", "/nonexistent-dir/x.csv"});
    CHECK(run(cfg) == 4);
}

TEST_CASE("run: malliavin-check emits the JSON contract") {
    const auto out = tmp_file("spde_mall.json");
    RunConfig cfg = parse_config({"malliavin-check", "--modes", "16", "--steps", "16", "--horizon",
                                  "0.25", "--out", out.string()});
    CHECK(run(cfg) == 0);
    auto doc = nlohmann::json::parse(slurp(out));
    CHECK(doc.contains("max_rel_err"));
    CHECK(doc.contains("epsilon"));
    CHECK(doc.contains("pass"));
    CHECK(doc["epsilon"].get<double>() == 1e-4);
    CHECK(doc["pass"].get<bool>());
    CHECK(doc["max_rel_err"].get<double>() <= 1e-5);
    fs::remove(out);
}

TEST_CASE("run: weak-order CSV header and byte-identical reruns across thread counts") {
    const auto out1 = tmp_file("spde_weak1.csv");
    const auto out2 = tmp_file("spde_weak2.csv");
    const std::vector<std::string> base = {"weak-order", "--modes",   "8",
                                           "--levels",   "1/32,1/64", "--ref-refine", "4",
                                           "--samples",  "200",       "--seed",       "3"};

    auto args1 = base;
    args1.insert(args1.end(), {"--out", out1.string()});
    setenv("SPDE_THREADS", "1", 1);
    CHECK(run(parse_config(args1)) == 0);

    auto args2 = base;
    args2.insert(args2.end(), {"--out", out2.string()});
    setenv("SPDE_THREADS", "2", 1);
    CHECK(run(parse_config(args2)) == 0);
    unsetenv("SPDE_THREADS");

    const std::string a = slurp(out1);
    const std::string b = slurp(out2);
    CHECK(a == b);
    CHECK(a.substr(0, 24) == "dt,error,stderr,samples\n");
    int rows = 0;
    for (char c : a) rows += (c == '\n');
    CHECK(rows == 3);  // header + the two requested levels
    fs::remove(out1);
    fs::remove(out2);
}

TEST_CASE("run: weak-order closed-form reference demands the linear-additive bundle") {
    RunConfig cfg = parse_config({"weak-order", "--modes", "8", "--levels", "1/32,1/64",
                                  "--reference", "closed-form", "--samples", "50", "--out",
                                  tmp_file("spde_weak3.csv").string()});
    CHECK(run(cfg) == 2);

    RunConfig ok = parse_config({"weak-order", "--modes", "8", "--bundle", "linear-additive",
                                 "--levels", "1/32,1/64", "--reference", "closed-form",
                                 "--samples", "50", "--out", tmp_file("spde_weak3.csv").string()});
    CHECK(run(ok) == 0);
    fs::remove(tmp_file("spde_weak3.csv"));
}

TEST_CASE("run: duality-check json output") {
    const auto out = tmp_file("spde_dual.json");
    RunConfig cfg = parse_config({"duality-check", "--modes", "8", "--steps", "8", "--samples",
                                  "2000", "--out", out.string()});
    CHECK(run(cfg) == 0);
    auto doc = nlohmann::json::parse(slurp(out));
    CHECK(doc.contains("lhs"));
    CHECK(doc.contains("rhs"));
    CHECK(doc.contains("stderr"));
    CHECK(doc["pass"].get<bool>());
    fs::remove(out);
}

TEST_CASE("cli_main: help exits 0") {
    const char* argv[] = {"spde", "--help"};
    CHECK(cli_main(2, const_cast<char**>(argv)) == 0);
}
