#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "adasgd/cli.hpp"
#include "adasgd/experiments.hpp"

using namespace adasgd::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("adasgd_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_binary(const std::string& args) {
    const char* bin = std::getenv("ADASGD_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "ADASGD_BIN must point at the adasgd executable");
    std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

RunConfig parse(std::initializer_list<std::string> args) { return parse_config(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("subcommand names") {
    CHECK(all_subcommands().size() == 10);
    for (auto s : all_subcommands()) {
        CHECK(subcommand_from_string(to_string(s)) == s);
        CHECK(defaults(s).is_object());
        CHECK(preset(std::string("desk"), s).empty());
    }
    CHECK(std::string(to_string(Subcommand::ridge_path)) == "ridge-path");
    CHECK_THROWS_AS(subcommand_from_string("bogus"), UsageError);
}

TEST_CASE("desk preset resolves to the defaults") {
    auto c = parse({"run", "heatmap", "--preset", "desk", "--seed", "7", "--out", "x"});
    CHECK(c.subcommand == Subcommand::heatmap);
    CHECK(c.master_seed == 7);
    CHECK(c.preset == "desk");
    CHECK(c.params == defaults(Subcommand::heatmap));
    CHECK(c.overrides.empty());
    CHECK(c.params.at("lambda_max") == json({1.0, 1e2, 1e4, 1e6}));
    CHECK(c.params.at("d") == 30);
    CHECK(c.params.at("n") == 90);
    CHECK(c.params.at("seeds") == 5);
    CHECK(c.params.at("steps") == 1500);
}

TEST_CASE("full-grid heatmap preset") {
    auto c = parse({"run", "heatmap", "--preset", "paper-fig3", "--seed", "1", "--out", "x"});
    const auto& lm = c.params.at("lambda_max");
    CHECK(lm.size() == 9);
    CHECK(lm.front() == 1.0);
    CHECK(lm.back() == 1e8);
    CHECK(c.params.at("cond") == lm);
    CHECK(c.params.at("seeds") == 30);
    CHECK(c.params.at("d") == 100);
    CHECK(c.params.at("n") == 300);
    CHECK(c.params.at("steps") == 3000);
    auto roster = c.params.at("roster").get<std::vector<std::string>>();
    CHECK(std::find(roster.begin(), roster.end(), "sgd:0.01") != roster.end());
    CHECK(std::find(roster.begin(), roster.end(), "adam:0.1") != roster.end());
    CHECK_THROWS_AS(parse({"run", "angle", "--preset", "paper-fig3", "--seed", "1", "--out", "x"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--preset", "nope", "--seed", "1", "--out", "x"}), UsageError);
}

TEST_CASE("overrides are typed and validated") {
    auto c = parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "steps=10", "--set", "cond=1,10",
                    "--set", "roster=sgd:0.1,adam:0.01", "--set", "gradient=deterministic"});
    CHECK(c.params.at("steps") == 10);
    CHECK(c.params.at("cond") == json({1.0, 10.0}));
    CHECK(c.params.at("roster") == json({"sgd:0.1", "adam:0.01"}));
    REQUIRE(c.overrides.size() == 4);
    CHECK(c.overrides[0].source == "flag");
    CHECK(c.overrides[0].key == "steps");

    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "bogus=1"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "steps=abc"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "steps=1.5"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "steps"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "steps=0"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "roster=sgd"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "trajectory", "--seed", "1", "--out", "x", "--set", "eta_over_lmax=yes"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "trajectory", "--seed", "1", "--out", "x", "--set", "algo=swats"}), UsageError);
}

TEST_CASE("required flags and unknown flags") {
    CHECK_THROWS_AS(parse({"run", "heatmap", "--out", "x"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--frobnicate"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "bogus", "--seed", "1", "--out", "x"}), UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--workers", "0"}), UsageError);
    CHECK_THROWS_AS(parse({"walk", "heatmap"}), UsageError);
    auto c = parse({"run", "align-mc", "--seed", "3", "--out", "y", "--workers", "2"});
    CHECK(c.workers == 2);
    CHECK(c.out_dir == fs::path("y"));
}

TEST_CASE("resolution order: defaults < preset < file < flags") {
    auto dir = scratch("order");
    fs::create_directories(dir);
    auto file = dir / "config.json";
    std::ofstream(file) << json{{"subcommand", "heatmap"},
                                {"preset", "paper-fig3"},
                                {"master_seed", 11},
                                {"out_dir", "from-file"},
                                {"overrides", {{"seeds", 3}, {"steps", 20}}}}
                               .dump();
    auto c = parse({"run", "heatmap", "--config", file.string(), "--set", "steps=40"});
    CHECK(c.preset == "paper-fig3");
    CHECK(c.master_seed == 11);
    CHECK(c.out_dir == fs::path("from-file"));
    CHECK(c.params.at("d") == 100);
    CHECK(c.params.at("seeds") == 3);
    CHECK(c.params.at("steps") == 40);
    auto c2 = parse({"run", "heatmap", "--config", file.string(), "--seed", "5", "--preset", "desk", "--out", "z"});
    CHECK(c2.master_seed == 5);
    CHECK(c2.preset == "desk");
    CHECK(c2.params.at("d") == 30);
    CHECK(c2.out_dir == fs::path("z"));

    std::ofstream(dir / "bad.json") << json{{"overrides", {{"zzz", 1}}}}.dump();
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--config", (dir / "bad.json").string()}),
                    UsageError);
    std::ofstream(dir / "extra.json") << json{{"colour", "blue"}}.dump();
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--config", (dir / "extra.json").string()}),
                    UsageError);
    std::ofstream(dir / "other.json") << json{{"subcommand", "angle"}}.dump();
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--config", (dir / "other.json").string()}),
                    UsageError);
    std::ofstream(dir / "junk.json") << "{not json";
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--config", (dir / "junk.json").string()}),
                    UsageError);
    CHECK_THROWS_AS(parse({"run", "heatmap", "--seed", "1", "--out", "x", "--config", (dir / "missing.json").string()}),
                    UsageError);
}

TEST_CASE("number formatting") {
    CHECK(format_number(50.0) == "50");
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(format_number(-2.5) == "-2.5");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(INFINITY) == "inf");
    double x = 0.1 + 0.2;
    CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("csv rendering") {
    Table t{{"optimizer", "lambda_max", "cond", "seed", "log10_loss"}, {}};
    CHECK(render_csv(t) == "optimizer,lambda_max,cond,seed,log10_loss\n");
    t.rows.push_back({"sgd:0.01", "1000000", "1", "0", format_number(adasgd::experiments::kDivergedLog10)});
    CHECK(render_csv(t) == "optimizer,lambda_max,cond,seed,log10_loss\nsgd:0.01,1000000,1,0,50\n");
    Table q{{"a"}, {{"x,y"}, {"say \"hi\""}}};
    CHECK(render_csv(q) == "a\n\"x,y\"\n\"say \"\"hi\"\"\"\n");
    Table bad{{"a", "b"}, {{"1"}}};
    CHECK_THROWS_AS(render_csv(bad), std::logic_error);
}

TEST_CASE("sha256 and emit_csv") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    auto dir = scratch("emit");
    fs::create_directories(dir);
    Table t{{"a", "b"}, {{"1", "2"}}};
    auto sum = emit_csv(t, dir / "t.csv");
    CHECK(slurp(dir / "t.csv") == "a,b\n1,2\n");
    CHECK(sum == sha256_hex("a,b\n1,2\n"));
    CHECK_FALSE(fs::exists(dir / "t.csv.tmp"));
    CHECK_THROWS_AS(emit_csv(t, dir / "missing" / "t.csv"), IoError);
}

TEST_CASE("run_experiment: one heatmap cell") {
    auto c = parse({"run", "heatmap", "--seed", "1", "--out", "x", "--set", "lambda_max=1e6", "--set", "cond=1",
                    "--set", "seeds=1", "--set", "roster=sgd:0.01", "--set", "steps=200"});
    bool ok = true;
    auto t = run_experiment(c, ok);
    CHECK(ok);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.header == std::vector<std::string>{"optimizer", "lambda_max", "cond", "seed", "log10_loss"});
    CHECK(t.rows[0][4] == "50");
}

TEST_CASE("exit codes and outputs") {
    auto base = scratch("exit");
    CHECK(run_binary("run bogus --seed 1 --out " + (base / "a").string()) == 2);
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("run heatmap --seed 1") == 2);

    CHECK(run_binary("run theorem-range --seed 1 --out " + (base / "t").string() +
                     " --set multipliers=0.5,1.5 --set cond=10 --set max_steps=20000") == 0);
    auto csv = slurp(base / "t" / "theorem-range.csv");
    CHECK(csv.rfind("multiplier,eta,converged,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    CHECK(run_binary("run distance-bound --seed 1 --out " + (base / "d").string() +
                     " --set dims=2 --set conds=10 --set etas=0.01 --set steps=2000 --set bound_scale=1e-30") == 1);
    CHECK(fs::exists(base / "d" / "distance-bound.csv"));

    fs::create_directories(base);
    std::ofstream(base / "blocker") << "x";
    CHECK(run_binary("run align-mc --seed 1 --set samples=10 --out " + (base / "blocker" / "sub").string()) == 3);
}

TEST_CASE("manifest records the resolved run and reruns are byte identical") {
    auto base = scratch("manifest");
    std::string args = "run ridge-path --seed 4 --preset desk --set seeds=2 --set steps=100 --set alpha_count=11 --out ";
    REQUIRE(run_binary(args + (base / "a").string()) == 0);
    REQUIRE(run_binary(args + (base / "b").string() + " --workers 3") == 0);
    auto ma = json::parse(slurp(base / "a" / "manifest.json"));
    auto mb = json::parse(slurp(base / "b" / "manifest.json"));
    CHECK(ma.at("files") == mb.at("files"));
    CHECK(slurp(base / "a" / "ridge-path.csv") == slurp(base / "b" / "ridge-path.csv"));
    CHECK(ma.at("files").at("ridge-path.csv") == sha256_hex(slurp(base / "a" / "ridge-path.csv")));
    CHECK(ma.at("master_seed") == 4);
    CHECK(ma.at("code_version").is_string());
    CHECK(ma.at("config").at("preset") == "desk");
    CHECK(ma.at("config").at("params").at("steps") == 100);
    auto ov = ma.at("config").at("overrides");
    REQUIRE(ov.size() == 3);
    CHECK(ov[0].at("key") == "seeds");
    CHECK(ov[0].at("value") == 2);
    for (const auto& entry : fs::directory_iterator(base / "a")) CHECK(entry.path().extension() != ".tmp");
}

TEST_CASE("theorem-range default grid exits 0") {
    auto base = scratch("theorem_default");
    CHECK(run_binary("run theorem-range --seed 1 --out " + base.string()) == 0);
    CHECK(fs::exists(base / "theorem-range.csv"));
}
