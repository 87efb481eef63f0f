#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailor/enumerator.hpp"
#include "tailor/fixtures.hpp"
#include "tailor/graph.hpp"
#include "tailor/modspace.hpp"
#include "tailor/predictors.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

std::string bin_path() {
    const char* p = std::getenv("TAILORFORGE_BIN");
    REQUIRE_MESSAGE(p != nullptr, "TAILORFORGE_BIN must point at the CLI binary");
    return p;
}

std::string fixture_dir() {
    const char* p = std::getenv("TAILOR_FIXTURE_DIR");
    REQUIRE_MESSAGE(p != nullptr, "TAILOR_FIXTURE_DIR must point at the fixtures");
    return p;
}

RunResult run(const std::string& args) {
    std::string cmd = bin_path() + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / "tailorforge_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

} // namespace

TEST_CASE("shipped fixture files match the in-tree builders") {
    auto d = fs::path(fixture_dir());
    CHECK(slurp(d / "tinynet.tfg") == tailor::export_graph(tailor::fixtures::tinynet()));
    CHECK(slurp(d / "tinynet1s.tfg") == tailor::export_graph(tailor::fixtures::tinynet1s()));
    CHECK(slurp(d / "tinynet4s.tfg") == tailor::export_graph(tailor::fixtures::tinynet4s()));
    CHECK(slurp(d / "tinyformer.tfg") == tailor::export_graph(tailor::fixtures::tinyformer()));
    CHECK(slurp(d / "tinyffn.tfg") == tailor::export_graph(tailor::fixtures::tinyffn()));
    CHECK(slurp(d / "tinynet_example.toml") == tailor::fixtures::tinynet_example_config());
    CHECK(slurp(d / "tinynet1s.toml") == tailor::fixtures::tinynet1s_config());
    CHECK(slurp(d / "tinynet4s.toml") == tailor::fixtures::tinynet4s_config());
    CHECK(slurp(d / "tinyformer.toml") == tailor::fixtures::tinyformer_config());
    CHECK(slurp(d / "tinynet_full.toml") == tailor::fixtures::tinynet_full_config());
}

TEST_CASE("full pipeline over the command surface") {
    Workspace ws;
    auto fixtures = fs::path(fixture_dir());

    // compile: the example config matches one FFN block.
    auto compile = run("compile " + (fixtures / "tinynet.tfg").string() + " " +
                       (fixtures / "tinynet_example.toml").string() + " -o " + ws.path("sn"));
    CHECK(compile.exit_code == 0);
    CHECK(compile.out.find("FFNBlock=1") != std::string::npos);
    CHECK(fs::exists(ws.dir / "sn" / "model.json"));
    CHECK(fs::exists(ws.dir / "sn" / "space.json"));
    CHECK(fs::exists(ws.dir / "sn" / "report.txt"));

    auto count = run("count -m " + ws.path("sn"));
    CHECK(count.exit_code == 0);
    CHECK(count.out == "36\n");

    auto enumerate = run("enumerate -m " + ws.path("sn") + " -o " + ws.path("manifest.txt") +
                         " --fusion default --jobs 2");
    CHECK(enumerate.exit_code == 0);
    std::uint64_t hash = 0;
    auto manifest = tailor::enumerate::load_manifest(ws.path("manifest.txt"), &hash);
    CHECK(hash == tailor::enumerate::fusion_ruleset_hash(tailor::enumerate::default_fusion_rules()));
    CHECK(!manifest.empty());

    auto lut = run("build-lut -m " + ws.path("sn") + " --manifest " + ws.path("manifest.txt") +
                   " --backend analytical --device pixel8 -o " + ws.path("lut.txt") +
                   " --created-at t0 --jobs 2");
    CHECK(lut.exit_code == 0);

    auto sens = run("sensitivity -m " + ws.path("sn") + " --oracle synthetic:42 -o " +
                    ws.path("sens.txt"));
    CHECK(sens.exit_code == 0);

    // predict on the default spec: accuracy equals the oracle baseline and
    // latency equals the summed maximal-SubNet LUT entries.
    auto predict = run("predict -m " + ws.path("sn") + " --spec default --lut " +
                       ws.path("lut.txt") + " --sens " + ws.path("sens.txt"));
    CHECK(predict.exit_code == 0);
    CHECK(predict.out.find("accuracy=80\n") != std::string::npos);
    CHECK(predict.out.find("latency_ms=") != std::string::npos);
    {
        auto loaded = tailor::predict::load_lut(ws.path("lut.txt"));
        auto parsed_lat = predict.out.substr(predict.out.find("latency_ms=") + 11);
        double shown = std::strtod(parsed_lat.c_str(), nullptr);
        CHECK(shown > 0);
        double max_entry = 0;
        for (const auto& [k, s] : loaded.entries) max_entry = std::max(max_entry, s.latency_ms);
        CHECK(shown >= max_entry); // the sum dominates any single entry
    }

    auto search = run("search -m " + ws.path("sn") + " --lut " + ws.path("lut.txt") + " --sens " +
                      ws.path("sens.txt") + " --budget 40 --seed 9 --population 24 --generations 12");
    CHECK(search.exit_code == 0);
    CHECK(search.out.find("spec=") != std::string::npos);
    auto search2 = run("search -m " + ws.path("sn") + " --lut " + ws.path("lut.txt") + " --sens " +
                       ws.path("sens.txt") + " --budget 40 --seed 9 --population 24 --generations 12");
    CHECK(search2.out == search.out); // byte-identical under the seed

    auto infeasible = run("search -m " + ws.path("sn") + " --lut " + ws.path("lut.txt") +
                          " --sens " + ws.path("sens.txt") + " --budget 0.001 --seed 9");
    CHECK(infeasible.exit_code == 3);

    auto sweep_cmd = "sweep -m " + ws.path("sn") + " --lut " + ws.path("lut.txt") + " --sens " +
                     ws.path("sens.txt") + " --budgets 10:50:40 --seed 4 --population 24 " +
                     "--generations 12 -o ";
    auto sweep = run(sweep_cmd + ws.path("frontier.csv"));
    CHECK(sweep.exit_code == 0);
    auto frontier_text = slurp(ws.dir / "frontier.csv");
    CHECK(frontier_text.rfind("# tfg-frontier/1", 0) == 0);
    int rows = 0;
    for (char c : frontier_text)
        if (c == '\n') ++rows;
    CHECK(rows <= 42 + 2); // header + column row + at most 40 points and skip notes
    auto sweep2 = run(sweep_cmd + ws.path("frontier2.csv"));
    CHECK(sweep2.exit_code == 0);
    CHECK(slurp(ws.dir / "frontier2.csv") == frontier_text); // deterministic artifact

    auto exported = run("export -m " + ws.path("sn") + " --spec default -o " + ws.path("max.tfg"));
    CHECK(exported.exit_code == 0);
    auto g = tailor::load_graph_file(ws.path("max.tfg"));
    CHECK(tailor::graph_isomorphic(g, tailor::fixtures::tinynet()));
}

TEST_CASE("validation failures exit with code 2") {
    Workspace ws;
    auto fixtures = fs::path(fixture_dir());

    CHECK(run("count -m " + ws.path("missing")).exit_code == 2);
    CHECK(run("compile " + (fixtures / "tinynet.tfg").string() + " " +
              (fixtures / "tinyformer.toml").string() + " -o " + ws.path("bad"))
              .exit_code == 2); // attention template matches nothing in TinyNet
    CHECK(run("nonsense-subcommand").exit_code == 2);

    // Version-mismatched artifact files are refused.
    auto compile = run("compile " + (fixtures / "tinynet.tfg").string() + " " +
                       (fixtures / "tinynet_example.toml").string() + " -o " + ws.path("sn"));
    REQUIRE(compile.exit_code == 0);
    {
        auto path = ws.dir / "sn" / "model.json";
        auto text = slurp(path);
        auto at = text.find("tailor-model/1");
        REQUIRE(at != std::string::npos);
        text.replace(at, 14, "tailor-model/9");
        std::ofstream(path, std::ios::binary) << text;
    }
    CHECK(run("count -m " + ws.path("sn")).exit_code == 2);
}

TEST_CASE("mismatched fusion rulesets between LUT and prediction are refused") {
    Workspace ws;
    auto fixtures = fs::path(fixture_dir());
    REQUIRE(run("compile " + (fixtures / "tinynet1s.tfg").string() + " " +
                (fixtures / "tinynet1s.toml").string() + " -o " + ws.path("sn"))
                .exit_code == 0);
    REQUIRE(run("enumerate -m " + ws.path("sn") + " -o " + ws.path("m.txt") + " --fusion none")
                .exit_code == 0);
    REQUIRE(run("build-lut -m " + ws.path("sn") + " --manifest " + ws.path("m.txt") +
                " --backend analytical --device d -o " + ws.path("lut.txt"))
                .exit_code == 0);
    // LUT built without fusion; asking for default-fused prediction must fail.
    CHECK(run("predict -m " + ws.path("sn") + " --spec default --lut " + ws.path("lut.txt") +
              " --fusion default")
              .exit_code == 2);
    CHECK(run("predict -m " + ws.path("sn") + " --spec default --lut " + ws.path("lut.txt") +
              " --fusion none")
              .exit_code == 0);
}
