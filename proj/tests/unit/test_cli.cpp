#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "edapipe/cli.hpp"
#include "edapipe/csv.hpp"
#include "support.hpp"

using namespace edapipe;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "edapipe");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) { return read_text_file(path); }

json manifest_of(const std::string& output) { return json::parse(slurp(output + ".manifest.json")); }

// Shared small store + dataset, built once.
struct Fixture {
    testing::TempDir dir{"cli"};
    std::string store = dir.str("sessions");
    std::string dataset = dir.str("dataset.csv");
    Fixture() {
        REQUIRE(invoke({"simulate", "--cohort", "4", "--seed", "3", "--out", store}).code == 0);
        REQUIRE(invoke({"features", "--store", store, "--out", dataset}).code == 0);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("goldens pass on a clean checkout") {
    const auto r = invoke({"goldens"});
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    for (const auto& c : cli::golden_checks())
        if (!c.informational) CHECK_MESSAGE(c.pass(), c.table << " " << c.metric);
}

TEST_CASE("metrics from an external matrix") {
    testing::TempDir dir("metrics");
    const auto cm = dir.str("cm.csv");
    std::ofstream(cm) << "152,50,31\n32,99,23\n14,10,143\n";
    const auto report = dir.str("table.csv");
    const auto r = invoke({"metrics", "--cm", cm, "--report", report});
    CHECK(r.code == 0);
    CHECK(r.out.find("weighted_tpr,0.71119") != std::string::npos);
    CHECK(r.out.find("macro_gmean,0.78172") != std::string::npos);
    CHECK(slurp(report).find("low,") != std::string::npos);

    std::ofstream(cm) << "1,2\n";
    CHECK(invoke({"metrics", "--cm", cm}).code == cli::data_error);
    CHECK(invoke({"metrics", "--cm", dir.str("missing.csv")}).code == cli::data_error);
}

TEST_CASE("argument and configuration errors") {
    CHECK(invoke({}).code == cli::config_error);
    CHECK(invoke({"bogus"}).code == cli::config_error);
    CHECK(invoke({"metrics"}).code == cli::config_error);
    CHECK(invoke({"evaluate", "--dataset", fixture().dataset, "--model", "svm"}).code == cli::config_error);
    CHECK(invoke({"evaluate", "--dataset", fixture().dataset, "--target", "pain"}).code == cli::config_error);
    CHECK(invoke({"simulate", "--subject", "S1", "--out", fixture().dir.str("x")}).code == cli::config_error);
    CHECK(invoke({"--version"}).code == 0);
}

TEST_CASE("simulate and features write manifests") {
    auto& f = fixture();
    const auto m = manifest_of(f.dataset);
    CHECK(m["command"] == "features");
    CHECK(m["version"] == cli::kVersion);
    REQUIRE(m["outputs"].size() == 1);
    CHECK(m["outputs"][0]["sha256"] == cli::sha256_file(f.dataset));
    CHECK(m["outputs"][0]["sha256"].get<std::string>().size() == 64);
    // 4 subjects x 42 windows plus header
    std::size_t lines = 0;
    for (char c : slurp(f.dataset)) lines += c == '\n';
    CHECK(lines == 4 * 42 + 1);
}

TEST_CASE("select, train and evaluate are byte-deterministic and replayable") {
    auto& f = fixture();
    testing::TempDir dir("det");
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"ranking.csv", {"select", "--dataset", f.dataset, "--target", "psm_mode", "--report", dir.str("ranking.csv")}},
        {"model.bin", {"train", "--dataset", f.dataset, "--model", "rf", "--trees", "15", "--bag", "23", "--seed", "4",
                       "--out", dir.str("model.bin")}},
        {"mlp.bin", {"train", "--dataset", f.dataset, "--model", "mlp", "--hidden", "5", "--epochs", "20", "--out",
                     dir.str("mlp.bin")}},
        {"eval.csv", {"evaluate", "--dataset", f.dataset, "--model", "rf", "--grid", "single", "--k", "3", "--bag",
                      "17", "--report", dir.str("eval.csv"), "--cm", dir.str("cm.csv")}},
    };
    for (const auto& [name, args] : commands) {
        CAPTURE(name);
        REQUIRE(invoke(args).code == 0);
        const auto first = slurp(dir.str(name));
        REQUIRE(invoke(args).code == 0);
        CHECK(slurp(dir.str(name)) == first);
        std::filesystem::remove(dir.str(name));
        const auto rep = invoke({"replay", "--manifest", dir.str(name) + ".manifest.json"});
        CHECK(rep.code == 0);
        CHECK(slurp(dir.str(name)) == first);
    }
    const auto m = manifest_of(dir.str("model.bin"));
    CHECK(m["config"]["seed"] == "4");
    CHECK(m["seeds"]["master"] == 4);
    CHECK(slurp(dir.str("eval.csv")).rfind(cli::grid_csv_header(), 0) == 0);
}

TEST_CASE("config file sits between flags and defaults") {
    auto& f = fixture();
    testing::TempDir dir("cfg");
    const auto conf = dir.str("select.conf");
    std::ofstream(conf) << "target=psm_mean\nk=4\ncutoff=0.01\n";
    const auto out = dir.str("r.csv");
    REQUIRE(invoke({"select", "--config", conf, "--dataset", f.dataset, "--k", "3", "--report", out}).code == 0);
    const auto m = manifest_of(out);
    CHECK(m["config"]["k"] == "3");
    CHECK(m["config"]["cutoff"] == "0.01");
    CHECK(m["config"]["target"] == "psm_mean");
}

TEST_CASE("seed falls back to the environment") {
    auto& f = fixture();
    testing::TempDir dir("env");
    ::setenv("EDAPIPE_SEED", "17", 1);
    const auto out = dir.str("m.bin");
    const auto r = invoke({"train", "--dataset", f.dataset, "--trees", "3", "--out", out});
    ::unsetenv("EDAPIPE_SEED");
    REQUIRE(r.code == 0);
    CHECK(manifest_of(out)["seeds"]["master"] == 17);
}

TEST_CASE("process renders a trace") {
    auto& f = fixture();
    testing::TempDir dir("proc");
    const auto session = f.store + "/22-102-S1001";
    const auto csv = dir.str("p.csv"), svg = dir.str("p.svg");
    REQUIRE(invoke({"process", "--session", session, "--out", csv, "--svg", svg}).code == 0);
    CHECK(slurp(csv).rfind("t_ms,sc_uS,tonic_uS,phasic_uS,psm_cm,psm_filtered_cm\n", 0) == 0);
    const auto text = slurp(svg);
    CHECK(text.rfind("<svg", 0) == 0);
    CHECK(text.find("</svg>") != std::string::npos);
    CHECK(invoke({"process", "--session", dir.str("nope"), "--out", csv}).code == cli::data_error);
}

TEST_CASE("demo on an unwritable directory is a configuration error") {
    testing::TempDir dir("ro");
    const auto file = dir.str("plain");
    std::ofstream(file) << "x";
    // a regular file where the output directory should go
    CHECK(invoke({"demo", "--out", file + "/sub"}).code == cli::config_error);
}

TEST_CASE("binary exit codes") {
    const std::string bin = EDAPIPE_BIN;
    CHECK(std::system((bin + " goldens > /dev/null").c_str()) == 0);
    CHECK(WEXITSTATUS(std::system((bin + " nonsense 2> /dev/null").c_str())) == 2);
}
