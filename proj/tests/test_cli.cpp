// SPDX-License-Identifier: Apache-2.0
#include "strata/cli.hpp"
#include "strata/textio.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <sstream>

using namespace strata;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run(std::vector<std::string> args, const fs::path& dir) {
    args.push_back("--run-dir");
    args.push_back(dir.string());
    for (const auto* s : {"synth.n_stays=90", "synth.hours=8", "synth.n_features=3", "synth.n_statics=1"}) {
        args.push_back("--set");
        args.push_back(s);
    }
    std::ostringstream out, err;
    const int code = run_subcommand(args, out, err);
    return {code, out.str(), err.str()};
}

void prepare_stat(const fs::path& dir) {
    for (const auto* sub : {"synth", "ingest", "preprocess", "embed"}) REQUIRE(run({sub}, dir).code == 0);
}

}  // namespace

TEST_CASE("synth is byte-identical across runs") {
    const auto a = test::scratch_dir("cli_synth_a");
    const auto b = test::scratch_dir("cli_synth_b");
    REQUIRE(run({"synth"}, a).code == 0);
    REQUIRE(run({"synth"}, b).code == 0);
    for (const auto* f : {"raw/timeseries.csv", "raw/static.csv", "raw/labels.csv", "raw/taxonomy.tsv"})
        CHECK(textio::read_file(a / f) == textio::read_file(b / f));
    CHECK(textio::read_file(a / "raw/labels.csv").rfind("# producer=strata synth version=1.0.0", 0) == 0);
}

TEST_CASE("usage errors exit 1") {
    const auto dir = test::scratch_dir("cli_usage");
    CHECK(run({"synth", "--bogus"}, dir).code == 1);
    CHECK(run({"frobnicate"}, dir).code == 1);
    const auto bad_key = run({"synth", "--set", "synth.nope=1"}, dir);
    CHECK(bad_key.code == 1);
    CHECK(bad_key.err.find("UnknownKey") != std::string::npos);

    std::ostringstream out, err;
    CHECK(run_subcommand({"--version"}, out, err) == 0);
    CHECK(out.str() == "strata 1.0.0 (config schema 1)\n");
}

TEST_CASE("stages report missing inputs") {
    const auto dir = test::scratch_dir("cli_missing");
    const auto none = run({"preprocess"}, dir);
    CHECK(none.code == 1);
    CHECK(none.err.find("missing ingested cohort") != std::string::npos);

    REQUIRE(run({"synth"}, dir).code == 0);
    REQUIRE(run({"ingest"}, dir).code == 0);
    const auto e = run({"embed"}, dir);
    CHECK(e.code == 1);
    CHECK(e.err.find("missing preprocessed cohort; run preprocess first") != std::string::npos);

    const auto r = run({"report"}, dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("NoResults") != std::string::npos);
}

TEST_CASE("malformed intermediates are internal errors") {
    const auto dir = test::scratch_dir("cli_malformed");
    prepare_stat(dir);
    textio::write_file_atomic(dir / "preprocess/params.json", "{\"format\": 3");
    const auto r = run({"embed"}, dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("params.json") != std::string::npos);

    textio::write_file_atomic(dir / "embeddings/stat.csv", "stay_id,dim_0\nx,notanumber\n");
    const auto s = run({"stratify", "--level", "1"}, dir);
    CHECK(s.code == 2);
    CHECK(s.err.find("stat.csv") != std::string::npos);
}

TEST_CASE("stratify then report") {
    const auto dir = test::scratch_dir("cli_report");
    prepare_stat(dir);
    REQUIRE(run({"stratify", "--level", "1"}, dir).code == 0);
    REQUIRE(run({"report"}, dir).code == 0);
    const auto report = nlohmann::json::parse(textio::read_file(dir / "report.json"));
    REQUIRE(report["records"].size() == 1);
    CHECK(report["records"][0]["task"] == "flat");
    CHECK(report["records"][0]["metrics"]["v_measure"].is_number());
    CHECK(report["provenance"]["version"] == "1.0.0");

    REQUIRE(run({"stratify", "--level", "3", "--level", "2"}, dir).code == 0);
    REQUIRE(run({"assign-labels", "--level", "2", "--strategy", "majority"}, dir).code == 0);
    REQUIRE(run({"evaluate", "--level", "2", "--strategy", "majority"}, dir).code == 0);
    REQUIRE(run({"report"}, dir).code == 0);
    const auto again = nlohmann::json::parse(textio::read_file(dir / "report.json"));
    std::vector<std::pair<std::string, int>> keys;
    for (const auto& r : again["records"]) keys.emplace_back(r["task"], r["level"]);
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(keys.size() == 4);
    const auto csv = textio::read_file(dir / "report.csv");
    CHECK(csv.find("task,level,embedder,strategy,metric,value\n") != std::string::npos);
}
