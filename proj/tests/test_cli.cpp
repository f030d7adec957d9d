#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/cli.hpp"
#include "pathgrade/errors.hpp"
#include "pathgrade/sampler.hpp"
#include "test_support.hpp"

using namespace pathgrade;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    os << content;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// One workspace dir holding the config, the synthetic graph, the sampled
// dataset and a trained checkpoint; built once via the public CLI.
struct CliWorkspace {
    test_support::TempDir dir{"cli"};
    std::string work;    // triples + datasets
    std::string run;     // training outputs
    std::string config;  // shared config file
    int rc_synth = -1, rc_sample = -1, rc_train = -1;

    CliWorkspace() {
        work = dir.path("work");
        run = dir.path("run");
        config = dir.path("config.json");
        write_file(config, R"({
            "synth": {"n_students": 30, "n_courses": 12, "courses_per_term": 2,
                      "prereqs_per_course": 2, "related_per_course": 1},
            "sampler": {"split_term": 6, "similar_limit": 8},
            "model": {"embed_dim": 6, "hidden_dim": 4},
            "train": {"epochs": 3, "batch_size": 16, "lr": 0.01},
            "grid": {"lrs": [0.01], "batch_sizes": [16], "budget_epochs": 1}
        })");
        rc_synth = cli_run({"synth", "--seed", "13", "--config", config, "--out", work});
        rc_sample = cli_run({"sample", "--data", work, "--config", config, "--out", work});
        rc_train = cli_run({"train", "--data", work, "--config", config, "--out", run});
    }

    std::string checkpoint() const { return (fs::path(run) / "model.ckpt").string(); }
};

CliWorkspace& workspace() {
    static CliWorkspace w;
    return w;
}

}  // namespace

TEST_CASE("usage problems exit 2 and help exits 0") {
    CHECK(cli_run({}) == 2);
    CHECK(cli_run({"frobnicate"}) == 2);
    CHECK(cli_run({"synth", "--bogus"}) == 2);
    CHECK(cli_run({"eval", "--data", "somewhere"}) == 2);  // missing --checkpoint
    CHECK(cli_run({"eval", "--data", "x", "--checkpoint", "y", "--format", "xml"}) == 2);
    CHECK(cli_run({"synth", "--preset", "bogus"}) == 2);
    CHECK(cli_run({"--help"}) == 0);
    CHECK(cli_run({"synth", "--help"}) == 0);
}

TEST_CASE("config and data problems exit 3, io problems 4") {
    test_support::TempDir tmp("cli_errors");

    CHECK(cli_run({"synth"}) == 3);  // --out is required by validation

    const std::string bad_section = tmp.path("bad_section.json");
    write_file(bad_section, R"({"bogus": {}})");
    CHECK(cli_run({"synth", "--config", bad_section, "--out", tmp.path("o1")}) == 3);

    const std::string not_json = tmp.path("not_json.json");
    write_file(not_json, "definitely not json");
    CHECK(cli_run({"synth", "--config", not_json, "--out", tmp.path("o2")}) == 3);

    const std::string bad_key = tmp.path("bad_key.json");
    write_file(bad_key, R"({"synth": {"n_student": 30}})");
    CHECK(cli_run({"synth", "--config", bad_key, "--out", tmp.path("o3")}) == 3);

    const std::string malformed = tmp.path("malformed.tsv");
    write_file(malformed, "one\tfield\n");
    CHECK(cli_run({"ingest", "--data", malformed}) == 3);

    CHECK(cli_run({"ingest", "--data", tmp.path("missing.tsv")}) == 4);
}

TEST_CASE("pipeline commands produce artifacts and manifests") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_synth == 0);
    REQUIRE(w.rc_sample == 0);
    REQUIRE(w.rc_train == 0);

    for (const char* name : {"triples.tsv", "truth.json", "manifest_synth.json", "train.jsonl",
                             "test.jsonl", "manifest_sample.json"}) {
        CHECK(fs::exists(fs::path(w.work) / name));
    }
    for (const char* name : {"model.ckpt", "train_log.csv", "manifest_train.json"}) {
        CHECK(fs::exists(fs::path(w.run) / name));
    }

    const json man = json::parse(read_file((fs::path(w.work) / "manifest_synth.json").string()));
    CHECK(man["command"] == "synth");
    CHECK(man["seed"] == 13);
    CHECK(man["config"]["n_students"] == 30);
    REQUIRE(man["outputs"].size() == 2);
    const std::string triples_path = (fs::path(w.work) / "triples.tsv").string();
    CHECK(man["outputs"][triples_path] == sha256_file(triples_path));

    const json sman =
        json::parse(read_file((fs::path(w.work) / "manifest_sample.json").string()));
    CHECK(sman["command"] == "sample");
    CHECK(sman["config"]["split_term"] == 6);
    CHECK(sman["inputs"].size() == 1);

    const std::string log = read_file((fs::path(w.run) / "train_log.csv").string());
    CHECK(log.rfind("epoch,train_loss,dev_auc\n", 0) == 0);

    // The sampled dataset reloads through the library API.
    const std::vector<PairSample> train =
        load_dataset((fs::path(w.work) / "train.jsonl").string());
    const std::vector<PairSample> test =
        load_dataset((fs::path(w.work) / "test.jsonl").string());
    CHECK(!train.empty());
    CHECK(!test.empty());
}

TEST_CASE("ingest summarizes and re-serializes a triple file") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_synth == 0);
    CHECK(cli_run({"ingest", "--data", w.work}) == 0);

    test_support::TempDir tmp("cli_ingest");
    const std::string out = tmp.path("norm");
    CHECK(cli_run({"ingest", "--data", w.work, "--out", out}) == 0);
    const std::string src = (fs::path(w.work) / "triples.tsv").string();
    const std::string dst = (fs::path(out) / "triples.tsv").string();
    REQUIRE(fs::exists(dst));
    // The synth output is already in canonical form, so a round trip through
    // ingest is byte-identical.
    CHECK(sha256_file(src) == sha256_file(dst));
}

TEST_CASE("synth reruns with one seed are byte-identical") {
    CliWorkspace& w = workspace();
    test_support::TempDir tmp("cli_repro");
    const std::string a = tmp.path("a");
    const std::string b = tmp.path("b");
    const std::string c = tmp.path("c");
    REQUIRE(cli_run({"synth", "--seed", "7", "--config", w.config, "--out", a}) == 0);
    REQUIRE(cli_run({"synth", "--seed", "7", "--config", w.config, "--out", b}) == 0);
    REQUIRE(cli_run({"synth", "--seed", "8", "--config", w.config, "--out", c}) == 0);

    for (const char* name : {"triples.tsv", "truth.json"}) {
        CHECK(sha256_file((fs::path(a) / name).string()) ==
              sha256_file((fs::path(b) / name).string()));
    }
    CHECK(sha256_file((fs::path(a) / "triples.tsv").string()) !=
          sha256_file((fs::path(c) / "triples.tsv").string()));
}

TEST_CASE("training through the cli is deterministic") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_sample == 0);
    test_support::TempDir tmp("cli_train_det");
    const std::string a = tmp.path("a");
    const std::string b = tmp.path("b");
    REQUIRE(cli_run({"train", "--data", w.work, "--config", w.config, "--seed", "21", "--out",
                     a}) == 0);
    REQUIRE(cli_run({"train", "--data", w.work, "--config", w.config, "--seed", "21", "--out",
                     b}) == 0);
    for (const char* name : {"model.ckpt", "train_log.csv"}) {
        CHECK(sha256_file((fs::path(a) / name).string()) ==
              sha256_file((fs::path(b) / name).string()));
    }
}

TEST_CASE("eval writes reports in both formats") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_train == 0);
    test_support::TempDir tmp("cli_eval");

    const std::string jdir = tmp.path("j");
    REQUIRE(cli_run({"eval", "--data", w.work, "--checkpoint", w.checkpoint(), "--format",
                     "json", "--out", jdir}) == 0);
    const json rep = json::parse(read_file((fs::path(jdir) / "report.json").string()));
    CHECK(rep["model"].contains("auc"));
    CHECK(rep["model"]["classes"].contains("fail"));
    CHECK(rep["baselines"].contains("majority"));
    CHECK(rep["baselines"].contains("tag_logistic"));

    const std::string tdir = tmp.path("t");
    REQUIRE(cli_run({"eval", "--data", w.work, "--checkpoint", w.checkpoint(), "--format",
                     "text", "--out", tdir}) == 0);
    const std::string text = read_file((fs::path(tdir) / "report.txt").string());
    CHECK(text.find("== model ==") != std::string::npos);
    CHECK(text.find("== baseline: majority ==") != std::string::npos);
    CHECK(text.find("precision") != std::string::npos);

    CHECK(cli_run({"eval", "--data", w.work, "--checkpoint", tmp.path("missing.ckpt")}) == 4);
}

TEST_CASE("explain renders every format and validates pair selection") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_train == 0);
    test_support::TempDir tmp("cli_explain");

    const std::string ddir = tmp.path("d");
    REQUIRE(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint(), "--format",
                     "dot", "--out", ddir}) == 0);
    const std::string dot = read_file((fs::path(ddir) / "explain.dot").string());
    CHECK(dot.rfind("digraph evidence {", 0) == 0);
    CHECK(dot.find("penwidth=") != std::string::npos);

    const std::string jdir = tmp.path("j");
    REQUIRE(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint(), "--format",
                     "json", "--index", "1", "--out", jdir}) == 0);
    const json rep = json::parse(read_file((fs::path(jdir) / "explain.json").string()));
    CHECK(rep.contains("groups"));
    CHECK(rep.contains("prediction"));

    // Text goes to stdout when no --out is given.
    CHECK(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint()}) == 0);

    CHECK(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint(), "--index",
                   "9999"}) == 3);
    CHECK(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint(), "--student",
                   "nobody", "--course", "nothing"}) == 3);
    CHECK(cli_run({"explain", "--data", w.work, "--checkpoint", w.checkpoint(), "--student",
                   "S0001"}) == 3);
}

TEST_CASE("gridsearch writes the sweep table") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_sample == 0);
    test_support::TempDir tmp("cli_grid");
    const std::string out = tmp.path("g");
    REQUIRE(cli_run({"gridsearch", "--data", w.work, "--config", w.config, "--out", out}) == 0);
    const json grid = json::parse(read_file((fs::path(out) / "grid.json").string()));
    REQUIRE(grid["rows"].size() == 1);
    CHECK(grid["rows"][0]["lr"] == 0.01);
    CHECK(grid["best"]["lr"] == 0.01);
    CHECK(fs::exists(fs::path(out) / "manifest_gridsearch.json"));
}

TEST_CASE("ablate trains and records every variant") {
    CliWorkspace& w = workspace();
    REQUIRE(w.rc_sample == 0);
    test_support::TempDir tmp("cli_ablate");
    const std::string cfg = tmp.path("ablate_config.json");
    write_file(cfg, R"({
        "model": {"embed_dim": 6, "hidden_dim": 4},
        "train": {"epochs": 1, "batch_size": 16, "lr": 0.01}
    })");
    const std::string out = tmp.path("a");
    REQUIRE(cli_run({"ablate", "--data", w.work, "--config", cfg, "--seed", "3", "--out",
                     out}) == 0);
    const json ab = json::parse(read_file((fs::path(out) / "ablation.json").string()));
    REQUIRE(ab["rows"].size() == 6);
    std::vector<std::string> names;
    for (const auto& row : ab["rows"]) {
        names.push_back(row["variant"].get<std::string>());
        CHECK(row.contains("dev_auc"));
        CHECK(row.contains("test_auc"));
    }
    const std::vector<std::string> expected = {"full",          "no_biases",      "no_subtask",
                                               "uniform_local", "uniform_global", "uniform_both"};
    CHECK(names == expected);
}
