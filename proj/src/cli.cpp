#include "pathgrade/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "pathgrade/eval.hpp"
#include "pathgrade/explain.hpp"
#include "pathgrade/kg.hpp"
#include "pathgrade/model.hpp"
#include "pathgrade/sampler.hpp"
#include "pathgrade/synth.hpp"
#include "pathgrade/train.hpp"

namespace pathgrade {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Small file helpers

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("digest context allocation failed");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("digest init failed");
    }
    char buf[1 << 16];
    while (is.good()) {
        is.read(buf, sizeof(buf));
        const std::streamsize got = is.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

json RunManifest::to_json() const {
    json j{{"command", command},
           {"config", config},
           {"inputs", inputs},
           {"outputs", outputs}};
    if (seed) j["seed"] = *seed;
    return j;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write manifest '" + path + "'");
    os << to_json().dump(2) << '\n';
}

namespace {

void write_text(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << content;
    if (!os) throw IoError("write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "synth" && key != "sampler" && key != "model" && key != "train" &&
            key != "grid") {
            throw ConfigError("config '" + path + "': unknown section '" + key + "'");
        }
    }
    return j;
}

// --data may name the triple file itself or a directory holding triples.tsv.
std::string resolve_triples(const std::string& data) {
    if (data.empty()) throw ConfigError("--data is required for this command");
    if (fs::is_directory(data)) return (fs::path(data) / "triples.tsv").string();
    return data;
}

std::string data_file(const std::string& data, const char* name) {
    if (data.empty()) throw ConfigError("--data is required for this command");
    if (fs::is_directory(data)) return (fs::path(data) / name).string();
    return (fs::path(data).parent_path() / name).string();
}

std::string out_file(const std::string& out, const std::string& name) {
    fs::create_directories(out);
    return (fs::path(out) / name).string();
}

struct SamplerSection {
    SamplerConfig cfg;
    std::optional<int> split_term;

    json to_json(int effective_split) const {
        return json{{"split_term", effective_split},
                    {"similar_limit", cfg.similar_limit},
                    {"max_paths_per_group", cfg.max_paths_per_group}};
    }
};

SamplerSection sampler_section(const json& j) {
    SamplerSection s;
    for (const auto& [key, value] : j.items()) {
        if (key == "split_term") {
            s.split_term = value.get<int>();
        } else if (key == "similar_limit") {
            s.cfg.similar_limit = value.get<int>();
        } else if (key == "max_paths_per_group") {
            s.cfg.max_paths_per_group = value.get<int>();
        } else {
            throw ConfigError("sampler config: unknown key '" + key + "'");
        }
    }
    if (s.cfg.similar_limit < 1) throw ConfigError("sampler config: similar_limit must be >= 1");
    if (s.cfg.max_paths_per_group < 1) {
        throw ConfigError("sampler config: max_paths_per_group must be >= 1");
    }
    return s;
}

int max_enrollment_term(const KnowledgeGraph& g) {
    std::optional<int> best;
    for (const auto& e : g.enrollments()) {
        if (e.term && (!best || *e.term > *best)) best = *e.term;
    }
    if (!best) throw ConfigError("graph has no enrollment terms; cannot pick a split term");
    return *best;
}

// Shared flag set; each subcommand registers the subset it understands.
struct Opts {
    std::string config_path;
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string format = "text";
    std::optional<std::uint64_t> seed;
    std::string preset = "planted";
    int index = 0;
    std::string student;
    std::string course;
};

// ---------------------------------------------------------------------------
// Subcommands

int do_synth(const Opts& opts, const json& config) {
    SynthConfig base =
        opts.preset == "null" ? SynthConfig::null_signal() : SynthConfig::planted();
    SynthConfig cfg = SynthConfig::from_json(config.value("synth", json::object()), base);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out.empty()) throw ConfigError("synth requires --out");

    SynthResult res = generate(cfg);
    KnowledgeGraph g = KnowledgeGraph::build(std::move(res.triples));
    const std::string triples_path = out_file(opts.out, "triples.tsv");
    const std::string truth_path = out_file(opts.out, "truth.json");
    save_triples(g, triples_path);
    write_text(truth_path, res.truth.dump(2) + "\n");

    RunManifest man;
    man.command = "synth";
    man.config = cfg.to_json();
    man.seed = cfg.seed;
    man.add_output(triples_path);
    man.add_output(truth_path);
    man.write(out_file(opts.out, "manifest_synth.json"));

    std::cout << g.summary();
    int fails = 0;
    for (const auto& e : g.enrollments()) fails += e.outcome == GradeOutcome::Fail ? 1 : 0;
    std::cout << "enrollments: " << g.enrollments().size() << " (" << fails << " failed)\n";
    std::cout << "wrote " << triples_path << ", " << truth_path << "\n";
    return 0;
}

int do_ingest(const Opts& opts) {
    const std::string path = resolve_triples(opts.data);
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(path));
    std::cout << g.summary();
    std::cout << "terms on all enrollments: " << (g.all_enrollments_have_terms() ? "yes" : "no")
              << "\n";
    if (!opts.out.empty()) {
        const std::string norm = out_file(opts.out, "triples.tsv");
        save_triples(g, norm);
        RunManifest man;
        man.command = "ingest";
        man.config = json::object();
        man.add_input(path);
        man.add_output(norm);
        man.write(out_file(opts.out, "manifest_ingest.json"));
        std::cout << "wrote " << norm << "\n";
    }
    return 0;
}

int do_sample(const Opts& opts, const json& config) {
    const std::string triples_path = resolve_triples(opts.data);
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    SamplerSection sec = sampler_section(config.value("sampler", json::object()));
    const int split = sec.split_term ? *sec.split_term : max_enrollment_term(g);
    if (opts.out.empty()) throw ConfigError("sample requires --out");

    DatasetBuild db = build_dataset(g, split, sec.cfg);
    const std::string train_path = out_file(opts.out, "train.jsonl");
    const std::string test_path = out_file(opts.out, "test.jsonl");
    save_dataset(db.train, g, train_path);
    save_dataset(db.test, g, test_path);

    std::int64_t groups = 0, paths = 0;
    for (const auto& s : db.train) {
        groups += s.group_count();
        for (const auto& grp : s.ssp) paths += static_cast<std::int64_t>(grp.paths.size());
        for (const auto& grp : s.ckp) paths += static_cast<std::int64_t>(grp.paths.size());
    }
    RunManifest man;
    man.command = "sample";
    man.config = sec.to_json(split);
    man.add_input(triples_path);
    man.add_output(train_path);
    man.add_output(test_path);
    man.write(out_file(opts.out, "manifest_sample.json"));

    std::cout << "split term " << split << ": " << db.train.size() << " train / "
              << db.test.size() << " test pairs\n";
    std::cout << "dropped (no evidence): " << db.dropped_train << " train, " << db.dropped_test
              << " test; skipped beyond split: " << db.skipped_future << "\n";
    if (!db.train.empty() && groups > 0) {
        std::cout << "mean groups per pair: "
                  << static_cast<double>(groups) / static_cast<double>(db.train.size())
                  << ", mean paths per group: "
                  << static_cast<double>(paths) / static_cast<double>(groups) << "\n";
    }
    std::cout << "wrote " << train_path << ", " << test_path << "\n";
    return 0;
}

int do_train(const Opts& opts, const json& config) {
    const std::string triples_path = resolve_triples(opts.data);
    const std::string train_path = data_file(opts.data, "train.jsonl");
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    const std::vector<PairSample> samples = load_dataset(train_path);

    ModelConfig mcfg = ModelConfig::from_json(config.value("model", json::object()));
    TrainConfig tcfg = TrainConfig::from_json(config.value("train", json::object()));
    if (opts.seed) tcfg.seed = *opts.seed;
    if (opts.out.empty()) throw ConfigError("train requires --out");

    Model model(mcfg, g);
    const TrainResult tr = train(model, samples, tcfg, [](const EpochStat& st) {
        std::cout << "epoch " << st.epoch << ": train_loss=" << st.train_loss
                  << " dev_auc=" << st.dev_auc << "\n";
    });

    const std::string ckpt_path = out_file(opts.out, "model.ckpt");
    const std::string log_path = out_file(opts.out, "train_log.csv");
    model.save(ckpt_path);
    write_text(log_path, tr.history_csv());

    RunManifest man;
    man.command = "train";
    man.config = json{{"model", mcfg.to_json()}, {"train", tcfg.to_json()}};
    man.seed = tcfg.seed;
    man.add_input(triples_path);
    man.add_input(train_path);
    man.add_output(ckpt_path);
    man.add_output(log_path);
    man.write(out_file(opts.out, "manifest_train.json"));

    std::cout << "best epoch " << tr.best_epoch << " (dev_auc=" << tr.best_dev_auc
              << ", pos_weight=" << tr.pos_weight << ")\n";
    std::cout << "wrote " << ckpt_path << ", " << log_path << "\n";
    return 0;
}

int do_gridsearch(const Opts& opts, const json& config) {
    const std::string triples_path = resolve_triples(opts.data);
    const std::string train_path = data_file(opts.data, "train.jsonl");
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    const std::vector<PairSample> samples = load_dataset(train_path);

    ModelConfig mcfg = ModelConfig::from_json(config.value("model", json::object()));
    TrainConfig tcfg = TrainConfig::from_json(config.value("train", json::object()));
    GridConfig grid = GridConfig::from_json(config.value("grid", json::object()));
    if (opts.seed) grid.seed = *opts.seed;

    const GridResult gr = grid_search(mcfg, g, samples, grid, tcfg);
    std::cout << "lr        batch   best_dev_auc  best_epoch\n";
    for (const GridRow& row : gr.rows) {
        std::cout << row.lr << "\t" << row.batch_size << "\t" << row.best_dev_auc << "\t"
                  << row.best_epoch << "\n";
    }
    std::cout << "chosen: lr=" << gr.best_lr << " batch=" << gr.best_batch_size << "\n";

    if (!opts.out.empty()) {
        const std::string grid_path = out_file(opts.out, "grid.json");
        write_text(grid_path, gr.to_json().dump(2) + "\n");
        RunManifest man;
        man.command = "gridsearch";
        man.config = json{{"model", mcfg.to_json()},
                          {"train", tcfg.to_json()},
                          {"grid", grid.to_json()}};
        man.seed = grid.seed;
        man.add_input(triples_path);
        man.add_input(train_path);
        man.add_output(grid_path);
        man.write(out_file(opts.out, "manifest_gridsearch.json"));
        std::cout << "wrote " << grid_path << "\n";
    }
    return 0;
}

json eval_payload(const Model& model, const KnowledgeGraph& g,
                  const std::vector<PairSample>& train, const std::vector<PairSample>& test,
                  std::string* text_out) {
    std::vector<int> test_labels, train_labels;
    for (const auto& s : test) test_labels.push_back(s.label);
    for (const auto& s : train) train_labels.push_back(s.label);

    const ClassificationReport model_rep =
        classification_report(model.score_all(test), test_labels);
    const ClassificationReport majority_rep =
        classification_report(majority_scores(train_labels, static_cast<int>(test.size())),
                              test_labels);
    const TagLogistic tl = fit_tag_logistic(g, train);
    std::vector<double> tl_scores;
    for (const auto& s : test) tl_scores.push_back(tl.score(g, s.student));
    const ClassificationReport tl_rep = classification_report(tl_scores, test_labels);

    if (text_out) {
        std::ostringstream os;
        os << "== model ==\n" << model_rep.to_text();
        os << "== baseline: majority ==\n" << majority_rep.to_text();
        os << "== baseline: tag logistic ==\n" << tl_rep.to_text();
        *text_out = os.str();
    }
    return json{{"model", model_rep.to_json()},
                {"baselines",
                 json{{"majority", majority_rep.to_json()}, {"tag_logistic", tl_rep.to_json()}}}};
}

int do_eval(const Opts& opts) {
    const std::string triples_path = resolve_triples(opts.data);
    const std::string train_path = data_file(opts.data, "train.jsonl");
    const std::string test_path = data_file(opts.data, "test.jsonl");
    if (opts.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
    if (opts.format != "json" && opts.format != "text") {
        throw ConfigError("eval supports --format json|text");
    }
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    const std::vector<PairSample> train = load_dataset(train_path);
    const std::vector<PairSample> test = load_dataset(test_path);
    const Model model = Model::load(opts.checkpoint, g);

    std::string text;
    const json payload = eval_payload(model, g, train, test, &text);
    const std::string rendered = opts.format == "json" ? payload.dump(2) + "\n" : text;
    if (opts.out.empty()) {
        std::cout << rendered;
        return 0;
    }
    const std::string report_path =
        out_file(opts.out, opts.format == "json" ? "report.json" : "report.txt");
    write_text(report_path, rendered);
    RunManifest man;
    man.command = "eval";
    man.config = json{{"format", opts.format}};
    man.add_input(triples_path);
    man.add_input(train_path);
    man.add_input(test_path);
    man.add_input(opts.checkpoint);
    man.add_output(report_path);
    man.write(out_file(opts.out, "manifest_eval.json"));
    std::cout << "wrote " << report_path << "\n";
    return 0;
}

struct AblationVariant {
    const char* name;
    void (*mutate)(ModelConfig&);
};

const AblationVariant kAblationVariants[] = {
    {"full", [](ModelConfig&) {}},
    {"no_biases", [](ModelConfig& c) { c.use_biases = false; }},
    {"no_subtask", [](ModelConfig& c) { c.use_subtask = false; }},
    {"uniform_local", [](ModelConfig& c) { c.local_pooling = PoolingMode::Uniform; }},
    {"uniform_global", [](ModelConfig& c) { c.global_pooling = PoolingMode::Uniform; }},
    {"uniform_both",
     [](ModelConfig& c) {
         c.local_pooling = PoolingMode::Uniform;
         c.global_pooling = PoolingMode::Uniform;
     }},
};

int do_ablate(const Opts& opts, const json& config) {
    const std::string triples_path = resolve_triples(opts.data);
    const std::string train_path = data_file(opts.data, "train.jsonl");
    const std::string test_path = data_file(opts.data, "test.jsonl");
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    const std::vector<PairSample> train_samples = load_dataset(train_path);
    const std::vector<PairSample> test_samples = load_dataset(test_path);
    std::vector<int> test_labels;
    for (const auto& s : test_samples) test_labels.push_back(s.label);

    const ModelConfig base_mcfg = ModelConfig::from_json(config.value("model", json::object()));
    TrainConfig tcfg = TrainConfig::from_json(config.value("train", json::object()));
    if (opts.seed) tcfg.seed = *opts.seed;

    json rows = json::array();
    std::cout << "variant          dev_auc   test_auc\n";
    for (const AblationVariant& variant : kAblationVariants) {
        ModelConfig mcfg = base_mcfg;
        variant.mutate(mcfg);
        Model model(mcfg, g);
        const TrainResult tr = train(model, train_samples, tcfg);
        const double test_auc = auc(model.score_all(test_samples), test_labels);
        rows.push_back(json{{"variant", variant.name},
                            {"dev_auc", tr.best_dev_auc},
                            {"test_auc", test_auc},
                            {"best_epoch", tr.best_epoch}});
        std::cout << variant.name << std::string(17 - std::string(variant.name).size(), ' ')
                  << tr.best_dev_auc << "  " << test_auc << "\n";
    }
    const json payload{{"rows", rows}, {"train", tcfg.to_json()}, {"model", base_mcfg.to_json()}};
    if (!opts.out.empty()) {
        const std::string path = out_file(opts.out, "ablation.json");
        write_text(path, payload.dump(2) + "\n");
        RunManifest man;
        man.command = "ablate";
        man.config = json{{"model", base_mcfg.to_json()}, {"train", tcfg.to_json()}};
        man.seed = tcfg.seed;
        man.add_input(triples_path);
        man.add_input(train_path);
        man.add_input(test_path);
        man.add_output(path);
        man.write(out_file(opts.out, "manifest_ablate.json"));
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int do_explain(const Opts& opts) {
    const std::string triples_path = resolve_triples(opts.data);
    const std::string test_path = data_file(opts.data, "test.jsonl");
    if (opts.checkpoint.empty()) throw ConfigError("explain requires --checkpoint");
    if (opts.format != "json" && opts.format != "dot" && opts.format != "text") {
        throw ConfigError("explain supports --format json|dot|text");
    }
    KnowledgeGraph g = KnowledgeGraph::build(load_triples(triples_path));
    const std::vector<PairSample> test = load_dataset(test_path);
    if (test.empty()) throw ConfigError("explain: test set is empty");
    const Model model = Model::load(opts.checkpoint, g);

    const PairSample* chosen = nullptr;
    if (!opts.student.empty() || !opts.course.empty()) {
        if (opts.student.empty() || opts.course.empty()) {
            throw ConfigError("explain: --student and --course must be given together");
        }
        const auto sid = g.find_entity(EntityKind::Student, opts.student);
        const auto cid = g.find_entity(EntityKind::Course, opts.course);
        if (!sid || !cid) {
            throw ConfigError("explain: unknown student or course display value");
        }
        for (const PairSample& s : test) {
            if (s.student == *sid && s.course == *cid) {
                chosen = &s;
                break;
            }
        }
        if (!chosen) {
            throw ConfigError("explain: pair (" + opts.student + ", " + opts.course +
                              ") is not in the test set");
        }
    } else {
        if (opts.index < 0 || opts.index >= static_cast<int>(test.size())) {
            throw RangeError("explain: --index out of range (test set has " +
                             std::to_string(test.size()) + " pairs)");
        }
        chosen = &test[static_cast<std::size_t>(opts.index)];
    }

    const AttentionReport report = build_report(model, g, *chosen);
    std::string rendered;
    const char* fname = "explain.txt";
    if (opts.format == "json") {
        rendered = report.to_json().dump(2) + "\n";
        fname = "explain.json";
    } else if (opts.format == "dot") {
        rendered = report.to_dot();
        fname = "explain.dot";
    } else {
        rendered = report.to_text();
    }
    if (opts.out.empty()) {
        std::cout << rendered;
        return 0;
    }
    const std::string path = out_file(opts.out, fname);
    write_text(path, rendered);
    RunManifest man;
    man.command = "explain";
    man.config = json{{"format", opts.format},
                      {"student", report.student},
                      {"course", report.course}};
    man.add_input(triples_path);
    man.add_input(test_path);
    man.add_input(opts.checkpoint);
    man.add_output(path);
    man.write(out_file(opts.out, "manifest_explain.json"));
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dispatch

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"path-evidence pass/fail prediction toolkit"};
    app.require_subcommand(1);
    Opts opts;

    auto add_common = [&opts](CLI::App* cmd, bool with_config) {
        if (with_config) {
            cmd->add_option("--config", opts.config_path, "JSON config file with per-module sections");
        }
        cmd->add_option("--out", opts.out, "output directory");
        return cmd;
    };

    CLI::App* synth_cmd = add_common(app.add_subcommand("synth", "generate a synthetic graph"), true);
    synth_cmd->add_option("--seed", opts.seed, "override the generator seed");
    synth_cmd->add_option("--preset", opts.preset, "base preset: planted or null")
        ->check(CLI::IsMember({"planted", "null"}));

    CLI::App* ingest_cmd = add_common(app.add_subcommand("ingest", "validate and summarize a triple file"), false);
    ingest_cmd->add_option("--data", opts.data, "triple file or directory")->required();

    CLI::App* sample_cmd = add_common(app.add_subcommand("sample", "build train/test path datasets"), true);
    sample_cmd->add_option("--data", opts.data, "triple file or directory")->required();

    CLI::App* train_cmd = add_common(app.add_subcommand("train", "train a model"), true);
    train_cmd->add_option("--data", opts.data, "dataset directory")->required();
    train_cmd->add_option("--seed", opts.seed, "override the training seed");

    CLI::App* grid_cmd = add_common(app.add_subcommand("gridsearch", "sweep lr x batch size"), true);
    grid_cmd->add_option("--data", opts.data, "dataset directory")->required();
    grid_cmd->add_option("--seed", opts.seed, "override the sweep seed");

    CLI::App* eval_cmd = add_common(app.add_subcommand("eval", "score a checkpoint against the test set"), false);
    eval_cmd->add_option("--data", opts.data, "dataset directory")->required();
    eval_cmd->add_option("--checkpoint", opts.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--format", opts.format, "json or text")
        ->check(CLI::IsMember({"json", "text"}));

    CLI::App* ablate_cmd = add_common(app.add_subcommand("ablate", "train and compare model variants"), true);
    ablate_cmd->add_option("--data", opts.data, "dataset directory")->required();
    ablate_cmd->add_option("--seed", opts.seed, "override the training seed");

    CLI::App* explain_cmd = add_common(app.add_subcommand("explain", "report attention evidence for one pair"), false);
    explain_cmd->add_option("--data", opts.data, "dataset directory")->required();
    explain_cmd->add_option("--checkpoint", opts.checkpoint, "model checkpoint")->required();
    explain_cmd->add_option("--format", opts.format, "json, dot, or text")
        ->check(CLI::IsMember({"json", "dot", "text"}));
    explain_cmd->add_option("--index", opts.index, "test-set row to explain (default 0)");
    explain_cmd->add_option("--student", opts.student, "student display value");
    explain_cmd->add_option("--course", opts.course, "course display value");

    std::vector<std::string> argv_store;
    argv_store.push_back("pathgrade");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const std::string& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message
        return 2;
    }

    try {
        const json config = load_config(opts.config_path);
        if (synth_cmd->parsed()) return do_synth(opts, config);
        if (ingest_cmd->parsed()) return do_ingest(opts);
        if (sample_cmd->parsed()) return do_sample(opts, config);
        if (train_cmd->parsed()) return do_train(opts, config);
        if (grid_cmd->parsed()) return do_gridsearch(opts, config);
        if (eval_cmd->parsed()) return do_eval(opts);
        if (ablate_cmd->parsed()) return do_ablate(opts, config);
        if (explain_cmd->parsed()) return do_explain(opts);
        throw StateError("no subcommand dispatched");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace pathgrade
