#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pathgrade/explain.hpp"
#include "pathgrade/kg.hpp"
#include "pathgrade/model.hpp"
#include "pathgrade/sampler.hpp"
#include "pathgrade/synth.hpp"
#include "test_support.hpp"

using namespace pathgrade;
using test_support::ann_calculus_sample;
using test_support::id_of;
using test_support::tiny_config;
using test_support::tiny_graph;
using test_support::tiny_model;

namespace {

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

// Parses every `"from" -> "to" [label="rel",penwidth=W];` line of a DOT body.
struct DotEdge {
    std::string from, to;
    double width = 0.0;
};

std::vector<DotEdge> parse_dot_edges(const std::string& dot) {
    std::vector<DotEdge> edges;
    std::istringstream is(dot);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t arrow = line.find("\" -> \"");
        if (arrow == std::string::npos) continue;
        DotEdge e;
        const std::size_t from_start = line.find('"') + 1;
        e.from = line.substr(from_start, arrow - from_start + 1);
        const std::size_t to_start = arrow + 6;
        const std::size_t to_end = line.find('"', to_start);
        e.to = line.substr(to_start, to_end - to_start);
        const std::size_t pw = line.find("penwidth=");
        REQUIRE(pw != std::string::npos);
        e.width = std::stod(line.substr(pw + 9));
        edges.push_back(std::move(e));
    }
    return edges;
}

}  // namespace

TEST_CASE("similar-student paths render with the ownership template") {
    KnowledgeGraph g = tiny_graph();
    PairSample sample = ann_calculus_sample(g);
    REQUIRE(sample.ssp.size() == 2);
    REQUIRE(sample.ssp[0].paths.size() == 2);

    std::vector<std::string> texts;
    for (const Path& p : sample.ssp[0].paths) texts.push_back(verbalize_path(g, p));
    const std::string expect_a =
        "ann had a 'night-owl' tag which also belonged to joe, who failed the calculus";
    const std::string expect_b =
        "ann had a 'bookworm' tag which also belonged to joe, who failed the calculus";
    CHECK(((texts[0] == expect_a && texts[1] == expect_b) ||
           (texts[0] == expect_b && texts[1] == expect_a)));

    REQUIRE(sample.ssp[1].paths.size() == 1);
    CHECK(verbalize_path(g, sample.ssp[1].paths[0]) ==
          "ann had a 'night-owl' tag which also belonged to kim, who passed the calculus");
}

TEST_CASE("prior-course paths name the linking relation") {
    KnowledgeGraph g = tiny_graph();
    PairSample sample = ann_calculus_sample(g);
    REQUIRE(sample.ckp.size() == 2);

    std::vector<std::string> texts;
    for (const CkpGroup& grp : sample.ckp) {
        REQUIRE(grp.paths.size() == 1);
        texts.push_back(verbalize_path(g, grp.paths[0]));
    }
    const std::string prereq_text =
        "ann passed the algebra, which is the calculus's prerequisite course";
    const std::string related_text =
        "ann failed the geometry, which is the calculus's related course";
    CHECK(std::count(texts.begin(), texts.end(), prereq_text) == 1);
    CHECK(std::count(texts.begin(), texts.end(), related_text) == 1);
}

TEST_CASE("unrecognized shapes fall back to an arrow-joined listing") {
    KnowledgeGraph g = tiny_graph();
    Path p;
    p.steps.push_back(
        {id_of(g, EntityKind::Student, "ann"), EntityKind::Student, Relation::Have});
    p.steps.push_back(
        {id_of(g, EntityKind::Tag, "night-owl"), EntityKind::Tag, Relation::EndMarker});
    CHECK(verbalize_path(g, p) == "ann (Student) -have-> night-owl (Tag)");

    // A 5-step path with the wrong relation in the middle also falls back.
    PairSample sample = ann_calculus_sample(g);
    Path broken = sample.ssp[0].paths[0];
    broken.steps[1].relation = Relation::Have;
    const std::string text = verbalize_path(g, broken);
    CHECK(contains(text, "->"));
    CHECK(contains(text, "(Grade)"));
}

TEST_CASE("verbalization is total over a generated dataset") {
    SynthConfig cfg;
    cfg.n_students = 30;
    cfg.n_courses = 12;
    cfg.courses_per_term = 2;
    cfg.prereqs_per_course = 2;
    cfg.related_per_course = 1;
    cfg.seed = 13;
    KnowledgeGraph g = KnowledgeGraph::build(generate(cfg).triples);
    DatasetBuild split = build_dataset(g, cfg.n_terms, SamplerConfig{8, 10});
    int paths_seen = 0;
    for (const std::vector<PairSample>* part : {&split.train, &split.test}) {
        for (const PairSample& s : *part) {
            for (const SspGroup& grp : s.ssp) {
                for (const Path& p : grp.paths) {
                    // Recognized shapes never fall back to the arrow listing.
                    CHECK(!contains(verbalize_path(g, p), "->"));
                    ++paths_seen;
                }
            }
            for (const CkpGroup& grp : s.ckp) {
                for (const Path& p : grp.paths) {
                    CHECK(!contains(verbalize_path(g, p), "->"));
                    ++paths_seen;
                }
            }
        }
    }
    CHECK(paths_seen > 100);
}

TEST_CASE("report copies trace weights exactly and sorts by alpha") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);

    Tape tape;
    ForwardTrace trace = m.predict(tape, sample);
    AttentionReport report = build_report(trace, g, sample);

    CHECK(report.student == "ann");
    CHECK(report.course == "calculus");
    CHECK(report.prediction == trace.prediction);
    CHECK(report.label == 1);
    REQUIRE(report.groups.size() == 4);

    for (std::size_t i = 1; i < report.groups.size(); ++i) {
        CHECK(report.groups[i - 1].alpha >= report.groups[i].alpha);
    }

    // Every report group carries its trace weights verbatim.
    for (const GroupExplanation& ge : report.groups) {
        bool found = false;
        for (std::size_t i = 0; i < trace.groups.size(); ++i) {
            const GroupTrace& gt = trace.groups[i];
            if (gt.type != ge.type || g.entity(gt.anchor).value != ge.anchor) continue;
            found = true;
            CHECK(ge.alpha == trace.global_weights[i]);
            CHECK(ge.value == gt.value);
            CHECK(ge.outcome == gt.grade);
            REQUIRE(ge.paths.size() == gt.local_weights.size());
            for (std::size_t p = 0; p < ge.paths.size(); ++p) {
                CHECK(ge.paths[p].weight == gt.local_weights[p]);
            }
        }
        CHECK(found);
    }

    // Highlighting marks the leading groups until half the mass is covered.
    double total = 0.0;
    for (const GroupExplanation& ge : report.groups) total += ge.alpha;
    double covered = 0.0;
    for (const GroupExplanation& ge : report.groups) {
        const bool expect = covered < total / 2.0;
        CHECK(ge.highlighted == expect);
        if (expect) covered += ge.alpha;
    }
    CHECK(covered >= total / 2.0);

    // Every path has a rendering and step labels matching its length.
    for (const GroupExplanation& ge : report.groups) {
        for (const ExplainedPath& ep : ge.paths) {
            CHECK(!ep.text.empty());
            CHECK(ep.step_labels.size() == ep.relations.size());
            CHECK(ep.step_labels.size() >= 4);
        }
    }
}

TEST_CASE("single-group report gets full weight and highlighted tags") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);
    sample.ssp.resize(1);  // keep joe only
    sample.ckp.clear();

    AttentionReport report = build_report(m, g, sample);
    REQUIRE(report.groups.size() == 1);
    CHECK(report.groups[0].alpha == 1.0);
    CHECK(report.groups[0].highlighted);
    CHECK(report.groups[0].anchor == "joe");
    REQUIRE(report.key_tags.size() == 2);
    CHECK(std::count(report.key_tags.begin(), report.key_tags.end(), "night-owl") == 1);
    CHECK(std::count(report.key_tags.begin(), report.key_tags.end(), "bookworm") == 1);
}

TEST_CASE("mismatched trace and sample are rejected") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);

    Tape tape;
    ForwardTrace trace = m.predict(tape, sample);

    PairSample fewer_groups = sample;
    fewer_groups.ckp.pop_back();
    CHECK_THROWS_AS(build_report(trace, g, fewer_groups), StateError);

    PairSample fewer_paths = sample;
    fewer_paths.ssp[0].paths.pop_back();
    CHECK_THROWS_AS(build_report(trace, g, fewer_paths), StateError);
}

TEST_CASE("report json round-trips and keeps exact weights") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);
    AttentionReport report = build_report(m, g, sample);

    nlohmann::json j = report.to_json();
    nlohmann::json reparsed = nlohmann::json::parse(j.dump());
    CHECK(reparsed == j);

    CHECK(j["student"] == "ann");
    CHECK(j["course"] == "calculus");
    CHECK(j["label"] == 1);
    REQUIRE(j["groups"].size() == 4);
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
        const GroupExplanation& ge = report.groups[i];
        CHECK(j["groups"][i]["alpha"].get<double>() == ge.alpha);
        CHECK(j["groups"][i]["anchor"] == ge.anchor);
        CHECK(j["groups"][i]["type"] == (ge.type == GroupType::Ssp ? "ssp" : "ckp"));
        CHECK(j["groups"][i]["highlighted"] == ge.highlighted);
        for (std::size_t p = 0; p < ge.paths.size(); ++p) {
            CHECK(j["groups"][i]["paths"][p]["weight"].get<double>() == ge.paths[p].weight);
        }
    }
}

TEST_CASE("text rendering shows the pair, weights and highlight markers") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    AttentionReport report = build_report(m, g, ann_calculus_sample(g));

    const std::string text = report.to_text();
    CHECK(contains(text, "pair: ann / calculus"));
    CHECK(contains(text, "predicted fail probability:"));
    CHECK(contains(text, "(actual: Fail)"));
    CHECK(contains(text, " * "));
    CHECK(contains(text, "alpha="));
    CHECK(contains(text, "[w="));
    CHECK(contains(text, "similar student "));
    CHECK(contains(text, "prior course "));
}

TEST_CASE("dot export is well formed and widths follow the weights") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);
    // One path per group makes every local weight exactly 1, so pen widths
    // depend on the global weight alone.
    sample.ssp[0].paths.resize(1);
    AttentionReport report = build_report(m, g, sample);

    const std::string dot = report.to_dot();
    CHECK(contains(dot, "digraph evidence {"));
    CHECK(contains(dot, "rankdir=LR"));
    CHECK(contains(dot, "penwidth="));
    CHECK(contains(dot, "ann / calculus"));
    CHECK(std::count(dot.begin(), dot.end(), '{') == std::count(dot.begin(), dot.end(), '}'));

    const std::vector<DotEdge> edges = parse_dot_edges(dot);
    REQUIRE(!edges.empty());
    for (const DotEdge& e : edges) CHECK(e.width >= 0.5);

    // Each group owns a unique grade-node edge; its width must follow the
    // report's alpha ordering.
    auto width_of_edge_from = [&edges](const std::string& from) {
        for (const DotEdge& e : edges) {
            if (contains(e.from, from)) return e.width;
        }
        FAIL("missing edge from " << from);
        return 0.0;
    };
    std::vector<double> widths;
    for (const GroupExplanation& ge : report.groups) {
        const std::string grade_label =
            ge.type == GroupType::Ssp
                ? ge.paths[0].step_labels[3]   // similar student's grade node
                : ge.paths[0].step_labels[1];  // own prior grade node
        widths.push_back(width_of_edge_from(grade_label));
        CHECK(width_of_edge_from(grade_label) ==
              doctest::Approx(0.5 + 6.0 * ge.alpha).epsilon(1e-3));
    }
    for (std::size_t i = 1; i < widths.size(); ++i) {
        CHECK(widths[i - 1] >= widths[i] - 1e-9);
    }
}

TEST_CASE("fail evidence mass sums the weights of failing groups") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);

    Tape tape;
    ForwardTrace trace = m.predict(tape, sample);
    REQUIRE(trace.groups.size() == 4);
    REQUIRE(trace.groups[0].grade == GradeOutcome::Fail);   // joe failed calculus
    REQUIRE(trace.groups[1].grade == GradeOutcome::Pass);   // kim passed
    REQUIRE(trace.groups[2].grade == GradeOutcome::Pass);   // ann passed algebra
    REQUIRE(trace.groups[3].grade == GradeOutcome::Fail);   // ann failed geometry

    const double mass = fail_evidence_mass(trace);
    CHECK(mass == trace.global_weights[0] + trace.global_weights[3]);
    CHECK(mass > 0.0);
    CHECK(mass < 1.0);
}

TEST_CASE("reports are deterministic for a fixed model") {
    KnowledgeGraph g = tiny_graph();
    Model m = tiny_model(g, tiny_config());
    PairSample sample = ann_calculus_sample(g);
    const std::string a = build_report(m, g, sample).to_json().dump();
    const std::string b = build_report(m, g, sample).to_json().dump();
    CHECK(a == b);
}
