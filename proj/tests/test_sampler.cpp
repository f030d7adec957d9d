#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <string>

#include "pathgrade/sampler.hpp"
#include "pathgrade/synth.hpp"
#include "test_support.hpp"

using namespace pathgrade;
using test_support::TempDir;
using test_support::id_of;

namespace {

// s shares 3 tags with a, 3 with b, 1 with d; all three hold grades in c.
KnowledgeGraph tie_graph() {
    TripleSet ts;
    ts.intern(EntityKind::Student, "s");
    ts.intern(EntityKind::Student, "a");
    ts.intern(EntityKind::Student, "b");
    ts.intern(EntityKind::Student, "d");
    for (const char* tag : {"t1", "t2", "t3"}) {
        test_support::own_tag(ts, "s", tag);
        test_support::own_tag(ts, "a", tag);
        test_support::own_tag(ts, "b", tag);
    }
    test_support::own_tag(ts, "d", "t1");
    test_support::enroll(ts, "a", "Pass#t1_a", "c");
    test_support::enroll(ts, "b", "Fail#t1_b", "c");
    test_support::enroll(ts, "d", "Pass#t1_d", "c");
    test_support::enroll(ts, "s", "Pass#t2_s", "c");
    return KnowledgeGraph::build(std::move(ts));
}

}  // namespace

TEST_CASE("similar students rank by shared-tag count, ties by ascending id") {
    const KnowledgeGraph g = tie_graph();
    const int s = id_of(g, EntityKind::Student, "s");
    const int c = id_of(g, EntityKind::Course, "c");

    const auto full = select_similar_students(g, s, c, 60);
    REQUIRE(full.size() == 3);
    CHECK(full[0].first == id_of(g, EntityKind::Student, "a"));
    CHECK(full[0].second == 3);
    CHECK(full[1].first == id_of(g, EntityKind::Student, "b"));
    CHECK(full[1].second == 3);
    CHECK(full[2].first == id_of(g, EntityKind::Student, "d"));
    CHECK(full[2].second == 1);

    // a and b tie at 3; the lower id wins the cut.
    const auto top2 = select_similar_students(g, s, c, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].first == id_of(g, EntityKind::Student, "a"));
    CHECK(top2[1].first == id_of(g, EntityKind::Student, "b"));
}

TEST_CASE("the similar-student limit truncates exactly") {
    TripleSet ts;
    ts.intern(EntityKind::Student, "s00");
    test_support::own_tag(ts, "s00", "T");
    for (int i = 1; i <= 70; ++i) {
        char name[8];
        std::snprintf(name, sizeof(name), "s%02d", i);
        test_support::own_tag(ts, name, "T");
        test_support::enroll(ts, name, std::string("Pass#t1_") + name, "c");
    }
    const KnowledgeGraph g = KnowledgeGraph::build(std::move(ts));
    const int s = id_of(g, EntityKind::Student, "s00");
    const int c = id_of(g, EntityKind::Course, "c");

    const auto ranked = select_similar_students(g, s, c, 60);
    CHECK(ranked.size() == 60);
    // All counts tie at 1, so the 60 lowest ids survive.
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].first < ranked[i].first);
    CHECK(ranked.back().first == id_of(g, EntityKind::Student, "s60"));
}

TEST_CASE("no shared tags means no similar students") {
    TripleSet ts;
    test_support::own_tag(ts, "s", "t1");
    test_support::own_tag(ts, "x", "t2");
    test_support::enroll(ts, "x", "Pass#t1_x", "c");
    test_support::enroll(ts, "s", "Pass#t2_s", "c");
    const KnowledgeGraph g = KnowledgeGraph::build(std::move(ts));
    CHECK(select_similar_students(g, id_of(g, EntityKind::Student, "s"),
                                  id_of(g, EntityKind::Course, "c"), 60)
              .empty());
}

TEST_CASE("similar-student paths have the fixed 5-step shape") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const PairSample sample = test_support::ann_calculus_sample(g);

    REQUIRE(sample.ssp.size() == 2);  // joe (2 shared tags), kim (1)
    const SspGroup& joe = sample.ssp[0];
    CHECK(joe.similar_student == id_of(g, EntityKind::Student, "joe"));
    CHECK(joe.terminal_grade == GradeOutcome::Fail);
    REQUIRE(joe.paths.size() == 2);

    const Path& p = joe.paths[0];
    REQUIRE(p.steps.size() == 5);
    CHECK(p.steps[0].value == id_of(g, EntityKind::Student, "ann"));
    CHECK(p.steps[0].node_kind == EntityKind::Student);
    CHECK(p.steps[0].relation == Relation::Have);
    CHECK(p.steps[1].value == id_of(g, EntityKind::Tag, "night-owl"));
    CHECK(p.steps[1].node_kind == EntityKind::Tag);
    CHECK(p.steps[1].relation == Relation::BelongTo);
    CHECK(p.steps[2].value == id_of(g, EntityKind::Student, "joe"));
    CHECK(p.steps[2].relation == Relation::GetGrade);
    CHECK(p.steps[3].value == id_of(g, EntityKind::Grade, "Fail#t2_j"));
    CHECK(p.steps[3].node_kind == EntityKind::Grade);
    CHECK(p.steps[3].relation == Relation::In);
    CHECK(p.steps[4].value == id_of(g, EntityKind::Course, "calculus"));
    CHECK(p.steps[4].relation == Relation::EndMarker);

    // Second path differs only in the shared tag.
    CHECK(joe.paths[1].steps[1].value == id_of(g, EntityKind::Tag, "bookworm"));
    CHECK(joe.paths[1].steps[0] == p.steps[0]);
    CHECK(joe.paths[1].steps[2] == p.steps[2]);

    const SspGroup& kim = sample.ssp[1];
    CHECK(kim.similar_student == id_of(g, EntityKind::Student, "kim"));
    CHECK(kim.terminal_grade == GradeOutcome::Pass);
    CHECK(kim.paths.size() == 1);
}

TEST_CASE("course-knowledge paths have the fixed 4-step shape") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const PairSample sample = test_support::ann_calculus_sample(g);

    REQUIRE(sample.ckp.size() == 2);
    const CkpGroup& alg = sample.ckp[0];
    CHECK(alg.related_course == id_of(g, EntityKind::Course, "algebra"));
    CHECK(alg.prior_grade == GradeOutcome::Pass);
    REQUIRE(alg.paths.size() == 1);
    const Path& p = alg.paths[0];
    REQUIRE(p.steps.size() == 4);
    CHECK(p.steps[0].value == id_of(g, EntityKind::Student, "ann"));
    CHECK(p.steps[0].relation == Relation::GetGrade);
    CHECK(p.steps[1].value == id_of(g, EntityKind::Grade, "Pass#t1_a"));
    CHECK(p.steps[1].relation == Relation::In);
    CHECK(p.steps[2].value == id_of(g, EntityKind::Course, "algebra"));
    CHECK(p.steps[2].relation == Relation::Prerequisite);
    CHECK(p.steps[3].value == id_of(g, EntityKind::Course, "calculus"));
    CHECK(p.steps[3].relation == Relation::EndMarker);

    const CkpGroup& geo = sample.ckp[1];
    CHECK(geo.related_course == id_of(g, EntityKind::Course, "geometry"));
    CHECK(geo.prior_grade == GradeOutcome::Fail);
    REQUIRE(geo.paths.size() == 1);
    CHECK(geo.paths[0].steps[2].relation == Relation::Related);
}

TEST_CASE("a course linked by both relations yields one group with two paths") {
    TripleSet ts;
    test_support::enroll(ts, "s", "Pass#t1_s", "x");
    test_support::enroll(ts, "s", "Fail#t2_s", "y");
    ts.add_triple(EntityKind::Course, "x", Relation::Prerequisite, EntityKind::Course, "y");
    ts.add_triple(EntityKind::Course, "x", Relation::Related, EntityKind::Course, "y");
    const KnowledgeGraph g = KnowledgeGraph::build(std::move(ts));

    const auto groups = enumerate_ckp(g, id_of(g, EntityKind::Student, "s"),
                                      id_of(g, EntityKind::Course, "y"));
    REQUIRE(groups.size() == 1);
    REQUIRE(groups[0].paths.size() == 2);
    CHECK(groups[0].paths[0].steps[2].relation == Relation::Prerequisite);
    CHECK(groups[0].paths[1].steps[2].relation == Relation::Related);
}

TEST_CASE("paths per group are capped") {
    TripleSet ts;
    ts.intern(EntityKind::Student, "s");
    ts.intern(EntityKind::Student, "x");
    for (int i = 0; i < 12; ++i) {
        const std::string tag = "tag" + std::to_string(i);
        test_support::own_tag(ts, "s", tag);
        test_support::own_tag(ts, "x", tag);
    }
    test_support::enroll(ts, "x", "Pass#t1_x", "c");
    test_support::enroll(ts, "s", "Pass#t2_s", "c");
    const KnowledgeGraph g = KnowledgeGraph::build(std::move(ts));

    const auto groups = enumerate_ssp(g, id_of(g, EntityKind::Student, "s"),
                                      id_of(g, EntityKind::Course, "c"),
                                      {id_of(g, EntityKind::Student, "x")});
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].paths.size() == 10);
}

TEST_CASE("assembling an unenrolled pair is an integrity error") {
    const KnowledgeGraph g = test_support::tiny_graph();
    CHECK_THROWS_AS(assemble_sample(g, id_of(g, EntityKind::Student, "kim"),
                                    id_of(g, EntityKind::Course, "algebra"), SamplerConfig{}),
                    IntegrityError);
}

TEST_CASE("sample label and term come from the pair's own enrollment") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const PairSample sample = test_support::ann_calculus_sample(g);
    CHECK(sample.label == 1);  // ann failed calculus
    CHECK(sample.term == 3);
    CHECK(sample.group_count() == 4);
}

TEST_CASE("temporal split on the tiny graph") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const DatasetBuild b = build_dataset(g, 3);

    // ann's algebra/geometry terms have no evidence, so they are dropped.
    REQUIRE(b.train.size() == 2);
    REQUIRE(b.test.size() == 1);
    CHECK(b.dropped_train == 2);
    CHECK(b.dropped_test == 0);
    CHECK(b.skipped_future == 0);

    CHECK(b.test[0].student == id_of(g, EntityKind::Student, "ann"));
    CHECK(b.test[0].term == 3);
    for (const PairSample& s : b.train) CHECK(*s.term < 3);

    // joe's sample sees kim's pass; ann's term-3 grade is invisible.
    const int joe = id_of(g, EntityKind::Student, "joe");
    const auto it = std::find_if(b.train.begin(), b.train.end(),
                                 [&](const PairSample& s) { return s.student == joe; });
    REQUIRE(it != b.train.end());
    CHECK(it->label == 1);
    REQUIRE(it->ssp.size() == 1);
    CHECK(it->ssp[0].similar_student == id_of(g, EntityKind::Student, "kim"));
}

TEST_CASE("splitting on the last synthetic term holds out exactly that term") {
    SynthConfig cfg;
    cfg.n_students = 60;
    cfg.n_courses = 12;
    cfg.seed = 11;
    const SynthResult sr = generate(cfg);
    const KnowledgeGraph g = KnowledgeGraph::build(sr.triples);
    const DatasetBuild b = build_dataset(g, 6);

    CHECK(b.skipped_future == 0);
    CHECK_FALSE(b.test.empty());
    for (const PairSample& s : b.test) CHECK(s.term == 6);
    for (const PairSample& s : b.train) CHECK(*s.term < 6);

    // Leakage rule: no evidence path in either split may traverse a grade
    // from the held-out term.
    auto check_paths = [&](const PairSample& s) {
        auto scan = [&](const Path& p) {
            for (const PathStep& step : p.steps) {
                if (step.node_kind != EntityKind::Grade) continue;
                const auto& info = g.grade_info(step.value);
                REQUIRE(info.term.has_value());
                CHECK(*info.term < 6);
            }
        };
        for (const SspGroup& grp : s.ssp) {
            for (const Path& p : grp.paths) scan(p);
        }
        for (const CkpGroup& grp : s.ckp) {
            for (const Path& p : grp.paths) scan(p);
        }
    };
    for (const PairSample& s : b.test) check_paths(s);
    for (const PairSample& s : b.train) check_paths(s);

    // Dropped counters equal a brute-force recount of no-evidence pairs.
    int recount_train = 0, recount_test = 0;
    for (const auto& rec : g.enrollments()) {
        const auto sample = assemble_sample(g, rec.student, rec.course, SamplerConfig{}, 6);
        if (!sample.has_value()) ++(*rec.term == 6 ? recount_test : recount_train);
    }
    CHECK(b.dropped_train == recount_train);
    CHECK(b.dropped_test == recount_test);
    CHECK(b.train.size() + static_cast<std::size_t>(b.dropped_train) +
              b.test.size() + static_cast<std::size_t>(b.dropped_test) ==
          g.enrollments().size());
}

TEST_CASE("sampling is deterministic for a fixed graph") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const DatasetBuild a = build_dataset(g, 3);
    const DatasetBuild b = build_dataset(g, 3);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].student == b.train[i].student);
        CHECK(a.train[i].ssp.size() == b.train[i].ssp.size());
        for (std::size_t k = 0; k < a.train[i].ssp.size(); ++k) {
            CHECK(a.train[i].ssp[k].paths == b.train[i].ssp[k].paths);
        }
    }
}

TEST_CASE("a split term with no enrollments is a config error") {
    const KnowledgeGraph g = test_support::tiny_graph();
    CHECK_THROWS_AS(build_dataset(g, 9), ConfigError);
}

TEST_CASE("dataset files round-trip") {
    const KnowledgeGraph g = test_support::tiny_graph();
    const DatasetBuild b = build_dataset(g, 3);
    TempDir tmp("sampler_jsonl");
    const std::string path = tmp.path("train.jsonl");
    save_dataset(b.train, g, path);

    const std::vector<PairSample> loaded = load_dataset(path);
    REQUIRE(loaded.size() == b.train.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].student == b.train[i].student);
        CHECK(loaded[i].course == b.train[i].course);
        CHECK(loaded[i].term == b.train[i].term);
        CHECK(loaded[i].label == b.train[i].label);
        REQUIRE(loaded[i].ssp.size() == b.train[i].ssp.size());
        REQUIRE(loaded[i].ckp.size() == b.train[i].ckp.size());
        for (std::size_t k = 0; k < loaded[i].ssp.size(); ++k) {
            CHECK(loaded[i].ssp[k].similar_student == b.train[i].ssp[k].similar_student);
            CHECK(loaded[i].ssp[k].terminal_grade == b.train[i].ssp[k].terminal_grade);
            CHECK(loaded[i].ssp[k].paths == b.train[i].ssp[k].paths);
        }
        for (std::size_t k = 0; k < loaded[i].ckp.size(); ++k) {
            CHECK(loaded[i].ckp[k].paths == b.train[i].ckp[k].paths);
        }
    }

    // Saving the loaded set again is byte-identical.
    const std::string path2 = tmp.path("again.jsonl");
    save_dataset(loaded, g, path2);
    std::ifstream f1(path), f2(path2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(s1.find("\"label\"") != std::string::npos);
}
