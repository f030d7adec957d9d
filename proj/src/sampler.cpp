#include "pathgrade/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

namespace pathgrade {

namespace {

using nlohmann::json;

bool grade_in_window(const KnowledgeGraph& g, int grade_id, const std::optional<int>& before_term) {
    if (!before_term.has_value()) return true;
    const auto& info = g.grade_info(grade_id);
    return info.term.has_value() && *info.term < *before_term;
}

}  // namespace

std::vector<std::pair<int, int>> select_similar_students(const KnowledgeGraph& g, int s, int c,
                                                         int limit,
                                                         std::optional<int> before_term) {
    std::map<int, int> shared;  // candidate -> shared tag count
    for (int tag : g.neighbors(s, Relation::Have)) {
        for (int other : g.neighbors(tag, Relation::BelongTo)) {
            if (other == s) continue;
            const auto grade = g.enrollment_grade(other, c);
            if (!grade.has_value() || !grade_in_window(g, *grade, before_term)) continue;
            ++shared[other];
        }
    }
    std::vector<std::pair<int, int>> ranked(shared.begin(), shared.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > limit) ranked.resize(static_cast<std::size_t>(limit));
    return ranked;
}

std::vector<SspGroup> enumerate_ssp(const KnowledgeGraph& g, int s, int c,
                                    const std::vector<int>& similar, int max_paths_per_group) {
    std::vector<SspGroup> groups;
    groups.reserve(similar.size());
    for (int other : similar) {
        const auto grade = g.enrollment_grade(other, c);
        if (!grade.has_value()) continue;
        SspGroup group;
        group.similar_student = other;
        group.terminal_grade = g.grade_info(*grade).outcome;
        for (int tag : g.neighbors(s, Relation::Have)) {
            const auto& owners = g.neighbors(tag, Relation::BelongTo);
            if (!std::binary_search(owners.begin(), owners.end(), other)) continue;
            Path p;
            p.steps = {
                {s, EntityKind::Student, Relation::Have},
                {tag, EntityKind::Tag, Relation::BelongTo},
                {other, EntityKind::Student, Relation::GetGrade},
                {*grade, EntityKind::Grade, Relation::In},
                {c, EntityKind::Course, Relation::EndMarker},
            };
            group.paths.push_back(std::move(p));
            if (static_cast<int>(group.paths.size()) >= max_paths_per_group) break;
        }
        if (!group.paths.empty()) groups.push_back(std::move(group));
    }
    return groups;
}

std::vector<CkpGroup> enumerate_ckp(const KnowledgeGraph& g, int s, int c,
                                    std::optional<int> before_term, int max_paths_per_group) {
    std::vector<CkpGroup> groups;
    for (int prior : g.ids_of(EntityKind::Course)) {
        if (prior == c) continue;
        const auto grade = g.enrollment_grade(s, prior);
        if (!grade.has_value() || !grade_in_window(g, *grade, before_term)) continue;
        CkpGroup group;
        group.related_course = prior;
        group.prior_grade = g.grade_info(*grade).outcome;
        for (Relation rel : {Relation::Prerequisite, Relation::Related}) {
            const auto& tails = g.neighbors(prior, rel);
            if (!std::binary_search(tails.begin(), tails.end(), c)) continue;
            Path p;
            p.steps = {
                {s, EntityKind::Student, Relation::GetGrade},
                {*grade, EntityKind::Grade, Relation::In},
                {prior, EntityKind::Course, rel},
                {c, EntityKind::Course, Relation::EndMarker},
            };
            group.paths.push_back(std::move(p));
            if (static_cast<int>(group.paths.size()) >= max_paths_per_group) break;
        }
        if (!group.paths.empty()) groups.push_back(std::move(group));
    }
    return groups;
}

std::optional<PairSample> assemble_sample(const KnowledgeGraph& g, int s, int c,
                                          const SamplerConfig& config,
                                          std::optional<int> before_term) {
    const auto own_grade = g.enrollment_grade(s, c);
    if (!own_grade.has_value()) {
        throw IntegrityError("assemble_sample: student '" + g.entity(s).value +
                             "' has no enrollment in course '" + g.entity(c).value + "'");
    }
    PairSample sample;
    sample.student = s;
    sample.course = c;
    const auto& info = g.grade_info(*own_grade);
    sample.term = info.term;
    sample.label = info.outcome == GradeOutcome::Fail ? 1 : 0;

    const auto ranked = select_similar_students(g, s, c, config.similar_limit, before_term);
    std::vector<int> similar;
    similar.reserve(ranked.size());
    for (const auto& [id, count] : ranked) similar.push_back(id);
    sample.ssp = enumerate_ssp(g, s, c, similar, config.max_paths_per_group);
    sample.ckp = enumerate_ckp(g, s, c, before_term, config.max_paths_per_group);
    if (sample.group_count() == 0) return std::nullopt;
    return sample;
}

DatasetBuild build_dataset(const KnowledgeGraph& g, int split_term, const SamplerConfig& config) {
    if (!g.all_enrollments_have_terms()) {
        throw ConfigError("build_dataset: enrollment records carry no term attribute");
    }
    DatasetBuild out;
    for (const auto& rec : g.enrollments()) {
        const int term = *rec.term;
        if (term > split_term) {
            ++out.skipped_future;
            continue;
        }
        const bool is_test = term == split_term;
        auto sample = assemble_sample(g, rec.student, rec.course, config, split_term);
        if (!sample.has_value()) {
            ++(is_test ? out.dropped_test : out.dropped_train);
            continue;
        }
        (is_test ? out.test : out.train).push_back(std::move(*sample));
    }
    auto canonical = [](const PairSample& a, const PairSample& b) {
        if (a.student != b.student) return a.student < b.student;
        return a.course < b.course;
    };
    std::sort(out.train.begin(), out.train.end(), canonical);
    std::sort(out.test.begin(), out.test.end(), canonical);
    if (out.train.empty() || out.test.empty()) {
        throw ConfigError("build_dataset: temporal split on term " + std::to_string(split_term) +
                          " leaves an empty " + (out.train.empty() ? "train" : "test") + " set");
    }
    return out;
}

namespace {

json path_to_json(const Path& p) {
    json steps = json::array();
    for (const PathStep& st : p.steps) {
        steps.push_back({st.value, to_string(st.node_kind), to_string(st.relation)});
    }
    return steps;
}

Path path_from_json(const json& j) {
    Path p;
    for (const auto& st : j) {
        PathStep step;
        step.value = st.at(0).get<int>();
        step.node_kind = entity_kind_from(st.at(1).get<std::string>());
        const std::string rel = st.at(2).get<std::string>();
        step.relation = rel == "end_marker" ? Relation::EndMarker : relation_from(rel);
        p.steps.push_back(step);
    }
    return p;
}

}  // namespace

void save_dataset(const std::vector<PairSample>& samples, const KnowledgeGraph& g,
                  const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    for (const PairSample& s : samples) {
        json rec;
        rec["student"] = s.student;
        rec["course"] = s.course;
        rec["student_name"] = g.entity(s.student).value;
        rec["course_name"] = g.entity(s.course).value;
        if (s.term.has_value()) rec["term"] = *s.term;
        rec["label"] = s.label;
        json ssp = json::array();
        for (const SspGroup& grp : s.ssp) {
            json jg;
            jg["similar"] = grp.similar_student;
            jg["grade"] = to_string(grp.terminal_grade);
            json paths = json::array();
            for (const Path& p : grp.paths) paths.push_back(path_to_json(p));
            jg["paths"] = std::move(paths);
            ssp.push_back(std::move(jg));
        }
        rec["ssp"] = std::move(ssp);
        json ckp = json::array();
        for (const CkpGroup& grp : s.ckp) {
            json jg;
            jg["prior_course"] = grp.related_course;
            jg["grade"] = to_string(grp.prior_grade);
            json paths = json::array();
            for (const Path& p : grp.paths) paths.push_back(path_to_json(p));
            jg["paths"] = std::move(paths);
            ckp.push_back(std::move(jg));
        }
        rec["ckp"] = std::move(ckp);
        os << rec.dump() << '\n';
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

std::vector<PairSample> load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open dataset '" + path + "'");
    std::vector<PairSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        PairSample s;
        s.student = rec.at("student").get<int>();
        s.course = rec.at("course").get<int>();
        if (rec.contains("term")) s.term = rec.at("term").get<int>();
        s.label = rec.at("label").get<int>();
        for (const auto& jg : rec.at("ssp")) {
            SspGroup grp;
            grp.similar_student = jg.at("similar").get<int>();
            grp.terminal_grade =
                jg.at("grade").get<std::string>() == "Fail" ? GradeOutcome::Fail : GradeOutcome::Pass;
            for (const auto& jp : jg.at("paths")) grp.paths.push_back(path_from_json(jp));
            s.ssp.push_back(std::move(grp));
        }
        for (const auto& jg : rec.at("ckp")) {
            CkpGroup grp;
            grp.related_course = jg.at("prior_course").get<int>();
            grp.prior_grade =
                jg.at("grade").get<std::string>() == "Fail" ? GradeOutcome::Fail : GradeOutcome::Pass;
            for (const auto& jp : jg.at("paths")) grp.paths.push_back(path_from_json(jp));
            s.ckp.push_back(std::move(grp));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace pathgrade
