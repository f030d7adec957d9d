#include "pathgrade/explain.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace pathgrade {

using nlohmann::json;

namespace {

std::string outcome_verb(GradeOutcome o) {
    return o == GradeOutcome::Pass ? "passed" : "failed";
}

bool shape_matches(const Path& p, const std::vector<EntityKind>& kinds,
                   const std::vector<std::vector<Relation>>& rels) {
    if (p.steps.size() != kinds.size()) return false;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (p.steps[i].node_kind != kinds[i]) return false;
        const std::vector<Relation>& allowed = rels[i];
        if (std::find(allowed.begin(), allowed.end(), p.steps[i].relation) == allowed.end()) {
            return false;
        }
    }
    return true;
}

}  // namespace

std::string verbalize_path(const KnowledgeGraph& g, const Path& path) {
    auto value = [&g](const PathStep& st) -> const std::string& {
        return g.entity(st.value).value;
    };
    const bool ssp_shape = shape_matches(
        path,
        {EntityKind::Student, EntityKind::Tag, EntityKind::Student, EntityKind::Grade,
         EntityKind::Course},
        {{Relation::Have},
         {Relation::BelongTo},
         {Relation::GetGrade},
         {Relation::In},
         {Relation::EndMarker}});
    if (ssp_shape) {
        const GradeOutcome o = parse_grade_value(value(path.steps[3])).outcome;
        return value(path.steps[0]) + " had a '" + value(path.steps[1]) +
               "' tag which also belonged to " + value(path.steps[2]) + ", who " +
               outcome_verb(o) + " the " + value(path.steps[4]);
    }
    const bool ckp_shape = shape_matches(
        path, {EntityKind::Student, EntityKind::Grade, EntityKind::Course, EntityKind::Course},
        {{Relation::GetGrade},
         {Relation::In},
         {Relation::Prerequisite, Relation::Related},
         {Relation::EndMarker}});
    if (ckp_shape) {
        const GradeOutcome o = parse_grade_value(value(path.steps[1])).outcome;
        const char* link =
            path.steps[2].relation == Relation::Prerequisite ? "prerequisite" : "related";
        return value(path.steps[0]) + " " + outcome_verb(o) + " the " + value(path.steps[2]) +
               ", which is the " + value(path.steps[3]) + "'s " + link + " course";
    }
    // Fallback: arrow-joined listing.
    std::ostringstream os;
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        const PathStep& st = path.steps[i];
        os << value(st) << " (" << to_string(st.node_kind) << ")";
        if (st.relation != Relation::EndMarker) os << " -" << to_string(st.relation) << "-> ";
    }
    return os.str();
}

AttentionReport build_report(const Model& model, const KnowledgeGraph& g,
                             const PairSample& sample) {
    Tape tape;
    return build_report(model.predict(tape, sample), g, sample);
}

AttentionReport build_report(const ForwardTrace& trace, const KnowledgeGraph& g,
                             const PairSample& sample) {
    if (static_cast<int>(trace.groups.size()) != sample.group_count() ||
        trace.global_weights.size() != trace.groups.size()) {
        throw StateError("build_report: trace does not match the sample's groups");
    }
    AttentionReport report;
    report.student = g.entity(sample.student).value;
    report.course = g.entity(sample.course).value;
    report.prediction = trace.prediction;
    report.label = sample.label;

    auto paths_of = [&sample](std::size_t i) -> const std::vector<Path>& {
        return i < sample.ssp.size() ? sample.ssp[i].paths
                                     : sample.ckp[i - sample.ssp.size()].paths;
    };
    for (std::size_t i = 0; i < trace.groups.size(); ++i) {
        const GroupTrace& gt = trace.groups[i];
        GroupExplanation ge;
        ge.type = gt.type;
        ge.anchor = g.entity(gt.anchor).value;
        ge.outcome = gt.grade;
        ge.alpha = trace.global_weights[i];
        ge.value = gt.value;
        const std::vector<Path>& paths = paths_of(i);
        if (paths.size() != gt.local_weights.size()) {
            throw StateError("build_report: path count differs between trace and sample");
        }
        for (std::size_t p = 0; p < paths.size(); ++p) {
            ExplainedPath ep;
            ep.weight = gt.local_weights[p];
            ep.text = verbalize_path(g, paths[p]);
            for (const PathStep& st : paths[p].steps) {
                ep.step_labels.push_back(g.entity(st.value).value + " (" +
                                         to_string(st.node_kind) + ")");
                ep.relations.push_back(to_string(st.relation));
            }
            ge.paths.push_back(std::move(ep));
        }
        report.groups.push_back(std::move(ge));
    }

    // Descending alpha, stable so tied groups keep trace order.
    std::stable_sort(report.groups.begin(), report.groups.end(),
                     [](const GroupExplanation& a, const GroupExplanation& b) {
                         return a.alpha > b.alpha;
                     });

    // Highlight the top groups covering at least half of the total mass.
    const double total =
        std::accumulate(report.groups.begin(), report.groups.end(), 0.0,
                        [](double acc, const GroupExplanation& ge) { return acc + ge.alpha; });
    double covered = 0.0;
    for (GroupExplanation& ge : report.groups) {
        if (covered >= total / 2.0) break;
        ge.highlighted = true;
        covered += ge.alpha;
    }

    // Tags on highlighted similar-student paths, first-appearance order.
    for (const GroupExplanation& ge : report.groups) {
        if (!ge.highlighted || ge.type != GroupType::Ssp) continue;
        for (const SspGroup& grp : sample.ssp) {
            if (g.entity(grp.similar_student).value != ge.anchor) continue;
            for (const Path& p : grp.paths) {
                for (const PathStep& st : p.steps) {
                    if (st.node_kind != EntityKind::Tag) continue;
                    const std::string& tag = g.entity(st.value).value;
                    if (std::find(report.key_tags.begin(), report.key_tags.end(), tag) ==
                        report.key_tags.end()) {
                        report.key_tags.push_back(tag);
                    }
                }
            }
        }
    }
    return report;
}

double fail_evidence_mass(const ForwardTrace& trace) {
    double mass = 0.0;
    for (std::size_t i = 0; i < trace.groups.size(); ++i) {
        if (trace.groups[i].grade == GradeOutcome::Fail) mass += trace.global_weights[i];
    }
    return mass;
}

json AttentionReport::to_json() const {
    json groups_j = json::array();
    for (const GroupExplanation& ge : groups) {
        json paths_j = json::array();
        for (const ExplainedPath& ep : ge.paths) {
            paths_j.push_back(json{{"steps", ep.step_labels},
                                   {"relations", ep.relations},
                                   {"weight", ep.weight},
                                   {"text", ep.text}});
        }
        groups_j.push_back(json{{"type", ge.type == GroupType::Ssp ? "ssp" : "ckp"},
                                {"anchor", ge.anchor},
                                {"outcome", to_string(ge.outcome)},
                                {"alpha", ge.alpha},
                                {"value", ge.value},
                                {"highlighted", ge.highlighted},
                                {"paths", paths_j}});
    }
    return json{{"student", student},
                {"course", course},
                {"prediction", prediction},
                {"label", label},
                {"groups", groups_j},
                {"key_tags", key_tags}};
}

std::string AttentionReport::to_text() const {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "pair: " << student << " / " << course << "\n";
    os << "predicted fail probability: " << prediction;
    if (label >= 0) os << "   (actual: " << (label == 1 ? "Fail" : "Pass") << ")";
    os << "\n";
    if (!key_tags.empty()) {
        os << "key tags:";
        for (const std::string& t : key_tags) os << " [" << t << "]";
        os << "\n";
    }
    for (const GroupExplanation& ge : groups) {
        os << (ge.highlighted ? " * " : "   ") << "alpha=" << ge.alpha << "  "
           << (ge.type == GroupType::Ssp ? "similar student " : "prior course ") << ge.anchor
           << " (" << to_string(ge.outcome) << ")\n";
        for (const ExplainedPath& ep : ge.paths) {
            os << "       [w=" << ep.weight << "] " << ep.text << "\n";
        }
    }
    return os.str();
}

namespace {

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

}  // namespace

std::string AttentionReport::to_dot() const {
    // Edges keep the strongest width when several paths share them; nodes
    // and edges are emitted in sorted order for byte-stable output.
    std::map<std::string, std::string> nodes;  // id -> attrs
    std::map<std::tuple<std::string, std::string, std::string>, double> edges;
    auto node_id = [](const std::string& label) { return label; };
    nodes[node_id(student)] = "shape=box,style=bold";
    nodes[node_id(course)] = "shape=box,style=bold";
    for (const GroupExplanation& ge : groups) {
        for (const ExplainedPath& ep : ge.paths) {
            const double width = 0.5 + 6.0 * ge.alpha * ep.weight;
            for (std::size_t i = 0; i + 1 < ep.step_labels.size(); ++i) {
                const std::string from = ep.step_labels[i];
                const std::string to = ep.step_labels[i + 1];
                auto key = std::make_tuple(from, to, ep.relations[i]);
                nodes.emplace(from, "shape=ellipse");
                nodes.emplace(to, "shape=ellipse");
                auto [it, inserted] = edges.emplace(key, width);
                if (!inserted) it->second = std::max(it->second, width);
            }
        }
    }
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "digraph evidence {\n";
    os << "  rankdir=LR;\n";
    os << "  label=\"" << dot_escape(student) << " / " << dot_escape(course)
       << "  p_fail=" << prediction << "\";\n";
    for (const auto& [id, attrs] : nodes) {
        os << "  \"" << dot_escape(id) << "\" [" << attrs << "];\n";
    }
    for (const auto& [key, width] : edges) {
        os << "  \"" << dot_escape(std::get<0>(key)) << "\" -> \""
           << dot_escape(std::get<1>(key)) << "\" [label=\"" << dot_escape(std::get<2>(key))
           << "\",penwidth=" << width << "];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace pathgrade
