#pragma once
// Human-readable views of one prediction: per-group attention weights,
// verbalized evidence paths, and highlighted tags.
//
// Highlighting rule: walk the groups in descending global weight and mark
// them until the marked weights cover at least half of the total mass; every
// tag on a marked similar-student path is highlighted.

#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/model.hpp"

namespace pathgrade {

struct ExplainedPath {
    std::vector<std::string> step_labels;  // "value (kind)" per step
    std::vector<std::string> relations;    // relation out of each step
    double weight = 0.0;                   // local attention weight
    std::string text;                      // template rendering
};

struct GroupExplanation {
    GroupType type = GroupType::Ssp;
    std::string anchor;  // similar student or prior course display value
    GradeOutcome outcome = GradeOutcome::Pass;
    double alpha = 0.0;  // global weight, trace order preserved
    double value = 0.0;  // scalar grade projection
    bool highlighted = false;
    std::vector<ExplainedPath> paths;
};

struct AttentionReport {
    std::string student;
    std::string course;
    double prediction = 0.0;
    int label = -1;  // -1 when unknown
    std::vector<GroupExplanation> groups;  // descending alpha
    std::vector<std::string> key_tags;     // tags on highlighted SSP paths

    nlohmann::json to_json() const;
    std::string to_text() const;
    // Pair subgraph; evidence edge pen-widths grow with attention weight.
    std::string to_dot() const;
};

// Template rendering with an arrow-joined fallback for unrecognized shapes.
std::string verbalize_path(const KnowledgeGraph& g, const Path& path);

// Runs the forward pass for the sample and assembles the report; weights are
// copied from the trace without renormalization.
AttentionReport build_report(const Model& model, const KnowledgeGraph& g,
                             const PairSample& sample);
AttentionReport build_report(const ForwardTrace& trace, const KnowledgeGraph& g,
                             const PairSample& sample);

// Share of global attention mass on groups whose grade is Fail.
double fail_evidence_mass(const ForwardTrace& trace);

}  // namespace pathgrade
