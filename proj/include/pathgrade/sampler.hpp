#pragma once
// Path sampling for (student, course) pairs.
//
// Two fixed templates are enumerated:
//   similar-student path, 5 steps:
//     s -have-> tag -belong_to-> s' -get_grade-> grade -in-> c <end>
//   course-knowledge path, 4 steps:
//     s -get_grade-> grade -in-> c' -prerequisite/related-> c <end>
//
// A dataset is a temporal split: the held-out term becomes the test set,
// everything earlier the training set, and evidence paths for every pair
// only traverse grades dated strictly before the held-out term.

#include <optional>
#include <string>
#include <vector>

#include "pathgrade/kg.hpp"

namespace pathgrade {

struct PathStep {
    int value = -1;
    EntityKind node_kind = EntityKind::Student;
    Relation relation = Relation::EndMarker;

    bool operator==(const PathStep&) const = default;
};

struct Path {
    std::vector<PathStep> steps;

    bool operator==(const Path&) const = default;
};

struct SspGroup {
    int similar_student = -1;
    std::vector<Path> paths;
    GradeOutcome terminal_grade = GradeOutcome::Pass;
};

struct CkpGroup {
    int related_course = -1;
    std::vector<Path> paths;
    GradeOutcome prior_grade = GradeOutcome::Pass;
};

// One (student, course) pair with grouped evidence. label 1 means fail.
struct PairSample {
    int student = -1;
    int course = -1;
    std::optional<int> term;
    std::vector<SspGroup> ssp;
    std::vector<CkpGroup> ckp;
    int label = 0;

    int group_count() const { return static_cast<int>(ssp.size() + ckp.size()); }
};

struct SamplerConfig {
    int similar_limit = 60;
    int max_paths_per_group = 10;
};

// Candidate similar students for (s, c): every s' != s with a grade in c and
// at least one shared tag, ranked by shared-tag path count descending, ties
// by ascending id, truncated to limit. With before_term set, only grades
// dated strictly earlier count.
std::vector<std::pair<int, int>> select_similar_students(const KnowledgeGraph& g, int s, int c,
                                                         int limit,
                                                         std::optional<int> before_term = {});

// One group per similar student, one 5-step path per shared tag (ascending
// tag id, capped at max_paths_per_group).
std::vector<SspGroup> enumerate_ssp(const KnowledgeGraph& g, int s, int c,
                                    const std::vector<int>& similar,
                                    int max_paths_per_group = 10);

// One group per course c' that links to c via prerequisite/related and in
// which s holds a grade (dated before before_term when set); one 4-step path
// per linking relation edge.
std::vector<CkpGroup> enumerate_ckp(const KnowledgeGraph& g, int s, int c,
                                    std::optional<int> before_term = {},
                                    int max_paths_per_group = 10);

// Full sample for an enrolled pair; nullopt when no evidence paths exist.
std::optional<PairSample> assemble_sample(const KnowledgeGraph& g, int s, int c,
                                          const SamplerConfig& config,
                                          std::optional<int> before_term = {});

struct DatasetBuild {
    std::vector<PairSample> train;
    std::vector<PairSample> test;
    int dropped_train = 0;   // train pairs with zero evidence
    int dropped_test = 0;    // test pairs with zero evidence
    int skipped_future = 0;  // enrollments dated after the held-out term
};

DatasetBuild build_dataset(const KnowledgeGraph& g, int split_term,
                           const SamplerConfig& config = {});

// Line-delimited JSON, one PairSample per line.
void save_dataset(const std::vector<PairSample>& samples, const KnowledgeGraph& g,
                  const std::string& path);
std::vector<PairSample> load_dataset(const std::string& path);

}  // namespace pathgrade
