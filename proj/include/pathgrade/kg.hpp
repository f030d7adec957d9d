#pragma once
// Typed knowledge graph over Student / Tag / Course / Grade entities.
//
// All entity kinds share one dense id space so a single embedding table can
// cover every node. Grade nodes are reified per enrollment: each
// (student, course) record gets its own Pass/Fail node, whose display value
// follows the grammar
//
//     Pass | Fail [ '#' suffix ]
//
// and a suffix of the form t<digits> or t<digits>_<anything> carries the
// enrollment term. The triple file is tab-separated, one triple per line:
//
//     head_kind \t head_value \t relation \t tail_kind \t tail_value

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pathgrade/errors.hpp"

namespace pathgrade {

enum class EntityKind : std::uint8_t { Student = 0, Tag, Course, Grade };
constexpr int kNumEntityKinds = 4;

enum class Relation : std::uint8_t {
    Have = 0,
    BelongTo,
    GetGrade,
    In,
    Prerequisite,
    Related,
    EndMarker,  // path terminator only, never stored in the graph
};
constexpr int kNumRelations = 7;
constexpr int kNumStoredRelations = 6;

enum class GradeOutcome : std::uint8_t { Pass = 0, Fail };

const std::string& to_string(EntityKind k);
const std::string& to_string(Relation r);
const std::string& to_string(GradeOutcome o);
EntityKind entity_kind_from(const std::string& name);
Relation relation_from(const std::string& name);

// (head kind, tail kind) signature of a stored relation.
std::pair<EntityKind, EntityKind> relation_signature(Relation r);

struct Entity {
    int id = -1;
    EntityKind kind = EntityKind::Student;
    std::string value;
};

struct Triple {
    int head = -1;
    Relation relation = Relation::Have;
    int tail = -1;

    bool operator==(const Triple&) const = default;
};

// Outcome and optional term decoded from a grade node's display value.
struct GradeValue {
    GradeOutcome outcome = GradeOutcome::Pass;
    std::optional<int> term;
};
GradeValue parse_grade_value(const std::string& value);

// Entities interned to dense ids in first-seen order, plus the triples that
// reference them.
struct TripleSet {
    std::vector<Entity> entities;
    std::vector<Triple> triples;

    // Interns (kind, value), returning the existing id when already seen.
    int intern(EntityKind kind, const std::string& value);
    std::optional<int> find(EntityKind kind, const std::string& value) const;
    void add_triple(EntityKind hk, const std::string& hv, Relation r, EntityKind tk,
                    const std::string& tv);

private:
    std::map<std::pair<int, std::string>, int> index_;
};

TripleSet load_triples(const std::string& path);

class KnowledgeGraph {
public:
    // Validates signatures, drops duplicate triples, builds sorted adjacency
    // and derives the enrollment map from get_grade -> in chains.
    static KnowledgeGraph build(TripleSet ts);

    int n_entities() const { return static_cast<int>(entities_.size()); }
    const Entity& entity(int id) const;
    const std::vector<Entity>& entities() const { return entities_; }
    std::optional<int> find_entity(EntityKind kind, const std::string& value) const;

    // Tails of e under r, ascending and duplicate-free.
    const std::vector<int>& neighbors(int e, Relation r) const;

    const std::vector<Triple>& triples() const { return triples_; }
    std::int64_t triple_count(Relation r) const;

    struct Enrollment {
        int student = -1;
        int course = -1;
        int grade_id = -1;
        GradeOutcome outcome = GradeOutcome::Pass;
        std::optional<int> term;
    };
    // Grade node id for (student, course), if enrolled.
    std::optional<int> enrollment_grade(int student, int course) const;
    const Enrollment& grade_info(int grade_id) const;
    const std::vector<Enrollment>& enrollments() const { return enrollment_list_; }
    bool all_enrollments_have_terms() const;

    // Ids of one kind, ascending.
    const std::vector<int>& ids_of(EntityKind kind) const;

    std::string summary() const;

private:
    std::vector<Entity> entities_;
    std::vector<Triple> triples_;  // deduplicated, first-seen order
    std::vector<std::array<std::vector<int>, kNumStoredRelations>> adjacency_;
    std::map<std::pair<int, int>, int> enrollment_;  // (student, course) -> grade id
    std::map<int, Enrollment> grade_infos_;
    std::vector<Enrollment> enrollment_list_;
    std::array<std::vector<int>, kNumEntityKinds> by_kind_;
    std::array<std::int64_t, kNumStoredRelations> triple_counts_{};
    std::map<std::pair<int, std::string>, int> value_index_;
};

void save_triples(const KnowledgeGraph& g, const std::string& path);

}  // namespace pathgrade
