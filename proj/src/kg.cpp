#include "pathgrade/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pathgrade {

namespace {

const std::array<std::string, kNumEntityKinds> kKindNames = {"Student", "Tag", "Course", "Grade"};
const std::array<std::string, kNumRelations> kRelationNames = {
    "have", "belong_to", "get_grade", "in", "prerequisite", "related", "end_marker"};
const std::array<std::string, 2> kOutcomeNames = {"Pass", "Fail"};

}  // namespace

const std::string& to_string(EntityKind k) { return kKindNames[static_cast<int>(k)]; }
const std::string& to_string(Relation r) { return kRelationNames[static_cast<int>(r)]; }
const std::string& to_string(GradeOutcome o) { return kOutcomeNames[static_cast<int>(o)]; }

EntityKind entity_kind_from(const std::string& name) {
    for (int i = 0; i < kNumEntityKinds; ++i) {
        if (kKindNames[static_cast<std::size_t>(i)] == name) return static_cast<EntityKind>(i);
    }
    throw SchemaError("unknown entity kind '" + name + "'");
}

Relation relation_from(const std::string& name) {
    for (int i = 0; i < kNumStoredRelations; ++i) {
        if (kRelationNames[static_cast<std::size_t>(i)] == name) return static_cast<Relation>(i);
    }
    if (name == kRelationNames[static_cast<int>(Relation::EndMarker)]) {
        throw SchemaError("relation 'end_marker' is a path terminator and cannot be stored");
    }
    throw SchemaError("unknown relation '" + name + "'");
}

std::pair<EntityKind, EntityKind> relation_signature(Relation r) {
    switch (r) {
        case Relation::Have: return {EntityKind::Student, EntityKind::Tag};
        case Relation::BelongTo: return {EntityKind::Tag, EntityKind::Student};
        case Relation::GetGrade: return {EntityKind::Student, EntityKind::Grade};
        case Relation::In: return {EntityKind::Grade, EntityKind::Course};
        case Relation::Prerequisite:
        case Relation::Related: return {EntityKind::Course, EntityKind::Course};
        case Relation::EndMarker: break;
    }
    throw SchemaError("relation 'end_marker' has no signature");
}

GradeValue parse_grade_value(const std::string& value) {
    GradeValue out;
    const auto hash = value.find('#');
    const std::string head = value.substr(0, hash);
    if (head == "Pass") {
        out.outcome = GradeOutcome::Pass;
    } else if (head == "Fail") {
        out.outcome = GradeOutcome::Fail;
    } else {
        throw SchemaError("grade value '" + value + "' must start with Pass or Fail");
    }
    if (hash != std::string::npos) {
        const std::string suffix = value.substr(hash + 1);
        if (!suffix.empty() && suffix[0] == 't') {
            std::size_t i = 1;
            long term = 0;
            bool digits = false;
            while (i < suffix.size() && suffix[i] >= '0' && suffix[i] <= '9') {
                term = term * 10 + (suffix[i] - '0');
                digits = true;
                ++i;
            }
            if (digits && (i == suffix.size() || suffix[i] == '_')) {
                out.term = static_cast<int>(term);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// TripleSet

int TripleSet::intern(EntityKind kind, const std::string& value) {
    auto key = std::make_pair(static_cast<int>(kind), value);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(entities.size());
    // Validate the grade grammar at interning time so every grade node has a
    // decodable outcome.
    if (kind == EntityKind::Grade) parse_grade_value(value);
    entities.push_back(Entity{id, kind, value});
    index_.emplace(std::move(key), id);
    return id;
}

std::optional<int> TripleSet::find(EntityKind kind, const std::string& value) const {
    auto it = index_.find(std::make_pair(static_cast<int>(kind), value));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void TripleSet::add_triple(EntityKind hk, const std::string& hv, Relation r, EntityKind tk,
                           const std::string& tv) {
    const auto sig = relation_signature(r);
    if (hk != sig.first || tk != sig.second) {
        throw SchemaError("triple (" + to_string(hk) + ", " + to_string(r) + ", " + to_string(tk) +
                          ") violates relation signature (" + to_string(sig.first) + ", " +
                          to_string(sig.second) + ")");
    }
    const int h = intern(hk, hv);
    const int t = intern(tk, tv);
    triples.push_back(Triple{h, r, t});
}

TripleSet load_triples(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open triple file '" + path + "'");
    TripleSet ts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 5) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields, got " +
                             std::to_string(fields.size()));
        }
        try {
            // Validate left to right so diagnostics name the first bad token.
            const EntityKind head_kind = entity_kind_from(fields[0]);
            const Relation rel = relation_from(fields[2]);
            const EntityKind tail_kind = entity_kind_from(fields[3]);
            ts.add_triple(head_kind, fields[1], rel, tail_kind, fields[4]);
        } catch (const SchemaError& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ts;
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

KnowledgeGraph KnowledgeGraph::build(TripleSet ts) {
    KnowledgeGraph g;
    // Entity ids are canonicalized by first appearance in the triple stream,
    // so rebuilding from a saved triple file yields the same ids the
    // originating graph had, whatever order the TripleSet interned entities
    // in. Entities no triple references are dropped; nothing can reach them.
    const int n_interned = static_cast<int>(ts.entities.size());
    std::vector<int> remap(ts.entities.size(), -1);
    auto canon = [&](int old_id) {
        int& m = remap[static_cast<std::size_t>(old_id)];
        if (m < 0) {
            m = static_cast<int>(g.entities_.size());
            Entity e = ts.entities[static_cast<std::size_t>(old_id)];
            e.id = m;
            g.entities_.push_back(std::move(e));
        }
        return m;
    };
    for (Triple& t : ts.triples) {
        if (t.head < 0 || t.head >= n_interned || t.tail < 0 || t.tail >= n_interned) {
            throw RangeError("triple references entity id out of range");
        }
        const auto sig = relation_signature(t.relation);
        if (ts.entities[static_cast<std::size_t>(t.head)].kind != sig.first ||
            ts.entities[static_cast<std::size_t>(t.tail)].kind != sig.second) {
            throw SchemaError("triple violates signature of relation '" + to_string(t.relation) + "'");
        }
        t.head = canon(t.head);
        t.tail = canon(t.tail);
    }
    for (const Entity& e : g.entities_) {
        g.by_kind_[static_cast<int>(e.kind)].push_back(e.id);
        g.value_index_.emplace(std::make_pair(static_cast<int>(e.kind), e.value), e.id);
    }
    g.adjacency_.resize(g.entities_.size());

    std::set<std::tuple<int, int, int>> seen;
    for (const Triple& t : ts.triples) {
        if (!seen.insert({t.head, static_cast<int>(t.relation), t.tail}).second) continue;
        g.triples_.push_back(t);
        g.adjacency_[static_cast<std::size_t>(t.head)][static_cast<int>(t.relation)].push_back(t.tail);
        ++g.triple_counts_[static_cast<int>(t.relation)];
    }
    for (auto& per_entity : g.adjacency_) {
        for (auto& lst : per_entity) std::sort(lst.begin(), lst.end());
    }

    // Derive enrollments: every grade node must be referenced by exactly one
    // student and point via `in` to exactly one course.
    std::map<int, int> grade_student;
    for (const Triple& t : g.triples_) {
        if (t.relation != Relation::GetGrade) continue;
        auto [it, inserted] = grade_student.emplace(t.tail, t.head);
        if (!inserted) {
            throw IntegrityError("grade node '" + g.entities_[static_cast<std::size_t>(t.tail)].value +
                                 "' is shared by multiple students");
        }
    }
    for (int id : g.by_kind_[static_cast<int>(EntityKind::Grade)]) {
        const auto& in_edges = g.adjacency_[static_cast<std::size_t>(id)][static_cast<int>(Relation::In)];
        const Entity& e = g.entities_[static_cast<std::size_t>(id)];
        if (in_edges.size() != 1) {
            throw IntegrityError("grade node '" + e.value + "' has " +
                                 std::to_string(in_edges.size()) + " 'in' edges, expected 1");
        }
        auto it = grade_student.find(id);
        if (it == grade_student.end()) {
            throw IntegrityError("grade node '" + e.value + "' is not attached to any student");
        }
        Enrollment rec;
        rec.student = it->second;
        rec.course = in_edges[0];
        rec.grade_id = id;
        const GradeValue gv = parse_grade_value(e.value);
        rec.outcome = gv.outcome;
        rec.term = gv.term;
        auto [eit, einserted] = g.enrollment_.emplace(std::make_pair(rec.student, rec.course), id);
        if (!einserted) {
            throw IntegrityError("duplicate enrollment for student '" +
                                 g.entities_[static_cast<std::size_t>(rec.student)].value +
                                 "' in course '" +
                                 g.entities_[static_cast<std::size_t>(rec.course)].value + "'");
        }
        g.grade_infos_.emplace(id, rec);
    }
    g.enrollment_list_.reserve(g.grade_infos_.size());
    for (const auto& [id, rec] : g.grade_infos_) g.enrollment_list_.push_back(rec);
    return g;
}

const Entity& KnowledgeGraph::entity(int id) const {
    if (id < 0 || id >= n_entities()) {
        throw RangeError("entity id " + std::to_string(id) + " out of range");
    }
    return entities_[static_cast<std::size_t>(id)];
}

std::optional<int> KnowledgeGraph::find_entity(EntityKind kind, const std::string& value) const {
    auto it = value_index_.find(std::make_pair(static_cast<int>(kind), value));
    if (it == value_index_.end()) return std::nullopt;
    return it->second;
}

const std::vector<int>& KnowledgeGraph::neighbors(int e, Relation r) const {
    if (e < 0 || e >= n_entities()) {
        throw RangeError("neighbors: entity id " + std::to_string(e) + " out of range");
    }
    if (r == Relation::EndMarker) {
        throw SchemaError("neighbors: end_marker is not a stored relation");
    }
    return adjacency_[static_cast<std::size_t>(e)][static_cast<int>(r)];
}

std::int64_t KnowledgeGraph::triple_count(Relation r) const {
    if (r == Relation::EndMarker) return 0;
    return triple_counts_[static_cast<int>(r)];
}

std::optional<int> KnowledgeGraph::enrollment_grade(int student, int course) const {
    auto it = enrollment_.find(std::make_pair(student, course));
    if (it == enrollment_.end()) return std::nullopt;
    return it->second;
}

const KnowledgeGraph::Enrollment& KnowledgeGraph::grade_info(int grade_id) const {
    auto it = grade_infos_.find(grade_id);
    if (it == grade_infos_.end()) {
        throw RangeError("grade_info: id " + std::to_string(grade_id) + " is not a grade node");
    }
    return it->second;
}

bool KnowledgeGraph::all_enrollments_have_terms() const {
    for (const auto& rec : enrollment_list_) {
        if (!rec.term.has_value()) return false;
    }
    return true;
}

const std::vector<int>& KnowledgeGraph::ids_of(EntityKind kind) const {
    return by_kind_[static_cast<int>(kind)];
}

std::string KnowledgeGraph::summary() const {
    std::ostringstream os;
    os << "entities: " << n_entities() << "\n";
    for (int k = 0; k < kNumEntityKinds; ++k) {
        os << "  " << kKindNames[static_cast<std::size_t>(k)] << ": "
           << by_kind_[static_cast<std::size_t>(k)].size() << "\n";
    }
    std::int64_t total = 0;
    for (int r = 0; r < kNumStoredRelations; ++r) total += triple_counts_[static_cast<std::size_t>(r)];
    os << "triples: " << total << "\n";
    for (int r = 0; r < kNumStoredRelations; ++r) {
        os << "  " << kRelationNames[static_cast<std::size_t>(r)] << ": "
           << triple_counts_[static_cast<std::size_t>(r)] << "\n";
    }
    return os.str();
}

void save_triples(const KnowledgeGraph& g, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    for (const Triple& t : g.triples()) {
        const Entity& h = g.entity(t.head);
        const Entity& tl = g.entity(t.tail);
        os << to_string(h.kind) << '\t' << h.value << '\t' << to_string(t.relation) << '\t'
           << to_string(tl.kind) << '\t' << tl.value << '\n';
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace pathgrade
