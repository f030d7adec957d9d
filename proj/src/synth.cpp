#include "pathgrade/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace pathgrade {

using nlohmann::json;

const std::vector<TagCategory>& default_tag_catalog() {
    static const std::vector<TagCategory> catalog = {
        {"work_ethic", {{"Grind", -1.0}, {"Ordinary", 0.0}, {"Slacker", 1.0}}, true},
        {"failure_band",
         {{"None", -1.0}, {"Few", 0.0}, {"Repeat Risk", 1.0}, {"Drop out Risk", 2.0}},
         true},
        {"trend", {{"Ascend", -1.0}, {"Descend", 1.0}}, true},
        {"breakfast", {{"Breakfast Habit", -1.0}, {"No Breakfast Habit", 1.0}}, true},
        {"sleep", {{"Sleep on Time", -1.0}, {"Sleep Late", 1.0}}, true},
        {"dietary", {{"Dietary Regular", 0.0}, {"Dietary Irregular", 0.0}}, false},
        {"consumption",
         {{"Low Consumption", 0.0}, {"Normal Consumption", 0.0}, {"High Consumption", 0.0}},
         false},
    };
    return catalog;
}

void SynthConfig::validate() const {
    if (n_students < 2) throw ConfigError("synth config: n_students must be >= 2");
    if (n_terms < 2) throw ConfigError("synth config: n_terms must be >= 2");
    if (n_cohorts < 1 || n_cohorts > n_terms) {
        throw ConfigError("synth config: n_cohorts must lie in [1, n_terms]");
    }
    if (n_levels() < 1) throw ConfigError("synth config: n_terms - n_cohorts + 1 must be >= 1");
    if (n_courses < 1 || n_courses % n_levels() != 0) {
        throw ConfigError("synth config: n_courses must be a positive multiple of the " +
                          std::to_string(n_levels()) + " levels");
    }
    if (courses_per_term < 1 || courses_per_term > courses_per_level()) {
        throw ConfigError("synth config: courses_per_term must lie in [1, courses per level]");
    }
    if (prereqs_per_course < 0 || prereqs_per_course > courses_per_level()) {
        throw ConfigError("synth config: prereqs_per_course must lie in [0, courses per level]");
    }
    if (related_per_course < 0 ||
        related_per_course > n_courses - courses_per_level()) {
        throw ConfigError("synth config: related_per_course exceeds the cross-level pool");
    }
    if (tag_presence < 0 || tag_presence > 1) {
        throw ConfigError("synth config: tag_presence must lie in [0, 1]");
    }
    if (noise_sigma < 0) throw ConfigError("synth config: noise_sigma must be >= 0");
    if (base_rate <= 0 || base_rate >= 0.5) {
        throw ConfigError("synth config: base_rate must lie in (0, 0.5)");
    }
    if (difficulty_jitter < 0) throw ConfigError("synth config: difficulty_jitter must be >= 0");
    if (catalog.empty()) throw ConfigError("synth config: tag catalog must be non-empty");
    for (const TagCategory& cat : catalog) {
        if (cat.levels.empty()) {
            throw ConfigError("synth config: tag category '" + cat.name + "' has no levels");
        }
    }
}

json SynthConfig::to_json() const {
    json catalog_j = json::array();
    for (const TagCategory& cat : catalog) {
        json levels = json::array();
        for (const TagLevel& lv : cat.levels) {
            levels.push_back(json{{"name", lv.name}, {"badness", lv.badness}});
        }
        catalog_j.push_back(
            json{{"name", cat.name}, {"levels", levels}, {"informative", cat.informative}});
    }
    return json{{"n_students", n_students},
                {"n_courses", n_courses},
                {"n_terms", n_terms},
                {"n_cohorts", n_cohorts},
                {"courses_per_term", courses_per_term},
                {"prereqs_per_course", prereqs_per_course},
                {"related_per_course", related_per_course},
                {"tag_presence", tag_presence},
                {"noise_sigma", noise_sigma},
                {"w_tags", w_tags},
                {"w_prereq", w_prereq},
                {"w_skill", w_skill},
                {"base_rate", base_rate},
                {"difficulty_step", difficulty_step},
                {"difficulty_jitter", difficulty_jitter},
                {"seed", seed},
                {"catalog", catalog_j}};
}

SynthConfig SynthConfig::from_json(const json& j) { return from_json(j, SynthConfig{}); }

SynthConfig SynthConfig::from_json(const json& j, SynthConfig base) {
    SynthConfig cfg = std::move(base);
    for (const auto& [key, value] : j.items()) {
        if (key == "n_students") {
            cfg.n_students = value.get<int>();
        } else if (key == "n_courses") {
            cfg.n_courses = value.get<int>();
        } else if (key == "n_terms") {
            cfg.n_terms = value.get<int>();
        } else if (key == "n_cohorts") {
            cfg.n_cohorts = value.get<int>();
        } else if (key == "courses_per_term") {
            cfg.courses_per_term = value.get<int>();
        } else if (key == "prereqs_per_course") {
            cfg.prereqs_per_course = value.get<int>();
        } else if (key == "related_per_course") {
            cfg.related_per_course = value.get<int>();
        } else if (key == "tag_presence") {
            cfg.tag_presence = value.get<double>();
        } else if (key == "noise_sigma") {
            cfg.noise_sigma = value.get<double>();
        } else if (key == "w_tags") {
            cfg.w_tags = value.get<double>();
        } else if (key == "w_prereq") {
            cfg.w_prereq = value.get<double>();
        } else if (key == "w_skill") {
            cfg.w_skill = value.get<double>();
        } else if (key == "base_rate") {
            cfg.base_rate = value.get<double>();
        } else if (key == "difficulty_step") {
            cfg.difficulty_step = value.get<double>();
        } else if (key == "difficulty_jitter") {
            cfg.difficulty_jitter = value.get<double>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "catalog") {
            // to_json output must round-trip, so the exact default passes.
            static const json default_catalog = SynthConfig{}.to_json().at("catalog");
            if (value != default_catalog) {
                throw ConfigError(
                    "synth config: the tag catalog is fixed and cannot be overridden");
            }
        } else {
            throw ConfigError("synth config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

SynthConfig SynthConfig::null_signal() {
    SynthConfig cfg;
    cfg.w_tags = 0.0;
    cfg.w_prereq = 0.0;
    cfg.w_skill = 0.0;
    return cfg;
}

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::string pad_number(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

struct Attempt {
    TripleSet triples;
    json truth;
    bool ok = false;
    int bad_term = -1;
};

// Distinct draw of k items from [0, n) in ascending order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < k) picked.insert(rng.uniform_int(n));
    return {picked.begin(), picked.end()};
}

Attempt run_attempt(const SynthConfig& cfg, std::uint64_t seed) {
    Attempt out;
    Rng diligence_rng = Rng(seed).split(0);
    Rng tag_rng = Rng(seed).split(1);
    Rng course_rng = Rng(seed).split(2);
    Rng enroll_rng = Rng(seed).split(3);
    Rng noise_rng = Rng(seed).split(4);
    Rng label_rng = Rng(seed).split(5);

    const int n_levels = cfg.n_levels();
    const int per_level = cfg.courses_per_level();

    // Students: latent diligence and display names.
    std::vector<double> diligence(static_cast<std::size_t>(cfg.n_students));
    std::vector<std::string> student_names;
    for (int s = 0; s < cfg.n_students; ++s) {
        diligence[static_cast<std::size_t>(s)] = diligence_rng.normal();
        student_names.push_back("S" + pad_number(s, 4));
    }

    // Tags: per category either absent or one level; informative categories
    // bin the noised negative diligence into equal-mass levels.
    std::vector<std::vector<std::pair<int, int>>> owned(
        static_cast<std::size_t>(cfg.n_students));  // (category, level)
    std::vector<double> neg_load(static_cast<std::size_t>(cfg.n_students), 0.0);
    for (int s = 0; s < cfg.n_students; ++s) {
        for (int c = 0; c < static_cast<int>(cfg.catalog.size()); ++c) {
            const TagCategory& cat = cfg.catalog[static_cast<std::size_t>(c)];
            const int n_lv = static_cast<int>(cat.levels.size());
            // Draw in fixed order so ownership and level stay aligned.
            const bool has = tag_rng.uniform() < cfg.tag_presence;
            int level;
            if (cat.informative) {
                const double z = -(diligence[static_cast<std::size_t>(s)] +
                                   tag_rng.normal(0.0, 0.5));
                const double q = std_normal_cdf(z / std::sqrt(1.25));
                level = std::min(n_lv - 1, static_cast<int>(q * n_lv));
            } else {
                level = tag_rng.uniform_int(n_lv);
            }
            if (!has) continue;
            owned[static_cast<std::size_t>(s)].push_back({c, level});
            neg_load[static_cast<std::size_t>(s)] +=
                cat.levels[static_cast<std::size_t>(level)].badness;
        }
    }

    // Courses: level layout, difficulty, prerequisites one level down,
    // related partners across levels (both directions emitted).
    std::vector<int> course_level(static_cast<std::size_t>(cfg.n_courses));
    std::vector<double> difficulty(static_cast<std::size_t>(cfg.n_courses));
    std::vector<std::string> course_names;
    const double mid = (n_levels + 1) / 2.0;
    for (int c = 0; c < cfg.n_courses; ++c) {
        const int level = c / per_level + 1;
        course_level[static_cast<std::size_t>(c)] = level;
        difficulty[static_cast<std::size_t>(c)] =
            (level - mid) * cfg.difficulty_step +
            course_rng.uniform(-cfg.difficulty_jitter, cfg.difficulty_jitter);
        course_names.push_back("CRS-L" + std::to_string(level) + "-" +
                               pad_number(c % per_level, 2));
    }
    std::vector<std::vector<int>> prereqs(static_cast<std::size_t>(cfg.n_courses));
    std::vector<std::vector<int>> related(static_cast<std::size_t>(cfg.n_courses));
    for (int c = 0; c < cfg.n_courses; ++c) {
        const int level = course_level[static_cast<std::size_t>(c)];
        if (level > 1 && cfg.prereqs_per_course > 0) {
            const int base = (level - 2) * per_level;
            for (int k : sample_without_replacement(per_level, cfg.prereqs_per_course,
                                                    course_rng)) {
                prereqs[static_cast<std::size_t>(c)].push_back(base + k);
            }
        }
        if (cfg.related_per_course > 0) {
            std::vector<int> pool;
            for (int other = 0; other < cfg.n_courses; ++other) {
                if (course_level[static_cast<std::size_t>(other)] != level) pool.push_back(other);
            }
            for (int k : sample_without_replacement(static_cast<int>(pool.size()),
                                                    cfg.related_per_course, course_rng)) {
                related[static_cast<std::size_t>(c)].push_back(pool[static_cast<std::size_t>(k)]);
            }
        }
    }

    // Enrollment: cohort g studies level l during term g + l - 1.
    struct Enroll {
        int student, course, term;
        double p_fail = 0;
        int label = 0;
        bool prereq_failed = false;
    };
    std::vector<Enroll> enrolls;
    for (int s = 0; s < cfg.n_students; ++s) {
        const int cohort = s % cfg.n_cohorts + 1;
        for (int level = 1; level <= n_levels; ++level) {
            const int term = cohort + level - 1;
            const int base = (level - 1) * per_level;
            for (int k :
                 sample_without_replacement(per_level, cfg.courses_per_term, enroll_rng)) {
                enrolls.push_back(Enroll{s, base + k, term});
            }
        }
    }
    std::sort(enrolls.begin(), enrolls.end(), [](const Enroll& a, const Enroll& b) {
        return std::tie(a.term, a.student, a.course) < std::tie(b.term, b.student, b.course);
    });

    // Labels term by term; the per-term intercept is bisected so the mean
    // fail probability over the term's rows hits base_rate exactly.
    std::map<std::pair<int, int>, int> outcome;  // (student, course) -> label
    std::vector<double> term_intercepts;
    std::size_t lo_i = 0;
    for (int term = 1; term <= cfg.n_terms; ++term) {
        std::size_t hi_i = lo_i;
        while (hi_i < enrolls.size() && enrolls[hi_i].term == term) ++hi_i;
        if (lo_i == hi_i) {
            term_intercepts.push_back(0.0);
            continue;
        }
        std::vector<double> signal(hi_i - lo_i);
        std::vector<double> eps(hi_i - lo_i);
        std::vector<double> u(hi_i - lo_i);
        for (std::size_t i = lo_i; i < hi_i; ++i) {
            Enroll& e = enrolls[i];
            for (int p : prereqs[static_cast<std::size_t>(e.course)]) {
                auto it = outcome.find({e.student, p});
                if (it != outcome.end() && it->second == 1) e.prereq_failed = true;
            }
            signal[i - lo_i] = cfg.w_tags * neg_load[static_cast<std::size_t>(e.student)] +
                               cfg.w_prereq * (e.prereq_failed ? 1.0 : 0.0) +
                               cfg.w_skill * (difficulty[static_cast<std::size_t>(e.course)] -
                                              diligence[static_cast<std::size_t>(e.student)]);
            eps[i - lo_i] = noise_rng.normal(0.0, cfg.noise_sigma);
            u[i - lo_i] = label_rng.uniform();
        }
        double lo_b = -30.0, hi_b = 30.0;
        for (int it = 0; it < 60; ++it) {
            const double b = (lo_b + hi_b) / 2.0;
            double mean = 0.0;
            for (std::size_t i = 0; i < signal.size(); ++i) {
                mean += stable_sigmoid(b + signal[i] + eps[i]);
            }
            mean /= static_cast<double>(signal.size());
            (mean < cfg.base_rate ? lo_b : hi_b) = b;
        }
        const double b = (lo_b + hi_b) / 2.0;
        term_intercepts.push_back(b);
        int fails = 0;
        for (std::size_t i = lo_i; i < hi_i; ++i) {
            Enroll& e = enrolls[i];
            e.p_fail = stable_sigmoid(b + signal[i - lo_i] + eps[i - lo_i]);
            e.label = u[i - lo_i] < e.p_fail ? 1 : 0;
            fails += e.label;
            outcome[{e.student, e.course}] = e.label;
        }
        if (fails == 0 || fails == static_cast<int>(hi_i - lo_i)) {
            out.bad_term = term;
            return out;
        }
        lo_i = hi_i;
    }

    // Triples. Interning up front only fixes the TripleSet's own id space;
    // graph construction re-canonicalizes ids by first triple appearance.
    TripleSet& ts = out.triples;
    for (int s = 0; s < cfg.n_students; ++s) {
        ts.intern(EntityKind::Student, student_names[static_cast<std::size_t>(s)]);
    }
    for (const TagCategory& cat : cfg.catalog) {
        for (const TagLevel& lv : cat.levels) ts.intern(EntityKind::Tag, lv.name);
    }
    for (int c = 0; c < cfg.n_courses; ++c) {
        ts.intern(EntityKind::Course, course_names[static_cast<std::size_t>(c)]);
    }
    for (int s = 0; s < cfg.n_students; ++s) {
        for (const auto& [cat_i, level_i] : owned[static_cast<std::size_t>(s)]) {
            const std::string& tag = cfg.catalog[static_cast<std::size_t>(cat_i)]
                                         .levels[static_cast<std::size_t>(level_i)]
                                         .name;
            const std::string& student = student_names[static_cast<std::size_t>(s)];
            ts.add_triple(EntityKind::Student, student, Relation::Have, EntityKind::Tag, tag);
            ts.add_triple(EntityKind::Tag, tag, Relation::BelongTo, EntityKind::Student, student);
        }
    }
    for (int c = 0; c < cfg.n_courses; ++c) {
        for (int p : prereqs[static_cast<std::size_t>(c)]) {
            ts.add_triple(EntityKind::Course, course_names[static_cast<std::size_t>(p)],
                          Relation::Prerequisite, EntityKind::Course,
                          course_names[static_cast<std::size_t>(c)]);
        }
        for (int r : related[static_cast<std::size_t>(c)]) {
            ts.add_triple(EntityKind::Course, course_names[static_cast<std::size_t>(c)],
                          Relation::Related, EntityKind::Course,
                          course_names[static_cast<std::size_t>(r)]);
            ts.add_triple(EntityKind::Course, course_names[static_cast<std::size_t>(r)],
                          Relation::Related, EntityKind::Course,
                          course_names[static_cast<std::size_t>(c)]);
        }
    }
    int grade_serial = 0;
    for (const Enroll& e : enrolls) {
        const std::string grade = std::string(e.label == 1 ? "Fail" : "Pass") + "#t" +
                                  std::to_string(e.term) + "_" + std::to_string(grade_serial++);
        ts.add_triple(EntityKind::Student, student_names[static_cast<std::size_t>(e.student)],
                      Relation::GetGrade, EntityKind::Grade, grade);
        ts.add_triple(EntityKind::Grade, grade, Relation::In, EntityKind::Course,
                      course_names[static_cast<std::size_t>(e.course)]);
    }

    // Ground truth sidecar.
    json students_j = json::array();
    for (int s = 0; s < cfg.n_students; ++s) {
        students_j.push_back(json{{"name", student_names[static_cast<std::size_t>(s)]},
                                  {"diligence", diligence[static_cast<std::size_t>(s)]},
                                  {"cohort", s % cfg.n_cohorts + 1},
                                  {"neg_load", neg_load[static_cast<std::size_t>(s)]}});
    }
    json courses_j = json::array();
    for (int c = 0; c < cfg.n_courses; ++c) {
        courses_j.push_back(json{{"name", course_names[static_cast<std::size_t>(c)]},
                                 {"level", course_level[static_cast<std::size_t>(c)]},
                                 {"difficulty", difficulty[static_cast<std::size_t>(c)]}});
    }
    json enrolls_j = json::array();
    for (const Enroll& e : enrolls) {
        enrolls_j.push_back(json{{"student", student_names[static_cast<std::size_t>(e.student)]},
                                 {"course", course_names[static_cast<std::size_t>(e.course)]},
                                 {"term", e.term},
                                 {"p_fail", e.p_fail},
                                 {"label", e.label},
                                 {"prereq_failed", e.prereq_failed}});
    }
    out.truth = json{{"config", cfg.to_json()},
                     {"students", students_j},
                     {"courses", courses_j},
                     {"enrollments", enrolls_j},
                     {"term_intercepts", term_intercepts}};
    out.ok = true;
    return out;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    constexpr int kMaxAttempts = 5;
    std::ostringstream diag;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        // splitmix-style spread keeps retry seeds far from user seeds.
        const std::uint64_t seed =
            attempt == 0 ? cfg.seed : cfg.seed + 0x9e3779b97f4a7c15ull * attempt;
        Attempt a = run_attempt(cfg, seed);
        if (a.ok) {
            a.truth["seed"] = cfg.seed;
            a.truth["attempt_seed"] = seed;
            a.truth["regenerated_attempts"] = attempt;
            if (attempt > 0) a.truth["regeneration_diagnostic"] = diag.str();
            return SynthResult{std::move(a.triples), std::move(a.truth)};
        }
        diag << "attempt " << attempt << " (seed " << seed << "): term " << a.bad_term
             << " realized a single outcome class; ";
    }
    throw IntegrityError("synthetic generation failed: " + diag.str() +
                         "consider a larger cohort or a less extreme base_rate");
}

}  // namespace pathgrade
