#pragma once
// Synthetic graph generator with a planted signal.
//
// Latent state: each student draws a diligence ~ N(0,1); each course gets a
// level-dependent difficulty. Tags come from a fixed catalog of categories;
// informative categories pick the level by binning the student's (noised)
// diligence, so low diligence concentrates on the negatively scored tags,
// while noise categories pick uniformly. Students enroll cohort by cohort:
// cohort g takes course level l during term g + l - 1, a few courses per
// term, so the final term holds exactly the last cohort's top-level rows.
//
// Labels are drawn term by term:
//   signal = w_tags * (sum of badness over the student's tags)
//          + w_prereq * [failed a direct prerequisite earlier]
//          + w_skill * (course difficulty - diligence)
//   P(fail) = sigmoid(b_t + signal + noise),  noise ~ N(0, sigma)
// with the per-term intercept b_t bisected so the mean P(fail) equals
// base_rate. Setting all three weights to zero (the null preset) makes the
// labels independent of everything the graph encodes.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/kg.hpp"
#include "pathgrade/rng.hpp"

namespace pathgrade {

struct TagLevel {
    std::string name;
    double badness = 0.0;  // contribution to the fail signal when owned
};

struct TagCategory {
    std::string name;
    std::vector<TagLevel> levels;  // ordered best to worst
    bool informative = false;      // level chosen from diligence vs uniformly
};

// The default seven-category catalog.
const std::vector<TagCategory>& default_tag_catalog();

struct SynthConfig {
    int n_students = 500;
    int n_courses = 40;
    int n_terms = 6;
    int n_cohorts = 3;
    int courses_per_term = 2;
    int prereqs_per_course = 3;
    int related_per_course = 2;
    double tag_presence = 0.3;  // per-category ownership probability
    double noise_sigma = 0.8;
    double w_tags = 0.8;
    double w_prereq = 1.2;
    double w_skill = 1.0;
    double base_rate = 0.25;
    double difficulty_step = 0.35;    // per-level difficulty increment
    double difficulty_jitter = 0.3;   // uniform per-course offset
    std::uint64_t seed = 1;
    std::vector<TagCategory> catalog = default_tag_catalog();

    int n_levels() const { return n_terms - n_cohorts + 1; }
    int courses_per_level() const { return n_courses / std::max(1, n_levels()); }

    void validate() const;  // throws ConfigError
    nlohmann::json to_json() const;
    // Overlays every scalar field onto base (defaults when omitted); the
    // catalog is fixed.
    static SynthConfig from_json(const nlohmann::json& j, SynthConfig base);
    static SynthConfig from_json(const nlohmann::json& j);

    static SynthConfig planted() { return SynthConfig{}; }
    static SynthConfig null_signal();
};

struct SynthResult {
    TripleSet triples;
    nlohmann::json truth;  // ground-truth sidecar for oracle checks
};

// Deterministic per seed. Retries with derived seeds (diagnostic recorded in
// the sidecar) if any term realizes zero fails or zero passes; throws
// IntegrityError when retries are exhausted.
SynthResult generate(const SynthConfig& cfg);

}  // namespace pathgrade
