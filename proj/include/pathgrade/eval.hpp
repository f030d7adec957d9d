#pragma once
// Binary-classification metrics and reference baselines.
//
// auc() uses the rank statistic with average ranks on score ties, so a tied
// positive/negative pair contributes exactly 1/2. All intermediate sums are
// exact in f64 (integers and half-integers below 2^53), so the result equals
// the brute-force count over all positive/negative pairs bit for bit.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/kg.hpp"
#include "pathgrade/sampler.hpp"

namespace pathgrade {

// Probability that a random positive outscores a random negative, ties at
// 1/2. Throws UndefinedMetricError when either class is absent.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ClassMetrics {
    double precision = 0.0;  // 0 when undefined
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_defined = false;
    bool recall_defined = false;
    bool f1_defined = false;

    nlohmann::json to_json() const;
};

struct ClassificationReport {
    int n = 0;
    int n_pos = 0;  // class 1 = fail
    int n_neg = 0;
    double threshold = 0.5;
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;  // w.r.t. class 1
    ClassMetrics fail;  // class 1
    ClassMetrics pass;  // class 0
    double accuracy = 0.0;
    double auc = 0.0;  // 0 when undefined
    bool auc_defined = false;

    nlohmann::json to_json() const;
    std::string to_text() const;  // per-class metric table
};

// Thresholds at score >= threshold => predict 1. Metrics with an empty
// denominator report 0 and clear the matching *_defined flag; AUC on a
// single class is flagged instead of thrown.
ClassificationReport classification_report(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           double threshold = 0.5);

// Constant score for every test sample: the positive rate of the training
// labels. All test scores tie, so its AUC is exactly 1/2.
std::vector<double> majority_scores(const std::vector<int>& train_labels, int n_test);

// Logistic regression on per-student tag indicator features, full-batch
// gradient descent from zero weights. Deterministic for fixed inputs.
struct TagLogistic {
    std::vector<int> tag_ids;     // ascending tag entity ids = feature order
    std::vector<double> weights;  // one per tag
    double bias = 0.0;

    double score(const KnowledgeGraph& g, int student) const;
};

TagLogistic fit_tag_logistic(const KnowledgeGraph& g, const std::vector<PairSample>& train,
                             double lr = 0.1, int iters = 500);

}  // namespace pathgrade
