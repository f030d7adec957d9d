#include "pathgrade/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pathgrade/errors.hpp"

namespace pathgrade {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("scores/labels length mismatch: " + std::to_string(scores.size()) +
                             " vs " + std::to_string(labels.size()));
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw RangeError("non-finite score at index " + std::to_string(i));
        }
        if (labels[i] != 0 && labels[i] != 1) {
            throw RangeError("label at index " + std::to_string(i) + " is " +
                             std::to_string(labels[i]) + "; labels must be 0 or 1");
        }
    }
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const std::int64_t n = static_cast<std::int64_t>(scores.size());
    std::int64_t pos = 0;
    for (int y : labels) pos += y;
    const std::int64_t neg = n - pos;
    if (pos == 0 || neg == 0) {
        throw UndefinedMetricError("auc undefined: " + std::to_string(pos) + " positives, " +
                                   std::to_string(neg) + " negatives");
    }

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] < scores[b]; });

    // Average rank over each tie group is a half-integer; summing them for the
    // positives stays exact, as does subtracting pos*(pos+1)/2.
    double pos_rank_sum = 0.0;
    std::int64_t i = 0;
    while (i < n) {
        std::int64_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = static_cast<double>(i + 1 + j + 1) / 2.0;
        for (std::int64_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double numer = pos_rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return numer / (static_cast<double>(pos) * static_cast<double>(neg));
}

nlohmann::json ClassMetrics::to_json() const {
    return nlohmann::json{{"precision", precision},
                          {"recall", recall},
                          {"f1", f1},
                          {"precision_defined", precision_defined},
                          {"recall_defined", recall_defined},
                          {"f1_defined", f1_defined}};
}

nlohmann::json ClassificationReport::to_json() const {
    return nlohmann::json{{"n", n},
                          {"n_pass", n_neg},
                          {"n_fail", n_pos},
                          {"threshold", threshold},
                          {"confusion", {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}},
                          {"classes", {{"pass", pass.to_json()}, {"fail", fail.to_json()}}},
                          {"accuracy", accuracy},
                          {"auc", auc},
                          {"auc_defined", auc_defined}};
}

std::string ClassificationReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    auto cell = [&](double v, bool defined) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(4) << v;
        std::string s = c.str();
        if (!defined) s += "*";
        return s;
    };
    os << "class      precision  recall     f1         support\n";
    os << "pass (0)   " << std::setw(9) << cell(pass.precision, pass.precision_defined) << "  "
       << std::setw(9) << cell(pass.recall, pass.recall_defined) << "  "
       << std::setw(9) << cell(pass.f1, pass.f1_defined) << "  " << n_neg << "\n";
    os << "fail (1)   " << std::setw(9) << cell(fail.precision, fail.precision_defined) << "  "
       << std::setw(9) << cell(fail.recall, fail.recall_defined) << "  "
       << std::setw(9) << cell(fail.f1, fail.f1_defined) << "  " << n_pos << "\n";
    os << "accuracy " << accuracy << "  auc ";
    if (auc_defined) {
        os << auc;
    } else {
        os << "undefined";
    }
    os << "  threshold " << threshold << "  n " << n << "\n";
    os << "confusion tp=" << tp << " fp=" << fp << " tn=" << tn << " fn=" << fn << "\n";
    if (!pass.precision_defined || !pass.recall_defined || !pass.f1_defined ||
        !fail.precision_defined || !fail.recall_defined || !fail.f1_defined) {
        os << "* metric reported as 0 because its denominator is empty\n";
    }
    return os.str();
}

ClassificationReport classification_report(const std::vector<double>& scores,
                                           const std::vector<int>& labels, double threshold) {
    check_inputs(scores, labels);
    if (scores.empty()) throw DimensionError("classification_report on empty inputs");

    ClassificationReport r;
    r.n = static_cast<int>(scores.size());
    r.threshold = threshold;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (labels[i] == 1) {
            ++r.n_pos;
            pred == 1 ? ++r.tp : ++r.fn;
        } else {
            ++r.n_neg;
            pred == 1 ? ++r.fp : ++r.tn;
        }
    }

    auto fill = [](ClassMetrics& m, std::int64_t tp, std::int64_t fp, std::int64_t fn) {
        if (tp + fp > 0) {
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            m.precision_defined = true;
        }
        if (tp + fn > 0) {
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
            m.recall_defined = true;
        }
        if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            m.f1_defined = true;
        }
    };
    fill(r.fail, r.tp, r.fp, r.fn);
    // For the pass class the roles swap: true negatives are its hits.
    fill(r.pass, r.tn, r.fn, r.fp);

    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n);
    try {
        r.auc = auc(scores, labels);
        r.auc_defined = true;
    } catch (const UndefinedMetricError&) {
        r.auc = 0.0;
        r.auc_defined = false;
    }
    return r;
}

std::vector<double> majority_scores(const std::vector<int>& train_labels, int n_test) {
    if (train_labels.empty()) throw DimensionError("majority_scores with empty training labels");
    if (n_test < 0) throw RangeError("majority_scores with negative n_test");
    double pos = 0.0;
    for (int y : train_labels) {
        if (y != 0 && y != 1) throw RangeError("majority_scores label must be 0 or 1");
        pos += y;
    }
    const double rate = pos / static_cast<double>(train_labels.size());
    return std::vector<double>(static_cast<std::size_t>(n_test), rate);
}

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> tag_features(const KnowledgeGraph& g, const std::vector<int>& tag_ids,
                                 int student) {
    std::vector<double> x(tag_ids.size(), 0.0);
    for (int t : g.neighbors(student, Relation::Have)) {
        auto it = std::lower_bound(tag_ids.begin(), tag_ids.end(), t);
        if (it != tag_ids.end() && *it == t) x[static_cast<std::size_t>(it - tag_ids.begin())] = 1.0;
    }
    return x;
}

}  // namespace

double TagLogistic::score(const KnowledgeGraph& g, int student) const {
    const std::vector<double> x = tag_features(g, tag_ids, student);
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
    return stable_sigmoid(z);
}

TagLogistic fit_tag_logistic(const KnowledgeGraph& g, const std::vector<PairSample>& train,
                             double lr, int iters) {
    if (train.empty()) throw DimensionError("fit_tag_logistic with no training samples");
    TagLogistic m;
    m.tag_ids = g.ids_of(EntityKind::Tag);
    std::sort(m.tag_ids.begin(), m.tag_ids.end());
    m.weights.assign(m.tag_ids.size(), 0.0);

    std::vector<std::vector<double>> xs;
    xs.reserve(train.size());
    for (const PairSample& s : train) xs.push_back(tag_features(g, m.tag_ids, s.student));

    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (int it = 0; it < iters; ++it) {
        std::vector<double> gw(m.weights.size(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            double z = m.bias;
            for (std::size_t j = 0; j < gw.size(); ++j) z += m.weights[j] * xs[i][j];
            const double err = stable_sigmoid(z) - static_cast<double>(train[i].label);
            for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += err * xs[i][j];
            gb += err;
        }
        for (std::size_t j = 0; j < gw.size(); ++j) m.weights[j] -= lr * inv_n * gw[j];
        m.bias -= lr * inv_n * gb;
    }
    return m;
}

}  // namespace pathgrade
