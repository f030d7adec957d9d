#pragma once
// Path-evidence pass/fail predictor.
//
// Forward pipeline per (student, course) sample:
//   step embedding     e_t = value ++ kind ++ relation rows, length 3*D_e
//   path encoding      bidirectional recurrent cell over the steps; the
//                      hidden update is h_t = o_t * sigmoid(c_t), with a
//                      config toggle for the conventional tanh(c_t)
//   local pooling      per-group scaled dot-product attention over path
//                      encodings, queried by ReLU(W_l*e_s + b_l)
//   global pooling     attention over group representations with per-type
//                      weights (beta_ssp, beta_ckp), queried by a second
//                      student query
//   grade values       v = tanh(W_v*e' + b_v) of the shared Pass/Fail row
//   prediction         yhat = sigmoid(sum_i alpha_i*v_i + b_s + b_c)
//
// Every grade entity shares one embedding row per outcome (the first-seen
// Pass and Fail rows), so trained evidence transfers across enrollments.
//
// Losses: weighted binary cross-entropy on yhat, plus an auxiliary softmax
// over all students that must assign mass to the sample's similar students,
// combined as mean(loss_pred + lambda * loss_aux) over a batch.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/autodiff.hpp"
#include "pathgrade/kg.hpp"
#include "pathgrade/sampler.hpp"

namespace pathgrade {

enum class PoolingMode { Attention, Uniform };
enum class CellOutput { Sigmoid, Tanh };       // activation of c_t inside h_t
enum class ScoreScale { EmbedDim, QueryDim };  // d_k in the 1/sqrt(d_k) attention scaling

struct ModelConfig {
    int embed_dim = 16;
    int hidden_dim = 12;
    double beta_ssp = 0.7;
    double beta_ckp = 0.3;
    double lambda = 1.0;
    bool use_biases = true;
    bool use_subtask = true;
    PoolingMode local_pooling = PoolingMode::Attention;
    PoolingMode global_pooling = PoolingMode::Attention;
    CellOutput cell_output = CellOutput::Sigmoid;
    ScoreScale score_scale = ScoreScale::EmbedDim;

    void validate() const;  // throws ConfigError
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Dense lookup tables the model needs from the graph: per-kind ordinals for
// the bias/subtask vectors and the grade-row collapse for embeddings.
struct GraphIndex {
    int n_entities = 0;
    std::vector<int> embed_row;  // entity id -> value-embedding row
    int pass_row = -1;
    int fail_row = -1;
    std::vector<int> students;  // ascending entity ids
    std::vector<int> courses;
    std::vector<int> student_ord;  // entity id -> student ordinal, -1 elsewhere
    std::vector<int> course_ord;   // entity id -> course ordinal, -1 elsewhere

    static GraphIndex build(const KnowledgeGraph& g);

    int n_students() const { return static_cast<int>(students.size()); }
    int n_courses() const { return static_cast<int>(courses.size()); }
    int grade_row(GradeOutcome o) const;     // throws IntegrityError when absent
    int student_ordinal(int entity) const;   // throws RangeError on non-students
    int course_ordinal(int entity) const;
};

enum class GroupType { Ssp, Ckp };

struct GroupTrace {
    GroupType type = GroupType::Ssp;
    int anchor = -1;  // similar student (SSP) or prior course (CKP)
    GradeOutcome grade = GradeOutcome::Pass;
    std::vector<std::vector<double>> path_encodings;  // per path, 2*D_h
    std::vector<double> local_weights;                // sums to 1
    std::vector<double> rep;                          // 2*D_h
    double value = 0.0;                               // scalar grade projection
};

struct ForwardTrace {
    std::vector<GroupTrace> groups;      // SSP groups then CKP groups, sample order
    std::vector<double> global_weights;  // aligned with groups, sums to 1
    double prediction = 0.0;
    Var prediction_var;                   // lives on the tape passed to predict()
    std::vector<double> subtask_probs;    // over all students; empty when subtask off
};

class Model {
public:
    Model(ModelConfig cfg, const KnowledgeGraph& g);

    const ModelConfig& config() const { return cfg_; }
    const GraphIndex& index() const { return idx_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Plain step embedding, [value ++ kind ++ relation], length 3*D_e.
    Tensor embed_step(const PathStep& step) const;
    Var embed_step_on(Tape& tape, const PathStep& step) const;

    // Bidirectional encoding, concat(forward h_L, backward h_1), length 2*D_h.
    Var encode_path(Tape& tape, const Path& path) const;

    Var local_query(Tape& tape, int student) const;   // ReLU(W_l*e_s + b_l)
    Var global_query(Tape& tape, int student) const;  // ReLU(W_g*e_s + b_g)

    struct Pooled {
        Var rep;      // 2*D_h
        Var weights;  // one per path, sums to 1
    };
    // Attention pooling of path encodings under a precomputed query; in
    // Uniform mode the query is ignored and weights are constant 1/K.
    Pooled attend_local(Tape& tape, Var query, const std::vector<Var>& path_reps) const;
    Pooled attend_local(Tape& tape, int student, const std::vector<Var>& path_reps) const;

    // Group-level weights; beta_ssp/beta_ckp scale the scores per group type.
    Var attend_global(Tape& tape, Var query, const std::vector<Var>& group_reps,
                      const std::vector<GroupType>& types) const;
    Var attend_global(Tape& tape, int student, const std::vector<Var>& group_reps,
                      const std::vector<GroupType>& types) const;

    Var grade_value(Tape& tape, GradeOutcome outcome) const;  // scalar in (-1, 1)

    // Full forward pass; requires at least one evidence group.
    ForwardTrace predict(Tape& tape, const PairSample& sample) const;
    double predict_score(const PairSample& sample) const;
    std::vector<double> score_all(const std::vector<PairSample>& samples) const;

    // -[pos_weight*y*log(yhat) + (1-y)*log(1-yhat)]
    Var prediction_loss(Tape& tape, Var yhat, int label, double pos_weight) const;
    // -sum_i log P(similar_i | s) under softmax over all students.
    Var subtask_loss(Tape& tape, const PairSample& sample) const;
    // prediction_loss + lambda * subtask_loss; the subtask term is skipped
    // entirely when lambda == 0, the subtask is off, or the sample has no
    // SSP groups, so the lambda == 0 loss is bitwise equal to the
    // prediction loss alone.
    Var sample_loss(Tape& tape, const PairSample& sample, double pos_weight) const;
    // Sum of sample losses, left to right, scaled by 1.0/batch_size.
    Var batch_loss(Tape& tape, const std::vector<const PairSample*>& batch,
                   double pos_weight) const;

    std::vector<double> subtask_probs(const PairSample& sample) const;

    // Checkpoint = named-tensor container; metadata carries the config and
    // table sizes, which load() revalidates against the graph.
    void save(const std::string& path) const;
    static Model load(const std::string& path, const KnowledgeGraph& g);

    static const std::vector<std::string>& lstm_param_names();   // orthogonal init set
    static const std::vector<std::string>& dense_param_names();  // Xavier init set

private:
    Tape::LstmCellWeights cell_weights(Tape& tape, const char* dir) const;
    Var student_embedding(Tape& tape, int student) const;
    double score_scale_factor() const;

    ModelConfig cfg_;
    GraphIndex idx_;
    ParamStore params_;
};

}  // namespace pathgrade
