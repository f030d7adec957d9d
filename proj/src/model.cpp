#include "pathgrade/model.hpp"

#include <cmath>

namespace pathgrade {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
    if (embed_dim < 1) throw ConfigError("model config: embed_dim must be >= 1");
    if (hidden_dim < 1) throw ConfigError("model config: hidden_dim must be >= 1");
    if (beta_ssp <= 0 || beta_ckp <= 0) {
        throw ConfigError("model config: type weights beta_ssp, beta_ckp must be positive");
    }
    if (lambda < 0) throw ConfigError("model config: lambda must be >= 0");
}

namespace {

const char* pooling_name(PoolingMode m) {
    return m == PoolingMode::Attention ? "attention" : "uniform";
}

PoolingMode pooling_from(const std::string& s) {
    if (s == "attention") return PoolingMode::Attention;
    if (s == "uniform") return PoolingMode::Uniform;
    throw ConfigError("model config: unknown pooling mode '" + s + "'");
}

}  // namespace

json ModelConfig::to_json() const {
    return json{{"embed_dim", embed_dim},
                {"hidden_dim", hidden_dim},
                {"beta_ssp", beta_ssp},
                {"beta_ckp", beta_ckp},
                {"lambda", lambda},
                {"use_biases", use_biases},
                {"use_subtask", use_subtask},
                {"local_pooling", pooling_name(local_pooling)},
                {"global_pooling", pooling_name(global_pooling)},
                {"cell_output", cell_output == CellOutput::Sigmoid ? "sigmoid" : "tanh"},
                {"score_scale", score_scale == ScoreScale::EmbedDim ? "embed" : "query"}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "embed_dim") {
            cfg.embed_dim = value.get<int>();
        } else if (key == "hidden_dim") {
            cfg.hidden_dim = value.get<int>();
        } else if (key == "beta_ssp") {
            cfg.beta_ssp = value.get<double>();
        } else if (key == "beta_ckp") {
            cfg.beta_ckp = value.get<double>();
        } else if (key == "lambda") {
            cfg.lambda = value.get<double>();
        } else if (key == "use_biases") {
            cfg.use_biases = value.get<bool>();
        } else if (key == "use_subtask") {
            cfg.use_subtask = value.get<bool>();
        } else if (key == "local_pooling") {
            cfg.local_pooling = pooling_from(value.get<std::string>());
        } else if (key == "global_pooling") {
            cfg.global_pooling = pooling_from(value.get<std::string>());
        } else if (key == "cell_output") {
            const std::string s = value.get<std::string>();
            if (s == "sigmoid") {
                cfg.cell_output = CellOutput::Sigmoid;
            } else if (s == "tanh") {
                cfg.cell_output = CellOutput::Tanh;
            } else {
                throw ConfigError("model config: unknown cell_output '" + s + "'");
            }
        } else if (key == "score_scale") {
            const std::string s = value.get<std::string>();
            if (s == "embed") {
                cfg.score_scale = ScoreScale::EmbedDim;
            } else if (s == "query") {
                cfg.score_scale = ScoreScale::QueryDim;
            } else {
                throw ConfigError("model config: unknown score_scale '" + s + "'");
            }
        } else {
            throw ConfigError("model config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// GraphIndex

GraphIndex GraphIndex::build(const KnowledgeGraph& g) {
    GraphIndex idx;
    idx.n_entities = g.n_entities();
    idx.embed_row.resize(static_cast<std::size_t>(idx.n_entities));
    idx.student_ord.assign(static_cast<std::size_t>(idx.n_entities), -1);
    idx.course_ord.assign(static_cast<std::size_t>(idx.n_entities), -1);
    for (int id = 0; id < idx.n_entities; ++id) {
        const Entity& e = g.entity(id);
        int row = id;
        if (e.kind == EntityKind::Grade) {
            const GradeOutcome o = g.grade_info(id).outcome;
            int& canon = o == GradeOutcome::Pass ? idx.pass_row : idx.fail_row;
            if (canon < 0) canon = id;
            row = canon;
        }
        idx.embed_row[static_cast<std::size_t>(id)] = row;
    }
    idx.students = g.ids_of(EntityKind::Student);
    idx.courses = g.ids_of(EntityKind::Course);
    for (std::size_t i = 0; i < idx.students.size(); ++i) {
        idx.student_ord[static_cast<std::size_t>(idx.students[i])] = static_cast<int>(i);
    }
    for (std::size_t i = 0; i < idx.courses.size(); ++i) {
        idx.course_ord[static_cast<std::size_t>(idx.courses[i])] = static_cast<int>(i);
    }
    return idx;
}

int GraphIndex::grade_row(GradeOutcome o) const {
    const int row = o == GradeOutcome::Pass ? pass_row : fail_row;
    if (row < 0) {
        throw IntegrityError(std::string("graph has no ") + to_string(o) + " grade entity");
    }
    return row;
}

int GraphIndex::student_ordinal(int entity) const {
    if (entity < 0 || entity >= n_entities ||
        student_ord[static_cast<std::size_t>(entity)] < 0) {
        throw RangeError("student_ordinal: entity " + std::to_string(entity) +
                         " is not an indexed student");
    }
    return student_ord[static_cast<std::size_t>(entity)];
}

int GraphIndex::course_ordinal(int entity) const {
    if (entity < 0 || entity >= n_entities ||
        course_ord[static_cast<std::size_t>(entity)] < 0) {
        throw RangeError("course_ordinal: entity " + std::to_string(entity) +
                         " is not an indexed course");
    }
    return course_ord[static_cast<std::size_t>(entity)];
}

// ---------------------------------------------------------------------------
// Model

namespace {

const char* kGateNames[4] = {"f", "i", "o", "c"};

}  // namespace

Model::Model(ModelConfig cfg, const KnowledgeGraph& g)
    : cfg_(cfg), idx_(GraphIndex::build(g)) {
    cfg_.validate();
    const int de = cfg_.embed_dim;
    const int dh = cfg_.hidden_dim;
    params_.add("embed.value", Tensor::zeros({idx_.n_entities, de}));
    params_.add("embed.kind", Tensor::zeros({kNumEntityKinds, de}));
    params_.add("embed.rel", Tensor::zeros({kNumRelations, de}));
    for (const char* dir : {"fw", "bw"}) {
        for (const char* gate : kGateNames) {
            const std::string base = std::string("lstm.") + dir + ".";
            params_.add(base + "w_" + gate, Tensor::zeros({dh, 3 * de}));
            params_.add(base + "u_" + gate, Tensor::zeros({dh, dh}));
            params_.add(base + "b_" + gate, Tensor::zeros({dh}));
        }
    }
    params_.add("attn.local.w", Tensor::zeros({2 * dh, de}));
    params_.add("attn.local.b", Tensor::zeros({2 * dh}));
    params_.add("attn.global.w", Tensor::zeros({2 * dh, de}));
    params_.add("attn.global.b", Tensor::zeros({2 * dh}));
    params_.add("value_head.w", Tensor::zeros({1, de}));
    params_.add("value_head.b", Tensor::zeros({1}));
    params_.add("bias.student", Tensor::zeros({idx_.n_students()}));
    params_.add("bias.course", Tensor::zeros({idx_.n_courses()}));
    params_.add("subtask.w", Tensor::zeros({idx_.n_students(), de}));
    params_.add("subtask.b", Tensor::zeros({idx_.n_students()}));
}

const std::vector<std::string>& Model::lstm_param_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const char* dir : {"fw", "bw"}) {
            for (const char* gate : kGateNames) {
                const std::string base = std::string("lstm.") + dir + ".";
                out.push_back(base + "w_" + gate);
                out.push_back(base + "u_" + gate);
            }
        }
        return out;
    }();
    return names;
}

const std::vector<std::string>& Model::dense_param_names() {
    static const std::vector<std::string> names = {"attn.local.w", "attn.global.w",
                                                   "value_head.w", "subtask.w"};
    return names;
}

Tensor Model::embed_step(const PathStep& step) const {
    const int de = cfg_.embed_dim;
    if (step.value < 0 || step.value >= idx_.n_entities) {
        throw RangeError("embed_step: entity id " + std::to_string(step.value) + " out of range");
    }
    Tensor out = Tensor::zeros({3 * de});
    const Tensor& ev = params_.get("embed.value");
    const Tensor& en = params_.get("embed.kind");
    const Tensor& er = params_.get("embed.rel");
    const int vrow = idx_.embed_row[static_cast<std::size_t>(step.value)];
    const double* src[3] = {ev.row(vrow), en.row(static_cast<int>(step.node_kind)),
                            er.row(static_cast<int>(step.relation))};
    for (int k = 0; k < 3; ++k) {
        for (int j = 0; j < de; ++j) out.data[static_cast<std::size_t>(k * de + j)] = src[k][j];
    }
    return out;
}

Var Model::embed_step_on(Tape& tape, const PathStep& step) const {
    if (step.value < 0 || step.value >= idx_.n_entities) {
        throw RangeError("embed_step: entity id " + std::to_string(step.value) + " out of range");
    }
    return tape.gather_concat({
        {tape.leaf(params_, "embed.value"), idx_.embed_row[static_cast<std::size_t>(step.value)]},
        {tape.leaf(params_, "embed.kind"), static_cast<int>(step.node_kind)},
        {tape.leaf(params_, "embed.rel"), static_cast<int>(step.relation)},
    });
}

Tape::LstmCellWeights Model::cell_weights(Tape& tape, const char* dir) const {
    Tape::LstmCellWeights wts;
    const std::string base = std::string("lstm.") + dir + ".";
    for (int k = 0; k < 4; ++k) {
        wts.w[static_cast<std::size_t>(k)] = tape.leaf(params_, base + "w_" + kGateNames[k]);
        wts.u[static_cast<std::size_t>(k)] = tape.leaf(params_, base + "u_" + kGateNames[k]);
        wts.b[static_cast<std::size_t>(k)] = tape.leaf(params_, base + "b_" + kGateNames[k]);
    }
    return wts;
}

Var Model::encode_path(Tape& tape, const Path& path) const {
    if (path.steps.empty()) throw DimensionError("encode_path: empty path");
    const int dh = cfg_.hidden_dim;
    const bool tanh_cell = cfg_.cell_output == CellOutput::Tanh;
    std::vector<Var> xs;
    xs.reserve(path.steps.size());
    for (const PathStep& st : path.steps) xs.push_back(embed_step_on(tape, st));
    const Var zero = tape.constant(Tensor::zeros({dh}));
    const int L = static_cast<int>(xs.size());
    auto run = [&](const char* dir, bool forward) {
        const Tape::LstmCellWeights wts = cell_weights(tape, dir);
        Var h = zero, c = zero;
        for (int k = 0; k < L; ++k) {
            const int t = forward ? k : L - 1 - k;
            const Var hc = tape.lstm_cell(xs[static_cast<std::size_t>(t)], h, c, wts, tanh_cell);
            h = tape.slice(hc, 0, dh);
            if (k + 1 < L) c = tape.slice(hc, dh, dh);
        }
        return h;
    };
    const Var hf = run("fw", true);
    const Var hb = run("bw", false);
    return tape.concat({hf, hb});
}

Var Model::student_embedding(Tape& tape, int student) const {
    if (student < 0 || student >= idx_.n_entities) {
        throw RangeError("student embedding: entity id out of range");
    }
    return tape.gather_row(tape.leaf(params_, "embed.value"),
                           idx_.embed_row[static_cast<std::size_t>(student)]);
}

Var Model::local_query(Tape& tape, int student) const {
    const Var es = student_embedding(tape, student);
    return tape.relu(tape.add(tape.matvec(tape.leaf(params_, "attn.local.w"), es),
                              tape.leaf(params_, "attn.local.b")));
}

Var Model::global_query(Tape& tape, int student) const {
    const Var es = student_embedding(tape, student);
    return tape.relu(tape.add(tape.matvec(tape.leaf(params_, "attn.global.w"), es),
                              tape.leaf(params_, "attn.global.b")));
}

double Model::score_scale_factor() const {
    const int dk =
        cfg_.score_scale == ScoreScale::EmbedDim ? cfg_.embed_dim : 2 * cfg_.hidden_dim;
    return 1.0 / std::sqrt(static_cast<double>(dk));
}

Model::Pooled Model::attend_local(Tape& tape, Var query,
                                  const std::vector<Var>& path_reps) const {
    if (path_reps.empty()) throw DimensionError("attend_local: no path representations");
    const int k = static_cast<int>(path_reps.size());
    if (cfg_.local_pooling == PoolingMode::Uniform) {
        Var sum = path_reps[0];
        for (int j = 1; j < k; ++j) sum = tape.add(sum, path_reps[static_cast<std::size_t>(j)]);
        const double w = 1.0 / k;
        return {tape.scale(sum, w),
                tape.constant(Tensor::vec(std::vector<double>(static_cast<std::size_t>(k), w)))};
    }
    if (k == 1) {
        // Softmax of a singleton is exactly 1 and passes no gradient to the query.
        return {path_reps[0], tape.constant(Tensor::vec({1.0}))};
    }
    std::vector<Var> scores;
    scores.reserve(path_reps.size());
    for (Var h : path_reps) scores.push_back(tape.dot(query, h));
    const Var alpha = tape.softmax(tape.scale(tape.concat(scores), score_scale_factor()));
    Var rep = tape.mul(path_reps[0], tape.gather_row(alpha, 0));
    for (int j = 1; j < k; ++j) {
        rep = tape.add(rep, tape.mul(path_reps[static_cast<std::size_t>(j)],
                                     tape.gather_row(alpha, j)));
    }
    return {rep, alpha};
}

Model::Pooled Model::attend_local(Tape& tape, int student,
                                  const std::vector<Var>& path_reps) const {
    Var query;
    if (cfg_.local_pooling == PoolingMode::Attention && path_reps.size() > 1) {
        query = local_query(tape, student);
    }
    return attend_local(tape, query, path_reps);
}

Var Model::attend_global(Tape& tape, Var query, const std::vector<Var>& group_reps,
                         const std::vector<GroupType>& types) const {
    if (group_reps.empty()) throw DimensionError("attend_global: no group representations");
    if (group_reps.size() != types.size()) {
        throw DimensionError("attend_global: group/type count mismatch");
    }
    const int m = static_cast<int>(group_reps.size());
    if (cfg_.global_pooling == PoolingMode::Uniform) {
        return tape.constant(
            Tensor::vec(std::vector<double>(static_cast<std::size_t>(m), 1.0 / m)));
    }
    const double base = score_scale_factor();
    std::vector<Var> scores;
    scores.reserve(group_reps.size());
    for (int i = 0; i < m; ++i) {
        const double beta =
            types[static_cast<std::size_t>(i)] == GroupType::Ssp ? cfg_.beta_ssp : cfg_.beta_ckp;
        scores.push_back(
            tape.scale(tape.dot(query, group_reps[static_cast<std::size_t>(i)]), beta * base));
    }
    return tape.softmax(tape.concat(scores));
}

Var Model::attend_global(Tape& tape, int student, const std::vector<Var>& group_reps,
                         const std::vector<GroupType>& types) const {
    Var query;
    if (cfg_.global_pooling == PoolingMode::Attention) query = global_query(tape, student);
    return attend_global(tape, query, group_reps, types);
}

Var Model::grade_value(Tape& tape, GradeOutcome outcome) const {
    const Var e = tape.gather_row(tape.leaf(params_, "embed.value"), idx_.grade_row(outcome));
    return tape.tanh(tape.add(tape.matvec(tape.leaf(params_, "value_head.w"), e),
                              tape.leaf(params_, "value_head.b")));
}

ForwardTrace Model::predict(Tape& tape, const PairSample& sample) const {
    if (sample.group_count() == 0) {
        throw DimensionError("predict: sample has no evidence groups");
    }
    ForwardTrace trace;
    trace.groups.reserve(static_cast<std::size_t>(sample.group_count()));

    Var local_q;
    bool local_q_ready = false;
    Var values[2];
    bool values_ready[2] = {false, false};
    auto grade_value_of = [&](GradeOutcome o) {
        const int slot = o == GradeOutcome::Fail ? 1 : 0;
        if (!values_ready[slot]) {
            values[slot] = grade_value(tape, o);
            values_ready[slot] = true;
        }
        return values[slot];
    };

    std::vector<Var> reps, group_values;
    std::vector<GroupType> types;
    auto handle_group = [&](GroupType type, int anchor, GradeOutcome grade,
                            const std::vector<Path>& paths) {
        if (paths.empty()) throw DimensionError("predict: group with no paths");
        GroupTrace gt;
        gt.type = type;
        gt.anchor = anchor;
        gt.grade = grade;
        std::vector<Var> penc;
        penc.reserve(paths.size());
        for (const Path& p : paths) {
            const Var h = encode_path(tape, p);
            penc.push_back(h);
            gt.path_encodings.push_back(tape.value(h).data);
        }
        if (cfg_.local_pooling == PoolingMode::Attention && penc.size() > 1 && !local_q_ready) {
            local_q = local_query(tape, sample.student);
            local_q_ready = true;
        }
        const Pooled pooled = attend_local(tape, local_q, penc);
        gt.local_weights = tape.value(pooled.weights).data;
        gt.rep = tape.value(pooled.rep).data;
        const Var v = grade_value_of(grade);
        gt.value = tape.scalar_value(v);
        reps.push_back(pooled.rep);
        types.push_back(type);
        group_values.push_back(v);
        trace.groups.push_back(std::move(gt));
    };
    for (const SspGroup& grp : sample.ssp) {
        handle_group(GroupType::Ssp, grp.similar_student, grp.terminal_grade, grp.paths);
    }
    for (const CkpGroup& grp : sample.ckp) {
        handle_group(GroupType::Ckp, grp.related_course, grp.prior_grade, grp.paths);
    }

    const Var alpha = attend_global(tape, sample.student, reps, types);
    trace.global_weights = tape.value(alpha).data;
    Var logit = tape.reduce_sum(tape.mul(alpha, tape.concat(group_values)));
    if (cfg_.use_biases) {
        const Var bs = tape.gather_row(tape.leaf(params_, "bias.student"),
                                       idx_.student_ordinal(sample.student));
        const Var bc = tape.gather_row(tape.leaf(params_, "bias.course"),
                                       idx_.course_ordinal(sample.course));
        logit = tape.add(tape.add(logit, bs), bc);
    }
    const Var yhat = tape.sigmoid(logit);
    trace.prediction = tape.scalar_value(yhat);
    trace.prediction_var = yhat;
    if (cfg_.use_subtask && !sample.ssp.empty()) trace.subtask_probs = subtask_probs(sample);
    return trace;
}

double Model::predict_score(const PairSample& sample) const {
    Tape tape;
    return predict(tape, sample).prediction;
}

std::vector<double> Model::score_all(const std::vector<PairSample>& samples) const {
    std::vector<double> out;
    out.reserve(samples.size());
    Tape tape;
    for (const PairSample& s : samples) {
        tape.reset();
        out.push_back(predict(tape, s).prediction);
    }
    return out;
}

Var Model::prediction_loss(Tape& tape, Var yhat, int label, double pos_weight) const {
    if (pos_weight <= 0) throw ConfigError("prediction_loss: pos_weight must be positive");
    if (label != 0 && label != 1) throw RangeError("prediction_loss: label must be 0 or 1");
    if (label == 1) return tape.scale(tape.log(yhat), -pos_weight);
    const Var one_minus = tape.add(tape.constant(Tensor::scalar(1.0)), tape.scale(yhat, -1.0));
    return tape.scale(tape.log(one_minus), -1.0);
}

Var Model::subtask_loss(Tape& tape, const PairSample& sample) const {
    if (sample.ssp.empty()) {
        throw DimensionError("subtask_loss: sample has no similar-student groups");
    }
    const Var es = student_embedding(tape, sample.student);
    const Var logits = tape.add(tape.matvec(tape.leaf(params_, "subtask.w"), es),
                                tape.leaf(params_, "subtask.b"));
    const Var p = tape.softmax(logits);
    Var acc;
    bool first = true;
    for (const SspGroup& grp : sample.ssp) {
        const Var lp = tape.log(tape.gather_row(p, idx_.student_ordinal(grp.similar_student)));
        acc = first ? lp : tape.add(acc, lp);
        first = false;
    }
    return tape.scale(acc, -1.0);
}

Var Model::sample_loss(Tape& tape, const PairSample& sample, double pos_weight) const {
    const ForwardTrace trace = predict(tape, sample);
    Var loss = prediction_loss(tape, trace.prediction_var, sample.label, pos_weight);
    if (cfg_.use_subtask && cfg_.lambda != 0.0 && !sample.ssp.empty()) {
        loss = tape.add(loss, tape.scale(subtask_loss(tape, sample), cfg_.lambda));
    }
    return loss;
}

Var Model::batch_loss(Tape& tape, const std::vector<const PairSample*>& batch,
                      double pos_weight) const {
    if (batch.empty()) throw DimensionError("batch_loss: empty batch");
    Var acc = sample_loss(tape, *batch[0], pos_weight);
    for (std::size_t i = 1; i < batch.size(); ++i) {
        acc = tape.add(acc, sample_loss(tape, *batch[i], pos_weight));
    }
    return tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

std::vector<double> Model::subtask_probs(const PairSample& sample) const {
    const Tensor& W = params_.get("subtask.w");
    const Tensor& b = params_.get("subtask.b");
    const Tensor& E = params_.get("embed.value");
    if (sample.student < 0 || sample.student >= idx_.n_entities) {
        throw RangeError("subtask_probs: student id out of range");
    }
    const double* es = E.row(idx_.embed_row[static_cast<std::size_t>(sample.student)]);
    const int n = W.rows();
    std::vector<double> logits(static_cast<std::size_t>(n));
    double maxv = -1e300;
    for (int i = 0; i < n; ++i) {
        const double* row = W.row(i);
        double acc = b.data[static_cast<std::size_t>(i)];
        for (int j = 0; j < W.cols(); ++j) acc += row[j] * es[j];
        logits[static_cast<std::size_t>(i)] = acc;
        maxv = std::max(maxv, acc);
    }
    double denom = 0.0;
    for (double& v : logits) {
        v = std::exp(v - maxv);
        denom += v;
    }
    for (double& v : logits) v /= denom;
    return logits;
}

// ---------------------------------------------------------------------------
// Checkpoints

void Model::save(const std::string& path) const {
    json meta;
    meta["kind"] = "pathgrade.checkpoint";
    meta["config"] = cfg_.to_json();
    meta["n_entities"] = idx_.n_entities;
    meta["n_students"] = idx_.n_students();
    meta["n_courses"] = idx_.n_courses();
    params_.save(path, meta.dump());
}

Model Model::load(const std::string& path, const KnowledgeGraph& g) {
    std::string meta_str;
    ParamStore loaded = ParamStore::load(path, &meta_str);
    json meta;
    try {
        meta = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw ParseError("checkpoint '" + path + "': bad metadata: " + e.what());
    }
    if (meta.value("kind", "") != "pathgrade.checkpoint") {
        throw SchemaError("checkpoint '" + path + "': not a model checkpoint container");
    }
    Model model(ModelConfig::from_json(meta.at("config")), g);
    if (meta.at("n_entities").get<int>() != model.idx_.n_entities ||
        meta.at("n_students").get<int>() != model.idx_.n_students() ||
        meta.at("n_courses").get<int>() != model.idx_.n_courses()) {
        throw SchemaError("checkpoint '" + path + "': entity counts do not match the graph");
    }
    const auto names = model.params_.names();
    if (names != loaded.names()) {
        throw SchemaError("checkpoint '" + path + "': parameter names do not match the config");
    }
    for (const std::string& name : names) {
        Tensor& dst = model.params_.get(name);
        Tensor& src = loaded.get(name);
        if (dst.shape != src.shape) {
            throw SchemaError("checkpoint '" + path + "': shape mismatch for '" + name + "'");
        }
        dst = std::move(src);
    }
    return model;
}

}  // namespace pathgrade
