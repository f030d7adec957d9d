#include "pathgrade/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "pathgrade/eval.hpp"

namespace pathgrade {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configs

void TrainConfig::validate() const {
    if (lr < 0) throw ConfigError("train config: lr must be >= 0");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (dev_fraction <= 0 || dev_fraction >= 1) {
        throw ConfigError("train config: dev_fraction must lie in (0, 1)");
    }
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
        throw ConfigError("train config: adam betas must lie in [0, 1)");
    }
    if (adam_eps <= 0) throw ConfigError("train config: adam_eps must be positive");
}

namespace {

const char* balance_name(BalanceMode m) {
    switch (m) {
        case BalanceMode::PosWeight: return "pos_weight";
        case BalanceMode::Downsample: return "downsample";
        case BalanceMode::None: return "none";
    }
    throw RangeError("unknown balance mode");
}

BalanceMode balance_from(const std::string& s) {
    if (s == "pos_weight") return BalanceMode::PosWeight;
    if (s == "downsample") return BalanceMode::Downsample;
    if (s == "none") return BalanceMode::None;
    throw ConfigError("train config: unknown balance mode '" + s + "'");
}

}  // namespace

json TrainConfig::to_json() const {
    return json{{"lr", lr},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"seed", seed},
                {"balance", balance_name(balance)},
                {"dev_fraction", dev_fraction},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "lr") {
            cfg.lr = value.get<double>();
        } else if (key == "batch_size") {
            cfg.batch_size = value.get<int>();
        } else if (key == "epochs") {
            cfg.epochs = value.get<int>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "balance") {
            cfg.balance = balance_from(value.get<std::string>());
        } else if (key == "dev_fraction") {
            cfg.dev_fraction = value.get<double>();
        } else if (key == "adam_beta1") {
            cfg.adam_beta1 = value.get<double>();
        } else if (key == "adam_beta2") {
            cfg.adam_beta2 = value.get<double>();
        } else if (key == "adam_eps") {
            cfg.adam_eps = value.get<double>();
        } else {
            throw ConfigError("train config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void GridConfig::validate() const {
    if (lrs.empty() || batch_sizes.empty()) {
        throw ConfigError("grid config: lrs and batch_sizes must be non-empty");
    }
    for (double lr : lrs) {
        if (lr <= 0) throw ConfigError("grid config: lrs must be positive");
    }
    for (int b : batch_sizes) {
        if (b < 1) throw ConfigError("grid config: batch_sizes must be >= 1");
    }
    if (budget_epochs < 1) throw ConfigError("grid config: budget_epochs must be >= 1");
}

json GridConfig::to_json() const {
    return json{{"lrs", lrs},
                {"batch_sizes", batch_sizes},
                {"budget_epochs", budget_epochs},
                {"seed", seed}};
}

GridConfig GridConfig::from_json(const json& j) {
    GridConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "lrs") {
            cfg.lrs = value.get<std::vector<double>>();
        } else if (key == "batch_sizes") {
            cfg.batch_sizes = value.get<std::vector<int>>();
        } else if (key == "budget_epochs") {
            cfg.budget_epochs = value.get<int>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else {
            throw ConfigError("grid config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Initialization

Tensor orthogonal_init(int r, int c, Rng& rng) {
    // QR of a tall Gaussian draw gives orthonormal columns; the wide case is
    // the transpose. Scaling each column by the sign of the matching R
    // diagonal makes Q a deterministic function of the draw.
    const int tall_r = std::max(r, c);
    const int tall_c = std::min(r, c);
    Eigen::MatrixXd a(tall_r, tall_c);
    for (int i = 0; i < tall_r; ++i) {
        for (int j = 0; j < tall_c; ++j) a(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall_r, tall_c);
    const Eigen::MatrixXd rmat = qr.matrixQR().topRows(tall_c).triangularView<Eigen::Upper>();
    for (int j = 0; j < tall_c; ++j) {
        if (rmat(j, j) < 0) q.col(j) *= -1.0;
    }
    Tensor out = Tensor::zeros({r, c});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            out.row(i)[j] = r <= c ? q(j, i) : q(i, j);
        }
    }
    return out;
}

void init_params(Model& model, Rng& rng) {
    ParamStore& params = model.params();
    for (const char* name : {"embed.value", "embed.kind", "embed.rel"}) {
        for (double& x : params.get(name).data) x = rng.uniform(-0.1, 0.1);
    }
    for (const std::string& name : Model::lstm_param_names()) {
        Tensor& t = params.get(name);
        t = orthogonal_init(t.rows(), t.cols(), rng);
    }
    for (const std::string& name : Model::dense_param_names()) {
        Tensor& t = params.get(name);
        const double std_dev = std::sqrt(2.0 / (t.rows() + t.cols()));
        for (double& x : t.data) x = rng.normal(0.0, std_dev);
    }
    // Bias vectors stay zero.
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParamStore& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const std::string& name : params.names()) {
        Tensor& theta = params.get(name);
        const Tensor& g = params.grad(name);
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor::zeros(theta.shape)).first;
            v_.emplace(name, Tensor::zeros(theta.shape));
        }
        Tensor& m = mit->second;
        Tensor& v = v_.at(name);
        if (!g.same_shape(theta)) throw DimensionError("adam: gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            theta.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Splits and balancing

std::pair<std::vector<int>, std::vector<int>> split_train_dev(const std::vector<PairSample>& samples,
                                                              double dev_fraction, Rng& rng) {
    if (dev_fraction <= 0 || dev_fraction >= 1) {
        throw ConfigError("split_train_dev: dev_fraction must lie in (0, 1)");
    }
    std::vector<int> by_class[2];
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        by_class[samples[static_cast<std::size_t>(i)].label == 1 ? 1 : 0].push_back(i);
    }
    std::vector<int> train_idx, dev_idx;
    for (std::vector<int>& cls : by_class) {
        if (cls.empty()) continue;
        if (cls.size() < 2) {
            throw ConfigError("split_train_dev: a class with a single sample cannot be split");
        }
        rng.shuffle(cls);
        const int n = static_cast<int>(cls.size());
        int take = static_cast<int>(std::llround(dev_fraction * n));
        take = std::clamp(take, 1, n - 1);
        dev_idx.insert(dev_idx.end(), cls.begin(), cls.begin() + take);
        train_idx.insert(train_idx.end(), cls.begin() + take, cls.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(dev_idx.begin(), dev_idx.end());
    return {std::move(train_idx), std::move(dev_idx)};
}

double compute_pos_weight(const std::vector<PairSample>& samples) {
    std::int64_t pos = 0, neg = 0;
    for (const PairSample& s : samples) (s.label == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw ConfigError("pos_weight needs both classes; got " + std::to_string(pos) +
                          " positive and " + std::to_string(neg) + " negative samples");
    }
    return static_cast<double>(neg) / static_cast<double>(pos);
}

// ---------------------------------------------------------------------------
// Training loop

std::string TrainResult::history_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,dev_auc\n";
    os.precision(17);
    for (const EpochStat& st : history) {
        os << st.epoch << ',' << st.train_loss << ',' << st.dev_auc << '\n';
    }
    return os.str();
}

TrainResult train(Model& model, const std::vector<PairSample>& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (samples.size() < 2) throw ConfigError("train: need at least two samples");

    Rng init_rng = Rng(cfg.seed).split(0);
    Rng split_rng = Rng(cfg.seed).split(1);
    Rng shuffle_rng = Rng(cfg.seed).split(2);
    init_params(model, init_rng);

    auto [train_idx, dev_idx] = split_train_dev(samples, cfg.dev_fraction, split_rng);

    std::vector<const PairSample*> train_ptr;
    for (int i : train_idx) train_ptr.push_back(&samples[static_cast<std::size_t>(i)]);

    TrainResult result;
    result.pos_weight = 1.0;
    if (cfg.balance == BalanceMode::PosWeight) {
        std::vector<PairSample> train_view;
        for (const PairSample* p : train_ptr) train_view.push_back(*p);
        result.pos_weight = compute_pos_weight(train_view);
    } else if (cfg.balance == BalanceMode::Downsample) {
        // One downsample of the majority class before training, preserving
        // canonical sample order afterwards.
        std::vector<const PairSample*> cls[2];
        for (const PairSample* p : train_ptr) cls[p->label == 1 ? 1 : 0].push_back(p);
        if (cls[0].empty() || cls[1].empty()) {
            throw ConfigError("downsampling needs both classes in the training split");
        }
        const int maj = cls[0].size() >= cls[1].size() ? 0 : 1;
        Rng down_rng = Rng(cfg.seed).split(3);
        down_rng.shuffle(cls[maj]);
        cls[maj].resize(cls[1 - maj].size());
        train_ptr.clear();
        train_ptr.insert(train_ptr.end(), cls[0].begin(), cls[0].end());
        train_ptr.insert(train_ptr.end(), cls[1].begin(), cls[1].end());
        std::sort(train_ptr.begin(), train_ptr.end(), [](const PairSample* a, const PairSample* b) {
            return std::make_pair(a->student, a->course) < std::make_pair(b->student, b->course);
        });
    }
    result.n_train = static_cast<int>(train_ptr.size());
    result.n_dev = static_cast<int>(dev_idx.size());

    std::vector<PairSample> dev;
    std::vector<int> dev_labels;
    for (int i : dev_idx) {
        dev.push_back(samples[static_cast<std::size_t>(i)]);
        dev_labels.push_back(samples[static_cast<std::size_t>(i)].label);
    }

    Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    ParamStore best_params = model.params();
    result.best_dev_auc = -1.0;

    std::vector<int> order(train_ptr.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    Tape tape;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        const int n = static_cast<int>(order.size());
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int stop = std::min(start + cfg.batch_size, n);
            std::vector<const PairSample*> batch;
            batch.reserve(static_cast<std::size_t>(stop - start));
            for (int k = start; k < stop; ++k) {
                batch.push_back(train_ptr[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
            }
            tape.reset();
            const Var loss = model.batch_loss(tape, batch, result.pos_weight);
            const double loss_val = tape.scalar_value(loss);
            if (!std::isfinite(loss_val)) {
                const auto bad = tape.first_non_finite();
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   "; first bad node: " +
                                   (bad ? bad->first + " #" + std::to_string(bad->second)
                                        : std::string("<none>")));
            }
            tape.backward(loss);
            model.params().zero_grads();
            tape.accumulate_leaf_grads(model.params());
            adam.step(model.params(), cfg.lr);
            loss_sum += loss_val * (stop - start);
        }

        EpochStat st;
        st.epoch = epoch;
        st.train_loss = loss_sum / n;
        st.dev_auc = auc(model.score_all(dev), dev_labels);
        result.history.push_back(st);
        if (st.dev_auc > result.best_dev_auc) {
            result.best_dev_auc = st.dev_auc;
            result.best_epoch = epoch;
            best_params = model.params();
        }
        if (on_epoch) on_epoch(st);
    }

    model.params() = best_params;
    return result;
}

// ---------------------------------------------------------------------------
// Grid search

json GridResult::to_json() const {
    json rows_j = json::array();
    for (const GridRow& r : rows) {
        rows_j.push_back(json{{"lr", r.lr},
                              {"batch_size", r.batch_size},
                              {"best_dev_auc", r.best_dev_auc},
                              {"best_epoch", r.best_epoch}});
    }
    return json{{"rows", rows_j},
                {"best", json{{"lr", best_lr}, {"batch_size", best_batch_size}}}};
}

GridResult grid_search(const ModelConfig& mcfg, const KnowledgeGraph& g,
                       const std::vector<PairSample>& samples, const GridConfig& grid,
                       const TrainConfig& base) {
    grid.validate();
    GridResult result;
    bool have_best = false;
    double best_auc = -1.0;
    for (double lr : grid.lrs) {
        for (int batch : grid.batch_sizes) {
            TrainConfig cfg = base;
            cfg.lr = lr;
            cfg.batch_size = batch;
            cfg.epochs = grid.budget_epochs;
            cfg.seed = grid.seed;
            Model model(mcfg, g);
            const TrainResult tr = train(model, samples, cfg);
            result.rows.push_back(GridRow{lr, batch, tr.best_dev_auc, tr.best_epoch});
            const bool better =
                !have_best || tr.best_dev_auc > best_auc ||
                (tr.best_dev_auc == best_auc &&
                 std::make_pair(lr, batch) < std::make_pair(result.best_lr, result.best_batch_size));
            if (better) {
                have_best = true;
                best_auc = tr.best_dev_auc;
                result.best_lr = lr;
                result.best_batch_size = batch;
            }
        }
    }
    return result;
}

}  // namespace pathgrade
