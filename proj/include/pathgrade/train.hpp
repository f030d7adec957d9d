#pragma once
// Optimization: parameter init, Adam, the epoch loop, and grid search.
//
// Initialization by parameter family:
//   embeddings            iid uniform on [-0.1, 0.1]
//   recurrent w_*/u_*     orthogonal rows/columns (QR of a Gaussian draw,
//                         sign-fixed so the factorization is unique)
//   dense projections     Xavier normal, std = sqrt(2 / (fan_in + fan_out))
//   biases                zero
//
// The loop is deterministic for a fixed seed: one RNG stream drives init,
// another the dev split, another the per-epoch shuffles. Class imbalance is
// handled either by weighting positives in the loss (pos_weight =
// n_neg / n_pos on the training half) or by downsampling the majority class
// once before training.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathgrade/model.hpp"
#include "pathgrade/rng.hpp"
#include "pathgrade/sampler.hpp"

namespace pathgrade {

enum class BalanceMode { PosWeight, Downsample, None };

struct TrainConfig {
    double lr = 0.01;
    int batch_size = 256;
    int epochs = 50;
    std::uint64_t seed = 1;
    BalanceMode balance = BalanceMode::PosWeight;
    double dev_fraction = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;  // throws ConfigError
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Fills params in place; every tensor keeps its shape.
void init_params(Model& model, Rng& rng);

// Orthogonal draw for an (r x c) tensor: rows orthonormal when r <= c,
// columns orthonormal otherwise.
Tensor orthogonal_init(int r, int c, Rng& rng);

class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // One update from the accumulated gradients; t counts calls from 1.
    void step(ParamStore& params, double lr);

    int steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// Per-class stratified split; every class contributes at least one sample to
// each side, so both halves see both labels. Throws ConfigError when a class
// has fewer than two samples. Returns (train indices, dev indices).
std::pair<std::vector<int>, std::vector<int>> split_train_dev(const std::vector<PairSample>& samples,
                                                              double dev_fraction, Rng& rng);

// n_neg / n_pos over the given samples; throws ConfigError on one class.
double compute_pos_weight(const std::vector<PairSample>& samples);

struct EpochStat {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double dev_auc = 0.0;
};

struct TrainResult {
    std::vector<EpochStat> history;
    int best_epoch = 0;       // epoch whose params are restored into the model
    double best_dev_auc = 0;  // ties keep the earlier epoch
    double pos_weight = 1.0;  // weight actually applied to positive samples
    int n_train = 0;          // after split and balancing
    int n_dev = 0;

    std::string history_csv() const;  // header epoch,train_loss,dev_auc
};

using EpochCallback = std::function<void(const EpochStat&)>;

// Trains in place, then restores the best-dev-AUC parameters. Throws
// NumericError naming the first non-finite tape node if the loss diverges.
TrainResult train(Model& model, const std::vector<PairSample>& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = nullptr);

struct GridConfig {
    std::vector<double> lrs = {0.02, 0.01, 0.001, 0.0001};
    std::vector<int> batch_sizes = {128, 256, 512, 1024};
    int budget_epochs = 10;  // training budget per candidate
    std::uint64_t seed = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static GridConfig from_json(const nlohmann::json& j);
};

struct GridRow {
    double lr = 0;
    int batch_size = 0;
    double best_dev_auc = 0;
    int best_epoch = 0;
};

struct GridResult {
    std::vector<GridRow> rows;  // lr-major, batch-minor candidate order
    double best_lr = 0;
    int best_batch_size = 0;

    nlohmann::json to_json() const;
};

// Trains every (lr, batch) candidate from identical init and split (same
// seed) and keeps the best dev AUC; ties prefer the smaller lr, then the
// smaller batch.
GridResult grid_search(const ModelConfig& mcfg, const KnowledgeGraph& g,
                       const std::vector<PairSample>& samples, const GridConfig& grid,
                       const TrainConfig& base);

}  // namespace pathgrade
