#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "pathgrade/synth.hpp"
#include "pathgrade/train.hpp"
#include "test_support.hpp"

using namespace pathgrade;
using test_support::tiny_config;
using test_support::tiny_graph;

namespace {

// Small planted dataset shared by the heavier training tests.
struct PlantedData {
    KnowledgeGraph g;
    DatasetBuild split;
};

const PlantedData& planted_data() {
    static const PlantedData data = [] {
        SynthConfig cfg;
        cfg.n_students = 30;
        cfg.n_courses = 12;
        cfg.seed = 5;
        SynthResult sr = generate(cfg);
        KnowledgeGraph g = KnowledgeGraph::build(std::move(sr.triples));
        DatasetBuild split = build_dataset(g, 6, SamplerConfig{8, 10});
        return PlantedData{std::move(g), std::move(split)};
    }();
    return data;
}

double max_abs_off_identity(const Tensor& gram) {
    double worst = 0.0;
    for (int i = 0; i < gram.rows(); ++i) {
        for (int j = 0; j < gram.cols(); ++j) {
            const double want = i == j ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(gram.at(i, j) - want));
        }
    }
    return worst;
}

Tensor gram_rows(const Tensor& u) {
    Tensor g = Tensor::zeros({u.rows(), u.rows()});
    for (int i = 0; i < u.rows(); ++i) {
        for (int j = 0; j < u.rows(); ++j) {
            double s = 0.0;
            for (int k = 0; k < u.cols(); ++k) s += u.at(i, k) * u.at(j, k);
            g.at(i, j) = s;
        }
    }
    return g;
}

Tensor gram_cols(const Tensor& u) {
    Tensor g = Tensor::zeros({u.cols(), u.cols()});
    for (int i = 0; i < u.cols(); ++i) {
        for (int j = 0; j < u.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < u.rows(); ++k) s += u.at(k, i) * u.at(k, j);
            g.at(i, j) = s;
        }
    }
    return g;
}

}  // namespace

TEST_CASE("orthogonal init produces orthonormal factors") {
    Rng rng(3);
    SUBCASE("square") {
        const Tensor u = orthogonal_init(12, 12, rng);
        CHECK(max_abs_off_identity(gram_rows(u)) < 1e-10);
        CHECK(max_abs_off_identity(gram_cols(u)) < 1e-10);
    }
    SUBCASE("wide has orthonormal rows") {
        const Tensor u = orthogonal_init(5, 12, rng);
        CHECK(max_abs_off_identity(gram_rows(u)) < 1e-10);
    }
    SUBCASE("tall has orthonormal columns") {
        const Tensor u = orthogonal_init(12, 5, rng);
        CHECK(max_abs_off_identity(gram_cols(u)) < 1e-10);
    }
}

TEST_CASE("recurrent weight matrices are orthogonal after init") {
    const KnowledgeGraph g = tiny_graph();
    Model m(tiny_config(), g);
    Rng rng(17);
    init_params(m, rng);
    for (const std::string& name : Model::lstm_param_names()) {
        const Tensor& u = m.params().get(name);
        const Tensor gram = u.rows() <= u.cols() ? gram_rows(u) : gram_cols(u);
        INFO(name);
        CHECK(max_abs_off_identity(gram) < 1e-10);
    }
}

TEST_CASE("the same seed initializes bitwise-identical parameters") {
    const KnowledgeGraph g = tiny_graph();
    Model a(tiny_config(), g), b(tiny_config(), g);
    Rng ra(29), rb(29);
    init_params(a, ra);
    init_params(b, rb);
    CHECK(a.params().same_values(b.params()));

    Model c(tiny_config(), g);
    Rng rc(30);
    init_params(c, rc);
    CHECK_FALSE(c.params().same_values(a.params()));
}

TEST_CASE("dense layers draw from the Xavier-normal scale") {
    // Big dims so one matrix alone crosses 10k entries.
    const KnowledgeGraph g = tiny_graph();
    ModelConfig cfg;
    cfg.embed_dim = 100;
    cfg.hidden_dim = 60;
    Model m(cfg, g);
    Rng rng(31);
    init_params(m, rng);

    const Tensor& w = m.params().get("attn.local.w");  // 120 x 100
    REQUIRE(w.numel() >= 10000);
    double sum = 0.0, sq = 0.0;
    for (double v : w.data) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(w.numel());
    const double mean = sum / n;
    const double std = std::sqrt(sq / n - mean * mean);
    const double target = std::sqrt(2.0 / (2.0 * cfg.hidden_dim + cfg.embed_dim));
    CHECK(std > 0.95 * target);
    CHECK(std < 1.05 * target);
    CHECK(std::abs(mean) < 0.05 * target);

    // Biases start at zero; embeddings stay inside the uniform box.
    for (double v : m.params().get("attn.local.b").data) CHECK(v == 0.0);
    for (double v : m.params().get("bias.student").data) CHECK(v == 0.0);
    bool any_nonzero = false;
    for (double v : m.params().get("embed.value").data) {
        CHECK(v >= -0.1);
        CHECK(v <= 0.1);
        any_nonzero = any_nonzero || v != 0.0;
    }
    CHECK(any_nonzero);
}

TEST_CASE("adam follows the reference update on a hand-traced parameter") {
    ParamStore store;
    store.add("w", Tensor::vec({1.0}));
    store.zero_grads();
    Adam adam(0.9, 0.999, 1e-8);

    double theta = 1.0, m = 0.0, v = 0.0;
    const double g = 0.5, lr = 0.1;
    for (int t = 1; t <= 3; ++t) {
        store.grad("w").at(0) = g;
        adam.step(store, lr);

        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        theta -= lr * mhat / (std::sqrt(vhat) + 1e-8);

        INFO("step ", t);
        CHECK(std::abs(store.get("w").at(0) - theta) <= 1e-12);
    }
    CHECK(adam.steps_taken() == 3);
}

TEST_CASE("the dev split is stratified, disjoint, and sorted") {
    std::vector<PairSample> samples(20);
    for (int i = 0; i < 20; ++i) {
        samples[static_cast<std::size_t>(i)].student = i;
        samples[static_cast<std::size_t>(i)].label = i < 15 ? 0 : 1;
    }
    Rng rng(7);
    const auto [train_idx, dev_idx] = split_train_dev(samples, 0.1, rng);

    CHECK(std::is_sorted(train_idx.begin(), train_idx.end()));
    CHECK(std::is_sorted(dev_idx.begin(), dev_idx.end()));
    CHECK(train_idx.size() + dev_idx.size() == 20);
    std::set<int> all(train_idx.begin(), train_idx.end());
    all.insert(dev_idx.begin(), dev_idx.end());
    CHECK(all.size() == 20);

    auto count_pos = [&](const std::vector<int>& idx) {
        int pos = 0;
        for (int i : idx) pos += samples[static_cast<std::size_t>(i)].label;
        return pos;
    };
    // 15 negatives -> 2 in dev; 5 positives -> 1 in dev (at least one each).
    CHECK(count_pos(dev_idx) == 1);
    CHECK(static_cast<int>(dev_idx.size()) - count_pos(dev_idx) == 2);
    CHECK(count_pos(train_idx) == 4);
}

TEST_CASE("a class with one sample cannot be split") {
    std::vector<PairSample> samples(5);
    for (int i = 0; i < 5; ++i) samples[static_cast<std::size_t>(i)].label = i == 0 ? 1 : 0;
    Rng rng(7);
    CHECK_THROWS_AS(split_train_dev(samples, 0.1, rng), ConfigError);
    CHECK_THROWS_AS(split_train_dev(samples, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(split_train_dev(samples, 1.0, rng), ConfigError);
}

TEST_CASE("pos_weight is the negative-to-positive ratio") {
    std::vector<PairSample> samples(20);
    for (int i = 0; i < 20; ++i) samples[static_cast<std::size_t>(i)].label = i < 15 ? 0 : 1;
    CHECK(compute_pos_weight(samples) == 3.0);
    std::vector<PairSample> one_class(4);
    CHECK_THROWS_AS(compute_pos_weight(one_class), ConfigError);
}

TEST_CASE("train config validates and round-trips through json") {
    TrainConfig cfg;
    cfg.validate();
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.batch_size == 256);
    CHECK(cfg.epochs == 50);
    CHECK(cfg.adam_beta1 == 0.9);
    CHECK(cfg.adam_beta2 == 0.999);
    CHECK(cfg.adam_eps == 1e-8);

    const TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());

    nlohmann::json j = cfg.to_json();
    j["bogus"] = true;
    CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);

    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training reduces the loss on planted data") {
    const PlantedData& data = planted_data();
    Model m(tiny_config(), data.g);

    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size = 64;
    cfg.epochs = 30;
    cfg.seed = 4;
    const TrainResult r = train(m, data.split.train, cfg);

    REQUIRE(r.history.size() == 30);
    CHECK(r.history.front().epoch == 1);
    CHECK(r.history.back().epoch == 30);
    CHECK(r.history.back().train_loss < r.history.front().train_loss);
    CHECK(r.n_train + r.n_dev == static_cast<int>(data.split.train.size()));
    CHECK(r.pos_weight > 0.0);
    CHECK(r.best_epoch >= 1);
    CHECK(r.best_epoch <= 30);

    // best_dev_auc is the running maximum of the log.
    double best = 0.0;
    for (const EpochStat& e : r.history) best = std::max(best, e.dev_auc);
    CHECK(r.best_dev_auc == best);

    const std::string csv = r.history_csv();
    CHECK(csv.rfind("epoch,train_loss,dev_auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
}

TEST_CASE("a zero learning rate leaves parameters bitwise at their init") {
    const PlantedData& data = planted_data();
    Model m(tiny_config(), data.g);

    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.batch_size = 64;
    cfg.epochs = 2;
    cfg.seed = 9;
    train(m, data.split.train, cfg);

    // The reference init uses the same derived stream as train().
    Model ref(tiny_config(), data.g);
    Rng init_rng = Rng(cfg.seed).split(0);
    init_params(ref, init_rng);
    CHECK(m.params().same_values(ref.params()));
}

TEST_CASE("training twice with one seed is bitwise reproducible") {
    const PlantedData& data = planted_data();
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.seed = 21;

    Model a(tiny_config(), data.g), b(tiny_config(), data.g);
    const TrainResult ra = train(a, data.split.train, cfg);
    const TrainResult rb = train(b, data.split.train, cfg);

    CHECK(a.params().same_values(b.params()));
    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
        CHECK(ra.history[i].dev_auc == rb.history[i].dev_auc);
    }
    CHECK(ra.best_epoch == rb.best_epoch);
}

TEST_CASE("downsampling balances the classes it trains on") {
    const PlantedData& data = planted_data();
    Model m(tiny_config(), data.g);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size = 32;
    cfg.epochs = 2;
    cfg.seed = 33;
    cfg.balance = BalanceMode::Downsample;
    const TrainResult r = train(m, data.split.train, cfg);
    // Weighted loss is disabled when the set itself is rebalanced.
    CHECK(r.pos_weight == 1.0);
    CHECK(r.n_train < static_cast<int>(data.split.train.size()));
}

TEST_CASE("an epoch callback sees every epoch in order") {
    const PlantedData& data = planted_data();
    Model m(tiny_config(), data.g);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size = 64;
    cfg.epochs = 3;
    cfg.seed = 2;
    std::vector<int> seen;
    train(m, data.split.train, cfg, [&](const EpochStat& e) { seen.push_back(e.epoch); });
    CHECK(seen == std::vector<int>{1, 2, 3});
}

TEST_CASE("a diverging run aborts with a numeric diagnostic") {
    const PlantedData& data = planted_data();
    Model m(tiny_config(), data.g);
    TrainConfig cfg;
    // An absurd step size overflows the parameters within a few updates;
    // the trainer must name the first non-finite tape node instead of
    // silently logging a NaN loss.
    cfg.lr = 1e200;
    cfg.batch_size = 32;
    cfg.epochs = 6;
    cfg.seed = 12;
    try {
        train(m, data.split.train, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).size() > 10);
    }
}

TEST_CASE("a full grid logs every combination and picks the argmax") {
    const PlantedData& data = planted_data();
    GridConfig grid;
    grid.lrs = {0.02, 0.01, 0.001, 0.0001};
    grid.batch_sizes = {128, 256, 512, 1024};
    grid.budget_epochs = 1;
    grid.seed = 3;
    TrainConfig base;
    const GridResult r = grid_search(tiny_config(), data.g, data.split.train, grid, base);

    REQUIRE(r.rows.size() == 16);
    double best = -1.0;
    for (const GridRow& row : r.rows) best = std::max(best, row.best_dev_auc);
    bool found = false;
    for (const GridRow& row : r.rows) {
        if (row.lr == r.best_lr && row.batch_size == r.best_batch_size) {
            CHECK(row.best_dev_auc == best);
            found = true;
        }
    }
    CHECK(found);

    const nlohmann::json j = r.to_json();
    CHECK(j.at("rows").size() == 16);
    CHECK(j.at("best").at("lr").get<double>() == r.best_lr);
}

TEST_CASE("a single-point grid returns that point") {
    const PlantedData& data = planted_data();
    GridConfig grid;
    grid.lrs = {0.01};
    grid.batch_sizes = {64};
    grid.budget_epochs = 1;
    TrainConfig base;
    const GridResult r = grid_search(tiny_config(), data.g, data.split.train, grid, base);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.best_lr == 0.01);
    CHECK(r.best_batch_size == 64);
}

TEST_CASE("grid ties break toward the smaller learning rate then batch") {
    const PlantedData& data = planted_data();
    // Both batch sizes exceed the training set, so each run sees one full
    // batch and the two scores tie exactly.
    GridConfig grid;
    grid.lrs = {0.01};
    grid.batch_sizes = {8192, 4096};
    grid.budget_epochs = 1;
    TrainConfig base;
    const GridResult r = grid_search(tiny_config(), data.g, data.split.train, grid, base);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].best_dev_auc == r.rows[1].best_dev_auc);
    CHECK(r.best_batch_size == 4096);
}
