#pragma once
// Reverse-mode gradient tape over dense f64 tensors.
//
// The primitive set is closed: matmul/matvec, add, elementwise multiply,
// constant scale, concat, sigmoid, tanh, relu, masked softmax, row gather,
// sum reduce, and a clamped log for the loss terms. Three fused primitives
// (slice, gather_concat, lstm_cell) exist purely to keep tape node counts
// small on long recurrent chains; each is the exact composition of the ops
// above. Every forward value is computed eagerly and recorded; backward()
// replays the tape in exact reverse order. Reductions run left to right, so
// forward results are bitwise deterministic for fixed inputs.
//
// Parameters live in a ParamStore and are attached to a tape as leaf nodes
// bound by reference; accumulate_leaf_grads() moves the leaf gradients back
// into the store after backward().

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathgrade/errors.hpp"
#include "pathgrade/tensor.hpp"

namespace pathgrade {

// Named parameter tensors plus matching gradient accumulators.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    Tensor& grad(const std::string& name);

    // Zeroes (and creates where missing) one gradient tensor per parameter.
    void zero_grads();

    std::vector<std::string> names() const;
    std::size_t size() const { return params_.size(); }
    std::int64_t total_entries() const;

    // Named-tensor container: magic, version, a metadata JSON blob, then
    // (name, shape, raw little-endian f64) records in name order.
    void save(const std::string& path, const std::string& meta_json) const;
    static ParamStore load(const std::string& path, std::string* meta_json = nullptr);

    bool same_values(const ParamStore& other) const;

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    enum class Op : std::uint8_t {
        Leaf,
        Const,
        MatVec,
        MatMul,
        Add,
        Mul,
        Scale,
        Concat,
        Sigmoid,
        Tanh,
        Relu,
        MaskedSoftmax,
        GatherRow,
        ReduceSum,
        Log,
        Slice,
        GatherConcat,
        LstmCell,
    };

    // Per-gate weights of one recurrent cell step, order f, i, o, c.
    struct LstmCellWeights {
        std::array<Var, 4> w;  // input weights, D_h x D_x
        std::array<Var, 4> u;  // recurrent weights, D_h x D_h
        std::array<Var, 4> b;  // biases, D_h
    };

    // Leaf bound to params.get(name); one leaf per name per tape.
    Var leaf(const ParamStore& params, const std::string& name);
    // Owned constant; never receives a gradient.
    Var constant(Tensor t);

    Var matvec(Var m, Var x);
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);  // same shape, or one side scalar
    Var scale(Var x, double k);
    Var concat(const std::vector<Var>& xs);
    Var sigmoid(Var x);
    Var tanh(Var x);
    Var relu(Var x);
    Var masked_softmax(Var logits, std::vector<std::uint8_t> mask);
    Var softmax(Var logits);
    Var gather_row(Var m, int row);    // matrix row, or single element of a vector
    Var reduce_sum(Var x);
    Var log(Var x);  // input clamped to >= kLogClamp

    // Fused equivalents of gather_row/concat/matvec/add chains.
    Var slice(Var x, int offset, int len);  // rank-1 window [offset, offset+len)
    Var gather_concat(const std::vector<std::pair<Var, int>>& picks);  // concat of matrix rows
    // One recurrent cell step; returns concat(h_t, c_t), length 2*D_h.
    // Gates: f,i,o = sigmoid, candidate = tanh; c_t = f*c_prev + i*cand;
    // h_t = o * act(c_t) with act = sigmoid, or tanh when tanh_cell_output.
    Var lstm_cell(Var x, Var h_prev, Var c_prev, const LstmCellWeights& wts,
                  bool tanh_cell_output);

    Var dot(Var a, Var b) { return reduce_sum(mul(a, b)); }

    const Tensor& value(Var v) const;
    double scalar_value(Var v) const;
    const Tensor& grad_of(Var v) const;

    void backward(Var loss, double seed = 1.0);
    void accumulate_leaf_grads(ParamStore& params, double factor = 1.0) const;

    std::size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

    // First node whose value contains NaN/Inf, as (op name, node index).
    std::optional<std::pair<std::string, std::size_t>> first_non_finite() const;

    void reset();

    static constexpr double kLogClamp = 1e-12;
    static const char* op_name(Op op);

private:
    struct Node {
        Op op;
        int in0 = -1;
        int in1 = -1;
        int aux = -1;       // gather row, slice offset, or pool index
        int aux2 = 0;       // slice length, lstm tanh flag, gather-concat rows pool
        double factor = 0;  // scale constant
        Tensor value;       // unset for bound leaves
        Tensor grad;
        Tensor stash;       // lstm_cell gate activations [f;i;o;cand]
        bool has_grad = false;
        const Tensor* bound = nullptr;
        int name_id = -1;  // leaf name, index into leaf_names_
    };

    const Tensor& val(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.bound ? *n.bound : n.value;
    }
    Tensor& ensure_grad(int id);
    int push(Node n);
    void check_var(Var v, const char* prim) const;

    std::vector<Node> nodes_;
    std::vector<std::vector<int>> input_lists_;
    std::vector<std::vector<std::uint8_t>> masks_;
    std::vector<std::string> leaf_names_;
    std::map<std::string, int> leaf_by_name_;
    bool backward_done_ = false;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of every parameter entry against the analytic
// gradient of build_loss. The relative error denominator is
// max(1, |analytic|, |numeric|), so tiny gradients are compared absolutely.
GradCheckResult grad_check(const std::function<Var(Tape&)>& build_loss, ParamStore& params,
                           double eps);

}  // namespace pathgrade
