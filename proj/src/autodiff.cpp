#include "pathgrade/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pathgrade {

// ---------------------------------------------------------------------------
// ParamStore

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw StateError("param store: duplicate parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw RangeError("param store: unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw RangeError("param store: unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
        const Tensor& p = get(name);
        it = grads_.emplace(name, Tensor::zeros(p.shape)).first;
    }
    return it->second;
}

void ParamStore::zero_grads() {
    for (const auto& [name, p] : params_) {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            grads_.emplace(name, Tensor::zeros(p.shape));
        } else {
            it->second.fill(0.0);
        }
    }
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
}

std::int64_t ParamStore::total_entries() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
}

bool ParamStore::same_values(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (const auto& [name, p] : params_) {
        auto it = other.params_.find(name);
        if (it == other.params_.end()) return false;
        if (p.shape != it->second.shape) return false;
        if (std::memcmp(p.data.data(), it->second.data.data(),
                        p.data.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

namespace {

constexpr char kMagic[8] = {'P', 'G', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("param container: truncated file");
    return v;
}

}  // namespace

void ParamStore::save(const std::string& path, const std::string& meta_json) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("param container: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(meta_json.size()));
    os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
    write_pod(os, static_cast<std::uint64_t>(params_.size()));
    for (const auto& [name, t] : params_) {
        write_pod(os, static_cast<std::uint64_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) write_pod(os, static_cast<std::int32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("param container: write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path, std::string* meta_json) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("param container: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("param container: bad magic in '" + path + "'");
    }
    auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion) {
        throw ParseError("param container: unsupported version " + std::to_string(version));
    }
    auto meta_len = read_pod<std::uint64_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw IoError("param container: truncated metadata");
    if (meta_json) *meta_json = meta;

    ParamStore store;
    auto count = read_pod<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto name_len = read_pod<std::uint64_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        auto ndim = read_pod<std::uint32_t>(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = read_pod<std::int32_t>(is);
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw IoError("param container: truncated tensor '" + name + "'");
        store.add(name, std::move(t));
    }
    return store;
}

// ---------------------------------------------------------------------------
// Tape

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Const: return "const";
        case Op::MatVec: return "matvec";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Concat: return "concat";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::MaskedSoftmax: return "masked_softmax";
        case Op::GatherRow: return "gather_row";
        case Op::ReduceSum: return "reduce_sum";
        case Op::Log: return "log";
        case Op::Slice: return "slice";
        case Op::GatherConcat: return "gather_concat";
        case Op::LstmCell: return "lstm_cell";
    }
    return "?";
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_var(Var v, const char* prim) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw RangeError(std::string(prim) + ": invalid tape variable");
    }
}

Var Tape::leaf(const ParamStore& params, const std::string& name) {
    auto it = leaf_by_name_.find(name);
    if (it != leaf_by_name_.end()) return Var{it->second};
    Node n;
    n.op = Op::Leaf;
    n.bound = &params.get(name);
    n.name_id = static_cast<int>(leaf_names_.size());
    leaf_names_.push_back(name);
    int id = push(std::move(n));
    leaf_by_name_[name] = id;
    return Var{id};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(t);
    return Var{push(std::move(n))};
}

Var Tape::matvec(Var m, Var x) {
    check_var(m, "matvec");
    check_var(x, "matvec");
    const Tensor& M = val(m.id);
    const Tensor& v = val(x.id);
    if (M.ndim() != 2 || v.ndim() != 1 || M.cols() != v.shape[0]) {
        throw DimensionError("matvec: incompatible shapes " + M.shape_str() + " * " +
                             v.shape_str());
    }
    const int rows = M.rows(), cols = M.cols();
    Node n;
    n.op = Op::MatVec;
    n.in0 = m.id;
    n.in1 = x.id;
    n.value = Tensor::zeros({rows});
    const double* mp = M.data.data();
    const double* xp = v.data.data();
    double* yp = n.value.data.data();
    for (int i = 0; i < rows; ++i) {
        const double* row = mp + static_cast<std::size_t>(i) * cols;
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += row[j] * xp[j];
        yp[i] = acc;
    }
    return Var{push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
    check_var(a, "matmul");
    check_var(b, "matmul");
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    if (B.ndim() == 1) return matvec(a, b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows()) {
        throw DimensionError("matmul: incompatible shapes " + A.shape_str() + " * " +
                             B.shape_str());
    }
    const int r = A.rows(), k = A.cols(), c = B.cols();
    Node n;
    n.op = Op::MatMul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros({r, c});
    for (int i = 0; i < r; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = A.at(i, p);
            const double* brow = B.row(p);
            double* yrow = n.value.row(i);
            for (int j = 0; j < c; ++j) yrow[j] += aip * brow[j];
        }
    }
    return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    if (!A.same_shape(B)) {
        throw DimensionError("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    }
    Node n;
    n.op = Op::Add;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = A;
    double* yp = n.value.data.data();
    const double* bp = B.data.data();
    for (std::int64_t i = 0; i < B.numel(); ++i) yp[i] += bp[i];
    return Var{push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
    check_var(a, "mul");
    check_var(b, "mul");
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    Node n;
    n.op = Op::Mul;
    n.in0 = a.id;
    n.in1 = b.id;
    if (A.same_shape(B)) {
        n.value = A;
        double* yp = n.value.data.data();
        const double* bp = B.data.data();
        for (std::int64_t i = 0; i < B.numel(); ++i) yp[i] *= bp[i];
    } else if (B.is_scalar()) {
        n.value = A;
        const double k = B.data[0];
        for (double& v : n.value.data) v *= k;
    } else if (A.is_scalar()) {
        n.value = B;
        const double k = A.data[0];
        for (double& v : n.value.data) v *= k;
    } else {
        throw DimensionError("mul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    }
    return Var{push(std::move(n))};
}

Var Tape::scale(Var x, double k) {
    check_var(x, "scale");
    Node n;
    n.op = Op::Scale;
    n.in0 = x.id;
    n.factor = k;
    n.value = val(x.id);
    for (double& v : n.value.data) v *= k;
    return Var{push(std::move(n))};
}

Var Tape::concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat: empty input list");
    std::vector<int> ids;
    ids.reserve(xs.size());
    std::int64_t total = 0;
    for (Var v : xs) {
        check_var(v, "concat");
        const Tensor& t = val(v.id);
        if (t.ndim() != 1) throw DimensionError("concat: inputs must be rank-1");
        total += t.numel();
        ids.push_back(v.id);
    }
    Node n;
    n.op = Op::Concat;
    n.aux = static_cast<int>(input_lists_.size());
    n.value = Tensor::zeros({static_cast<int>(total)});
    double* out = n.value.data.data();
    for (int id : ids) {
        const Tensor& t = val(id);
        std::memcpy(out, t.data.data(), t.data.size() * sizeof(double));
        out += t.data.size();
    }
    input_lists_.push_back(std::move(ids));
    return Var{push(std::move(n))};
}

namespace {

inline double stable_sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Tape::sigmoid(Var x) {
    check_var(x, "sigmoid");
    Node n;
    n.op = Op::Sigmoid;
    n.in0 = x.id;
    n.value = val(x.id);
    for (double& v : n.value.data) v = stable_sigmoid(v);
    return Var{push(std::move(n))};
}

Var Tape::tanh(Var x) {
    check_var(x, "tanh");
    Node n;
    n.op = Op::Tanh;
    n.in0 = x.id;
    n.value = val(x.id);
    for (double& v : n.value.data) v = std::tanh(v);
    return Var{push(std::move(n))};
}

Var Tape::relu(Var x) {
    check_var(x, "relu");
    Node n;
    n.op = Op::Relu;
    n.in0 = x.id;
    n.value = val(x.id);
    for (double& v : n.value.data) v = v > 0 ? v : 0.0;
    return Var{push(std::move(n))};
}

Var Tape::masked_softmax(Var logits, std::vector<std::uint8_t> mask) {
    check_var(logits, "masked_softmax");
    const Tensor& x = val(logits.id);
    if (x.ndim() != 1) throw DimensionError("masked_softmax: input must be rank-1");
    if (static_cast<std::int64_t>(mask.size()) != x.numel()) {
        throw DimensionError("masked_softmax: mask length mismatch");
    }
    double maxv = -1e300;
    bool any = false;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
            any = true;
            maxv = std::max(maxv, x.data[static_cast<std::size_t>(i)]);
        }
    }
    if (!any) throw DimensionError("masked_softmax: all entries masked");
    Node n;
    n.op = Op::MaskedSoftmax;
    n.in0 = logits.id;
    n.aux = static_cast<int>(masks_.size());
    n.value = Tensor::zeros(x.shape);
    double denom = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
            const double e = std::exp(x.data[static_cast<std::size_t>(i)] - maxv);
            n.value.data[static_cast<std::size_t>(i)] = e;
            denom += e;
        }
    }
    for (double& v : n.value.data) v /= denom;
    masks_.push_back(std::move(mask));
    return Var{push(std::move(n))};
}

Var Tape::softmax(Var logits) {
    const Tensor& x = val(logits.id);
    return masked_softmax(logits, std::vector<std::uint8_t>(static_cast<std::size_t>(x.numel()), 1));
}

Var Tape::gather_row(Var m, int row) {
    check_var(m, "gather_row");
    const Tensor& M = val(m.id);
    Node n;
    n.op = Op::GatherRow;
    n.in0 = m.id;
    n.aux = row;
    if (M.ndim() == 2) {
        if (row < 0 || row >= M.rows()) {
            throw RangeError("gather_row: row " + std::to_string(row) + " out of range for " +
                             M.shape_str());
        }
        n.value = Tensor::zeros({M.cols()});
        std::memcpy(n.value.data.data(), M.row(row),
                    static_cast<std::size_t>(M.cols()) * sizeof(double));
    } else if (M.ndim() == 1) {
        if (row < 0 || row >= M.shape[0]) {
            throw RangeError("gather_row: index " + std::to_string(row) + " out of range for " +
                             M.shape_str());
        }
        n.value = Tensor::scalar(M.data[static_cast<std::size_t>(row)]);
    } else {
        throw DimensionError("gather_row: input must be rank-1 or rank-2");
    }
    return Var{push(std::move(n))};
}

Var Tape::reduce_sum(Var x) {
    check_var(x, "reduce_sum");
    const Tensor& t = val(x.id);
    double acc = 0.0;
    for (double v : t.data) acc += v;
    Node n;
    n.op = Op::ReduceSum;
    n.in0 = x.id;
    n.value = Tensor::scalar(acc);
    return Var{push(std::move(n))};
}

Var Tape::log(Var x) {
    check_var(x, "log");
    Node n;
    n.op = Op::Log;
    n.in0 = x.id;
    n.value = val(x.id);
    for (double& v : n.value.data) v = std::log(v < kLogClamp ? kLogClamp : v);
    return Var{push(std::move(n))};
}

Var Tape::slice(Var x, int offset, int len) {
    check_var(x, "slice");
    const Tensor& t = val(x.id);
    if (t.ndim() != 1) throw DimensionError("slice: input must be rank-1");
    if (offset < 0 || len < 1 || offset + len > t.shape[0]) {
        throw RangeError("slice: window [" + std::to_string(offset) + ", " +
                         std::to_string(offset + len) + ") out of range for " + t.shape_str());
    }
    Node n;
    n.op = Op::Slice;
    n.in0 = x.id;
    n.aux = offset;
    n.aux2 = len;
    n.value = Tensor::zeros({len});
    std::memcpy(n.value.data.data(), t.data.data() + offset,
                static_cast<std::size_t>(len) * sizeof(double));
    return Var{push(std::move(n))};
}

Var Tape::gather_concat(const std::vector<std::pair<Var, int>>& picks) {
    if (picks.empty()) throw DimensionError("gather_concat: empty pick list");
    std::vector<int> mats, rows;
    mats.reserve(picks.size());
    rows.reserve(picks.size());
    std::int64_t total = 0;
    for (const auto& [m, row] : picks) {
        check_var(m, "gather_concat");
        const Tensor& M = val(m.id);
        if (M.ndim() != 2) throw DimensionError("gather_concat: inputs must be rank-2");
        if (row < 0 || row >= M.rows()) {
            throw RangeError("gather_concat: row " + std::to_string(row) + " out of range for " +
                             M.shape_str());
        }
        total += M.cols();
        mats.push_back(m.id);
        rows.push_back(row);
    }
    Node n;
    n.op = Op::GatherConcat;
    n.aux = static_cast<int>(input_lists_.size());
    n.value = Tensor::zeros({static_cast<int>(total)});
    double* out = n.value.data.data();
    for (std::size_t k = 0; k < mats.size(); ++k) {
        const Tensor& M = val(mats[k]);
        std::memcpy(out, M.row(rows[k]), static_cast<std::size_t>(M.cols()) * sizeof(double));
        out += M.cols();
    }
    input_lists_.push_back(std::move(mats));
    n.aux2 = static_cast<int>(input_lists_.size());
    input_lists_.push_back(std::move(rows));
    return Var{push(std::move(n))};
}

Var Tape::lstm_cell(Var x, Var h_prev, Var c_prev, const LstmCellWeights& wts,
                    bool tanh_cell_output) {
    check_var(x, "lstm_cell");
    check_var(h_prev, "lstm_cell");
    check_var(c_prev, "lstm_cell");
    const Tensor& xt = val(x.id);
    const Tensor& hp = val(h_prev.id);
    const Tensor& cp = val(c_prev.id);
    if (xt.ndim() != 1 || hp.ndim() != 1 || cp.ndim() != 1 || !hp.same_shape(cp)) {
        throw DimensionError("lstm_cell: x, h_prev, c_prev must be rank-1 with matching state size");
    }
    const int dx = xt.shape[0];
    const int dh = hp.shape[0];
    std::vector<int> ins;
    ins.reserve(13);
    ins.push_back(c_prev.id);
    for (const auto& group : {wts.w, wts.u, wts.b}) {
        for (Var v : group) {
            check_var(v, "lstm_cell");
            ins.push_back(v.id);
        }
    }
    for (int k = 0; k < 4; ++k) {
        const Tensor& W = val(ins[static_cast<std::size_t>(1 + k)]);
        const Tensor& U = val(ins[static_cast<std::size_t>(5 + k)]);
        const Tensor& B = val(ins[static_cast<std::size_t>(9 + k)]);
        if (W.ndim() != 2 || W.rows() != dh || W.cols() != dx || U.ndim() != 2 ||
            U.rows() != dh || U.cols() != dh || B.ndim() != 1 || B.shape[0] != dh) {
            throw DimensionError("lstm_cell: weight shapes inconsistent with state size");
        }
    }

    Node n;
    n.op = Op::LstmCell;
    n.in0 = x.id;
    n.in1 = h_prev.id;
    n.aux2 = tanh_cell_output ? 1 : 0;
    n.value = Tensor::zeros({2 * dh});
    n.stash = Tensor::zeros({4 * dh});
    double* hv = n.value.data.data();
    double* cv = hv + dh;
    double* gates = n.stash.data.data();  // f, i, o, cand blocks
    const double* xp = xt.data.data();
    const double* hpp = hp.data.data();
    for (int k = 0; k < 4; ++k) {
        const Tensor& W = val(ins[static_cast<std::size_t>(1 + k)]);
        const Tensor& U = val(ins[static_cast<std::size_t>(5 + k)]);
        const Tensor& B = val(ins[static_cast<std::size_t>(9 + k)]);
        double* zk = gates + static_cast<std::size_t>(k) * dh;
        for (int i = 0; i < dh; ++i) {
            const double* wrow = W.row(i);
            double acc = 0.0;
            for (int j = 0; j < dx; ++j) acc += wrow[j] * xp[j];
            const double* urow = U.row(i);
            for (int j = 0; j < dh; ++j) acc += urow[j] * hpp[j];
            acc += B.data[static_cast<std::size_t>(i)];
            zk[i] = k == 3 ? std::tanh(acc) : stable_sigmoid(acc);
        }
    }
    const double* f = gates;
    const double* ig = gates + dh;
    const double* o = gates + 2 * dh;
    const double* cand = gates + 3 * dh;
    const double* cpp = cp.data.data();
    for (int i = 0; i < dh; ++i) {
        const double c = f[i] * cpp[i] + ig[i] * cand[i];
        cv[i] = c;
        const double act = tanh_cell_output ? std::tanh(c) : stable_sigmoid(c);
        hv[i] = o[i] * act;
    }
    n.aux = static_cast<int>(input_lists_.size());
    input_lists_.push_back(std::move(ins));
    return Var{push(std::move(n))};
}

const Tensor& Tape::value(Var v) const {
    check_var(v, "value");
    return val(v.id);
}

double Tape::scalar_value(Var v) const {
    const Tensor& t = value(v);
    if (!t.is_scalar()) throw DimensionError("scalar_value: tensor is not scalar");
    return t.data[0];
}

const Tensor& Tape::grad_of(Var v) const {
    check_var(v, "grad_of");
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.has_grad) throw StateError("grad_of: node has no gradient (run backward first)");
    return n.grad;
}

Tensor& Tape::ensure_grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(val(id).shape);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss, double seed) {
    if (backward_done_) {
        throw StateError("backward: called twice on the same tape without reset");
    }
    check_var(loss, "backward");
    if (!val(loss.id).is_scalar()) throw DimensionError("backward: loss must be scalar");
    if (nodes_.empty()) throw StateError("backward: empty tape");
    backward_done_ = true;

    // Every leaf gets a gradient after backward, zero when the loss never
    // touches it, so callers can read grads without reachability checks.
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].op == Op::Leaf) ensure_grad(static_cast<int>(id));
    }
    ensure_grad(loss.id).data[0] = seed;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad) continue;
        const double* g = n.grad.data.data();
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::MatVec: {
                const Tensor& M = val(n.in0);
                const Tensor& x = val(n.in1);
                const int rows = M.rows(), cols = M.cols();
                Tensor& gm = ensure_grad(n.in0);
                Tensor& gx = ensure_grad(n.in1);
                double* gmp = gm.data.data();
                double* gxp = gx.data.data();
                const double* xp = x.data.data();
                const double* mp = M.data.data();
                for (int i = 0; i < rows; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    double* gmr = gmp + static_cast<std::size_t>(i) * cols;
                    const double* mr = mp + static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) {
                        gmr[j] += gi * xp[j];
                        gxp[j] += gi * mr[j];
                    }
                }
                break;
            }
            case Op::MatMul: {
                const Tensor& A = val(n.in0);
                const Tensor& B = val(n.in1);
                const int r = A.rows(), k = A.cols(), c = B.cols();
                Tensor& ga = ensure_grad(n.in0);
                Tensor& gb = ensure_grad(n.in1);
                // dA = G * B^T ; dB = A^T * G
                for (int i = 0; i < r; ++i) {
                    const double* grow = g + static_cast<std::size_t>(i) * c;
                    for (int p = 0; p < k; ++p) {
                        const double* brow = B.row(p);
                        double acc = 0.0;
                        for (int j = 0; j < c; ++j) acc += grow[j] * brow[j];
                        ga.at(i, p) += acc;
                    }
                    for (int p = 0; p < k; ++p) {
                        const double aip = A.at(i, p);
                        if (aip == 0.0) continue;
                        double* gbrow = gb.row(p);
                        for (int j = 0; j < c; ++j) gbrow[j] += aip * grow[j];
                    }
                }
                break;
            }
            case Op::Add: {
                Tensor& ga = ensure_grad(n.in0);
                Tensor& gb = ensure_grad(n.in1);
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    ga.data[static_cast<std::size_t>(i)] += g[i];
                    gb.data[static_cast<std::size_t>(i)] += g[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& A = val(n.in0);
                const Tensor& B = val(n.in1);
                Tensor& ga = ensure_grad(n.in0);
                Tensor& gb = ensure_grad(n.in1);
                if (A.same_shape(B)) {
                    for (std::int64_t i = 0; i < A.numel(); ++i) {
                        ga.data[static_cast<std::size_t>(i)] += g[i] * B.data[static_cast<std::size_t>(i)];
                        gb.data[static_cast<std::size_t>(i)] += g[i] * A.data[static_cast<std::size_t>(i)];
                    }
                } else if (B.is_scalar()) {
                    const double k = B.data[0];
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < A.numel(); ++i) {
                        ga.data[static_cast<std::size_t>(i)] += g[i] * k;
                        acc += g[i] * A.data[static_cast<std::size_t>(i)];
                    }
                    gb.data[0] += acc;
                } else {
                    const double k = A.data[0];
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < B.numel(); ++i) {
                        gb.data[static_cast<std::size_t>(i)] += g[i] * k;
                        acc += g[i] * B.data[static_cast<std::size_t>(i)];
                    }
                    ga.data[0] += acc;
                }
                break;
            }
            case Op::Scale: {
                Tensor& gx = ensure_grad(n.in0);
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    gx.data[static_cast<std::size_t>(i)] += g[i] * n.factor;
                }
                break;
            }
            case Op::Concat: {
                const auto& ids = input_lists_[static_cast<std::size_t>(n.aux)];
                std::int64_t off = 0;
                for (int in : ids) {
                    Tensor& gi = ensure_grad(in);
                    for (std::int64_t i = 0; i < gi.numel(); ++i) {
                        gi.data[static_cast<std::size_t>(i)] += g[off + i];
                    }
                    off += gi.numel();
                }
                break;
            }
            case Op::Sigmoid: {
                Tensor& gx = ensure_grad(n.in0);
                const double* y = n.value.data.data();
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    gx.data[static_cast<std::size_t>(i)] += g[i] * y[i] * (1.0 - y[i]);
                }
                break;
            }
            case Op::Tanh: {
                Tensor& gx = ensure_grad(n.in0);
                const double* y = n.value.data.data();
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    gx.data[static_cast<std::size_t>(i)] += g[i] * (1.0 - y[i] * y[i]);
                }
                break;
            }
            case Op::Relu: {
                Tensor& gx = ensure_grad(n.in0);
                const double* x = val(n.in0).data.data();
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    if (x[i] > 0) gx.data[static_cast<std::size_t>(i)] += g[i];
                }
                break;
            }
            case Op::MaskedSoftmax: {
                Tensor& gx = ensure_grad(n.in0);
                const auto& mask = masks_[static_cast<std::size_t>(n.aux)];
                const double* p = n.value.data.data();
                double inner = 0.0;
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    if (mask[static_cast<std::size_t>(i)]) inner += g[i] * p[i];
                }
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    if (mask[static_cast<std::size_t>(i)]) {
                        gx.data[static_cast<std::size_t>(i)] += p[i] * (g[i] - inner);
                    }
                }
                break;
            }
            case Op::GatherRow: {
                const Tensor& M = val(n.in0);
                Tensor& gm = ensure_grad(n.in0);
                if (M.ndim() == 2) {
                    double* grow = gm.row(n.aux);
                    for (int j = 0; j < M.cols(); ++j) grow[j] += g[j];
                } else {
                    gm.data[static_cast<std::size_t>(n.aux)] += g[0];
                }
                break;
            }
            case Op::ReduceSum: {
                Tensor& gx = ensure_grad(n.in0);
                const double g0 = g[0];
                for (double& v : gx.data) v += g0;
                break;
            }
            case Op::Log: {
                Tensor& gx = ensure_grad(n.in0);
                const double* x = val(n.in0).data.data();
                for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
                    if (x[i] >= kLogClamp) gx.data[static_cast<std::size_t>(i)] += g[i] / x[i];
                }
                break;
            }
            case Op::Slice: {
                Tensor& gx = ensure_grad(n.in0);
                double* dst = gx.data.data() + n.aux;
                for (int i = 0; i < n.aux2; ++i) dst[i] += g[i];
                break;
            }
            case Op::GatherConcat: {
                const auto& mats = input_lists_[static_cast<std::size_t>(n.aux)];
                const auto& rows = input_lists_[static_cast<std::size_t>(n.aux2)];
                std::int64_t off = 0;
                for (std::size_t k = 0; k < mats.size(); ++k) {
                    const int cols = val(mats[k]).cols();
                    double* grow = ensure_grad(mats[k]).row(rows[k]);
                    for (int j = 0; j < cols; ++j) grow[j] += g[off + j];
                    off += cols;
                }
                break;
            }
            case Op::LstmCell: {
                const auto& ins = input_lists_[static_cast<std::size_t>(n.aux)];
                const Tensor& xt = val(n.in0);
                const Tensor& hp = val(n.in1);
                const Tensor& cp = val(ins[0]);
                const int dx = xt.shape[0];
                const int dh = hp.shape[0];
                const double* f = n.stash.data.data();
                const double* ig = f + dh;
                const double* o = f + 2 * dh;
                const double* cand = f + 3 * dh;
                const double* cv = n.value.data.data() + dh;
                const double* gh = g;
                const double* gc_out = g + dh;

                // Through h = o * act(c) and c = f*c_prev + i*cand.
                std::vector<double> gz(static_cast<std::size_t>(4) * dh);
                double* gzf = gz.data();
                double* gzi = gzf + dh;
                double* gzo = gzf + 2 * dh;
                double* gzc = gzf + 3 * dh;
                Tensor& gcp = ensure_grad(ins[0]);
                for (int i = 0; i < dh; ++i) {
                    const double act = n.aux2 ? std::tanh(cv[i]) : stable_sigmoid(cv[i]);
                    const double dact = n.aux2 ? 1.0 - act * act : act * (1.0 - act);
                    const double gc = gc_out[i] + gh[i] * o[i] * dact;
                    const double go = gh[i] * act;
                    gcp.data[static_cast<std::size_t>(i)] += gc * f[i];
                    gzf[i] = gc * cp.data[static_cast<std::size_t>(i)] * f[i] * (1.0 - f[i]);
                    gzi[i] = gc * cand[i] * ig[i] * (1.0 - ig[i]);
                    gzo[i] = go * o[i] * (1.0 - o[i]);
                    gzc[i] = gc * ig[i] * (1.0 - cand[i] * cand[i]);
                }
                Tensor& gx = ensure_grad(n.in0);
                Tensor& ghp = ensure_grad(n.in1);
                const double* xp = xt.data.data();
                const double* hpp = hp.data.data();
                for (int k = 0; k < 4; ++k) {
                    const Tensor& W = val(ins[static_cast<std::size_t>(1 + k)]);
                    const Tensor& U = val(ins[static_cast<std::size_t>(5 + k)]);
                    Tensor& gw = ensure_grad(ins[static_cast<std::size_t>(1 + k)]);
                    Tensor& gu = ensure_grad(ins[static_cast<std::size_t>(5 + k)]);
                    Tensor& gb = ensure_grad(ins[static_cast<std::size_t>(9 + k)]);
                    const double* zk = gz.data() + static_cast<std::size_t>(k) * dh;
                    for (int i = 0; i < dh; ++i) {
                        const double gi = zk[i];
                        if (gi == 0.0) continue;
                        double* gwrow = gw.row(i);
                        const double* wrow = W.row(i);
                        for (int j = 0; j < dx; ++j) {
                            gwrow[j] += gi * xp[j];
                            gx.data[static_cast<std::size_t>(j)] += gi * wrow[j];
                        }
                        double* gurow = gu.row(i);
                        const double* urow = U.row(i);
                        for (int j = 0; j < dh; ++j) {
                            gurow[j] += gi * hpp[j];
                            ghp.data[static_cast<std::size_t>(j)] += gi * urow[j];
                        }
                        gb.data[static_cast<std::size_t>(i)] += gi;
                    }
                }
                break;
            }
        }
    }
}

void Tape::accumulate_leaf_grads(ParamStore& params, double factor) const {
    if (!backward_done_) throw StateError("accumulate_leaf_grads: backward not run");
    for (const Node& n : nodes_) {
        if (n.op != Op::Leaf || !n.has_grad) continue;
        Tensor& g = params.grad(leaf_names_[static_cast<std::size_t>(n.name_id)]);
        const double* src = n.grad.data.data();
        double* dst = g.data.data();
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) dst[i] += factor * src[i];
    }
}

std::optional<std::pair<std::string, std::size_t>> Tape::first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Tensor& t = val(static_cast<int>(i));
        if (!t.all_finite()) return std::make_pair(std::string(op_name(nodes_[i].op)), i);
    }
    return std::nullopt;
}

void Tape::reset() {
    nodes_.clear();
    input_lists_.clear();
    masks_.clear();
    leaf_names_.clear();
    leaf_by_name_.clear();
    backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Finite-difference harness

GradCheckResult grad_check(const std::function<Var(Tape&)>& build_loss, ParamStore& params,
                           double eps) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
    }
    params.zero_grads();
    {
        Tape tape;
        Var loss = build_loss(tape);
        tape.backward(loss);
        tape.accumulate_leaf_grads(params);
    }
    auto eval = [&]() {
        Tape tape;
        return tape.scalar_value(build_loss(tape));
    };

    GradCheckResult result;
    for (const std::string& name : params.names()) {
        Tensor& p = params.get(name);
        const Tensor& g = params.grad(name);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double saved = p.data[static_cast<std::size_t>(i)];
            p.data[static_cast<std::size_t>(i)] = saved + eps;
            const double fp = eval();
            p.data[static_cast<std::size_t>(i)] = saved - eps;
            const double fm = eval();
            p.data[static_cast<std::size_t>(i)] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = g.data[static_cast<std::size_t>(i)];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_index = static_cast<int>(i);
                result.analytic = analytic;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace pathgrade
