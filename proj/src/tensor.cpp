#include "ivl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ivl {

namespace {

std::string dims(const RowMatrix& m) {
    std::ostringstream os;
    os << "[" << m.rows() << "x" << m.cols() << "]";
    return os.str();
}

Tape* merge_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (t->tape == nullptr) continue;
        if (tape != nullptr && tape != t->tape) {
            throw std::logic_error("tensors belong to different tapes");
        }
        tape = t->tape;
    }
    return tape;
}

bool any_tracked(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts) {
        if (t->tracked()) return true;
    }
    return false;
}

Tensor make_result(RowMatrix values, std::vector<Index> shape, Tape* tape) {
    Tensor out;
    out.shape = std::move(shape);
    out.m = std::move(values);
    out.tape = tape;
    return out;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) os << "x";
        os << t.shape[i];
    }
    os << "]";
    return os.str();
}

double Tensor::value() const {
    if (size() != 1) {
        throw ShapeError("value() requires a single-element tensor, got " + shape_str(*this));
    }
    return m(0, 0);
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {};
    t.m = RowMatrix::Constant(1, 1, v);
    return t;
}

Tensor Tensor::zeros(Index r, Index c) {
    Tensor t;
    t.shape = {r, c};
    t.m = RowMatrix::Zero(r, c);
    return t;
}

Tensor Tensor::ones(Index r, Index c) {
    Tensor t;
    t.shape = {r, c};
    t.m = RowMatrix::Constant(r, c, 1.0);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {static_cast<Index>(values.size())};
    t.m = Eigen::Map<const RowMatrix>(values.data(), 1, static_cast<Index>(values.size()));
    return t;
}

Tensor Tensor::from_matrix(RowMatrix values) {
    Tensor t;
    t.shape = {values.rows(), values.cols()};
    t.m = std::move(values);
    return t;
}

Tensor Tensor::from_rows(Index r, Index c, std::vector<double> values) {
    if (static_cast<Index>(values.size()) != r * c) {
        throw ShapeError("from_rows: " + std::to_string(values.size()) + " values for [" +
                         std::to_string(r) + "x" + std::to_string(c) + "]");
    }
    Tensor t;
    t.shape = {r, c};
    t.m = Eigen::Map<const RowMatrix>(values.data(), r, c);
    return t;
}

// --- GradientMap ---

bool GradientMap::contains(const Tensor& t) const { return contains(t.node); }

bool GradientMap::contains(NodeId id) const {
    return id >= 0 && id < static_cast<NodeId>(has_.size()) && has_[static_cast<std::size_t>(id)];
}

const RowMatrix& GradientMap::at(const Tensor& t) const { return at(t.node); }

const RowMatrix& GradientMap::at(NodeId id) const {
    if (!contains(id)) {
        throw std::out_of_range("no gradient recorded for node " + std::to_string(id));
    }
    return grads_[static_cast<std::size_t>(id)];
}

// --- Tape ---

Tensor Tape::leaf(const Tensor& values) {
    Tensor t = values;
    t.tape = this;
    t.node = record(nullptr);
    return t;
}

Tensor Tape::leaf(RowMatrix values, std::vector<Index> shape) {
    Tensor t;
    t.m = std::move(values);
    t.shape = std::move(shape);
    t.tape = this;
    t.node = record(nullptr);
    return t;
}

NodeId Tape::record(BackwardFn fn) {
    nodes_.push_back(std::move(fn));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::accumulate(NodeId id, const RowMatrix& g) {
    if (id < 0) return;
    const auto i = static_cast<std::size_t>(id);
    if (has_grad_[i]) {
        grads_[i] += g;
    } else {
        grads_[i] = g;
        has_grad_[i] = 1;
    }
}

GradientMap Tape::backward(const Tensor& root) {
    if (!root.tracked() || root.tape != this) {
        throw std::invalid_argument("backward: root is not tracked on this tape");
    }
    if (root.size() != 1) {
        throw ShapeError("backward: root must be scalar, got " + shape_str(root));
    }
    grads_.assign(nodes_.size(), RowMatrix());
    has_grad_.assign(nodes_.size(), 0);
    accumulate(root.node, RowMatrix::Constant(1, 1, 1.0));
    for (NodeId id = root.node; id >= 0; --id) {
        const auto i = static_cast<std::size_t>(id);
        if (!has_grad_[i] || !nodes_[i]) continue;
        nodes_[i](grads_[i], *this);
    }
    GradientMap out;
    out.grads_ = std::move(grads_);
    out.has_ = std::move(has_grad_);
    grads_.clear();
    has_grad_.clear();
    return out;
}

// --- primitive ops ---

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents disagree, " + shape_str(a) + " x " + shape_str(b));
    }
    Tape* tape = merge_tape({&a, &b});
    Tensor out = make_result(a.m * b.m, {a.rows(), b.cols()}, tape);
    if (tape && any_tracked({&a, &b})) {
        const NodeId na = a.node, nb = b.node;
        const RowMatrix av = a.m, bv = b.m;
        out.node = tape->record([na, nb, av, bv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g * bv.transpose());
            if (nb >= 0) t.accumulate(nb, av.transpose() * g);
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out = make_result(a.m.transpose(), {a.cols(), a.rows()}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        out.node = a.tape->record([na](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g.transpose());
        });
    }
    return out;
}

namespace {

void require_same_dims(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes disagree, " + shape_str(a) + " vs " +
                         shape_str(b));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "add");
    Tape* tape = merge_tape({&a, &b});
    Tensor out = make_result(a.m + b.m, a.shape, tape);
    if (tape && any_tracked({&a, &b})) {
        const NodeId na = a.node, nb = b.node;
        out.node = tape->record([na, nb](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g);
            if (nb >= 0) t.accumulate(nb, g);
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "sub");
    Tape* tape = merge_tape({&a, &b});
    Tensor out = make_result(a.m - b.m, a.shape, tape);
    if (tape && any_tracked({&a, &b})) {
        const NodeId na = a.node, nb = b.node;
        out.node = tape->record([na, nb](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g);
            if (nb >= 0) t.accumulate(nb, -g);
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "mul");
    Tape* tape = merge_tape({&a, &b});
    Tensor out = make_result(a.m.cwiseProduct(b.m), a.shape, tape);
    if (tape && any_tracked({&a, &b})) {
        const NodeId na = a.node, nb = b.node;
        const RowMatrix av = a.m, bv = b.m;
        out.node = tape->record([na, nb, av, bv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g.cwiseProduct(bv));
            if (nb >= 0) t.accumulate(nb, g.cwiseProduct(av));
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = make_result(a.m * c, a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        out.node = a.tape->record([na, c](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g * c);
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = make_result(a.m.array() + c, a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        out.node = a.tape->record([na](const RowMatrix& g, Tape& t) { t.accumulate(na, g); });
    }
    return out;
}

Tensor slice_rows(const Tensor& a, Index r0, Index r1) {
    if (r0 < 0 || r1 > a.rows() || r0 > r1) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of " + shape_str(a));
    }
    Tensor out = make_result(a.m.middleRows(r0, r1 - r0), {r1 - r0, a.cols()}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const Index rows = a.rows(), cols = a.cols();
        out.node = a.tape->record([na, r0, r1, rows, cols](const RowMatrix& g, Tape& t) {
            RowMatrix da = RowMatrix::Zero(rows, cols);
            da.middleRows(r0, r1 - r0) = g;
            t.accumulate(na, da);
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& a, Index c0, Index c1) {
    if (c0 < 0 || c1 > a.cols() || c0 > c1) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of " + shape_str(a));
    }
    Tensor out = make_result(a.m.middleCols(c0, c1 - c0), {a.rows(), c1 - c0}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const Index rows = a.rows(), cols = a.cols();
        out.node = a.tape->record([na, c0, c1, rows, cols](const RowMatrix& g, Tape& t) {
            RowMatrix da = RowMatrix::Zero(rows, cols);
            da.middleCols(c0, c1 - c0) = g;
            t.accumulate(na, da);
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const Index cols = parts[0].cols();
    Index rows = 0;
    Tape* tape = nullptr;
    bool tracked = false;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) {
            throw ShapeError("concat_rows: column mismatch, " + shape_str(parts[0]) + " vs " +
                             shape_str(p));
        }
        rows += p.rows();
        if (p.tape) {
            if (tape && tape != p.tape) throw std::logic_error("concat_rows: mixed tapes");
            tape = p.tape;
        }
        tracked = tracked || p.tracked();
    }
    RowMatrix m(rows, cols);
    Index off = 0;
    for (const Tensor& p : parts) {
        m.middleRows(off, p.rows()) = p.m;
        off += p.rows();
    }
    Tensor out = make_result(std::move(m), {rows, cols}, tape);
    if (tape && tracked) {
        std::vector<NodeId> ids;
        std::vector<Index> sizes;
        for (const Tensor& p : parts) {
            ids.push_back(p.node);
            sizes.push_back(p.rows());
        }
        out.node = tape->record([ids, sizes](const RowMatrix& g, Tape& t) {
            Index off = 0;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] >= 0) t.accumulate(ids[i], g.middleRows(off, sizes[i]));
                off += sizes[i];
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const Index rows = parts[0].rows();
    Index cols = 0;
    Tape* tape = nullptr;
    bool tracked = false;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) {
            throw ShapeError("concat_cols: row mismatch, " + shape_str(parts[0]) + " vs " +
                             shape_str(p));
        }
        cols += p.cols();
        if (p.tape) {
            if (tape && tape != p.tape) throw std::logic_error("concat_cols: mixed tapes");
            tape = p.tape;
        }
        tracked = tracked || p.tracked();
    }
    RowMatrix m(rows, cols);
    Index off = 0;
    for (const Tensor& p : parts) {
        m.middleCols(off, p.cols()) = p.m;
        off += p.cols();
    }
    Tensor out = make_result(std::move(m), {rows, cols}, tape);
    if (tape && tracked) {
        std::vector<NodeId> ids;
        std::vector<Index> sizes;
        for (const Tensor& p : parts) {
            ids.push_back(p.node);
            sizes.push_back(p.cols());
        }
        out.node = tape->record([ids, sizes](const RowMatrix& g, Tape& t) {
            Index off = 0;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] >= 0) t.accumulate(ids[i], g.middleCols(off, sizes[i]));
                off += sizes[i];
            }
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<Index>& idx) {
    RowMatrix m(static_cast<Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of " +
                             shape_str(a));
        }
        m.row(static_cast<Index>(i)) = a.m.row(idx[i]);
    }
    Tensor out = make_result(std::move(m), {static_cast<Index>(idx.size()), a.cols()}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const Index rows = a.rows(), cols = a.cols();
        out.node = a.tape->record([na, idx, rows, cols](const RowMatrix& g, Tape& t) {
            RowMatrix da = RowMatrix::Zero(rows, cols);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                da.row(idx[i]) += g.row(static_cast<Index>(i));
            }
            t.accumulate(na, da);
        });
    }
    return out;
}

Tensor row_sum(const Tensor& a) {
    RowMatrix m = a.m.rowwise().sum();
    Tensor out = make_result(std::move(m), {a.rows(), 1}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const Index cols = a.cols();
        out.node = a.tape->record([na, cols](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g * RowMatrix::Constant(1, cols, 1.0));
        });
    }
    return out;
}

Tensor sum_all(const Tensor& a) {
    Tensor out = make_result(RowMatrix::Constant(1, 1, a.m.sum()), {}, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const Index rows = a.rows(), cols = a.cols();
        out.node = a.tape->record([na, rows, cols](const RowMatrix& g, Tape& t) {
            t.accumulate(na, RowMatrix::Constant(rows, cols, g(0, 0)));
        });
    }
    return out;
}

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor add_row_vector(const Tensor& a, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != a.cols()) {
        throw ShapeError("add_row_vector: vector " + shape_str(v) + " against " + shape_str(a));
    }
    Tape* tape = merge_tape({&a, &v});
    RowMatrix m = a.m;
    m.rowwise() += v.m.row(0);
    Tensor out = make_result(std::move(m), a.shape, tape);
    if (tape && any_tracked({&a, &v})) {
        const NodeId na = a.node, nv = v.node;
        out.node = tape->record([na, nv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g);
            if (nv >= 0) t.accumulate(nv, g.colwise().sum());
        });
    }
    return out;
}

Tensor mul_row_vector(const Tensor& a, const Tensor& v) {
    if (v.rows() != 1 || v.cols() != a.cols()) {
        throw ShapeError("mul_row_vector: vector " + shape_str(v) + " against " + shape_str(a));
    }
    Tape* tape = merge_tape({&a, &v});
    RowMatrix m = a.m.array().rowwise() * v.m.row(0).array();
    Tensor out = make_result(std::move(m), a.shape, tape);
    if (tape && any_tracked({&a, &v})) {
        const NodeId na = a.node, nv = v.node;
        const RowMatrix av = a.m, vv = v.m;
        out.node = tape->record([na, nv, av, vv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g.array().rowwise() * vv.row(0).array());
            if (nv >= 0) t.accumulate(nv, g.cwiseProduct(av).colwise().sum());
        });
    }
    return out;
}

namespace {

void require_col_vector(const Tensor& a, const Tensor& v, const char* op) {
    if (v.cols() != 1 || v.rows() != a.rows()) {
        throw ShapeError(std::string(op) + ": vector " + shape_str(v) + " against " +
                         shape_str(a));
    }
}

}  // namespace

Tensor sub_col_vector(const Tensor& a, const Tensor& v) {
    require_col_vector(a, v, "sub_col_vector");
    Tape* tape = merge_tape({&a, &v});
    RowMatrix m = a.m.array().colwise() - v.m.col(0).array();
    Tensor out = make_result(std::move(m), a.shape, tape);
    if (tape && any_tracked({&a, &v})) {
        const NodeId na = a.node, nv = v.node;
        out.node = tape->record([na, nv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g);
            if (nv >= 0) t.accumulate(nv, -g.rowwise().sum());
        });
    }
    return out;
}

Tensor mul_col_vector(const Tensor& a, const Tensor& v) {
    require_col_vector(a, v, "mul_col_vector");
    Tape* tape = merge_tape({&a, &v});
    RowMatrix m = a.m.array().colwise() * v.m.col(0).array();
    Tensor out = make_result(std::move(m), a.shape, tape);
    if (tape && any_tracked({&a, &v})) {
        const NodeId na = a.node, nv = v.node;
        const RowMatrix av = a.m, vv = v.m;
        out.node = tape->record([na, nv, av, vv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g.array().colwise() * vv.col(0).array());
            if (nv >= 0) t.accumulate(nv, g.cwiseProduct(av).rowwise().sum());
        });
    }
    return out;
}

Tensor div_col_vector(const Tensor& a, const Tensor& v) {
    require_col_vector(a, v, "div_col_vector");
    Tape* tape = merge_tape({&a, &v});
    RowMatrix m = a.m.array().colwise() / v.m.col(0).array();
    Tensor out = make_result(std::move(m), a.shape, tape);
    if (tape && any_tracked({&a, &v})) {
        const NodeId na = a.node, nv = v.node;
        const RowMatrix av = a.m, vv = v.m;
        out.node = tape->record([na, nv, av, vv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g.array().colwise() / vv.col(0).array());
            if (nv >= 0) {
                RowMatrix dv =
                    -(g.cwiseProduct(av)).rowwise().sum().array() / vv.col(0).array().square();
                t.accumulate(nv, dv);
            }
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& a) {
    RowMatrix m = a.m.unaryExpr([](double x) { return stable_sigmoid(x); });
    Tensor out = make_result(m, a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const RowMatrix s = m;
        out.node = a.tape->record([na, s](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
        });
    }
    return out;
}

Tensor sqrt_elem(const Tensor& a) {
    if ((a.m.array() < 0.0).any()) {
        throw NumericError("sqrt_elem: negative input");
    }
    RowMatrix m = a.m.cwiseSqrt();
    Tensor out = make_result(m, a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const RowMatrix s = m;
        out.node = a.tape->record([na, s](const RowMatrix& g, Tape& t) {
            t.accumulate(na, (g.array() * 0.5 / s.array()).matrix());
        });
    }
    return out;
}

Tensor softplus(const Tensor& a) {
    RowMatrix m = a.m.unaryExpr(
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
    Tensor out = make_result(std::move(m), a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const RowMatrix av = a.m;
        out.node = a.tape->record([na, av](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g.cwiseProduct(av.unaryExpr(
                                 [](double x) { return stable_sigmoid(x); })));
        });
    }
    return out;
}

Tensor gelu(const Tensor& a) {
    RowMatrix m = a.m.unaryExpr(
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); });
    Tensor out = make_result(std::move(m), a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const RowMatrix av = a.m;
        out.node = a.tape->record([na, av](const RowMatrix& g, Tape& t) {
            RowMatrix d = av.unaryExpr([](double x) {
                const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                return cdf + x * pdf;
            });
            t.accumulate(na, g.cwiseProduct(d));
        });
    }
    return out;
}

Tensor exp_elem(const Tensor& a) {
    RowMatrix m = a.m.array().exp();
    Tensor out = make_result(m, a.shape, a.tape);
    if (a.tracked()) {
        const NodeId na = a.node;
        const RowMatrix e = m;
        out.node = a.tape->record([na, e](const RowMatrix& g, Tape& t) {
            t.accumulate(na, g.cwiseProduct(e));
        });
    }
    return out;
}

Tensor scale_tensor(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) {
        throw ShapeError("scale_tensor: scale must be a single element, got " + shape_str(s));
    }
    Tape* tape = merge_tape({&a, &s});
    Tensor out = make_result(a.m * s.m(0, 0), a.shape, tape);
    if (tape && any_tracked({&a, &s})) {
        const NodeId na = a.node, ns = s.node;
        const RowMatrix av = a.m;
        const double sv = s.m(0, 0);
        out.node = tape->record([na, ns, av, sv](const RowMatrix& g, Tape& t) {
            if (na >= 0) t.accumulate(na, g * sv);
            if (ns >= 0) {
                t.accumulate(ns, RowMatrix::Constant(1, 1, g.cwiseProduct(av).sum()));
            }
        });
    }
    return out;
}

Tensor masked_softmax(const Tensor& logits, const BoolMat& mask) {
    if (logits.rows() != mask.rows || logits.cols() != mask.cols) {
        throw ShapeError("masked_softmax: logits " + shape_str(logits) + " vs mask [" +
                         std::to_string(mask.rows) + "x" + std::to_string(mask.cols) + "]");
    }
    if (!logits.m.allFinite()) {
        throw NumericError("masked_softmax: non-finite logits");
    }
    const Index n = logits.rows(), k = logits.cols();
    RowMatrix w = RowMatrix::Zero(n, k);
    for (Index r = 0; r < n; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (Index c = 0; c < k; ++c) {
            if (mask.at(r, c)) {
                any = true;
                mx = std::max(mx, logits.m(r, c));
            }
        }
        if (!any) continue;  // all-false rows stay zero
        double sum = 0.0;
        for (Index c = 0; c < k; ++c) {
            if (mask.at(r, c)) {
                w(r, c) = std::exp(logits.m(r, c) - mx);
                sum += w(r, c);
            }
        }
        for (Index c = 0; c < k; ++c) {
            if (mask.at(r, c)) w(r, c) /= sum;
        }
    }
    Tensor out = make_result(w, logits.shape, logits.tape);
    if (logits.tracked()) {
        const NodeId na = logits.node;
        const RowMatrix wv = w;
        const BoolMat mk = mask;
        out.node = logits.tape->record([na, wv, mk](const RowMatrix& g, Tape& t) {
            RowMatrix da = RowMatrix::Zero(wv.rows(), wv.cols());
            for (Index r = 0; r < wv.rows(); ++r) {
                double dot = 0.0;
                for (Index c = 0; c < wv.cols(); ++c) {
                    if (mk.at(r, c)) dot += g(r, c) * wv(r, c);
                }
                for (Index c = 0; c < wv.cols(); ++c) {
                    if (mk.at(r, c)) da(r, c) = wv(r, c) * (g(r, c) - dot);
                }
            }
            t.accumulate(na, da);
        });
    }
    return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<Index>& labels) {
    const Index n = logits.rows(), c = logits.cols();
    if (static_cast<Index>(labels.size()) != n) {
        throw ShapeError("cross_entropy_rows: " + std::to_string(labels.size()) +
                         " labels for " + shape_str(logits));
    }
    for (Index label : labels) {
        if (label < 0 || label >= c) {
            throw std::out_of_range("cross_entropy_rows: label " + std::to_string(label) +
                                    " out of range [0," + std::to_string(c) + ")");
        }
    }
    double total = 0.0;
    RowMatrix soft(n, c);
    for (Index r = 0; r < n; ++r) {
        const double mx = logits.m.row(r).maxCoeff();
        double sum = 0.0;
        for (Index j = 0; j < c; ++j) {
            soft(r, j) = std::exp(logits.m(r, j) - mx);
            sum += soft(r, j);
        }
        soft.row(r) /= sum;
        total += std::log(sum) + mx - logits.m(r, labels[static_cast<std::size_t>(r)]);
    }
    Tensor out = make_result(RowMatrix::Constant(1, 1, total / static_cast<double>(n)), {},
                             logits.tape);
    if (logits.tracked()) {
        const NodeId na = logits.node;
        out.node = logits.tape->record([na, soft, labels, n](const RowMatrix& g, Tape& t) {
            RowMatrix da = soft;
            for (Index r = 0; r < da.rows(); ++r) {
                da(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
            }
            t.accumulate(na, da * (g(0, 0) / static_cast<double>(n)));
        });
    }
    return out;
}

// --- composites ---

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const double d = static_cast<double>(x.cols());
    Tensor mean = scale(row_sum(x), 1.0 / d);
    Tensor centered = sub_col_vector(x, mean);
    Tensor var = scale(row_sum(mul(centered, centered)), 1.0 / d);
    Tensor denom = sqrt_elem(add_scalar(var, eps));
    Tensor normed = div_col_vector(centered, denom);
    return add_row_vector(mul_row_vector(normed, gain), bias);
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
    Tensor h = gelu(add_row_vector(matmul(x, p.w1), p.b1));
    return add_row_vector(matmul(h, p.w2), p.b2);
}

Tensor mean_rows(const Tensor& a) {
    Tensor ones = Tensor::from_matrix(
        RowMatrix::Constant(1, a.rows(), 1.0 / static_cast<double>(a.rows())));
    return matmul(ones, a);
}

Tensor l2_normalize_rows(const Tensor& a) {
    for (Index r = 0; r < a.rows(); ++r) {
        if (a.m.row(r).norm() == 0.0) {
            throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(r));
        }
    }
    Tensor norms = sqrt_elem(row_sum(mul(a, a)));
    return div_col_vector(a, norms);
}

// --- gradient checking ---

double grad_check(const ScalarFn& f, const Tensor& x, double step) {
    if (step <= 0.0) {
        throw std::invalid_argument("grad_check: step must be positive");
    }
    Tape tape;
    Tensor xt = tape.leaf(x);
    Tensor y = f(tape, xt);
    if (y.size() != 1) {
        throw ShapeError("grad_check: f must return a scalar, got " + shape_str(y));
    }
    GradientMap grads = tape.backward(y);
    RowMatrix analytic = grads.contains(xt) ? grads.at(xt)
                                            : RowMatrix::Zero(x.rows(), x.cols());
    if (!analytic.allFinite()) {
        throw NumericError("grad_check: non-finite analytic gradient");
    }

    auto eval = [&f](const Tensor& probe) {
        Tape t2;
        Tensor p = t2.leaf(probe);
        return f(t2, p).value();
    };

    double max_err = 0.0;
    Tensor probe = x;
    for (Index r = 0; r < x.rows(); ++r) {
        for (Index c = 0; c < x.cols(); ++c) {
            const double orig = probe.m(r, c);
            probe.m(r, c) = orig + step;
            const double fp = eval(probe);
            probe.m(r, c) = orig - step;
            const double fm = eval(probe);
            probe.m(r, c) = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: non-finite function value");
            }
            const double fd = (fp - fm) / (2.0 * step);
            const double a = analytic(r, c);
            const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace ivl
