#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivl {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense boolean matrix used for attention masks and ground-truth masks.
struct BoolMat {
    Index rows = 0;
    Index cols = 0;
    std::vector<std::uint8_t> v;

    BoolMat() = default;
    BoolMat(Index r, Index c, bool fill = false)
        : rows(r), cols(c), v(static_cast<std::size_t>(r * c), fill ? 1 : 0) {}

    bool at(Index r, Index c) const { return v[static_cast<std::size_t>(r * cols + c)] != 0; }
    void set(Index r, Index c, bool b) { v[static_cast<std::size_t>(r * cols + c)] = b ? 1 : 0; }
    Index count() const {
        Index n = 0;
        for (auto x : v) n += (x != 0);
        return n;
    }
    bool operator==(const BoolMat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

class Tape;
using NodeId = std::int64_t;
inline constexpr NodeId kUntracked = -1;

// Dense float64 tensor of rank 0..2. Rank-0 and rank-1 values are stored as
// 1x1 and 1xn matrices; `shape` keeps the logical rank. When `node` is set the
// tensor participates in its tape's backward pass.
struct Tensor {
    std::vector<Index> shape;
    RowMatrix m;
    Tape* tape = nullptr;
    NodeId node = kUntracked;

    Tensor() = default;

    bool tracked() const { return node != kUntracked; }
    Index rows() const { return m.rows(); }
    Index cols() const { return m.cols(); }
    Index size() const { return m.size(); }
    double value() const;

    static Tensor scalar(double v);
    static Tensor zeros(Index r, Index c);
    static Tensor ones(Index r, Index c);
    static Tensor row(std::vector<double> values);                // rank-1, 1xn
    static Tensor from_matrix(RowMatrix values);                  // rank-2
    static Tensor from_rows(Index r, Index c, std::vector<double> values);
};

std::string shape_str(const Tensor& t);

// Gradients keyed by node id; populated exactly for the tracked ancestors of
// the backward root.
class GradientMap {
public:
    bool contains(const Tensor& t) const;
    bool contains(NodeId id) const;
    const RowMatrix& at(const Tensor& t) const;
    const RowMatrix& at(NodeId id) const;

private:
    friend class Tape;
    std::vector<RowMatrix> grads_;
    std::vector<std::uint8_t> has_;
};

// Reverse-mode tape. Nodes are appended in execution order, so the list is
// already topologically sorted; backward walks it once in reverse.
class Tape {
public:
    using BackwardFn = std::function<void(const RowMatrix& grad_out, Tape&)>;

    Tensor leaf(const Tensor& values);
    Tensor leaf(RowMatrix values, std::vector<Index> shape);

    NodeId record(BackwardFn fn);
    void accumulate(NodeId id, const RowMatrix& g);

    GradientMap backward(const Tensor& root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    std::vector<BackwardFn> nodes_;
    std::vector<RowMatrix> grads_;
    std::vector<std::uint8_t> has_grad_;
};

// --- primitive differentiable operations ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor slice_rows(const Tensor& a, Index r0, Index r1);
Tensor slice_cols(const Tensor& a, Index c0, Index c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<Index>& idx);

Tensor row_sum(const Tensor& a);   // n x d -> n x 1
Tensor sum_all(const Tensor& a);   // -> scalar
Tensor mean_all(const Tensor& a);  // -> scalar

Tensor add_row_vector(const Tensor& a, const Tensor& v);  // v: 1 x d, added to every row
Tensor mul_row_vector(const Tensor& a, const Tensor& v);
Tensor sub_col_vector(const Tensor& a, const Tensor& v);  // v: n x 1, applied per row
Tensor mul_col_vector(const Tensor& a, const Tensor& v);
Tensor div_col_vector(const Tensor& a, const Tensor& v);

Tensor sigmoid(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp_elem(const Tensor& a);

// Multiply by a (possibly tracked) single-element tensor.
Tensor scale_tensor(const Tensor& a, const Tensor& s);

// Rows with at least one admitted entry sum to one with masked entries at
// exactly zero; all-false rows come back all-zero.
Tensor masked_softmax(const Tensor& logits, const BoolMat& mask);

// Mean over rows of softmax cross-entropy against integer labels.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<Index>& labels);

// --- composites ---

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct MlpParams {
    Tensor w1, b1, w2, b2;
};
Tensor mlp_forward(const Tensor& x, const MlpParams& p);

Tensor mean_rows(const Tensor& a);          // n x d -> 1 x d
Tensor l2_normalize_rows(const Tensor& a);  // errors on zero-norm rows

// --- gradient checking ---

// Central finite differences against the tape gradient; returns
// max |analytic - fd| / max(1, |analytic|) over all coordinates of x.
using ScalarFn = std::function<Tensor(Tape&, Tensor&)>;
double grad_check(const ScalarFn& f, const Tensor& x, double step);

}  // namespace ivl
