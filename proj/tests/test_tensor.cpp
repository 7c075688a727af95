#include <doctest.h>

#include "ivl/rng.hpp"
#include "ivl/tensor.hpp"

#include <cmath>
#include <cstring>

using namespace ivl;

namespace {

Tensor random_tensor(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    RowMatrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return Tensor::from_matrix(std::move(m));
}

// weighted sum with fixed random weights, so output gradients are non-uniform
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    RowMatrix w(t.rows(), t.cols());
    for (Index i = 0; i < t.rows(); ++i)
        for (Index j = 0; j < t.cols(); ++j) w(i, j) = rng.uniform(-1.0, 1.0);
    return sum_all(mul(t, Tensor::from_matrix(std::move(w))));
}

}  // namespace

TEST_CASE("matmul values") {
    // identity case
    Tensor i2 = Tensor::from_rows(2, 2, {1, 0, 0, 1});
    Tensor r = matmul(i2, i2);
    CHECK(r.m == i2.m);

    // hand expansion: [[1,2],[3,4]] x [[1],[1]] = [[3],[7]]
    Tensor a = Tensor::from_rows(2, 2, {1, 2, 3, 4});
    Tensor b = Tensor::from_rows(2, 1, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.m(0, 0) == 3.0);
    CHECK(c.m(1, 0) == 7.0);

    CHECK_THROWS_AS(matmul(a, Tensor::from_rows(3, 1, {1, 1, 1})), ShapeError);
    CHECK_THROWS_WITH_AS(matmul(a, Tensor::zeros(3, 2)),
                         doctest::Contains("[2x2]"), ShapeError);
}

TEST_CASE("matmul gradient equals ones x b^T") {
    Rng rng(7);
    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(4, 2, rng);
    Tape tape;
    Tensor at = tape.leaf(a);
    Tensor y = sum_all(matmul(at, b));
    GradientMap g = tape.backward(y);
    RowMatrix expect = RowMatrix::Constant(3, 2, 1.0) * b.m.transpose();
    CHECK((g.at(at) - expect).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));

    const double err = grad_check(
        [&](Tape& t, Tensor& x) { return sum_all(matmul(x, b)); }, a, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("masked_softmax rows") {
    // uniform weights under an all-true mask
    Tensor logits = Tensor::zeros(1, 4);
    BoolMat all(1, 4, true);
    Tensor w = masked_softmax(logits, all);
    for (Index c = 0; c < 4; ++c) CHECK(w.m(0, c) == doctest::Approx(0.25).epsilon(1e-15));

    // single-support row ignores logits entirely
    Tensor any = Tensor::from_rows(1, 4, {5.0, -3.0, 100.0, 0.5});
    BoolMat first(1, 4, false);
    first.set(0, 0, true);
    Tensor w1 = masked_softmax(any, first);
    CHECK(w1.m(0, 0) == 1.0);
    CHECK(w1.m(0, 1) == 0.0);
    CHECK(w1.m(0, 2) == 0.0);
    CHECK(w1.m(0, 3) == 0.0);

    // all-false row is defined as all-zero
    BoolMat none(1, 4, false);
    Tensor w0 = masked_softmax(any, none);
    CHECK(w0.m.cwiseAbs().maxCoeff() == 0.0);

    // non-finite logits are rejected
    Tensor bad = Tensor::from_rows(1, 2, {1.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(masked_softmax(bad, BoolMat(1, 2, true)), NumericError);
}

TEST_CASE("masked_softmax row sums and shift invariance") {
    Rng rng(11);
    Tensor logits = random_tensor(6, 5, rng, -3.0, 3.0);
    BoolMat mask(6, 5, false);
    for (Index r = 0; r < 6; ++r)
        for (Index c = 0; c < 5; ++c) mask.set(r, c, rng.bernoulli(0.6));
    for (Index c = 0; c < 5; ++c) mask.set(1, c, false);  // one degenerate row
    mask.set(2, 3, true);                                 // ensure support somewhere

    Tensor w = masked_softmax(logits, mask);
    for (Index r = 0; r < 6; ++r) {
        bool any = false;
        double sum = 0.0;
        for (Index c = 0; c < 5; ++c) {
            if (!mask.at(r, c)) CHECK(w.m(r, c) == 0.0);
            any = any || mask.at(r, c);
            sum += w.m(r, c);
        }
        if (any) {
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        } else {
            CHECK(sum == 0.0);
        }
    }

    // adding a per-row constant leaves the weights unchanged to 1e-12
    Tensor shifted = logits;
    for (Index r = 0; r < 6; ++r) shifted.m.row(r).array() += (double(r) - 2.5) * 7.0;
    Tensor w2 = masked_softmax(shifted, mask);
    CHECK((w.m - w2.m).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("layer_norm values") {
    Tensor gain = Tensor::ones(1, 4);
    Tensor bias = Tensor::from_rows(1, 4, {0.5, 0.5, 0.5, 0.5});

    // constant rows normalize to zero, leaving only the bias
    Tensor x = Tensor::from_rows(1, 4, {3.0, 3.0, 3.0, 3.0});
    Tensor y = layer_norm(x, gain, bias);
    for (Index c = 0; c < 4; ++c) CHECK(y.m(0, c) == doctest::Approx(0.5).epsilon(1e-12));

    // [1,-1] has mean 0 and variance 1 already
    Tensor z = layer_norm(Tensor::from_rows(1, 2, {1.0, -1.0}), Tensor::ones(1, 2),
                          Tensor::zeros(1, 2));
    CHECK(z.m(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(z.m(0, 1) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm gradient") {
    Rng rng(13);
    Tensor x = random_tensor(3, 5, rng);
    Tensor gain = random_tensor(1, 5, rng, 0.5, 1.5);
    Tensor bias = random_tensor(1, 5, rng);
    gain.shape = {5};
    bias.shape = {5};
    CHECK(grad_check([&](Tape&, Tensor& v) { return weighted_sum(layer_norm(v, gain, bias), 3); },
                     x, 1e-6) < 1e-4);
    CHECK(grad_check([&](Tape&, Tensor& g) { return weighted_sum(layer_norm(x, g, bias), 4); },
                     gain, 1e-6) < 1e-4);
}

TEST_CASE("mlp_forward") {
    // zero weights and biases give zero output
    MlpParams zero{Tensor::zeros(3, 3), Tensor::zeros(1, 3), Tensor::zeros(3, 3),
                   Tensor::zeros(1, 3)};
    Tensor x = Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(mlp_forward(x, zero).m.cwiseAbs().maxCoeff() == 0.0);

    // identity weights pass large positive inputs through (the activation is
    // identity-like far from zero)
    RowMatrix eye = RowMatrix::Identity(3, 3);
    MlpParams id{Tensor::from_matrix(eye), Tensor::zeros(1, 3), Tensor::from_matrix(eye),
                 Tensor::zeros(1, 3)};
    Tensor big = Tensor::from_rows(1, 3, {8.0, 9.0, 10.0});
    Tensor out = mlp_forward(big, id);
    for (Index c = 0; c < 3; ++c) {
        CHECK(out.m(0, c) == doctest::Approx(big.m(0, c)).epsilon(1e-9));
    }

    Rng rng(17);
    MlpParams p{random_tensor(4, 6, rng), random_tensor(1, 6, rng), random_tensor(6, 2, rng),
                random_tensor(1, 2, rng)};
    Tensor v = random_tensor(3, 4, rng);
    CHECK(grad_check([&](Tape&, Tensor& q) { return weighted_sum(mlp_forward(q, p), 5); }, v,
                     1e-6) < 1e-4);
    CHECK_THROWS_AS(mlp_forward(Tensor::zeros(2, 5), p), ShapeError);
}

TEST_CASE("backward basics") {
    // d sum(x) / dx = ones
    Tape tape;
    Tensor x = tape.leaf(Tensor::from_rows(2, 2, {1, 2, 3, 4}));
    GradientMap g = tape.backward(sum_all(x));
    CHECK(g.at(x) == RowMatrix::Constant(2, 2, 1.0));

    // d sum(x*x) / dx = 2x
    Tape tape2;
    Tensor x2 = tape2.leaf(Tensor::from_rows(1, 3, {1.5, -2.0, 0.25}));
    GradientMap g2 = tape2.backward(sum_all(mul(x2, x2)));
    CHECK((g2.at(x2) - 2.0 * x2.m).cwiseAbs().maxCoeff() == 0.0);

    // non-scalar and untracked roots are rejected
    Tape tape3;
    Tensor a = tape3.leaf(Tensor::zeros(2, 2));
    CHECK_THROWS_AS(tape3.backward(a), ShapeError);
    Tensor untracked = Tensor::scalar(1.0);
    CHECK_THROWS_AS(tape3.backward(untracked), std::invalid_argument);
}

TEST_CASE("gradients exist exactly for tracked ancestors") {
    Tape tape;
    Tensor a = tape.leaf(Tensor::from_rows(1, 2, {1, 2}));
    Tensor b = tape.leaf(Tensor::from_rows(1, 2, {3, 4}));
    Tensor unused = tape.leaf(Tensor::from_rows(1, 2, {5, 6}));
    Tensor y = sum_all(mul(a, b));
    Tensor not_ancestor = add(unused, unused);  // recorded after y's subgraph
    (void)not_ancestor;
    GradientMap g = tape.backward(y);
    CHECK(g.contains(a));
    CHECK(g.contains(b));
    CHECK_FALSE(g.contains(unused));
    CHECK_FALSE(g.contains(not_ancestor));
}

TEST_CASE("backward is deterministic bit for bit") {
    auto run = [](RowMatrix& grad_out) {
        Rng rng(23);
        Tensor a = random_tensor(4, 4, rng);
        Tensor b = random_tensor(4, 4, rng);
        Tape tape;
        Tensor at = tape.leaf(a);
        Tensor y = sum_all(sigmoid(matmul(at, b)));
        grad_out = tape.backward(y).at(at);
    };
    RowMatrix g1, g2;
    run(g1);
    run(g2);
    REQUIRE(g1.size() == g2.size());
    CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);
}

TEST_CASE("grad_check on sum is exact for dyadic inputs") {
    Tensor x = Tensor::from_rows(2, 2, {1.0, 2.0, 3.0, 4.0});
    const double err = grad_check([](Tape&, Tensor& v) { return sum_all(v); }, x, 0.25);
    CHECK(err == 0.0);
    CHECK_THROWS_AS(grad_check([](Tape&, Tensor& v) { return sum_all(v); }, x, 0.0),
                    std::invalid_argument);
}

TEST_CASE("grad_check masked_softmax over matmul") {
    Rng rng(29);
    Tensor x = random_tensor(4, 4, rng);
    Tensor w = random_tensor(4, 4, rng);
    BoolMat mask(4, 4, false);
    for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < 4; ++c) mask.set(r, c, rng.bernoulli(0.7));
    for (Index c = 0; c < 4; ++c) mask.set(2, c, false);  // one zero-update row
    mask.set(0, 0, true);
    const double err = grad_check(
        [&](Tape&, Tensor& v) {
            return weighted_sum(masked_softmax(matmul(v, w), mask), 6);
        },
        x, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check across primitive operations") {
    Rng rng(31);
    auto check = [&](const char* what, const ScalarFn& f, const Tensor& x) {
        INFO(what);
        CHECK(grad_check(f, x, 1e-6) < 1e-4);
    };

    Tensor a = random_tensor(3, 4, rng);
    Tensor b = random_tensor(3, 4, rng);
    Tensor m = random_tensor(4, 3, rng);
    Tensor rowv = random_tensor(1, 4, rng, 0.5, 1.5);
    Tensor colv = random_tensor(3, 1, rng, 0.5, 1.5);

    check("add", [&](Tape&, Tensor& v) { return weighted_sum(add(v, b), 11); }, a);
    check("sub", [&](Tape&, Tensor& v) { return weighted_sum(sub(b, v), 12); }, a);
    check("mul", [&](Tape&, Tensor& v) { return weighted_sum(mul(v, b), 13); }, a);
    check("scale", [&](Tape&, Tensor& v) { return weighted_sum(scale(v, -2.5), 14); }, a);
    check("add_scalar", [&](Tape&, Tensor& v) { return weighted_sum(add_scalar(v, 3.0), 15); },
          a);
    check("transpose", [&](Tape&, Tensor& v) { return weighted_sum(transpose(v), 16); }, a);
    check("matmul_rhs", [&](Tape&, Tensor& v) { return weighted_sum(matmul(a, v), 17); }, m);
    check("slice_rows",
          [&](Tape&, Tensor& v) { return weighted_sum(slice_rows(v, 1, 3), 18); }, a);
    check("slice_cols",
          [&](Tape&, Tensor& v) { return weighted_sum(slice_cols(v, 0, 2), 19); }, a);
    check("concat_rows",
          [&](Tape&, Tensor& v) { return weighted_sum(concat_rows({v, b}), 20); }, a);
    check("concat_cols",
          [&](Tape&, Tensor& v) { return weighted_sum(concat_cols({v, b}), 21); }, a);
    check("gather_rows",
          [&](Tape&, Tensor& v) {
              return weighted_sum(gather_rows(v, {2, 0, 2, 1}), 22);
          },
          a);
    check("row_sum", [&](Tape&, Tensor& v) { return weighted_sum(row_sum(v), 23); }, a);
    check("mean_all", [&](Tape&, Tensor& v) { return mean_all(v); }, a);
    check("add_row_vector",
          [&](Tape&, Tensor& v) { return weighted_sum(add_row_vector(a, v), 24); }, rowv);
    check("mul_row_vector",
          [&](Tape&, Tensor& v) { return weighted_sum(mul_row_vector(a, v), 25); }, rowv);
    check("sub_col_vector",
          [&](Tape&, Tensor& v) { return weighted_sum(sub_col_vector(a, v), 26); }, colv);
    check("mul_col_vector",
          [&](Tape&, Tensor& v) { return weighted_sum(mul_col_vector(a, v), 27); }, colv);
    check("div_col_vector",
          [&](Tape&, Tensor& v) { return weighted_sum(div_col_vector(a, v), 28); }, colv);
    check("div_col_vector_den",
          [&](Tape&, Tensor& v) { return weighted_sum(div_col_vector(a, v), 29); }, colv);
    check("sigmoid", [&](Tape&, Tensor& v) { return weighted_sum(sigmoid(v), 30); }, a);
    check("softplus", [&](Tape&, Tensor& v) { return weighted_sum(softplus(v), 31); }, a);
    check("gelu", [&](Tape&, Tensor& v) { return weighted_sum(gelu(v), 32); }, a);
    check("exp", [&](Tape&, Tensor& v) { return weighted_sum(exp_elem(v), 33); }, a);
    check("sqrt",
          [&](Tape&, Tensor& v) { return weighted_sum(sqrt_elem(v), 34); },
          random_tensor(3, 4, rng, 0.5, 2.0));
    check("l2_normalize",
          [&](Tape&, Tensor& v) { return weighted_sum(l2_normalize_rows(v), 35); },
          random_tensor(3, 4, rng, 0.5, 2.0));
    check("scale_tensor",
          [&](Tape&, Tensor& v) { return weighted_sum(scale_tensor(a, v), 36); },
          Tensor::scalar(1.7));
    check("cross_entropy",
          [&](Tape&, Tensor& v) {
              return cross_entropy_rows(v, {1, 0, 2});
          },
          random_tensor(3, 3, rng));
}

TEST_CASE("l2_normalize_rows rejects zero rows") {
    Tensor x = Tensor::zeros(2, 3);
    x.m(0, 0) = 1.0;
    CHECK_THROWS_AS(l2_normalize_rows(x), NumericError);
}

TEST_CASE("cross_entropy_rows values") {
    // single class: always zero loss
    Tensor one = Tensor::from_rows(2, 1, {3.0, -1.0});
    CHECK(cross_entropy_rows(one, {0, 0}).value() == doctest::Approx(0.0).epsilon(1e-15));

    // uniform logits over c classes -> ln c
    Tensor uni = Tensor::zeros(1, 5);
    CHECK(cross_entropy_rows(uni, {3}).value() == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy_rows(uni, {5}), std::out_of_range);
}

TEST_CASE("untracked tensors never receive gradients") {
    Tape tape;
    Tensor a = tape.leaf(Tensor::from_rows(1, 2, {1, 2}));
    Tensor b = Tensor::from_rows(1, 2, {3, 4});  // constant
    Tensor y = sum_all(mul(a, b));
    GradientMap g = tape.backward(y);
    CHECK(g.contains(a));
    CHECK_FALSE(g.contains(b));
    CHECK_FALSE(b.tracked());
}
