#include <doctest.h>

#include "ivl/losses.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cmath>

using namespace ivl;
using ivl::testing::random_tensor;

namespace {

BoolMat random_mask(Index r, Index c, Rng& rng, double p = 0.5) {
    BoolMat m(r, c, false);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m.set(i, j, rng.bernoulli(p));
    return m;
}

// exhaustive minimum assignment cost, used as the oracle for sizes <= 6
double brute_force_min_cost(const RowMatrix& cost) {
    const Index n = cost.rows(), m = cost.cols();
    const bool rows_small = n <= m;
    const Index k = rows_small ? n : m;
    const Index pool = rows_small ? m : n;
    std::vector<Index> perm(static_cast<std::size_t>(pool));
    for (Index i = 0; i < pool; ++i) perm[static_cast<std::size_t>(i)] = i;
    double best = std::numeric_limits<double>::infinity();
    std::sort(perm.begin(), perm.end());
    do {
        double total = 0.0;
        for (Index i = 0; i < k; ++i) {
            total += rows_small ? cost(i, perm[static_cast<std::size_t>(i)])
                                : cost(perm[static_cast<std::size_t>(i)], i);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double assignment_cost(const RowMatrix& cost, const MatchAssignment& m) {
    double total = 0.0;
    for (const auto& [i, j] : m.pairs) total += cost(i, j);
    return total;
}

}  // namespace

TEST_CASE("bce_mask_loss values and gradient") {
    BoolMat gt(1, 4, false);
    gt.set(0, 0, true);
    gt.set(0, 2, true);

    // saturated correct logits drive the loss to zero
    Tensor sat = Tensor::from_rows(1, 4, {50.0, -50.0, 50.0, -50.0});
    CHECK(bce_mask_loss(sat, gt).value() == doctest::Approx(0.0).epsilon(1e-12));

    // all-zero logits sit at ln 2 regardless of the target
    Tensor zero = Tensor::zeros(1, 4);
    CHECK(bce_mask_loss(zero, gt).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(3);
    Tensor logits = random_tensor(3, 6, rng, -2.0, 2.0);
    BoolMat g = random_mask(3, 6, rng);
    CHECK(grad_check([&](Tape&, Tensor& v) { return bce_mask_loss(v, g); }, logits, 1e-6) <
          1e-4);
    CHECK(bce_mask_loss(logits, g).value() >= 0.0);
    CHECK_THROWS_AS(bce_mask_loss(Tensor::zeros(2, 2), g), ShapeError);
}

TEST_CASE("dice_loss values and gradient") {
    BoolMat gt(1, 4, false);
    gt.set(0, 1, true);
    gt.set(0, 3, true);
    Tensor sat = Tensor::from_rows(1, 4, {-50.0, 50.0, -50.0, 50.0});
    CHECK(dice_loss(sat, gt).value() == doctest::Approx(0.0).epsilon(1e-9));

    // empty target with a confidently empty prediction is smoothed to zero
    BoolMat empty(1, 4, false);
    Tensor off = Tensor::from_rows(1, 4, {-50.0, -50.0, -50.0, -50.0});
    CHECK(dice_loss(off, empty).value() == doctest::Approx(0.0).epsilon(1e-9));

    Rng rng(5);
    Tensor logits = random_tensor(3, 6, rng, -2.0, 2.0);
    BoolMat g = random_mask(3, 6, rng);
    CHECK(grad_check([&](Tape&, Tensor& v) { return dice_loss(v, g); }, logits, 1e-6) < 1e-4);
    CHECK(dice_loss(logits, g).value() >= 0.0);
}

TEST_CASE("ce_class_loss") {
    Tensor one = Tensor::from_rows(1, 1, {2.0});
    CHECK(ce_class_loss(one, {0}).value() == doctest::Approx(0.0).epsilon(1e-12));

    Tensor uniform = Tensor::zeros(2, 6);
    CHECK(ce_class_loss(uniform, {0, 5}).value() ==
          doctest::Approx(std::log(6.0)).epsilon(1e-12));

    Rng rng(7);
    Tensor logits = random_tensor(4, 5, rng);
    CHECK(grad_check([&](Tape&, Tensor& v) { return ce_class_loss(v, {0, 4, 2, 1}); }, logits,
                     1e-6) < 1e-4);
    CHECK_THROWS_AS(ce_class_loss(logits, {0, 1, 2, 5}), std::out_of_range);
}

TEST_CASE("contrastive_loss") {
    RowMatrix big = RowMatrix::Identity(4, 4) * 60.0;
    CHECK(contrastive_loss(Tensor::from_matrix(big)).value() ==
          doctest::Approx(0.0).epsilon(1e-9));

    Tensor flat = Tensor::ones(4, 4);
    CHECK(contrastive_loss(flat).value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Rng rng(9);
    Tensor score = random_tensor(5, 5, rng);
    CHECK(grad_check([&](Tape&, Tensor& v) { return contrastive_loss(v); }, score, 1e-6) <
          1e-4);
    CHECK(contrastive_loss(score).value() >= 0.0);

    CHECK_THROWS_AS(contrastive_loss(Tensor::scalar(1.0)), std::invalid_argument);
    CHECK_THROWS_AS(contrastive_loss(Tensor::zeros(2, 3)), ShapeError);
}

TEST_CASE("hungarian_match basics") {
    RowMatrix anti(2, 2);
    anti << 0, 1, 1, 0;
    MatchAssignment m = hungarian_match(anti);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0] == std::pair<Index, Index>{0, 0});
    CHECK(m.pairs[1] == std::pair<Index, Index>{1, 1});
    CHECK(m.unmatched_predictions.empty());

    // no targets: everything is no-object
    MatchAssignment none = hungarian_match(RowMatrix::Zero(3, 0));
    CHECK(none.pairs.empty());
    CHECK(none.unmatched_predictions == std::vector<Index>{0, 1, 2});

    RowMatrix inf(1, 1);
    inf(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian_match(inf), NumericError);
}

TEST_CASE("hungarian_match equals brute force up to 6x6") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = rng.uniform_int(1, 6);
        const Index m = rng.uniform_int(1, 6);
        RowMatrix cost(n, m);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < m; ++j) cost(i, j) = rng.uniform(-5.0, 5.0);
        MatchAssignment got = hungarian_match(cost);

        // validity: injective in both directions, covering min(n, m) pairs
        CHECK(static_cast<Index>(got.pairs.size()) == std::min(n, m));
        std::vector<char> used_pred(static_cast<std::size_t>(n), 0);
        std::vector<char> used_gt(static_cast<std::size_t>(m), 0);
        for (const auto& [i, j] : got.pairs) {
            CHECK_FALSE(used_pred[static_cast<std::size_t>(i)]);
            CHECK_FALSE(used_gt[static_cast<std::size_t>(j)]);
            used_pred[static_cast<std::size_t>(i)] = 1;
            used_gt[static_cast<std::size_t>(j)] = 1;
        }
        CHECK(static_cast<Index>(got.pairs.size() + got.unmatched_predictions.size()) == n);

        CHECK(assignment_cost(cost, got) ==
              doctest::Approx(brute_force_min_cost(cost)).epsilon(1e-12));
    }
}

namespace {

TaskBatchOutputs retrieval_only_outputs(const Tensor& score) {
    TaskBatchOutputs out;
    out.imgtext_score = score;
    return out;
}

LossWeights retrieval_only_weights() {
    LossWeights w;
    w.pano_ce = w.pano_bce = w.pano_dice = 0;
    w.grd_ce = w.grd_bce = w.grd_dice = 0;
    w.iseg_ce = w.iseg_bce = w.iseg_dice = 0;
    w.intg_ce = w.intg_bce = w.intg_dice = 0;
    w.interleave_retrieval = 0;
    w.retrieval = 1;
    return w;
}

}  // namespace

TEST_CASE("combined_loss with only the retrieval term") {
    RowMatrix diag = RowMatrix::Identity(4, 4) * 80.0;
    LossReport r = combined_loss(retrieval_only_outputs(Tensor::from_matrix(diag)),
                                 retrieval_only_weights());
    CHECK(r.total.value() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.term("imgtextr_c") == doctest::Approx(0.0).epsilon(1e-9));

    // an active term without outputs is an error
    TaskBatchOutputs missing;
    CHECK_THROWS_AS(combined_loss(missing, retrieval_only_weights()), std::invalid_argument);
}

TEST_CASE("combined_loss total equals the weighted sum of reported terms") {
    Rng rng(13);
    TaskBatchOutputs out;
    GroundingOutputs g;
    g.mask_logits = random_tensor(4, 8, rng);
    g.score = random_tensor(4, 2, rng);
    g.gt_masks = random_mask(2, 8, rng);
    out.intg.push_back(g);
    out.imgtext_score = random_tensor(3, 3, rng);
    out.interleave_score = random_tensor(3, 3, rng);

    LossWeights w;
    w.pano_ce = w.pano_bce = w.pano_dice = 0;
    w.grd_ce = w.grd_bce = w.grd_dice = 0;
    w.iseg_ce = w.iseg_bce = w.iseg_dice = 0;
    w.intg_ce = 2;
    w.intg_bce = 5;
    w.intg_dice = 5;
    w.retrieval = 1;
    w.interleave_retrieval = 0.5;

    LossReport r = combined_loss(out, w);
    const double hand = w.intg_ce * r.term("intg_ce") + w.intg_bce * r.term("intg_bce") +
                        w.intg_dice * r.term("intg_dice") + w.retrieval * r.term("imgtextr_c") +
                        w.interleave_retrieval * r.term("intr_c");
    CHECK(r.total.value() == doctest::Approx(hand).epsilon(1e-12));

    // linear in the weights: superposition against a second weight vector
    LossWeights w2 = w;
    w2.intg_ce = 1;
    w2.retrieval = 3;
    LossWeights wsum = w;
    wsum.intg_ce = w.intg_ce + w2.intg_ce;
    wsum.retrieval = w.retrieval + w2.retrieval;
    wsum.intg_bce = w.intg_bce + w2.intg_bce;
    wsum.intg_dice = w.intg_dice + w2.intg_dice;
    wsum.interleave_retrieval = w.interleave_retrieval + w2.interleave_retrieval;
    const double sum_separate = combined_loss(out, w).total.value() +
                                combined_loss(out, w2).total.value();
    CHECK(combined_loss(out, wsum).total.value() ==
          doctest::Approx(sum_separate).epsilon(1e-12));
}

TEST_CASE("zero weight removes the gradient contribution exactly") {
    Rng rng(17);
    Tensor imgtext = random_tensor(3, 3, rng);
    Tensor interleave = random_tensor(3, 3, rng);

    auto grad_for = [&](double theta) {
        Tape tape;
        Tensor s1 = tape.leaf(imgtext);
        Tensor s2 = tape.leaf(interleave);
        TaskBatchOutputs out;
        out.imgtext_score = s1;
        out.interleave_score = s2;
        LossWeights w = retrieval_only_weights();
        w.retrieval = theta;
        w.interleave_retrieval = 1.0;
        LossReport r = combined_loss(out, w);
        GradientMap g = tape.backward(r.total);
        return std::make_pair(g.contains(s1), g.at(s2));
    };

    auto [has_imgtext_grad, g_active] = grad_for(0.0);
    CHECK_FALSE(has_imgtext_grad);  // term value is reported, gradient is absent
    auto [has2, g_active2] = grad_for(2.0);
    CHECK(has2);
    CHECK((g_active - g_active2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pano record loss handles empty ground truth") {
    Rng rng(19);
    PanopticOutputs o;
    o.mask_logits = random_tensor(3, 4, rng);
    o.class_logits = random_tensor(3, 5, rng);  // 4 classes + no-object
    o.gt_masks = BoolMat(0, 4, false);
    TaskBatchOutputs out;
    out.pano.push_back(o);
    LossWeights w;
    w = retrieval_only_weights();
    w.retrieval = 0;
    w.pano_ce = 1;
    LossReport r = combined_loss(out, w);
    // all predictions should be pushed to the no-object class
    CHECK(r.term("pano_ce") > 0.0);
    CHECK(std::isfinite(r.total.value()));
}

TEST_CASE("grounding loss gradient through masks and scores") {
    Rng rng(23);
    GroundingOutputs g;
    g.mask_logits = random_tensor(3, 6, rng);
    g.score = random_tensor(3, 2, rng);
    g.gt_masks = random_mask(2, 6, rng);

    LossWeights w = retrieval_only_weights();
    w.retrieval = 0;
    w.intg_ce = 2;
    w.intg_bce = 5;
    w.intg_dice = 5;

    auto loss_of = [&](Tape& tape, Tensor& masks) {
        TaskBatchOutputs out;
        GroundingOutputs rec = g;
        rec.mask_logits = masks;
        out.intg.push_back(rec);
        return combined_loss(out, w).total;
    };
    CHECK(grad_check(loss_of, g.mask_logits, 1e-6) < 1e-4);

    auto loss_of_score = [&](Tape& tape, Tensor& score) {
        TaskBatchOutputs out;
        GroundingOutputs rec = g;
        rec.score = score;
        out.intg.push_back(rec);
        return combined_loss(out, w).total;
    };
    CHECK(grad_check(loss_of_score, g.score, 1e-6) < 1e-4);
}
