#include "ivl/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ivl {

void LossWeights::validate() const {
    const double all[] = {pano_ce, pano_bce, pano_dice, grd_ce,  grd_bce,
                          grd_dice, iseg_ce, iseg_bce,  iseg_dice, retrieval,
                          interleave_retrieval, intg_ce, intg_bce, intg_dice};
    double sum = 0.0;
    for (double w : all) {
        if (w < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("at least one loss weight must be positive");
}

namespace {

Tensor bool_tensor(const BoolMat& b) {
    RowMatrix m(b.rows, b.cols);
    for (Index r = 0; r < b.rows; ++r)
        for (Index c = 0; c < b.cols; ++c) m(r, c) = b.at(r, c) ? 1.0 : 0.0;
    return Tensor::from_matrix(std::move(m));
}

void require_mask_shapes(const Tensor& logits, const BoolMat& gt, const char* op) {
    if (logits.rows() != gt.rows || logits.cols() != gt.cols) {
        throw ShapeError(std::string(op) + ": logits " + shape_str(logits) + " vs gt [" +
                         std::to_string(gt.rows) + "x" + std::to_string(gt.cols) + "]");
    }
}

}  // namespace

Tensor bce_mask_loss(const Tensor& logits, const BoolMat& gt) {
    require_mask_shapes(logits, gt, "bce_mask_loss");
    Tensor g = bool_tensor(gt);
    return mean_all(sub(softplus(logits), mul(logits, g)));
}

Tensor dice_loss(const Tensor& logits, const BoolMat& gt) {
    require_mask_shapes(logits, gt, "dice_loss");
    Tensor g = bool_tensor(gt);
    Tensor probs = sigmoid(logits);
    Tensor num = add_scalar(scale(row_sum(mul(probs, g)), 2.0), kDiceEps);
    Tensor den = add_scalar(add(row_sum(probs), row_sum(g)), kDiceEps);
    Tensor frac = div_col_vector(num, den);
    return mean_all(add_scalar(scale(frac, -1.0), 1.0));
}

Tensor ce_class_loss(const Tensor& scores, const std::vector<Index>& labels) {
    return cross_entropy_rows(scores, labels);
}

Tensor contrastive_loss(const Tensor& score) {
    if (score.rows() != score.cols()) {
        throw ShapeError("contrastive_loss: score must be square, got " + shape_str(score));
    }
    if (score.rows() < 2) {
        throw std::invalid_argument("contrastive_loss: needs at least 2 pairs");
    }
    std::vector<Index> diag;
    for (Index i = 0; i < score.rows(); ++i) diag.push_back(i);
    Tensor row_ce = cross_entropy_rows(score, diag);
    Tensor col_ce = cross_entropy_rows(transpose(score), diag);
    return scale(add(row_ce, col_ce), 0.5);
}

namespace {

double pair_bce(const RowMatrix& logits, Index pred, const BoolMat& gt, Index g) {
    double sum = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) {
        const double x = logits(pred, c);
        const double t = gt.at(g, c) ? 1.0 : 0.0;
        sum += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - x * t;
    }
    return sum / static_cast<double>(logits.cols());
}

double pair_dice(const RowMatrix& logits, Index pred, const BoolMat& gt, Index g) {
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) {
        const double p = 1.0 / (1.0 + std::exp(-logits(pred, c)));
        const double t = gt.at(g, c) ? 1.0 : 0.0;
        inter += p * t;
        psum += p;
        gsum += t;
    }
    return 1.0 - (2.0 * inter + kDiceEps) / (psum + gsum + kDiceEps);
}

// softmax over one row (panoptic class probabilities)
RowMatrix row_softmax(const RowMatrix& m) {
    RowMatrix out(m.rows(), m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        const double mx = m.row(r).maxCoeff();
        double sum = 0.0;
        for (Index c = 0; c < m.cols(); ++c) {
            out(r, c) = std::exp(m(r, c) - mx);
            sum += out(r, c);
        }
        out.row(r) /= sum;
    }
    return out;
}

struct SegTriple {
    Tensor ce, bce, dice;
    bool has_masks = false;
};

// Hungarian-matched loss triple for one panoptic record.
SegTriple pano_record_loss(const PanopticOutputs& o, double wc, double wb, double wd) {
    const Index n_pred = o.mask_logits.rows();
    const Index n_gt = o.gt_masks.rows;
    if (static_cast<Index>(o.gt_classes.size()) != n_gt) {
        throw ShapeError("pano loss: gt class count mismatch");
    }
    const Index no_object = o.class_logits.cols() - 1;

    RowMatrix cost(n_pred, n_gt);
    const RowMatrix probs = row_softmax(o.class_logits.m);
    for (Index i = 0; i < n_pred; ++i) {
        for (Index j = 0; j < n_gt; ++j) {
            cost(i, j) = wc * -probs(i, o.gt_classes[static_cast<std::size_t>(j)]) +
                         wb * pair_bce(o.mask_logits.m, i, o.gt_masks, j) +
                         wd * pair_dice(o.mask_logits.m, i, o.gt_masks, j);
        }
    }
    const MatchAssignment match = hungarian_match(cost);

    std::vector<Index> labels(static_cast<std::size_t>(n_pred), no_object);
    std::vector<Index> pred_rows, gt_rows;
    for (const auto& [pred, gt] : match.pairs) {
        labels[static_cast<std::size_t>(pred)] = o.gt_classes[static_cast<std::size_t>(gt)];
        pred_rows.push_back(pred);
        gt_rows.push_back(gt);
    }

    SegTriple out;
    out.ce = cross_entropy_rows(o.class_logits, labels);
    if (!pred_rows.empty()) {
        Tensor matched_logits = gather_rows(o.mask_logits, pred_rows);
        BoolMat matched_gt(static_cast<Index>(gt_rows.size()), o.gt_masks.cols);
        for (std::size_t k = 0; k < gt_rows.size(); ++k) {
            for (Index c = 0; c < o.gt_masks.cols; ++c) {
                matched_gt.set(static_cast<Index>(k), c, o.gt_masks.at(gt_rows[k], c));
            }
        }
        out.bce = bce_mask_loss(matched_logits, matched_gt);
        out.dice = dice_loss(matched_logits, matched_gt);
        out.has_masks = true;
    }
    return out;
}

// Hungarian-matched loss triple for one grounding-flavor record. The CE runs
// over score columns: each ground-truth entity must put its probability mass
// on its matched prediction row.
SegTriple grounding_record_loss(const GroundingOutputs& o, double wc, double wb, double wd) {
    const Index n_pred = o.mask_logits.rows();
    const Index n_gt = o.gt_masks.rows;
    if (o.score.rows() != n_pred || o.score.cols() != n_gt) {
        throw ShapeError("grounding loss: score " + shape_str(o.score) + " vs " +
                         std::to_string(n_pred) + " preds, " + std::to_string(n_gt) + " gt");
    }
    if (n_gt == 0) throw std::invalid_argument("grounding loss: record without entities");

    RowMatrix col_probs = row_softmax(o.score.m.transpose());  // n_gt x n_pred
    RowMatrix cost(n_pred, n_gt);
    for (Index i = 0; i < n_pred; ++i) {
        for (Index j = 0; j < n_gt; ++j) {
            cost(i, j) = wc * -col_probs(j, i) +
                         wb * pair_bce(o.mask_logits.m, i, o.gt_masks, j) +
                         wd * pair_dice(o.mask_logits.m, i, o.gt_masks, j);
        }
    }
    const MatchAssignment match = hungarian_match(cost);

    std::vector<Index> labels(static_cast<std::size_t>(n_gt), 0);
    std::vector<Index> pred_rows, gt_rows;
    for (const auto& [pred, gt] : match.pairs) {
        labels[static_cast<std::size_t>(gt)] = pred;
        pred_rows.push_back(pred);
        gt_rows.push_back(gt);
    }

    SegTriple out;
    out.ce = cross_entropy_rows(transpose(o.score), labels);
    Tensor matched_logits = gather_rows(o.mask_logits, pred_rows);
    BoolMat matched_gt(static_cast<Index>(gt_rows.size()), o.gt_masks.cols);
    for (std::size_t k = 0; k < gt_rows.size(); ++k) {
        for (Index c = 0; c < o.gt_masks.cols; ++c) {
            matched_gt.set(static_cast<Index>(k), c, o.gt_masks.at(gt_rows[k], c));
        }
    }
    out.bce = bce_mask_loss(matched_logits, matched_gt);
    out.dice = dice_loss(matched_logits, matched_gt);
    out.has_masks = true;
    return out;
}

}  // namespace

double LossReport::term(const std::string& name) const {
    for (const auto& [k, v] : terms) {
        if (k == name) return v;
    }
    throw std::out_of_range("no loss term named " + name);
}

LossReport combined_loss(const TaskBatchOutputs& outputs, const LossWeights& w) {
    w.validate();
    LossReport report;
    report.total = Tensor::scalar(0.0);
    auto push = [&](const std::string& name, const Tensor& value, double weight) {
        report.terms.emplace_back(name, value.value());
        if (weight > 0.0) report.total = add(report.total, scale(value, weight));
    };
    auto mean_of = [](std::vector<Tensor>& parts) {
        Tensor sum = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) sum = add(sum, parts[i]);
        return scale(sum, 1.0 / static_cast<double>(parts.size()));
    };

    auto seg_group = [&](const char* name, const std::vector<PanopticOutputs>* pano,
                         const std::vector<GroundingOutputs>* grounding, double wc, double wb,
                         double wd) {
        if (wc <= 0.0 && wb <= 0.0 && wd <= 0.0) return;
        const bool have = pano ? !pano->empty() : !grounding->empty();
        if (!have) {
            throw std::invalid_argument(std::string("combined_loss: no outputs for active "
                                                    "term ") + name);
        }
        std::vector<Tensor> ces, bces, dices;
        if (pano) {
            for (const auto& rec : *pano) {
                SegTriple t = pano_record_loss(rec, wc, wb, wd);
                ces.push_back(t.ce);
                if (t.has_masks) {
                    bces.push_back(t.bce);
                    dices.push_back(t.dice);
                }
            }
        } else {
            for (const auto& rec : *grounding) {
                SegTriple t = grounding_record_loss(rec, wc, wb, wd);
                ces.push_back(t.ce);
                bces.push_back(t.bce);
                dices.push_back(t.dice);
            }
        }
        push(std::string(name) + "_ce", mean_of(ces), wc);
        if (!bces.empty()) {
            push(std::string(name) + "_bce", mean_of(bces), wb);
            push(std::string(name) + "_dice", mean_of(dices), wd);
        }
    };

    seg_group("pano", &outputs.pano, nullptr, w.pano_ce, w.pano_bce, w.pano_dice);
    seg_group("grd", nullptr, &outputs.grd, w.grd_ce, w.grd_bce, w.grd_dice);
    seg_group("iseg", nullptr, &outputs.iseg, w.iseg_ce, w.iseg_bce, w.iseg_dice);
    seg_group("intg", nullptr, &outputs.intg, w.intg_ce, w.intg_bce, w.intg_dice);

    if (w.retrieval > 0.0) {
        if (!outputs.imgtext_score) {
            throw std::invalid_argument("combined_loss: no score for active term imgtextr");
        }
        push("imgtextr_c", contrastive_loss(*outputs.imgtext_score), w.retrieval);
    }
    if (w.interleave_retrieval > 0.0) {
        if (!outputs.interleave_score) {
            throw std::invalid_argument("combined_loss: no score for active term intr");
        }
        push("intr_c", contrastive_loss(*outputs.interleave_score), w.interleave_retrieval);
    }
    return report;
}

}  // namespace ivl
