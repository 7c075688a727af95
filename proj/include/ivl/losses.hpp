#pragma once

#include "ivl/tensor.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ivl {

// Weights of the combined training objective. Per segmentation-style task:
// alpha scales the classification cross-entropy, beta the mask BCE, gamma the
// mask DICE. retrieval / interleave_retrieval scale the two contrastive
// terms. Defaults are (2, 5, 5) triples with unit contrastive weights.
struct LossWeights {
    double pano_ce = 2, pano_bce = 5, pano_dice = 5;
    double grd_ce = 2, grd_bce = 5, grd_dice = 5;
    double iseg_ce = 2, iseg_bce = 5, iseg_dice = 5;
    double retrieval = 1;             // image-text contrastive
    double interleave_retrieval = 1;  // interleave contrastive
    double intg_ce = 2, intg_bce = 5, intg_dice = 5;

    void validate() const;
};

inline constexpr double kDiceEps = 1.0;

// Mean binary cross-entropy with logits.
Tensor bce_mask_loss(const Tensor& logits, const BoolMat& gt);

// 1 - (2 * sum(p*g) + eps) / (sum(p) + sum(g) + eps), averaged over rows.
Tensor dice_loss(const Tensor& logits, const BoolMat& gt);

// Mean softmax cross-entropy; labels may include a no-object class.
Tensor ce_class_loss(const Tensor& scores, const std::vector<Index>& labels);

// Symmetric InfoNCE over a square score matrix with diagonal positives.
Tensor contrastive_loss(const Tensor& score);

struct MatchAssignment {
    std::vector<std::pair<Index, Index>> pairs;  // (prediction, ground truth)
    std::vector<Index> unmatched_predictions;    // flagged no-object
};

// Minimum-total-cost injective assignment; rectangular inputs allowed.
MatchAssignment hungarian_match(const RowMatrix& cost);

// --- combined objective ---

// Set-prediction outputs where targets are class ids (panoptic flavor).
struct PanopticOutputs {
    Tensor mask_logits;   // n_pred x n_pix
    Tensor class_logits;  // n_pred x (n_class + 1), last column = no-object
    BoolMat gt_masks;     // n_gt x n_pix
    std::vector<Index> gt_classes;
};

// Set-prediction outputs where targets are per-entity score columns
// (grounded / interactive / interleave grounding flavor).
struct GroundingOutputs {
    Tensor mask_logits;  // n_pred x n_pix
    Tensor score;        // n_pred x n_gt
    BoolMat gt_masks;    // n_gt x n_pix
};

struct TaskBatchOutputs {
    std::vector<PanopticOutputs> pano;
    std::vector<GroundingOutputs> grd;
    std::vector<GroundingOutputs> iseg;
    std::vector<GroundingOutputs> intg;
    std::optional<Tensor> imgtext_score;     // batch x batch
    std::optional<Tensor> interleave_score;  // batch x batch
};

struct LossReport {
    Tensor total;
    std::vector<std::pair<std::string, double>> terms;  // unweighted values

    double term(const std::string& name) const;
};

// Weighted sum over all active terms, Hungarian-matched per record. Terms
// with all-zero weights are skipped; an active term without its outputs is
// an error.
LossReport combined_loss(const TaskBatchOutputs& outputs, const LossWeights& w);

}  // namespace ivl
