#include "ivl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace ivl {

namespace {

void require_same_grid(const BoolMat& a, const BoolMat& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::invalid_argument(std::string(op) + ": grids disagree");
    }
}

void require_pairs(const std::vector<BoolMat>& pred, const std::vector<BoolMat>& gt,
                   const char* op) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(pred.size()) +
                                    " predictions vs " + std::to_string(gt.size()) +
                                    " ground truths");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) require_same_grid(pred[i], gt[i], op);
}

void validate_partition(const Partition& part, const char* which) {
    if (part.empty()) throw std::invalid_argument(std::string(which) + ": empty partition");
    const Index rows = part[0].mask.rows, cols = part[0].mask.cols;
    std::vector<int> covered(static_cast<std::size_t>(rows * cols), 0);
    for (const auto& seg : part) {
        if (seg.mask.rows != rows || seg.mask.cols != cols) {
            throw std::invalid_argument(std::string(which) + ": segment grid mismatch");
        }
        for (std::size_t i = 0; i < seg.mask.v.size(); ++i) covered[i] += seg.mask.v[i];
    }
    for (int c : covered) {
        if (c != 1) {
            throw std::invalid_argument(std::string(which) +
                                        ": segments do not partition the grid");
        }
    }
}

}  // namespace

double mask_iou(const BoolMat& a, const BoolMat& b) {
    require_same_grid(a, b, "mask_iou");
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        inter += (a.v[i] && b.v[i]);
        uni += (a.v[i] || b.v[i]);
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_ciou(const std::vector<BoolMat>& pred, const std::vector<BoolMat>& gt) {
    require_pairs(pred, gt, "metric_ciou");
    long inter = 0, uni = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        for (std::size_t i = 0; i < pred[k].v.size(); ++i) {
            inter += (pred[k].v[i] && gt[k].v[i]);
            uni += (pred[k].v[i] || gt[k].v[i]);
        }
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double metric_miou(const std::vector<BoolMat>& pred, const std::vector<BoolMat>& gt) {
    require_pairs(pred, gt, "metric_miou");
    if (pred.empty()) throw std::invalid_argument("metric_miou: no pairs");
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) sum += mask_iou(pred[k], gt[k]);
    return sum / static_cast<double>(pred.size());
}

double metric_ir_at_k(const std::vector<std::vector<long>>& rankings,
                      const std::vector<long>& gt_targets, int k) {
    if (k < 1) throw std::invalid_argument("metric_ir_at_k: k must be >= 1");
    if (rankings.size() != gt_targets.size()) {
        throw std::invalid_argument("metric_ir_at_k: rankings vs targets size mismatch");
    }
    if (rankings.empty()) throw std::invalid_argument("metric_ir_at_k: no queries");
    long hits = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        int kk = k;
        if (kk > static_cast<int>(rankings[q].size())) {
            std::fprintf(stderr, "warning: k=%d exceeds ranking size %zu, clamping\n", k,
                         rankings[q].size());
            kk = static_cast<int>(rankings[q].size());
        }
        for (int r = 0; r < kk; ++r) {
            if (rankings[q][static_cast<std::size_t>(r)] == gt_targets[q]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double metric_pq(const Partition& pred, const Partition& gt) {
    validate_partition(pred, "metric_pq prediction");
    validate_partition(gt, "metric_pq ground truth");

    double iou_sum = 0.0;
    long tp = 0;
    std::vector<char> pred_used(pred.size(), 0);
    for (const auto& g : gt) {
        for (std::size_t pi = 0; pi < pred.size(); ++pi) {
            if (pred[pi].category != g.category) continue;
            const double iou = mask_iou(pred[pi].mask, g.mask);
            if (iou > 0.5) {
                // an IoU above 0.5 against a partition is necessarily unique
                iou_sum += iou;
                ++tp;
                pred_used[pi] = 1;
                break;
            }
        }
    }
    const long fn = static_cast<long>(gt.size()) - tp;
    long fp = 0;
    for (char used : pred_used) fp += used ? 0 : 1;
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                         0.5 * static_cast<double>(fn);
    if (denom == 0.0) return 0.0;
    return iou_sum / denom;
}

}  // namespace ivl
