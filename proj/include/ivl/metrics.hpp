#pragma once

#include "ivl/tensor.hpp"

#include <vector>

namespace ivl {

// Pair IoU with the empty-vs-empty case defined as 1.
double mask_iou(const BoolMat& a, const BoolMat& b);

// Pooled over all pairs: sum of intersections over sum of unions.
double metric_ciou(const std::vector<BoolMat>& pred, const std::vector<BoolMat>& gt);

// Mean of per-pair IoU.
double metric_miou(const std::vector<BoolMat>& pred, const std::vector<BoolMat>& gt);

// Fraction of queries whose target appears in the top k of its ranking.
// k beyond the ranking length clamps with a warning on stderr.
double metric_ir_at_k(const std::vector<std::vector<long>>& rankings,
                      const std::vector<long>& gt_targets, int k);

struct PartitionSegment {
    BoolMat mask;
    int category = 0;
};
using Partition = std::vector<PartitionSegment>;

// Panoptic quality at the standard IoU > 0.5 matching threshold.
double metric_pq(const Partition& pred, const Partition& gt);

}  // namespace ivl
