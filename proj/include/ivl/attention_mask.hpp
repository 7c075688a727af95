#pragma once

#include "ivl/task_spec.hpp"

#include <string>
#include <vector>

namespace ivl {

// Block-level attention mask over the task's canonical stream order
// (prompts first, then queries). block.at(r, c) == true means stream r may
// attend stream c; expansion to token level keeps the block structure.
struct AttentionMask {
    std::vector<std::string> order;
    BoolMat block;
};

struct TaskMasks {
    AttentionMask content;
    AttentionMask condition;
};

// Content: exactly the declared query <- prompt routes, so prompt rows are
// all false and act as sources only. Condition: a self block for every
// stream except image prompts, plus the declared condition edges.
TaskMasks build_masks(const TaskSpec& task);

// Token-level expansion given per-stream row counts (same order).
BoolMat expand_mask(const AttentionMask& mask, const std::vector<Index>& rows_per_stream);

// Expansion with slot alignment: when the source stream carries slot spans
// and the attending stream has exactly one row per slot, row j sees only
// span j. Slot-structured streams also self-attend span-locally (slot rows
// diagonally), so no record-level signature can leak across slots. All other
// true blocks expand fully.
struct StreamExpansion {
    Index rows = 0;
    std::vector<RowSpan> slot_spans;  // prompt-side slot structure
    bool diagonal_self = false;       // query-side slot rows
};
BoolMat expand_mask_aligned(const AttentionMask& mask,
                            const std::vector<StreamExpansion>& streams);

// For each prompt stream: the set of query streams its values can influence
// through any number of content/condition hops. Used to pick provably
// unreachable (prompt, query) pairs in mask-faithfulness checks.
std::vector<std::vector<std::string>> reachable_queries(const TaskSpec& task);

}  // namespace ivl
