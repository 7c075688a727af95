#include "ivl/attention_mask.hpp"

#include <stdexcept>

namespace ivl {

namespace {

Index index_of(const std::vector<std::string>& order, const std::string& name) {
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == name) return static_cast<Index>(i);
    }
    throw std::invalid_argument("mask: edge references undeclared stream " + name);
}

}  // namespace

TaskMasks build_masks(const TaskSpec& task) {
    task.validate();
    const std::vector<std::string> order = task.stream_order();
    const Index n = static_cast<Index>(order.size());

    TaskMasks out;
    out.content.order = order;
    out.content.block = BoolMat(n, n, false);
    for (const Edge& e : task.content_edges) {
        out.content.block.set(index_of(order, e.dst), index_of(order, e.src), true);
    }

    out.condition.order = order;
    out.condition.block = BoolMat(n, n, false);
    for (const auto& p : task.prompts) {
        if (p.kind == StreamKind::Image) continue;  // image features stay fixed references
        const Index i = index_of(order, p.name);
        out.condition.block.set(i, i, true);
    }
    for (const auto& q : task.queries) {
        const Index i = index_of(order, q.name);
        out.condition.block.set(i, i, true);
    }
    for (const Edge& e : task.condition_edges) {
        out.condition.block.set(index_of(order, e.dst), index_of(order, e.src), true);
    }
    return out;
}

BoolMat expand_mask(const AttentionMask& mask, const std::vector<Index>& rows_per_stream) {
    if (rows_per_stream.size() != mask.order.size()) {
        throw std::invalid_argument("expand_mask: stream count mismatch");
    }
    Index total = 0;
    std::vector<Index> offsets;
    for (Index r : rows_per_stream) {
        offsets.push_back(total);
        total += r;
    }
    BoolMat out(total, total, false);
    const Index n = static_cast<Index>(mask.order.size());
    for (Index br = 0; br < n; ++br) {
        for (Index bc = 0; bc < n; ++bc) {
            if (!mask.block.at(br, bc)) continue;
            for (Index r = 0; r < rows_per_stream[static_cast<std::size_t>(br)]; ++r) {
                for (Index c = 0; c < rows_per_stream[static_cast<std::size_t>(bc)]; ++c) {
                    out.set(offsets[static_cast<std::size_t>(br)] + r,
                            offsets[static_cast<std::size_t>(bc)] + c, true);
                }
            }
        }
    }
    return out;
}

BoolMat expand_mask_aligned(const AttentionMask& mask,
                            const std::vector<StreamExpansion>& streams) {
    if (streams.size() != mask.order.size()) {
        throw std::invalid_argument("expand_mask_aligned: stream count mismatch");
    }
    Index total = 0;
    std::vector<Index> offsets;
    for (const StreamExpansion& s : streams) {
        offsets.push_back(total);
        total += s.rows;
    }
    BoolMat out(total, total, false);
    const Index n = static_cast<Index>(mask.order.size());
    for (Index br = 0; br < n; ++br) {
        for (Index bc = 0; bc < n; ++bc) {
            if (!mask.block.at(br, bc)) continue;
            const StreamExpansion& dst = streams[static_cast<std::size_t>(br)];
            const StreamExpansion& src = streams[static_cast<std::size_t>(bc)];
            const Index ro = offsets[static_cast<std::size_t>(br)];
            const Index co = offsets[static_cast<std::size_t>(bc)];
            if (br == bc && (dst.diagonal_self || !dst.slot_spans.empty())) {
                if (dst.diagonal_self) {
                    for (Index r = 0; r < dst.rows; ++r) out.set(ro + r, co + r, true);
                } else {
                    // span-local self-attention: tokens see their own slot,
                    // tokens outside every slot see only themselves
                    std::vector<Index> group(static_cast<std::size_t>(dst.rows), -1);
                    for (std::size_t j = 0; j < dst.slot_spans.size(); ++j) {
                        for (Index r = dst.slot_spans[j].begin; r < dst.slot_spans[j].end;
                             ++r) {
                            group[static_cast<std::size_t>(r)] = static_cast<Index>(j);
                        }
                    }
                    for (Index r = 0; r < dst.rows; ++r) {
                        for (Index c = 0; c < dst.rows; ++c) {
                            const Index gr = group[static_cast<std::size_t>(r)];
                            if (r == c || (gr >= 0 && gr == group[static_cast<std::size_t>(c)])) {
                                out.set(ro + r, co + c, true);
                            }
                        }
                    }
                }
                continue;
            }
            const bool aligned = br != bc && !src.slot_spans.empty() &&
                                 static_cast<Index>(src.slot_spans.size()) == dst.rows;
            if (aligned) {
                for (Index j = 0; j < dst.rows; ++j) {
                    const RowSpan& span = src.slot_spans[static_cast<std::size_t>(j)];
                    for (Index c = span.begin; c < span.end; ++c) {
                        out.set(ro + j, co + c, true);
                    }
                }
            } else {
                for (Index r = 0; r < dst.rows; ++r) {
                    for (Index c = 0; c < src.rows; ++c) {
                        out.set(ro + r, co + c, true);
                    }
                }
            }
        }
    }
    return out;
}

std::vector<std::vector<std::string>> reachable_queries(const TaskSpec& task) {
    const TaskMasks masks = build_masks(task);
    const std::vector<std::string>& order = masks.content.order;
    const Index n = static_cast<Index>(order.size());

    // influence flows src -> dst whenever dst may attend src, in either mask
    BoolMat flow(n, n, false);
    for (Index dst = 0; dst < n; ++dst) {
        for (Index src = 0; src < n; ++src) {
            if (masks.content.block.at(dst, src) || masks.condition.block.at(dst, src)) {
                flow.set(src, dst, true);
            }
        }
    }
    // transitive closure (safe over-approximation for any layer count)
    for (Index k = 0; k < n; ++k)
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (flow.at(i, k) && flow.at(k, j)) flow.set(i, j, true);

    std::vector<std::vector<std::string>> out;
    for (const auto& p : task.prompts) {
        const Index pi = index_of(order, p.name);
        std::vector<std::string> reached;
        for (const auto& q : task.queries) {
            const Index qi = index_of(order, q.name);
            if (flow.at(pi, qi)) reached.push_back(q.name);
        }
        out.push_back(std::move(reached));
    }
    return out;
}

}  // namespace ivl
