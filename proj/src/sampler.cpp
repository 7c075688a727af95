#include "ivl/sampler.hpp"

#include <stdexcept>

namespace ivl {

// Queries may duplicate pool rows across streams: every proposal-style
// stream shares the object pool, and the per-entity slot streams share one
// slot pool, so supervision from any task shapes the queries of all of them.
std::string pool_kind_for(const std::string& query_name) {
    const std::string kind =
        query_name.rfind("q.", 0) == 0 ? query_name.substr(2) : query_name;
    if (kind == "object" || kind == "segment" || kind == "grounding" || kind == "entity") {
        return "object";
    }
    if (kind == "interleave" || kind == "text") return "slot";
    return kind;
}

Tensor downsample_rows(const Tensor& t, int stride) {
    if (stride < 1) throw std::invalid_argument("downsample_rows: stride must be >= 1");
    if (stride == 1) return t;
    std::vector<Index> idx;
    for (Index r = 0; r < t.rows(); r += stride) idx.push_back(r);
    return gather_rows(t, idx);
}

PromptSet sample_prompts(const EncodedInputs& inputs, const TaskSpec& task,
                         const InterfaceConfig& cfg, int image_stride) {
    PromptSet out;
    for (const PromptDecl& decl : task.prompts) {
        PromptStream s;
        s.name = decl.name;
        s.kind = decl.kind;
        switch (decl.kind) {
            case StreamKind::Image: {
                if (!inputs.image) {
                    throw std::invalid_argument("sample_prompts: no image input for " +
                                                decl.name);
                }
                s.data = downsample_rows(inputs.image->features, image_stride);
                break;
            }
            case StreamKind::Caption: {
                if (!inputs.caption) {
                    throw std::invalid_argument("sample_prompts: no caption input for " +
                                                decl.name);
                }
                s.data = *inputs.caption;
                break;
            }
            case StreamKind::Text: {
                if (!inputs.text) {
                    throw std::invalid_argument("sample_prompts: no text input for " +
                                                decl.name);
                }
                s.data = inputs.text->tokens;
                s.slot_spans = inputs.text->entity_spans;
                break;
            }
            case StreamKind::Interleave: {
                if (!inputs.interleave) {
                    throw std::invalid_argument("sample_prompts: no interleave input for " +
                                                decl.name);
                }
                s.data = inputs.interleave->tokens;
                s.slot_spans = inputs.interleave->entity_spans;
                break;
            }
            case StreamKind::Class: {
                if (inputs.class_tokens.empty()) {
                    throw std::invalid_argument("sample_prompts: no class inputs for " +
                                                decl.name);
                }
                std::vector<Tensor> rows;
                for (const Tensor& tokens : inputs.class_tokens) {
                    rows.push_back(mean_rows(tokens));
                }
                s.data = rows.size() == 1 ? rows[0] : concat_rows(rows);
                for (Index r = 0; r < s.data.rows(); ++r) {
                    s.slot_spans.push_back({r, r + 1});
                }
                break;
            }
            case StreamKind::Spatial: {
                if (!inputs.image) {
                    throw std::invalid_argument("sample_prompts: spatial prompt needs image");
                }
                if (inputs.spatial_boxes.empty()) {
                    throw std::invalid_argument("sample_prompts: no spatial boxes for " +
                                                decl.name);
                }
                std::vector<Tensor> rows;
                for (const Bbox& box : inputs.spatial_boxes) {
                    rows.push_back(roi_pool(inputs.image->features, inputs.image->height,
                                            inputs.image->width, box));
                }
                s.data = rows.size() == 1 ? rows[0] : concat_rows(rows);
                for (Index r = 0; r < s.data.rows(); ++r) {
                    s.slot_spans.push_back({r, r + 1});
                }
                break;
            }
        }
        if (s.data.cols() != cfg.dim) {
            throw ShapeError("sample_prompts: stream " + decl.name + " width " +
                             std::to_string(s.data.cols()) + " != dim " +
                             std::to_string(cfg.dim));
        }
        out.streams.push_back(std::move(s));
    }
    return out;
}

QuerySet sample_queries(const TaskSpec& task, const SampleContext& ctx,
                        const InterfaceConfig& cfg, Bind& p) {
    QuerySet out;
    for (const QueryDecl& decl : task.queries) {
        Index need = 0;
        switch (decl.arity) {
            case QueryArity::ObjectPool: need = cfg.n_obj; break;
            case QueryArity::PerClass: need = ctx.n_classes; break;
            case QueryArity::PerEntity: need = ctx.n_entities; break;
            case QueryArity::PerInteraction: need = ctx.n_interactions; break;
            case QueryArity::Single: need = 1; break;
        }
        if (need < 1) {
            throw std::invalid_argument("sample_queries: stream " + decl.name +
                                        " needs a positive row count");
        }
        const Tensor& pool = p("pool." + pool_kind_for(decl.name));
        QueryStream s;
        s.name = decl.name;
        s.slot_rows = decl.arity == QueryArity::PerEntity ||
                      decl.arity == QueryArity::PerClass ||
                      decl.arity == QueryArity::PerInteraction;
        if (need <= pool.rows()) {
            s.data = slice_rows(pool, 0, need);
        } else {
            std::vector<Index> idx;
            for (Index i = 0; i < need; ++i) idx.push_back(i % pool.rows());
            s.data = gather_rows(pool, idx);
        }
        out.streams.push_back(std::move(s));
    }
    return out;
}

}  // namespace ivl
