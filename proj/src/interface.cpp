#include "ivl/interface.hpp"

#include <cmath>
#include <stdexcept>

namespace ivl {

namespace {

void check_order(const AttentionMask& mask, const std::vector<std::string>& names) {
    if (mask.order != names) {
        std::string got, want;
        for (const auto& n : names) got += n + " ";
        for (const auto& n : mask.order) want += n + " ";
        throw std::invalid_argument("attention: stream order [" + got +
                                    "] does not match mask order [" + want + "]");
    }
}

// Pre-norm masked multi-head attention over the concatenated streams.
// Returns x + update, where all-false rows contribute a zero update.
Tensor attention_block(const Tensor& x, const BoolMat& token_mask, const InterfaceConfig& cfg,
                       Bind& p, const std::string& prefix) {
    Tensor y = layer_norm(x, p(prefix + "ln.g"), p(prefix + "ln.b"));
    Tensor q = add_row_vector(matmul(y, p(prefix + "wq")), p(prefix + "bq"));
    Tensor k = add_row_vector(matmul(y, p(prefix + "wk")), p(prefix + "bk"));
    Tensor v = add_row_vector(matmul(y, p(prefix + "wv")), p(prefix + "bv"));

    const Index dh = cfg.dim / cfg.heads;
    // learnable logit gain lets blocks sharpen their attention quickly
    Tensor gain = exp_elem(p(prefix + "att_gain"));
    std::vector<Tensor> head_outs;
    for (int h = 0; h < cfg.heads; ++h) {
        const Index c0 = h * dh, c1 = (h + 1) * dh;
        Tensor qh = slice_cols(q, c0, c1);
        Tensor kh = slice_cols(k, c0, c1);
        Tensor vh = slice_cols(v, c0, c1);
        Tensor logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
        Tensor weights = masked_softmax(scale_tensor(logits, gain), token_mask);
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor o = cfg.heads == 1 ? head_outs[0] : concat_cols(head_outs);
    Tensor update = add_row_vector(matmul(o, p(prefix + "wo")), p(prefix + "bo"));

    // the output bias would leak into all-false rows; gate them to exact zero
    RowMatrix gate(x.rows(), 1);
    for (Index r = 0; r < x.rows(); ++r) {
        bool any = false;
        for (Index c = 0; c < token_mask.cols && !any; ++c) any = token_mask.at(r, c);
        gate(r, 0) = any ? 1.0 : 0.0;
    }
    update = mul_col_vector(update, Tensor::from_matrix(std::move(gate)));
    return add(x, update);
}

Tensor concat_streams(const PromptSet& prompts, const QuerySet& queries) {
    std::vector<Tensor> parts;
    for (const auto& s : prompts.streams) parts.push_back(s.data);
    for (const auto& s : queries.streams) parts.push_back(s.data);
    return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

std::vector<StreamExpansion> stream_expansions(const PromptSet& prompts,
                                               const QuerySet& queries) {
    std::vector<StreamExpansion> out;
    for (const auto& s : prompts.streams) out.push_back({s.data.rows(), s.slot_spans, false});
    for (const auto& s : queries.streams) out.push_back({s.data.rows(), {}, s.slot_rows});
    return out;
}

std::vector<std::string> stream_names(const PromptSet& prompts, const QuerySet& queries) {
    std::vector<std::string> names = prompts.names();
    for (auto& n : queries.names()) names.push_back(n);
    return names;
}

}  // namespace

QuerySet content_attention(const PromptSet& prompts, const QuerySet& queries,
                           const AttentionMask& mask, const InterfaceConfig& cfg, Bind& p,
                           const std::string& prefix) {
    check_order(mask, stream_names(prompts, queries));
    const BoolMat token_mask = expand_mask_aligned(mask, stream_expansions(prompts, queries));
    Tensor x = concat_streams(prompts, queries);
    Tensor out = attention_block(x, token_mask, cfg, p, prefix);

    QuerySet updated = queries;
    Index off = 0;
    for (const auto& s : prompts.streams) off += s.data.rows();
    for (auto& s : updated.streams) {
        s.data = slice_rows(out, off, off + s.data.rows());
        off += s.data.rows();
    }
    return updated;
}

std::pair<PromptSet, QuerySet> condition_attention(const PromptSet& prompts,
                                                   const QuerySet& queries,
                                                   const AttentionMask& mask,
                                                   const InterfaceConfig& cfg, Bind& p,
                                                   const std::string& prefix) {
    check_order(mask, stream_names(prompts, queries));
    const BoolMat token_mask = expand_mask_aligned(mask, stream_expansions(prompts, queries));
    Tensor x = concat_streams(prompts, queries);
    Tensor out = attention_block(x, token_mask, cfg, p, prefix);

    PromptSet up = prompts;
    QuerySet uq = queries;
    Index off = 0;
    for (auto& s : up.streams) {
        s.data = slice_rows(out, off, off + s.data.rows());
        off += s.data.rows();
    }
    for (auto& s : uq.streams) {
        s.data = slice_rows(out, off, off + s.data.rows());
        off += s.data.rows();
    }
    return {std::move(up), std::move(uq)};
}

QuerySet interface_forward(const PromptSet& prompts, const QuerySet& queries,
                           const TaskSpec& task, const InterfaceConfig& cfg, Bind& p) {
    cfg.validate();
    const TaskMasks masks = build_masks(task);
    PromptSet cur_p = prompts;
    QuerySet cur_q = queries;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = "iface.l" + std::to_string(l) + ".";
        cur_q = content_attention(cur_p, cur_q, masks.content, cfg, p, base + "content.");
        std::tie(cur_p, cur_q) =
            condition_attention(cur_p, cur_q, masks.condition, cfg, p, base + "condition.");
    }
    return cur_q;
}

Tensor ProjectedQueries::semantic_of(const std::string& stream) const {
    const RowSpan s = semantic_layout.at(stream);
    return slice_rows(semantic, s.begin, s.end);
}

Tensor ProjectedQueries::pixel_of(const std::string& stream) const {
    if (!pixel) {
        throw std::logic_error("pixel projection requested for a semantic-only task");
    }
    const RowSpan s = pixel_layout.at(stream);
    return slice_rows(*pixel, s.begin, s.end);
}

ProjectedQueries project(const QuerySet& queries, const TaskSpec& task, Bind& p) {
    MlpParams sem{p("proj.semantic.w1"), p("proj.semantic.b1"), p("proj.semantic.w2"),
                  p("proj.semantic.b2")};

    ProjectedQueries out;
    // normalize the residual stream before projecting; without it the
    // outputs share one large mean direction and cosine scores crowd
    Tensor all = layer_norm(concat_streams(PromptSet{}, queries), p("proj.semantic.ln.g"),
                            p("proj.semantic.ln.b"));
    out.semantic = mlp_forward(all, sem);
    out.semantic_layout = layout_of(queries.names(), queries.row_counts());

    if (task.project_pixel) {
        // pixel projection covers the query streams that read image prompts
        std::vector<Tensor> parts;
        std::vector<std::string> names;
        std::vector<Index> rows;
        for (const auto& s : queries.streams) {
            bool reads_image = false;
            for (const Edge& e : task.content_edges) {
                if (e.dst == s.name && task.prompt(e.src).kind == StreamKind::Image) {
                    reads_image = true;
                }
            }
            if (reads_image) {
                parts.push_back(s.data);
                names.push_back(s.name);
                rows.push_back(s.data.rows());
            }
        }
        if (parts.empty()) {
            throw std::logic_error("task " + task.name +
                                   " projects pixels but no query reads an image prompt");
        }
        MlpParams pix{p("proj.pixel.w1"), p("proj.pixel.b1"), p("proj.pixel.w2"),
                      p("proj.pixel.b2")};
        Tensor pix_in = layer_norm(parts.size() == 1 ? parts[0] : concat_rows(parts),
                                   p("proj.pixel.ln.g"), p("proj.pixel.ln.b"));
        out.pixel = mlp_forward(pix_in, pix);
        out.pixel_layout = layout_of(names, rows);
    }
    return out;
}

Tensor head_mask(const Tensor& pixel_queries, const Tensor& image_embeddings) {
    if (pixel_queries.cols() != image_embeddings.cols()) {
        throw ShapeError("head_mask: widths disagree, " + shape_str(pixel_queries) + " vs " +
                         shape_str(image_embeddings));
    }
    return matmul(pixel_queries, transpose(image_embeddings));
}

Tensor head_score(const Tensor& a, const Tensor& b, const InterfaceConfig& cfg, Bind& p) {
    if (a.cols() != b.cols()) {
        throw ShapeError("head_score: widths disagree, " + shape_str(a) + " vs " +
                         shape_str(b));
    }
    if (!cfg.cosine_score) {
        return matmul(a, transpose(b));
    }
    Tensor an = l2_normalize_rows(a);
    Tensor bn = l2_normalize_rows(b);
    Tensor tau = exp_elem(p("head.score.log_tau"));
    return scale_tensor(matmul(an, transpose(bn)), tau);
}

}  // namespace ivl
