#include "ivl/runners.hpp"

#include "ivl/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ivl {

std::vector<Index> unify_match(const Tensor& sim,
                               const std::vector<std::pair<Index, Index>>& exclusion) {
    if (!sim.m.allFinite()) {
        throw NumericError("unify_match: non-finite similarities");
    }
    std::set<std::pair<Index, Index>> excluded(exclusion.begin(), exclusion.end());
    std::vector<Index> out;
    for (Index r = 0; r < sim.rows(); ++r) {
        Index best = -1;
        double best_score = 0.0;
        for (Index c = 0; c < sim.cols(); ++c) {
            if (excluded.count({r, c})) continue;
            if (best < 0 || sim.m(r, c) > best_score) {
                best = c;
                best_score = sim.m(r, c);
            }
        }
        if (best < 0) {
            throw std::invalid_argument("unify_match: every target excluded for source " +
                                        std::to_string(r));
        }
        out.push_back(best);
    }
    return out;
}

namespace {

// column argmax: for each slot, the proposal row with the highest score
std::vector<Index> column_argmax(const Tensor& score) {
    std::vector<Index> out;
    for (Index c = 0; c < score.cols(); ++c) {
        Index best = 0;
        for (Index r = 1; r < score.rows(); ++r) {
            if (score.m(r, c) > score.m(best, c)) best = r;
        }
        out.push_back(best);
    }
    return out;
}

// shared pipeline for the three grounding-flavor tasks
GroundingForward grounding_forward(const TaskSpec& task, const EncodedInputs& inputs,
                                   const SampleContext& ctx, const std::string& obj_stream,
                                   const std::string& slot_stream, const InterfaceConfig& cfg,
                                   Bind& p) {
    PromptSet prompts = sample_prompts(inputs, task, cfg);
    QuerySet queries = sample_queries(task, ctx, cfg, p);
    QuerySet out = interface_forward(prompts, queries, task, cfg, p);
    ProjectedQueries proj = project(out, task, p);

    GroundingForward fwd;
    fwd.score = head_score(proj.semantic_of(obj_stream), proj.semantic_of(slot_stream), cfg, p);
    fwd.mask_logits = head_mask(proj.pixel_of(obj_stream), inputs.image->features);
    fwd.selected = column_argmax(fwd.score);
    fwd.selected_masks = gather_rows(fwd.mask_logits, fwd.selected);
    return fwd;
}

}  // namespace

GroundingForward run_interleave_grounding(const Scene& scene, const InterleaveEntry& entry,
                                          const SceneMap& scenes, const InterfaceConfig& cfg,
                                          Bind& p, const EmbeddingStore* store) {
    if (entry.entity_count() < 1) {
        throw std::invalid_argument("interleave grounding: entry without entities");
    }
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.interleave = encode_interleave(entry, scenes, cfg, p, store);
    SampleContext ctx;
    ctx.n_entities = entry.entity_count();
    return grounding_forward(builtin_task("interleave_grounding"), inputs, ctx, "q.entity",
                             "q.interleave", cfg, p);
}

GroundingForward run_grounded_segmentation(const Scene& scene, const InterleaveEntry& entry,
                                           const SceneMap& scenes, const InterfaceConfig& cfg,
                                           Bind& p, const EmbeddingStore* store) {
    for (const EntryNode& n : entry.nodes) {
        if (n.kind == EntryNode::Kind::VisualRef) {
            throw std::invalid_argument("grounded segmentation: entry must be text-only");
        }
    }
    if (entry.entity_count() < 1) {
        throw std::invalid_argument("grounded segmentation: entry without entities");
    }
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.text = encode_interleave(entry, scenes, cfg, p, store);
    SampleContext ctx;
    ctx.n_entities = entry.entity_count();
    return grounding_forward(builtin_task("grounded_segmentation"), inputs, ctx, "q.grounding",
                             "q.text", cfg, p);
}

GroundingForward run_interactive_segmentation(const Scene& scene,
                                              const std::vector<Bbox>& boxes,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store) {
    if (boxes.empty()) {
        throw std::invalid_argument("interactive segmentation: no interactions");
    }
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.spatial_boxes = boxes;
    SampleContext ctx;
    ctx.n_interactions = static_cast<int>(boxes.size());
    return grounding_forward(builtin_task("interactive_segmentation"), inputs, ctx, "q.segment",
                             "q.spatial", cfg, p);
}

std::vector<Tensor> class_token_encodings(const InterfaceConfig& cfg, Bind& p) {
    std::vector<Tensor> out;
    for (int c = 0; c < category_count(); ++c) {
        // class index as the node slot, so pooled class rows carry a
        // positional signature the class queries can bind to
        out.push_back(encode_class_text(tokenize(category_phrase(c)), c, cfg, p));
    }
    return out;
}

PanoForward run_generic_segmentation(const Scene& scene, const InterfaceConfig& cfg, Bind& p,
                                     const EmbeddingStore* store) {
    const TaskSpec& task = builtin_task("generic_segmentation");
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.class_tokens = class_token_encodings(cfg, p);
    SampleContext ctx;
    ctx.n_classes = category_count();

    PromptSet prompts = sample_prompts(inputs, task, cfg);
    QuerySet queries = sample_queries(task, ctx, cfg, p);
    QuerySet out = interface_forward(prompts, queries, task, cfg, p);
    ProjectedQueries proj = project(out, task, p);

    PanoForward fwd;
    Tensor class_side = concat_rows({proj.semantic_of("q.class"), p("head.no_object")});
    fwd.class_logits = head_score(proj.semantic_of("q.object"), class_side, cfg, p);
    fwd.mask_logits = head_mask(proj.pixel_of("q.object"), inputs.image->features);
    return fwd;
}

Partition panoptic_infer(const PanoForward& fwd, int height, int width) {
    const Index n_obj = fwd.mask_logits.rows();
    const Index no_object = fwd.class_logits.cols() - 1;
    std::vector<Index> cls(static_cast<std::size_t>(n_obj));
    std::vector<Index> kept;
    for (Index i = 0; i < n_obj; ++i) {
        Index best = 0;
        fwd.class_logits.m.row(i).maxCoeff(&best);
        cls[static_cast<std::size_t>(i)] = best;
        if (best != no_object) kept.push_back(i);
    }
    if (kept.empty()) {
        // degenerate untrained case: claim everything with the best query
        Index best = 0;
        Index col = 0;
        fwd.class_logits.m.leftCols(no_object).maxCoeff(&best, &col);
        kept.push_back(best);
        cls[static_cast<std::size_t>(best)] = col;
    }

    std::vector<BoolMat> masks(kept.size(), BoolMat(height, width, false));
    for (Index cell = 0; cell < static_cast<Index>(height) * width; ++cell) {
        Index winner = 0;
        for (std::size_t k = 1; k < kept.size(); ++k) {
            if (fwd.mask_logits.m(kept[k], cell) >
                fwd.mask_logits.m(kept[winner], cell)) {
                winner = static_cast<Index>(k);
            }
        }
        masks[winner].set(cell / width, cell % width, true);
    }
    Partition part;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (masks[k].count() == 0) continue;
        part.push_back({masks[k], static_cast<int>(cls[static_cast<std::size_t>(kept[k])])});
    }
    return part;
}

RetrievalEmbeddings run_image_text_embeddings(const Scene& scene, const std::string& caption,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store) {
    const TaskSpec& task = builtin_task("image_text_retrieval");
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.caption = encode_text(tokenize(caption), cfg, p, store);
    SampleContext ctx;

    PromptSet prompts = sample_prompts(inputs, task, cfg);
    QuerySet queries = sample_queries(task, ctx, cfg, p);
    QuerySet out = interface_forward(prompts, queries, task, cfg, p);
    ProjectedQueries proj = project(out, task, p);
    return {proj.semantic_of("q.image"), proj.semantic_of("q.caption")};
}

RetrievalEmbeddings run_interleave_embeddings(const Scene& scene, const InterleaveEntry& entry,
                                              const SceneMap& scenes,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store) {
    if (entry.entity_count() < 1) {
        throw std::invalid_argument("interleave retrieval: entry without entities");
    }
    const TaskSpec& task = builtin_task("interleave_retrieval");
    EncodedInputs inputs;
    inputs.image = encode_image(scene, cfg, p, store);
    inputs.interleave = encode_interleave(entry, scenes, cfg, p, store);
    SampleContext ctx;
    ctx.n_entities = entry.entity_count();

    PromptSet prompts = sample_prompts(inputs, task, cfg);
    QuerySet queries = sample_queries(task, ctx, cfg, p);
    QuerySet out = interface_forward(prompts, queries, task, cfg, p);
    ProjectedQueries proj = project(out, task, p);
    // entry-level pooling: one retrieval vector per entry
    return {proj.semantic_of("q.image"), mean_rows(proj.semantic_of("q._interleave"))};
}

std::vector<long> exclusion_scenes(const InterleaveEntry& entry) {
    std::vector<long> out;
    for (const EntryNode& n : entry.nodes) {
        if (n.kind != EntryNode::Kind::VisualRef) continue;
        if (std::find(out.begin(), out.end(), n.ref.scene_id) == out.end()) {
            out.push_back(n.ref.scene_id);
        }
    }
    return out;
}

namespace {

std::vector<long> rank_descending(const std::vector<std::pair<double, long>>& scored) {
    std::vector<std::pair<double, long>> s = scored;
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<long> out;
    for (const auto& [score, id] : s) out.push_back(id);
    return out;
}

}  // namespace

std::vector<std::vector<long>> run_interleave_retrieval(
    const std::vector<InterleaveEntry>& queries, const std::vector<long>& corpus,
    const SceneMap& scenes, const InterfaceConfig& cfg, Bind& p,
    const EmbeddingStore* store) {
    if (corpus.empty()) throw std::invalid_argument("interleave retrieval: empty corpus");

    // corpus image embeddings are independent of the paired entry (the masks
    // isolate the two sides), so a fixed probe entry serves every scene
    InterleaveEntry probe;
    probe.nodes = {{EntryNode::Kind::TextSpan, "the scene", {}}};
    std::vector<Tensor> image_embs;
    for (long id : corpus) {
        image_embs.push_back(
            run_interleave_embeddings(scenes.at(id), probe, scenes, cfg, p, store).image);
    }

    std::vector<std::vector<long>> rankings;
    for (const InterleaveEntry& entry : queries) {
        const std::vector<long> excluded = exclusion_scenes(entry);
        // the entry side needs any resolvable scene; reuse its first ref's
        // scene when present, else the first corpus scene
        const Scene& host = scenes.at(corpus.front());
        Tensor query_emb =
            run_interleave_embeddings(host, entry, scenes, cfg, p, store).query;

        std::vector<std::pair<double, long>> scored;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (std::find(excluded.begin(), excluded.end(), corpus[i]) != excluded.end()) {
                continue;
            }
            Tensor s = head_score(query_emb, image_embs[i], cfg, p);
            scored.emplace_back(s.value(), corpus[i]);
        }
        if (scored.empty()) {
            throw std::invalid_argument("interleave retrieval: corpus empty after exclusion");
        }
        rankings.push_back(rank_descending(scored));
    }
    return rankings;
}

ImageTextRun run_image_text_retrieval(const std::vector<std::pair<long, std::string>>& pairs,
                                      const SceneMap& scenes, const InterfaceConfig& cfg,
                                      Bind& p, const EmbeddingStore* store) {
    if (pairs.empty()) throw std::invalid_argument("image-text retrieval: no pairs");
    std::vector<Tensor> image_embs, caption_embs;
    for (const auto& [scene_id, caption] : pairs) {
        RetrievalEmbeddings e =
            run_image_text_embeddings(scenes.at(scene_id), caption, cfg, p, store);
        image_embs.push_back(e.image);
        caption_embs.push_back(e.query);
    }
    Tensor score = head_score(concat_rows(caption_embs), concat_rows(image_embs), cfg, p);

    ImageTextRun out;
    for (Index q = 0; q < score.rows(); ++q) {
        std::vector<std::pair<double, long>> scored;
        for (Index i = 0; i < score.cols(); ++i) {
            scored.emplace_back(score.m(q, i), pairs[static_cast<std::size_t>(i)].first);
        }
        out.image_rankings.push_back(rank_descending(scored));
    }
    for (Index i = 0; i < score.cols(); ++i) {
        std::vector<std::pair<double, long>> scored;
        for (Index q = 0; q < score.rows(); ++q) {
            scored.emplace_back(score.m(q, i), static_cast<long>(q));
        }
        out.caption_rankings.push_back(rank_descending(scored));
    }
    return out;
}

}  // namespace ivl
