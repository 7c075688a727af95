#pragma once

#include "ivl/dataset.hpp"
#include "ivl/interface.hpp"
#include "ivl/metrics.hpp"
#include "ivl/sampler.hpp"

#include <vector>

namespace ivl {

// Per source row, the best non-excluded target column; ties take the lowest
// index. Exclusion pairs are (source, target).
std::vector<Index> unify_match(const Tensor& sim,
                               const std::vector<std::pair<Index, Index>>& exclusion = {});

// Outputs of one grounding-flavor forward pass (interleave grounding,
// grounded segmentation, interactive segmentation).
struct GroundingForward {
    Tensor score;           // n_obj x n_slots
    Tensor mask_logits;     // n_obj x n_pix, all proposal masks
    Tensor selected_masks;  // n_slots x n_pix, after per-slot argmax
    std::vector<Index> selected;
};

GroundingForward run_interleave_grounding(const Scene& scene, const InterleaveEntry& entry,
                                          const SceneMap& scenes, const InterfaceConfig& cfg,
                                          Bind& p, const EmbeddingStore* store = nullptr);

// Caption entities as text spans, no visual references.
GroundingForward run_grounded_segmentation(const Scene& scene, const InterleaveEntry& entry,
                                           const SceneMap& scenes, const InterfaceConfig& cfg,
                                           Bind& p, const EmbeddingStore* store = nullptr);

// One spatial prompt per interaction box.
GroundingForward run_interactive_segmentation(const Scene& scene,
                                              const std::vector<Bbox>& boxes,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store = nullptr);

struct PanoForward {
    Tensor mask_logits;   // n_obj x n_pix
    Tensor class_logits;  // n_obj x (n_class + 1), last column no-object
};

PanoForward run_generic_segmentation(const Scene& scene, const InterfaceConfig& cfg, Bind& p,
                                     const EmbeddingStore* store = nullptr);

// Greedy panoptic assembly: queries claiming a class own the cells where
// their mask logit wins.
Partition panoptic_infer(const PanoForward& fwd, int height, int width);

// Semantic embedding pair of one record; both sides are isolated by the
// attention masks, so they can be ranked independently.
struct RetrievalEmbeddings {
    Tensor image;  // 1 x d
    Tensor query;  // 1 x d (caption or pooled interleave entry)
};

RetrievalEmbeddings run_image_text_embeddings(const Scene& scene, const std::string& caption,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store = nullptr);

RetrievalEmbeddings run_interleave_embeddings(const Scene& scene, const InterleaveEntry& entry,
                                              const SceneMap& scenes,
                                              const InterfaceConfig& cfg, Bind& p,
                                              const EmbeddingStore* store = nullptr);

// Scenes whose segments appear as visual references of the entry.
std::vector<long> exclusion_scenes(const InterleaveEntry& entry);

// Full corpus ranking per query entry, excluding each entry's reference
// scenes. Rankings are descending by score with scene id as tie-break.
std::vector<std::vector<long>> run_interleave_retrieval(
    const std::vector<InterleaveEntry>& queries, const std::vector<long>& corpus,
    const SceneMap& scenes, const InterfaceConfig& cfg, Bind& p,
    const EmbeddingStore* store = nullptr);

struct ImageTextRun {
    std::vector<std::vector<long>> image_rankings;    // per caption: scenes best-first
    std::vector<std::vector<long>> caption_rankings;  // per scene: caption indices best-first
};

ImageTextRun run_image_text_retrieval(const std::vector<std::pair<long, std::string>>& pairs,
                                      const SceneMap& scenes, const InterfaceConfig& cfg,
                                      Bind& p, const EmbeddingStore* store = nullptr);

// Token encodings of every category phrase, for the class prompt.
std::vector<Tensor> class_token_encodings(const InterfaceConfig& cfg, Bind& p);

}  // namespace ivl
