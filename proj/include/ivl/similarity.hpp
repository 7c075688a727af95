#pragma once

#include "ivl/dataset.hpp"
#include "ivl/encoders.hpp"
#include "ivl/rng.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace ivl {

// L2-normalized ROI embeddings of every segment across a corpus.
struct SimilarityIndex {
    Tensor rows;  // n_seg x d, unit rows
    std::vector<std::pair<long, long>> owner;  // row -> (scene_id, ann_id)

    Index row_of(long scene_id, long ann_id) const;
};

SimilarityIndex build_similarity_index(const SceneMap& scenes, const InterfaceConfig& cfg,
                                       Bind& p);

// Closest other segment by cosine, restricted to other scenes; ties take the
// lowest row.
Index match_segment(const SimilarityIndex& index, Index i);

// Each entity independently gains a cross-scene visual reference with
// probability p_replace; phrases stay for provenance.
BenchRecord replace_entities(const BenchRecord& record, const SimilarityIndex& index,
                             double p_replace, Rng& rng);

void write_similarity(const SimilarityIndex& index, const std::filesystem::path& file);
SimilarityIndex read_similarity(const std::filesystem::path& file);

}  // namespace ivl
