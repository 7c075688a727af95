#pragma once

#include "ivl/interleave.hpp"
#include "ivl/params.hpp"
#include "ivl/scene.hpp"
#include "ivl/streams.hpp"
#include "ivl/text.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ivl {

// On-disk store of precomputed embeddings so dumped real-model features can
// replace the synthetic encoders. One file per key: an 8-byte magic, dtype
// and rank, extents, then a little-endian float64 payload.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::optional<Tensor> load(const std::string& key) const;
    void save(const std::string& key, const Tensor& t) const;
    const std::filesystem::path& dir() const { return dir_; }

    static std::string scene_key(long scene_id);
    static std::string text_key(const std::string& source_text);

private:
    std::filesystem::path dir_;
};

struct ImageEncoding {
    Tensor features;  // (H*W) x d, row-major cells
    int height = 0, width = 0;
};

struct InterleaveEncoding {
    Tensor tokens;                        // L x d in node order
    std::vector<RowSpan> entity_spans;    // token ranges of entity nodes, in order
    std::vector<int> entity_node_index;   // node index of each entity
};

// Deterministic per-cell appearance embedding plus a residual learnable
// adapter. Rows depend only on (shape, color), never on segment ids.
ImageEncoding encode_image(const Scene& scene, const InterfaceConfig& cfg, Bind& p,
                           const EmbeddingStore* store = nullptr);

// Per-token hash embedding with sinusoidal positions and the text adapter.
Tensor encode_text(const TextSeq& text, const InterfaceConfig& cfg, Bind& p,
                   const EmbeddingStore* store = nullptr);

// encode_text with the token positions shifted to a given node slot.
Tensor encode_class_text(const TextSeq& text, int slot, const InterfaceConfig& cfg, Bind& p);

// Node-ordered concatenation: text nodes via the text path, visual references
// as one ROI-pooled token of the source scene. Positions restart per node so
// swapping one node leaves other spans' tokens untouched.
InterleaveEncoding encode_interleave(const InterleaveEntry& entry, const SceneMap& scenes,
                                     const InterfaceConfig& cfg, Bind& p,
                                     const EmbeddingStore* store = nullptr);

// Mean of the feature rows inside the box.
Tensor roi_pool(const Tensor& features, int height, int width, const Bbox& box);

// Fixed sinusoidal position row.
RowMatrix positional_row(Index pos, Index dim);

// Tokens per node slot in interleave position indexing.
inline constexpr Index kNodeStride = 64;

}  // namespace ivl
