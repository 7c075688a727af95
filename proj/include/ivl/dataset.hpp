#pragma once

#include "ivl/caption.hpp"
#include "ivl/interleave.hpp"
#include "ivl/scene.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace ivl {

struct RecordEntity {
    long ann_id = 0;
    RowSpan span;  // character span inside the caption
    std::string phrase;
    Bbox bbox;
    BoolMat mask;
    int category = 0;
    std::optional<VisualRef> visual_ref;

    bool operator==(const RecordEntity&) const = default;
};

struct BenchRecord {
    long scene_id = 0;
    int height = 0, width = 0;
    InterleavedCaption caption;
    std::vector<RecordEntity> entities;

    bool operator==(const BenchRecord&) const = default;

    // The caption as an interleaved entry: entities become text spans or
    // visual references, the text between them becomes connections. With
    // with_visual_refs off every entity stays a text span.
    InterleaveEntry to_entry(bool with_visual_refs = true) const;
};

// Row-major run-length encoding, alternating run lengths starting with the
// zero runs; runs sum to rows * cols.
std::vector<int> mask_to_rle(const BoolMat& mask);
BoolMat rle_to_mask(const std::vector<int>& runs, int height, int width);

// One JSON object per line.
void write_dataset(const std::vector<BenchRecord>& records, const std::filesystem::path& file);
std::vector<BenchRecord> read_dataset(const std::filesystem::path& file);

void write_scenes(const SceneMap& scenes, const std::filesystem::path& file);
SceneMap read_scenes(const std::filesystem::path& file);

struct DatasetStats {
    long images = 0;
    long captions = 0;
    long entities = 0;
};
DatasetStats dataset_stats(const std::vector<BenchRecord>& records);

}  // namespace ivl
