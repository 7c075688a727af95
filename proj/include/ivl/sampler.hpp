#pragma once

#include "ivl/encoders.hpp"
#include "ivl/task_spec.hpp"

#include <optional>
#include <vector>

namespace ivl {

// Raw encoder outputs a task may sample prompts from.
struct EncodedInputs {
    std::optional<ImageEncoding> image;
    std::optional<Tensor> caption;               // token rows of the full caption
    std::optional<InterleaveEncoding> text;      // text-only entry, for grounding
    std::optional<InterleaveEncoding> interleave;
    std::vector<Tensor> class_tokens;            // per class: token rows of its phrase
    std::vector<Bbox> spatial_boxes;             // one per interaction
};

// Per-record stream cardinalities.
struct SampleContext {
    int n_entities = 0;
    int n_interactions = 0;
    int n_classes = 0;
};

// Per-kind strategies: identity for token streams, stride downsampling for
// image features, ROI pooling for spatial boxes, mean pooling per class.
// Every output row is an input row or a mean of input rows.
PromptSet sample_prompts(const EncodedInputs& inputs, const TaskSpec& task,
                         const InterfaceConfig& cfg, int image_stride = 1);

// Query streams come from the learnable pool; a stream needing more rows than
// the pool holds wraps around (duplication is allowed).
QuerySet sample_queries(const TaskSpec& task, const SampleContext& ctx,
                        const InterfaceConfig& cfg, Bind& p);

// Flat-index stride downsampling, rows {0, s, 2s, ...}.
Tensor downsample_rows(const Tensor& t, int stride);

// Pool backing a query stream; proposal-style streams share "object",
// per-entity slot streams share "slot".
std::string pool_kind_for(const std::string& query_name);

}  // namespace ivl
