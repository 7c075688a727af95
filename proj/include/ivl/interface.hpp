#pragma once

#include "ivl/attention_mask.hpp"
#include "ivl/params.hpp"
#include "ivl/streams.hpp"
#include "ivl/task_spec.hpp"

#include <optional>
#include <string>

namespace ivl {

// One masked multi-head attention block with pre-normalization and a
// residual connection. Rows whose mask row is all false receive exactly no
// update. Only query streams can change: prompt rows of the content mask are
// all false by construction.
QuerySet content_attention(const PromptSet& prompts, const QuerySet& queries,
                           const AttentionMask& mask, const InterfaceConfig& cfg, Bind& p,
                           const std::string& param_prefix);

std::pair<PromptSet, QuerySet> condition_attention(const PromptSet& prompts,
                                                   const QuerySet& queries,
                                                   const AttentionMask& mask,
                                                   const InterfaceConfig& cfg, Bind& p,
                                                   const std::string& param_prefix);

// L layers of content attention followed by condition attention.
QuerySet interface_forward(const PromptSet& prompts, const QuerySet& queries,
                           const TaskSpec& task, const InterfaceConfig& cfg, Bind& p);

struct ProjectedQueries {
    Tensor semantic;  // all query streams, concatenated
    StreamLayout semantic_layout;
    std::optional<Tensor> pixel;  // only image-reading query streams
    StreamLayout pixel_layout;

    Tensor semantic_of(const std::string& stream) const;
    Tensor pixel_of(const std::string& stream) const;
};

ProjectedQueries project(const QuerySet& queries, const TaskSpec& task, Bind& p);

// Mask logits against the initial image embedding: Q_p x M_I^T.
Tensor head_mask(const Tensor& pixel_queries, const Tensor& image_embeddings);

// Temperature-scaled cosine similarities (raw inner products when
// cfg.cosine_score is off).
Tensor head_score(const Tensor& a, const Tensor& b, const InterfaceConfig& cfg, Bind& p);

}  // namespace ivl
