#pragma once

#include "ivl/annotate.hpp"
#include "ivl/scene_gen.hpp"
#include "ivl/similarity.hpp"
#include "ivl/trainer.hpp"

#include <cstdint>

namespace ivl {

struct GenConfig {
    std::uint64_t seed = 1;
    long n_scenes = 10;
    long first_scene_id = 0;
    int height = 8, width = 8;
    int min_segments = 3, max_segments = 5;
    double p_replace = 0.5;
    int client_retries = 2;
    int parallelism = 4;  // concurrent annotation requests
};

struct GeneratedCorpus {
    Corpus corpus;
    SimilarityIndex index;
};

// Scene generation, client annotation, similarity index, and cross-scene
// visual replacement in one pass.
GeneratedCorpus generate_corpus(const GenConfig& gen, AnnotationClient& client,
                                const InterfaceConfig& cfg, const ParamStore& params);

}  // namespace ivl
