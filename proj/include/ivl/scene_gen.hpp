#pragma once

#include "ivl/caption.hpp"
#include "ivl/scene.hpp"

#include <cstdint>
#include <string>

namespace ivl {

struct GeneratedScene {
    Scene scene;
    std::string template_caption;  // "[ann]<the red square> next to ..."
    std::string plain_caption;     // markup stripped
    std::string pseudo_description;
};

// Deterministic scene: n connected segments partitioning the grid, each with
// a distinct (shape, color) appearance, plus a grammatical template caption
// mentioning every segment in order.
GeneratedScene generate_scene(std::uint64_t seed, long scene_id, int height, int width,
                              int n_segments);

}  // namespace ivl
