#pragma once

#include "ivl/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace ivl {

// Cell-grid boxes: (x0, y0) top-left corner, (w, h) extent, all in cells.
struct Bbox {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    bool operator==(const Bbox&) const = default;
};

struct SegmentAnnotation {
    long ann_id = 0;  // globally unique across a corpus
    BoolMat mask;     // H x W
    int category = 0;
    std::string phrase;
    Bbox bbox;
};

struct Cell {
    int shape = 0;
    int color = 0;
    int segment = 0;  // index into Scene::segments
};

// A synthetic panoptic scene: every cell carries an appearance
// (shape, color) and belongs to exactly one segment.
struct Scene {
    long scene_id = 0;
    int height = 0, width = 0;
    std::vector<Cell> cells;  // row-major
    std::vector<SegmentAnnotation> segments;

    const Cell& at(int y, int x) const { return cells[static_cast<std::size_t>(y * width + x)]; }
    Cell& at(int y, int x) { return cells[static_cast<std::size_t>(y * width + x)]; }
    int pixel_count() const { return height * width; }

    const SegmentAnnotation* find_segment(long ann_id) const;

    // Checks the panoptic partition property and bbox tightness.
    void validate() const;
};

using SceneMap = std::map<long, Scene>;

// Appearance palette. Categories enumerate (color, shape) pairs.
extern const std::vector<std::string> kShapeNames;
extern const std::vector<std::string> kColorNames;
int category_count();
int category_of(int shape, int color);
std::string category_phrase(int category);  // e.g. "red square"

Bbox tight_bbox(const BoolMat& mask);

}  // namespace ivl
