#include "ivl/scene.hpp"

#include <stdexcept>

namespace ivl {

const std::vector<std::string> kShapeNames = {"circle", "square", "triangle"};
const std::vector<std::string> kColorNames = {"red", "green", "blue", "yellow"};

int category_count() {
    return static_cast<int>(kShapeNames.size() * kColorNames.size());
}

int category_of(int shape, int color) {
    return color * static_cast<int>(kShapeNames.size()) + shape;
}

std::string category_phrase(int category) {
    const int ns = static_cast<int>(kShapeNames.size());
    const int color = category / ns;
    const int shape = category % ns;
    return kColorNames[static_cast<std::size_t>(color)] + " " +
           kShapeNames[static_cast<std::size_t>(shape)];
}

Bbox tight_bbox(const BoolMat& mask) {
    int x0 = static_cast<int>(mask.cols), y0 = static_cast<int>(mask.rows), x1 = -1, y1 = -1;
    for (Index y = 0; y < mask.rows; ++y) {
        for (Index x = 0; x < mask.cols; ++x) {
            if (!mask.at(y, x)) continue;
            x0 = std::min(x0, static_cast<int>(x));
            y0 = std::min(y0, static_cast<int>(y));
            x1 = std::max(x1, static_cast<int>(x));
            y1 = std::max(y1, static_cast<int>(y));
        }
    }
    if (x1 < 0) throw std::invalid_argument("tight_bbox: empty mask");
    return Bbox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

const SegmentAnnotation* Scene::find_segment(long ann_id) const {
    for (const auto& s : segments) {
        if (s.ann_id == ann_id) return &s;
    }
    return nullptr;
}

void Scene::validate() const {
    if (cells.size() != static_cast<std::size_t>(height * width)) {
        throw std::invalid_argument("scene: cell count does not match grid");
    }
    std::vector<int> covered(cells.size(), 0);
    for (std::size_t si = 0; si < segments.size(); ++si) {
        const auto& seg = segments[si];
        if (seg.mask.rows != height || seg.mask.cols != width) {
            throw std::invalid_argument("scene: segment mask grid mismatch");
        }
        if (seg.mask.count() == 0) {
            throw std::invalid_argument("scene: empty segment mask, ann " +
                                        std::to_string(seg.ann_id));
        }
        if (!(tight_bbox(seg.mask) == seg.bbox)) {
            throw std::invalid_argument("scene: bbox is not tight, ann " +
                                        std::to_string(seg.ann_id));
        }
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                if (seg.mask.at(y, x)) {
                    covered[static_cast<std::size_t>(y * width + x)]++;
                    if (at(y, x).segment != static_cast<int>(si)) {
                        throw std::invalid_argument("scene: cell segment id disagrees with mask");
                    }
                }
            }
        }
    }
    for (int c : covered) {
        if (c != 1) throw std::invalid_argument("scene: masks do not partition the grid");
    }
}

}  // namespace ivl
