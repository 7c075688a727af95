#include "ivl/scene_gen.hpp"

#include "ivl/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace ivl {

namespace {

const std::vector<std::string> kConnectives = {"next to", "beside", "above", "under", "near"};

}  // namespace

GeneratedScene generate_scene(std::uint64_t seed, long scene_id, int height, int width,
                              int n_segments) {
    if (n_segments < 1 || n_segments > height * width) {
        throw std::invalid_argument("generate_scene: cannot pack " +
                                    std::to_string(n_segments) + " segments into " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
    if (n_segments > category_count()) {
        throw std::invalid_argument("generate_scene: not enough distinct appearances for " +
                                    std::to_string(n_segments) + " segments");
    }
    Rng rng(mix_seed(seed, "scene:" + std::to_string(scene_id)));

    // distinct categories via partial shuffle
    std::vector<int> cats(static_cast<std::size_t>(category_count()));
    for (std::size_t i = 0; i < cats.size(); ++i) cats[i] = static_cast<int>(i);
    for (int i = 0; i < n_segments; ++i) {
        const auto j = rng.uniform_int(i, static_cast<std::int64_t>(cats.size()) - 1);
        std::swap(cats[static_cast<std::size_t>(i)], cats[static_cast<std::size_t>(j)]);
    }

    // distinct seed cells
    const int total = height * width;
    std::vector<int> order(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < n_segments; ++i) {
        const auto j = rng.uniform_int(i, total - 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    // region growing keeps every segment connected
    std::vector<int> assign(static_cast<std::size_t>(total), -1);
    std::vector<std::vector<int>> frontier(static_cast<std::size_t>(n_segments));
    for (int s = 0; s < n_segments; ++s) {
        const int cell = order[static_cast<std::size_t>(s)];
        assign[static_cast<std::size_t>(cell)] = s;
        frontier[static_cast<std::size_t>(s)].push_back(cell);
    }
    auto grow_one = [&](int s) -> bool {
        auto& f = frontier[static_cast<std::size_t>(s)];
        while (!f.empty()) {
            const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(f.size()) - 1);
            const int cell = f[static_cast<std::size_t>(pick)];
            const int y = cell / width, x = cell % width;
            std::vector<int> free_neighbors;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
                const int ncell = ny * width + nx;
                if (assign[static_cast<std::size_t>(ncell)] < 0) {
                    free_neighbors.push_back(ncell);
                }
            }
            if (free_neighbors.empty()) {
                f[static_cast<std::size_t>(pick)] = f.back();
                f.pop_back();
                continue;
            }
            const auto ni =
                rng.uniform_int(0, static_cast<std::int64_t>(free_neighbors.size()) - 1);
            const int ncell = free_neighbors[static_cast<std::size_t>(ni)];
            assign[static_cast<std::size_t>(ncell)] = s;
            f.push_back(ncell);
            return true;
        }
        return false;
    };
    int remaining = total - n_segments;
    while (remaining > 0) {
        bool grew = false;
        for (int s = 0; s < n_segments && remaining > 0; ++s) {
            if (grow_one(s)) {
                --remaining;
                grew = true;
            }
        }
        if (!grew) throw std::logic_error("generate_scene: growth stalled");
    }

    GeneratedScene out;
    Scene& scene = out.scene;
    scene.scene_id = scene_id;
    scene.height = height;
    scene.width = width;
    scene.cells.resize(static_cast<std::size_t>(total));
    scene.segments.resize(static_cast<std::size_t>(n_segments));

    const int ns = static_cast<int>(kShapeNames.size());
    for (int s = 0; s < n_segments; ++s) {
        SegmentAnnotation& seg = scene.segments[static_cast<std::size_t>(s)];
        seg.ann_id = scene_id * 100 + s + 1;
        seg.category = cats[static_cast<std::size_t>(s)];
        seg.phrase = "the " + category_phrase(seg.category);
        seg.mask = BoolMat(height, width, false);
    }
    for (int cell = 0; cell < total; ++cell) {
        const int s = assign[static_cast<std::size_t>(cell)];
        const int cat = cats[static_cast<std::size_t>(s)];
        scene.cells[static_cast<std::size_t>(cell)] = Cell{cat % ns, cat / ns, s};
        scene.segments[static_cast<std::size_t>(s)].mask.set(cell / width, cell % width, true);
    }
    for (auto& seg : scene.segments) seg.bbox = tight_bbox(seg.mask);
    scene.validate();

    // template caption mentions every segment, connectives cycle
    std::vector<CaptionPiece> pieces;
    const std::size_t conn0 =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kConnectives.size()) - 1));
    std::string plain;
    for (int s = 0; s < n_segments; ++s) {
        CaptionPiece piece;
        piece.leading_text =
            s == 0 ? "" : " " + kConnectives[(conn0 + static_cast<std::size_t>(s) - 1) %
                                             kConnectives.size()] + " ";
        piece.ann_id = scene.segments[static_cast<std::size_t>(s)].ann_id;
        piece.phrase = scene.segments[static_cast<std::size_t>(s)].phrase;
        plain += piece.leading_text + piece.phrase;
        pieces.push_back(std::move(piece));
    }
    out.template_caption = compose_caption(pieces, "");
    out.plain_caption = plain;
    out.pseudo_description = "a grid scene showing " + std::to_string(n_segments) +
                             " colored shapes";
    return out;
}

}  // namespace ivl
