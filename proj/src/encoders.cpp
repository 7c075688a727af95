#include "ivl/encoders.hpp"

#include "ivl/binio.hpp"
#include "ivl/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ivl {

namespace {

using binio::read_f64;
using binio::read_u32;
using binio::read_u64;
using binio::write_f64;
using binio::write_u32;
using binio::write_u64;

constexpr char kEmbMagic[8] = {'I', 'V', 'L', 'E', 'M', 'B', '1', '\n'};

RowMatrix hash_row(std::uint64_t key_seed, Index dim) {
    Rng rng(key_seed);
    RowMatrix row(1, dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Index i = 0; i < dim; ++i) row(0, i) = rng.normal() * s;
    return row;
}

RowMatrix appearance_row(int shape, int color, Index dim) {
    return hash_row(mix_seed(0x1a6eull, "appearance:" + std::to_string(shape) + ":" +
                                            std::to_string(color)),
                    dim);
}

RowMatrix token_row(int token, Index dim) {
    return hash_row(mix_seed(0x70c3ull, "token:" + std::to_string(token)), dim);
}

// base + base*W + b, the residual adapter shared by both modalities
Tensor apply_adapter(const Tensor& base, const Tensor& w, const Tensor& b) {
    return add(base, add_row_vector(matmul(base, w), b));
}

Tensor text_rows_for_node(const std::vector<int>& tokens, Index node_index,
                          const InterfaceConfig& cfg, Bind& p) {
    RowMatrix base(static_cast<Index>(tokens.size()), cfg.dim);
    std::map<int, RowMatrix> memo;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = memo.find(tokens[i]);
        if (it == memo.end()) {
            it = memo.emplace(tokens[i], token_row(tokens[i], cfg.dim)).first;
        }
        const Index offset = std::min<Index>(static_cast<Index>(i), kNodeStride - 1);
        base.row(static_cast<Index>(i)) =
            it->second + positional_row(node_index * kNodeStride + offset, cfg.dim);
    }
    return apply_adapter(Tensor::from_matrix(std::move(base)), p("enc.text.adapter.w"),
                         p("enc.text.adapter.b"));
}

}  // namespace

RowMatrix positional_row(Index pos, Index dim) {
    RowMatrix row(1, dim);
    for (Index k = 0; k < dim; ++k) {
        const double i = static_cast<double>(k / 2);
        const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
        const double angle = static_cast<double>(pos) * freq;
        row(0, k) = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return row;
}

std::string EmbeddingStore::scene_key(long scene_id) {
    return "scene_" + std::to_string(scene_id);
}

std::string EmbeddingStore::text_key(const std::string& source_text) {
    std::ostringstream os;
    os << "text_" << std::hex << fnv1a(source_text);
    return os.str();
}

void EmbeddingStore::save(const std::string& key, const Tensor& t) const {
    std::filesystem::create_directories(dir_);
    std::ofstream os(dir_ / (key + ".emb"), std::ios::binary);
    if (!os) throw std::runtime_error("embedding store: cannot write key " + key);
    os.write(kEmbMagic, 8);
    write_u32(os, 1);  // dtype: float64
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (Index e : t.shape) write_u64(os, static_cast<std::uint64_t>(e));
    for (Index r = 0; r < t.rows(); ++r)
        for (Index c = 0; c < t.cols(); ++c) write_f64(os, t.m(r, c));
}

std::optional<Tensor> EmbeddingStore::load(const std::string& key) const {
    std::ifstream is(dir_ / (key + ".emb"), std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kEmbMagic, 8) != 0) {
        throw std::runtime_error("embedding store: bad magic in key " + key);
    }
    if (read_u32(is) != 1) throw std::runtime_error("embedding store: unsupported dtype");
    const std::uint32_t rank = read_u32(is);
    if (rank > 2) throw std::runtime_error("embedding store: unsupported rank");
    std::vector<Index> shape;
    Index total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape.push_back(static_cast<Index>(read_u64(is)));
        total *= shape.back();
    }
    const Index rows = rank == 2 ? shape[0] : 1;
    const Index cols = rank == 2 ? shape[1] : total;
    RowMatrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = read_f64(is);
    if (!is) throw std::runtime_error("embedding store: truncated payload in key " + key);
    Tensor t;
    t.shape = std::move(shape);
    t.m = std::move(m);
    return t;
}

ImageEncoding encode_image(const Scene& scene, const InterfaceConfig& cfg, Bind& p,
                           const EmbeddingStore* store) {
    Tensor base;
    if (store != nullptr) {
        if (auto loaded = store->load(EmbeddingStore::scene_key(scene.scene_id))) {
            if (loaded->rows() != scene.pixel_count() || loaded->cols() != cfg.dim) {
                throw ShapeError("stored scene embedding " + shape_str(*loaded) +
                                 " does not match grid " + std::to_string(scene.pixel_count()) +
                                 "x" + std::to_string(cfg.dim));
            }
            base = std::move(*loaded);
        }
    }
    if (base.size() == 0) {
        RowMatrix m(scene.pixel_count(), cfg.dim);
        std::map<std::pair<int, int>, RowMatrix> memo;
        for (int i = 0; i < scene.pixel_count(); ++i) {
            const Cell& cell = scene.cells[static_cast<std::size_t>(i)];
            auto key = std::make_pair(cell.shape, cell.color);
            auto it = memo.find(key);
            if (it == memo.end()) {
                it = memo.emplace(key, appearance_row(cell.shape, cell.color, cfg.dim)).first;
            }
            m.row(i) = it->second;
        }
        base = Tensor::from_matrix(std::move(m));
    }
    ImageEncoding out;
    out.features = apply_adapter(base, p("enc.image.adapter.w"), p("enc.image.adapter.b"));
    out.height = scene.height;
    out.width = scene.width;
    return out;
}

Tensor encode_text(const TextSeq& text, const InterfaceConfig& cfg, Bind& p,
                   const EmbeddingStore* store) {
    if (store != nullptr) {
        if (auto loaded = store->load(EmbeddingStore::text_key(text.source_text))) {
            if (loaded->cols() != cfg.dim) {
                throw ShapeError("stored text embedding width " +
                                 std::to_string(loaded->cols()) + " != " +
                                 std::to_string(cfg.dim));
            }
            return apply_adapter(*loaded, p("enc.text.adapter.w"), p("enc.text.adapter.b"));
        }
    }
    if (text.tokens.empty()) {
        throw std::invalid_argument("encode_text: empty token list");
    }
    return text_rows_for_node(text.tokens, 0, cfg, p);
}

Tensor encode_class_text(const TextSeq& text, int slot, const InterfaceConfig& cfg, Bind& p) {
    if (text.tokens.empty()) {
        throw std::invalid_argument("encode_class_text: empty token list");
    }
    return text_rows_for_node(text.tokens, slot, cfg, p);
}

InterleaveEncoding encode_interleave(const InterleaveEntry& entry, const SceneMap& scenes,
                                     const InterfaceConfig& cfg, Bind& p,
                                     const EmbeddingStore* store) {
    if (entry.nodes.empty()) {
        throw std::invalid_argument("encode_interleave: empty entry");
    }
    InterleaveEncoding out;
    std::vector<Tensor> parts;
    Index offset = 0;
    for (std::size_t k = 0; k < entry.nodes.size(); ++k) {
        const EntryNode& node = entry.nodes[k];
        const Index node_index = static_cast<Index>(k);
        if (node.kind == EntryNode::Kind::VisualRef) {
            auto sit = scenes.find(node.ref.scene_id);
            if (sit == scenes.end()) {
                throw std::invalid_argument("encode_interleave: unknown scene " +
                                            std::to_string(node.ref.scene_id));
            }
            const SegmentAnnotation* seg = sit->second.find_segment(node.ref.ann_id);
            if (seg == nullptr) {
                throw std::invalid_argument("encode_interleave: dangling visual ref, ann " +
                                            std::to_string(node.ref.ann_id));
            }
            ImageEncoding img = encode_image(sit->second, cfg, p, store);
            Tensor token = roi_pool(img.features, img.height, img.width, seg->bbox);
            Tensor pe = Tensor::from_matrix(positional_row(node_index * kNodeStride, cfg.dim));
            token = add(token, pe);
            out.entity_spans.push_back({offset, offset + 1});
            out.entity_node_index.push_back(static_cast<int>(k));
            parts.push_back(std::move(token));
            offset += 1;
        } else {
            TextSeq ts = tokenize(node.text);
            if (ts.tokens.empty()) {
                if (node.kind == EntryNode::Kind::TextSpan) {
                    throw std::invalid_argument("encode_interleave: empty entity phrase");
                }
                continue;  // empty connective contributes nothing
            }
            Tensor rows = text_rows_for_node(ts.tokens, node_index, cfg, p);
            const Index n = rows.rows();
            if (node.kind == EntryNode::Kind::TextSpan) {
                out.entity_spans.push_back({offset, offset + n});
                out.entity_node_index.push_back(static_cast<int>(k));
            }
            parts.push_back(std::move(rows));
            offset += n;
        }
    }
    out.tokens = parts.size() == 1 ? parts[0] : concat_rows(parts);
    return out;
}

Tensor roi_pool(const Tensor& features, int height, int width, const Bbox& box) {
    if (box.w <= 0 || box.h <= 0) {
        throw std::invalid_argument("roi_pool: empty box");
    }
    if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.w > width || box.y0 + box.h > height) {
        throw std::invalid_argument("roi_pool: box outside grid");
    }
    if (features.rows() != static_cast<Index>(height) * width) {
        throw ShapeError("roi_pool: features " + shape_str(features) + " vs grid " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    std::vector<Index> idx;
    for (int y = box.y0; y < box.y0 + box.h; ++y)
        for (int x = box.x0; x < box.x0 + box.w; ++x)
            idx.push_back(static_cast<Index>(y) * width + x);
    return mean_rows(gather_rows(features, idx));
}

}  // namespace ivl
