#include "ivl/similarity.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace ivl {

using nlohmann::json;

Index SimilarityIndex::row_of(long scene_id, long ann_id) const {
    for (std::size_t i = 0; i < owner.size(); ++i) {
        if (owner[i].first == scene_id && owner[i].second == ann_id) {
            return static_cast<Index>(i);
        }
    }
    throw std::out_of_range("similarity index: no row for scene " + std::to_string(scene_id) +
                            " ann " + std::to_string(ann_id));
}

SimilarityIndex build_similarity_index(const SceneMap& scenes, const InterfaceConfig& cfg,
                                       Bind& p) {
    SimilarityIndex out;
    std::vector<Tensor> rows;
    for (const auto& [id, scene] : scenes) {
        ImageEncoding enc = encode_image(scene, cfg, p);
        for (const SegmentAnnotation& seg : scene.segments) {
            rows.push_back(roi_pool(enc.features, enc.height, enc.width, seg.bbox));
            out.owner.emplace_back(id, seg.ann_id);
        }
    }
    if (rows.size() < 2) {
        throw std::invalid_argument("similarity index: needs at least 2 segments");
    }
    out.rows = l2_normalize_rows(concat_rows(rows));
    return out;
}

Index match_segment(const SimilarityIndex& index, Index i) {
    if (index.rows.rows() < 2) {
        throw std::invalid_argument("match_segment: index has fewer than 2 rows");
    }
    if (i < 0 || i >= index.rows.rows()) {
        throw std::out_of_range("match_segment: row " + std::to_string(i));
    }
    const long own_scene = index.owner[static_cast<std::size_t>(i)].first;
    Index best = -1;
    double best_cos = -2.0;
    for (Index j = 0; j < index.rows.rows(); ++j) {
        if (j == i) continue;
        if (index.owner[static_cast<std::size_t>(j)].first == own_scene) continue;
        const double cos = index.rows.m.row(i).dot(index.rows.m.row(j));
        if (cos > best_cos) {
            best_cos = cos;
            best = j;
        }
    }
    if (best < 0) {
        throw std::invalid_argument("match_segment: no candidate outside scene " +
                                    std::to_string(own_scene));
    }
    return best;
}

BenchRecord replace_entities(const BenchRecord& record, const SimilarityIndex& index,
                             double p_replace, Rng& rng) {
    if (p_replace < 0.0 || p_replace > 1.0) {
        throw std::invalid_argument("replace_entities: p_replace outside [0,1]");
    }
    BenchRecord out = record;
    for (RecordEntity& e : out.entities) {
        if (!rng.bernoulli(p_replace)) continue;
        const Index row = index.row_of(record.scene_id, e.ann_id);
        const Index match = match_segment(index, row);
        const auto& [scene_id, ann_id] = index.owner[static_cast<std::size_t>(match)];
        e.visual_ref = VisualRef{scene_id, ann_id};
    }
    return out;
}

void write_similarity(const SimilarityIndex& index, const std::filesystem::path& file) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write similarity file " + file.string());
    for (Index r = 0; r < index.rows.rows(); ++r) {
        json emb = json::array();
        for (Index c = 0; c < index.rows.cols(); ++c) emb.push_back(index.rows.m(r, c));
        os << json{{"scene_id", index.owner[static_cast<std::size_t>(r)].first},
                   {"ann_id", index.owner[static_cast<std::size_t>(r)].second},
                   {"embedding", std::move(emb)}}
                  .dump()
           << "\n";
    }
}

SimilarityIndex read_similarity(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read similarity file " + file.string());
    SimilarityIndex out;
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            out.owner.emplace_back(j.at("scene_id").get<long>(), j.at("ann_id").get<long>());
            rows.push_back(j.at("embedding").get<std::vector<double>>());
        } catch (const std::exception& e) {
            throw std::runtime_error("similarity line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    if (rows.empty()) throw std::runtime_error("similarity file is empty");
    RowMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        }
    }
    out.rows = Tensor::from_matrix(std::move(m));
    return out;
}

}  // namespace ivl
