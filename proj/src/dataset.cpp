#include "ivl/dataset.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace ivl {

using nlohmann::json;

InterleaveEntry BenchRecord::to_entry(bool with_visual_refs) const {
    InterleaveEntry entry;
    Index cursor = 0;
    for (const RecordEntity& e : entities) {
        const std::string between = caption.raw.substr(
            static_cast<std::size_t>(cursor), static_cast<std::size_t>(e.span.begin - cursor));
        if (!between.empty()) {
            entry.nodes.push_back({EntryNode::Kind::Connection, between, {}});
        }
        if (e.visual_ref && with_visual_refs) {
            entry.nodes.push_back({EntryNode::Kind::VisualRef, "", *e.visual_ref});
        } else {
            entry.nodes.push_back({EntryNode::Kind::TextSpan, e.phrase, {}});
        }
        cursor = e.span.end;
    }
    const std::string tail = caption.raw.substr(static_cast<std::size_t>(cursor));
    if (!tail.empty()) {
        entry.nodes.push_back({EntryNode::Kind::Connection, tail, {}});
    }
    return entry;
}

std::vector<int> mask_to_rle(const BoolMat& mask) {
    std::vector<int> runs;
    bool value = false;  // runs start with zeros
    int run = 0;
    for (Index r = 0; r < mask.rows; ++r) {
        for (Index c = 0; c < mask.cols; ++c) {
            if (mask.at(r, c) == value) {
                ++run;
            } else {
                runs.push_back(run);
                value = !value;
                run = 1;
            }
        }
    }
    runs.push_back(run);
    return runs;
}

BoolMat rle_to_mask(const std::vector<int>& runs, int height, int width) {
    BoolMat mask(height, width, false);
    long pos = 0;
    bool value = false;
    for (int run : runs) {
        if (run < 0) throw std::invalid_argument("rle: negative run");
        for (int k = 0; k < run; ++k) {
            if (pos >= static_cast<long>(height) * width) {
                throw std::invalid_argument("rle: runs exceed grid");
            }
            if (value) mask.set(pos / width, pos % width, true);
            ++pos;
        }
        value = !value;
    }
    if (pos != static_cast<long>(height) * width) {
        throw std::invalid_argument("rle: runs cover " + std::to_string(pos) + " of " +
                                    std::to_string(static_cast<long>(height) * width) +
                                    " cells");
    }
    return mask;
}

namespace {

json record_to_json(const BenchRecord& r) {
    json entities = json::array();
    for (const RecordEntity& e : r.entities) {
        json je{{"ann_id", e.ann_id},
                {"span", {e.span.begin, e.span.end}},
                {"phrase", e.phrase},
                {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.w, e.bbox.h}},
                {"mask_rle", mask_to_rle(e.mask)},
                {"category", e.category}};
        if (e.visual_ref) {
            je["visual_ref"] = {{"scene_id", e.visual_ref->scene_id},
                                {"ann_id", e.visual_ref->ann_id}};
        } else {
            je["visual_ref"] = nullptr;
        }
        entities.push_back(std::move(je));
    }
    return json{{"scene_id", r.scene_id},
                {"grid", {r.height, r.width}},
                {"caption_raw", r.caption.raw},
                {"entities", std::move(entities)}};
}

BenchRecord record_from_json(const json& j) {
    BenchRecord r;
    r.scene_id = j.at("scene_id").get<long>();
    r.height = j.at("grid").at(0).get<int>();
    r.width = j.at("grid").at(1).get<int>();
    r.caption = parse_caption(j.at("caption_raw").get<std::string>());
    for (const json& je : j.at("entities")) {
        RecordEntity e;
        e.ann_id = je.at("ann_id").get<long>();
        e.span = RowSpan{je.at("span").at(0).get<Index>(), je.at("span").at(1).get<Index>()};
        e.phrase = je.at("phrase").get<std::string>();
        e.bbox = Bbox{je.at("bbox").at(0).get<int>(), je.at("bbox").at(1).get<int>(),
                      je.at("bbox").at(2).get<int>(), je.at("bbox").at(3).get<int>()};
        e.mask = rle_to_mask(je.at("mask_rle").get<std::vector<int>>(), r.height, r.width);
        e.category = je.at("category").get<int>();
        if (!je.at("visual_ref").is_null()) {
            e.visual_ref = VisualRef{je.at("visual_ref").at("scene_id").get<long>(),
                                     je.at("visual_ref").at("ann_id").get<long>()};
        }
        r.entities.push_back(std::move(e));
    }
    return r;
}

}  // namespace

void write_dataset(const std::vector<BenchRecord>& records,
                   const std::filesystem::path& file) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write dataset file " + file.string());
    for (const BenchRecord& r : records) os << record_to_json(r).dump() << "\n";
}

std::vector<BenchRecord> read_dataset(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read dataset file " + file.string());
    std::vector<BenchRecord> out;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return out;
}

void write_scenes(const SceneMap& scenes, const std::filesystem::path& file) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write scenes file " + file.string());
    for (const auto& [id, scene] : scenes) {
        json cells = json::array();
        for (const Cell& c : scene.cells) cells.push_back({c.shape, c.color, c.segment});
        json segments = json::array();
        for (const SegmentAnnotation& s : scene.segments) {
            segments.push_back({{"ann_id", s.ann_id},
                                {"category", s.category},
                                {"phrase", s.phrase},
                                {"bbox", {s.bbox.x0, s.bbox.y0, s.bbox.w, s.bbox.h}},
                                {"mask_rle", mask_to_rle(s.mask)}});
        }
        os << json{{"scene_id", id},
                   {"grid", {scene.height, scene.width}},
                   {"cells", std::move(cells)},
                   {"segments", std::move(segments)}}
                  .dump()
           << "\n";
    }
}

SceneMap read_scenes(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read scenes file " + file.string());
    SceneMap out;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            Scene s;
            s.scene_id = j.at("scene_id").get<long>();
            s.height = j.at("grid").at(0).get<int>();
            s.width = j.at("grid").at(1).get<int>();
            for (const json& jc : j.at("cells")) {
                s.cells.push_back(Cell{jc.at(0).get<int>(), jc.at(1).get<int>(),
                                       jc.at(2).get<int>()});
            }
            for (const json& js : j.at("segments")) {
                SegmentAnnotation seg;
                seg.ann_id = js.at("ann_id").get<long>();
                seg.category = js.at("category").get<int>();
                seg.phrase = js.at("phrase").get<std::string>();
                seg.bbox = Bbox{js.at("bbox").at(0).get<int>(), js.at("bbox").at(1).get<int>(),
                                js.at("bbox").at(2).get<int>(), js.at("bbox").at(3).get<int>()};
                seg.mask = rle_to_mask(js.at("mask_rle").get<std::vector<int>>(), s.height,
                                       s.width);
                s.segments.push_back(std::move(seg));
            }
            s.validate();
            out.emplace(s.scene_id, std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error("scenes line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<BenchRecord>& records) {
    DatasetStats st;
    std::vector<long> seen;
    for (const BenchRecord& r : records) {
        st.captions += 1;
        st.entities += static_cast<long>(r.entities.size());
        if (std::find(seen.begin(), seen.end(), r.scene_id) == seen.end()) {
            seen.push_back(r.scene_id);
        }
    }
    st.images = static_cast<long>(seen.size());
    return st;
}

}  // namespace ivl
