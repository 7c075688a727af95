#include "ivl/annotate.hpp"

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include <cstdlib>
#include <set>
#include <sstream>

namespace ivl {

using nlohmann::json;

std::string annotation_prompt(const Scene& scene, const std::string& gt_caption,
                              const std::string& pseudo_description) {
    json boxes = json::array();
    json segment_info = json::array();
    json segment_proposal = json::array();
    for (const SegmentAnnotation& s : scene.segments) {
        boxes.push_back({s.bbox.x0, s.bbox.y0, s.bbox.w, s.bbox.h});
        segment_info.push_back({{"index", s.ann_id},
                                {"bbox", {s.bbox.x0, s.bbox.y0, s.bbox.w, s.bbox.h}},
                                {"category", category_phrase(s.category)},
                                {"description", s.phrase}});
        segment_proposal.push_back(s.phrase);
    }
    std::ostringstream os;
    os << "Generate image captions with grounded entities and attributes with the following "
          "information:\n"
       << "ground truth image captions: <" << gt_caption << ">,\n"
       << "pseudo image description: <" << pseudo_description << ">,\n"
       << "ground truth bounding boxes ([x0,y0,w,h]: (x0,y0) is the top-left corner; (w,h) is "
          "box size): <"
       << boxes.dump() << ">,\n"
       << "segment_info: <" << segment_info.dump() << ">, and segment_proposal: <"
       << segment_proposal.dump() << ">.\n"
       << "An example output format would be: \"[index]<A woman> sitting next to [index]<a "
          "handsome man>, with their hands holding together under [index]<the blue sky>.\", "
          "where [index] and <xxx> are associated with the ground truth bounding boxes.";
    return os.str();
}

std::string MockAnnotationClient::complete(const std::string& prompt) {
    const std::string tag = "segment_info: <";
    const std::size_t start = prompt.find(tag);
    if (start == std::string::npos) {
        throw ClientError("mock client: prompt has no segment_info block");
    }
    const std::size_t body = start + tag.size();
    const std::size_t end = prompt.find(">,", body);
    if (end == std::string::npos) {
        throw ClientError("mock client: unterminated segment_info block");
    }
    json info;
    try {
        info = json::parse(prompt.substr(body, end - body));
    } catch (const json::exception& e) {
        throw ClientError(std::string("mock client: bad segment_info json: ") + e.what());
    }

    static const char* kConn[] = {"next to", "beside", "above", "under"};
    std::vector<CaptionPiece> pieces;
    std::size_t i = 0;
    for (const json& seg : info) {
        CaptionPiece p;
        p.leading_text = i == 0 ? "" : " " + std::string(kConn[(i - 1) % 4]) + " ";
        p.ann_id = seg.at("index").get<long>();
        p.phrase = seg.at("description").get<std::string>();
        pieces.push_back(std::move(p));
        ++i;
    }
    return compose_caption(pieces, ".");
}

std::string HttpAnnotationClient::complete(const std::string& prompt) {
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_sec, 0);
    client.set_read_timeout(cfg_.timeout_sec, 0);

    httplib::Headers headers;
    if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    const json body{{"model", cfg_.model},
                    {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) {
        throw ClientError("http client: no response from " + cfg_.base_url + " (" +
                          httplib::to_string(res.error()) + ")");
    }
    if (res->status != 200) {
        throw ClientError("http client: status " + std::to_string(res->status) + ": " +
                          res->body);
    }
    try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ClientError(std::string("http client: malformed reply: ") + e.what());
    }
}

InterleavedCaption annotate(const Scene& scene, const std::string& gt_caption,
                            const std::string& pseudo_description, AnnotationClient& client,
                            int max_retries) {
    if (scene.segments.empty()) {
        throw AnnotationError("annotate: scene " + std::to_string(scene.scene_id) +
                              " has no segments");
    }
    const std::string prompt = annotation_prompt(scene, gt_caption, pseudo_description);

    std::string reply;
    int attempt = 0;
    for (;;) {
        try {
            reply = client.complete(prompt);
            break;
        } catch (const ClientError&) {
            if (attempt++ >= max_retries) throw;
        }
    }

    InterleavedCaption caption;
    try {
        caption = parse_caption(reply);
    } catch (const CaptionParseError& e) {
        throw AnnotationError(std::string("annotate: reply does not parse: ") + e.what());
    }
    if (caption.entities.empty()) {
        throw AnnotationError("annotate: reply mentions no entities");
    }
    std::set<long> seen;
    for (const CaptionEntity& e : caption.entities) {
        if (scene.find_segment(e.ann_id) == nullptr) {
            throw AnnotationError("annotate: reply references unknown ann_id " +
                                  std::to_string(e.ann_id));
        }
        if (!seen.insert(e.ann_id).second) {
            throw AnnotationError("annotate: ann_id " + std::to_string(e.ann_id) +
                                  " referenced twice");
        }
    }
    return caption;
}

}  // namespace ivl
