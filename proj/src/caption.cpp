#include "ivl/caption.hpp"

namespace ivl {

InterleavedCaption parse_caption(const std::string& raw) {
    InterleavedCaption out;
    out.raw = raw;
    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] != '[') {
            ++i;
            continue;
        }
        const std::size_t start = i;
        ++i;  // past '['
        std::size_t digits = 0;
        long ann_id = 0;
        while (i < raw.size() && raw[i] >= '0' && raw[i] <= '9') {
            if (digits >= 18) throw CaptionParseError(i, "index too long");
            ann_id = ann_id * 10 + (raw[i] - '0');
            ++digits;
            ++i;
        }
        if (digits == 0) {
            throw CaptionParseError(i, "expected digits after '['");
        }
        if (i >= raw.size() || raw[i] != ']') {
            throw CaptionParseError(i, "unclosed '[', expected ']'");
        }
        ++i;  // past ']'
        if (i >= raw.size() || raw[i] != '<') {
            throw CaptionParseError(i, "expected '<' after ']'");
        }
        ++i;  // past '<'
        const std::size_t phrase_start = i;
        while (i < raw.size() && raw[i] != '>') {
            if (raw[i] == '[') throw CaptionParseError(i, "'[' inside phrase");
            ++i;
        }
        if (i >= raw.size()) {
            throw CaptionParseError(i, "unclosed '<', expected '>'");
        }
        if (i == phrase_start) {
            throw CaptionParseError(i, "empty phrase");
        }
        const std::string phrase = raw.substr(phrase_start, i - phrase_start);
        ++i;  // past '>'
        out.entities.push_back({ann_id,
                                RowSpan{static_cast<Index>(start), static_cast<Index>(i)},
                                phrase});
    }
    return out;
}

std::string serialize_caption(const InterleavedCaption& caption) {
    std::string out;
    Index cursor = 0;
    for (const CaptionEntity& e : caption.entities) {
        if (e.phrase.empty()) {
            throw std::invalid_argument("serialize_caption: empty phrase");
        }
        if (e.phrase.find('>') != std::string::npos ||
            e.phrase.find('[') != std::string::npos) {
            throw std::invalid_argument("serialize_caption: phrase contains '>' or '[': " +
                                        e.phrase);
        }
        if (e.span.begin < cursor || e.span.end > static_cast<Index>(caption.raw.size())) {
            throw std::invalid_argument("serialize_caption: spans out of order");
        }
        out += caption.raw.substr(static_cast<std::size_t>(cursor),
                                  static_cast<std::size_t>(e.span.begin - cursor));
        out += "[" + std::to_string(e.ann_id) + "]<" + e.phrase + ">";
        cursor = e.span.end;
    }
    out += caption.raw.substr(static_cast<std::size_t>(cursor));
    return out;
}

std::string plain_caption(const InterleavedCaption& caption) {
    std::string out;
    Index cursor = 0;
    for (const CaptionEntity& e : caption.entities) {
        out += caption.raw.substr(static_cast<std::size_t>(cursor),
                                  static_cast<std::size_t>(e.span.begin - cursor));
        out += e.phrase;
        cursor = e.span.end;
    }
    out += caption.raw.substr(static_cast<std::size_t>(cursor));
    return out;
}

InterleaveEntry parse_query(const std::string& text) {
    InterleaveEntry entry;
    std::string connective;
    std::size_t i = 0;
    auto flush = [&] {
        if (!connective.empty()) {
            entry.nodes.push_back({EntryNode::Kind::Connection, connective, {}});
            connective.clear();
        }
    };
    auto parse_long = [&](const char* what) {
        std::size_t digits = 0;
        long v = 0;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
            if (digits >= 18) throw CaptionParseError(i, "number too long");
            v = v * 10 + (text[i] - '0');
            ++digits;
            ++i;
        }
        if (digits == 0) {
            throw CaptionParseError(i, std::string("expected digits for ") + what);
        }
        return v;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (c == '<') {
            flush();
            ++i;
            const std::size_t start = i;
            while (i < text.size() && text[i] != '>') ++i;
            if (i >= text.size()) throw CaptionParseError(i, "unclosed '<'");
            if (i == start) throw CaptionParseError(i, "empty phrase");
            entry.nodes.push_back(
                {EntryNode::Kind::TextSpan, text.substr(start, i - start), {}});
            ++i;
        } else if (c == '[') {
            flush();
            ++i;
            const std::string tag = "ref:";
            if (text.compare(i, tag.size(), tag) != 0) {
                throw CaptionParseError(i, "expected 'ref:' after '['");
            }
            i += tag.size();
            const long scene_id = parse_long("scene id");
            if (i >= text.size() || text[i] != ':') {
                throw CaptionParseError(i, "expected ':' between scene and ann");
            }
            ++i;
            const long ann_id = parse_long("ann id");
            if (i >= text.size() || text[i] != ']') {
                throw CaptionParseError(i, "unclosed '[ref:...'");
            }
            ++i;
            entry.nodes.push_back({EntryNode::Kind::VisualRef, "", {scene_id, ann_id}});
        } else if (c == '>' || c == ']') {
            throw CaptionParseError(i, std::string("stray '") + c + "'");
        } else {
            connective.push_back(c);
            ++i;
        }
    }
    flush();
    if (entry.entity_count() == 0) {
        throw CaptionParseError(text.size(),
                                "query has no entities; mark one with <...> or [ref:s:a]");
    }
    return entry;
}

std::string compose_caption(const std::vector<CaptionPiece>& pieces,
                            const std::string& trailing_text) {
    std::string out;
    for (const CaptionPiece& p : pieces) {
        out += p.leading_text;
        out += "[" + std::to_string(p.ann_id) + "]<" + p.phrase + ">";
    }
    out += trailing_text;
    return out;
}

}  // namespace ivl
