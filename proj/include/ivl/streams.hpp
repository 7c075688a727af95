#pragma once

#include "ivl/tensor.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace ivl {

struct RowSpan {
    Index begin = 0, end = 0;
    Index size() const { return end - begin; }
    bool operator==(const RowSpan&) const = default;
};

enum class StreamKind { Image, Text, Spatial, Interleave, Class, Caption };

std::string stream_kind_name(StreamKind k);
StreamKind stream_kind_from(const std::string& s);

struct PromptStream {
    std::string name;  // "p.image", "p.interleave", ...
    StreamKind kind = StreamKind::Image;
    Tensor data;
    // Slot structure of the rows (entity spans, one row per class, one row
    // per interaction). A query stream with exactly one row per slot attends
    // slot-wise instead of across the whole block.
    std::vector<RowSpan> slot_spans;
};

struct QueryStream {
    std::string name;  // "q.entity", "q.object", ...
    Tensor data;
    // One row per slot (entity, class, interaction). Slot rows self-attend
    // diagonally instead of across the stream, keeping slots isolated.
    bool slot_rows = false;
};

namespace detail {

template <typename S>
const S& stream_at(const std::vector<S>& streams, const std::string& name) {
    for (const auto& s : streams) {
        if (s.name == name) return s;
    }
    throw std::out_of_range("unknown stream: " + name);
}

}  // namespace detail

struct PromptSet {
    std::vector<PromptStream> streams;

    bool has(const std::string& name) const {
        for (const auto& s : streams) {
            if (s.name == name) return true;
        }
        return false;
    }
    const PromptStream& at(const std::string& name) const {
        return detail::stream_at(streams, name);
    }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& s : streams) out.push_back(s.name);
        return out;
    }
    std::vector<Index> row_counts() const {
        std::vector<Index> out;
        for (const auto& s : streams) out.push_back(s.data.rows());
        return out;
    }
};

struct QuerySet {
    std::vector<QueryStream> streams;

    bool has(const std::string& name) const {
        for (const auto& s : streams) {
            if (s.name == name) return true;
        }
        return false;
    }
    const QueryStream& at(const std::string& name) const {
        return detail::stream_at(streams, name);
    }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& s : streams) out.push_back(s.name);
        return out;
    }
    std::vector<Index> row_counts() const {
        std::vector<Index> out;
        for (const auto& s : streams) out.push_back(s.data.rows());
        return out;
    }
};

// Row ranges of named streams inside a concatenated matrix.
struct StreamLayout {
    std::vector<std::pair<std::string, RowSpan>> spans;

    bool has(const std::string& name) const {
        for (const auto& s : spans) {
            if (s.first == name) return true;
        }
        return false;
    }
    RowSpan at(const std::string& name) const {
        for (const auto& s : spans) {
            if (s.first == name) return s.second;
        }
        throw std::out_of_range("unknown stream in layout: " + name);
    }
    Index total() const { return spans.empty() ? 0 : spans.back().second.end; }
};

inline StreamLayout layout_of(const std::vector<std::string>& names,
                              const std::vector<Index>& rows) {
    StreamLayout out;
    Index off = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        out.spans.emplace_back(names[i], RowSpan{off, off + rows[i]});
        off += rows[i];
    }
    return out;
}

inline std::string stream_kind_name(StreamKind k) {
    switch (k) {
        case StreamKind::Image: return "image";
        case StreamKind::Text: return "text";
        case StreamKind::Spatial: return "spatial";
        case StreamKind::Interleave: return "interleave";
        case StreamKind::Class: return "class";
        case StreamKind::Caption: return "caption";
    }
    throw std::logic_error("bad stream kind");
}

inline StreamKind stream_kind_from(const std::string& s) {
    if (s == "image") return StreamKind::Image;
    if (s == "text") return StreamKind::Text;
    if (s == "spatial") return StreamKind::Spatial;
    if (s == "interleave") return StreamKind::Interleave;
    if (s == "class") return StreamKind::Class;
    if (s == "caption") return StreamKind::Caption;
    throw std::invalid_argument("unknown stream kind: " + s);
}

}  // namespace ivl
