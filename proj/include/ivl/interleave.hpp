#pragma once

#include <string>
#include <vector>

namespace ivl {

struct VisualRef {
    long scene_id = 0;
    long ann_id = 0;
    bool operator==(const VisualRef&) const = default;
};

// One node of an interleaved entry: an entity phrase, a visual reference to a
// segment of some scene, or connective text between entities.
struct EntryNode {
    enum class Kind { TextSpan, VisualRef, Connection };
    Kind kind = Kind::Connection;
    std::string text;  // TextSpan / Connection
    VisualRef ref;     // VisualRef
};

struct InterleaveEntry {
    std::vector<EntryNode> nodes;

    int entity_count() const {
        int n = 0;
        for (const auto& node : nodes) {
            if (node.kind != EntryNode::Kind::Connection) ++n;
        }
        return n;
    }
};

}  // namespace ivl
