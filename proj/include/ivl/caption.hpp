#pragma once

#include "ivl/interleave.hpp"
#include "ivl/streams.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace ivl {

// Parse failure with the character offset where it was detected.
class CaptionParseError : public std::runtime_error {
public:
    CaptionParseError(std::size_t pos, const std::string& msg)
        : std::runtime_error("caption parse error at " + std::to_string(pos) + ": " + msg),
          position(pos) {}

    std::size_t position;
};

struct CaptionEntity {
    long ann_id = 0;
    RowSpan span;  // character range of the whole "[id]<phrase>" token
    std::string phrase;
    bool operator==(const CaptionEntity&) const = default;
};

// Interleaved caption text: connective text mixed with "[index]<phrase>"
// entity tokens.
struct InterleavedCaption {
    std::string raw;
    std::vector<CaptionEntity> entities;
    bool operator==(const InterleavedCaption&) const = default;
};

// Grammar: CAPTION := (TEXT | ENTITY)*, ENTITY := '[' digits ']' '<' phrase '>'
// where TEXT never contains '[' and phrase never contains '>'.
InterleavedCaption parse_caption(const std::string& raw);

// Inverse of parse_caption; rejects phrases that could not be re-parsed.
std::string serialize_caption(const InterleavedCaption& caption);

// Markup stripped: entity tokens replaced by their phrases.
std::string plain_caption(const InterleavedCaption& caption);

// Shell-safe query syntax for interleaved entries: "<phrase>" marks a text
// entity, "[ref:scene:ann]" a visual reference, anything else is connective
// text. Raises CaptionParseError with positions on malformed input.
InterleaveEntry parse_query(const std::string& text);

// Assemble caption text from (connective, entity) pieces: the final
// connective follows the last entity.
struct CaptionPiece {
    std::string leading_text;
    long ann_id = 0;
    std::string phrase;
};
std::string compose_caption(const std::vector<CaptionPiece>& pieces,
                            const std::string& trailing_text);

}  // namespace ivl
