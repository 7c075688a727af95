#pragma once

#include <string>
#include <vector>

namespace ivl {

// Deterministic whitespace/punctuation tokenizer over a fixed word list;
// out-of-vocabulary words hash into a bucket range.
struct TextSeq {
    std::vector<int> tokens;
    std::string source_text;
};

TextSeq tokenize(const std::string& text);
int vocab_size();

}  // namespace ivl
