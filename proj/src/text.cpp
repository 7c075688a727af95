#include "ivl/text.hpp"

#include "ivl/rng.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace ivl {

namespace {

// Fixed word list covering everything the scene generator emits.
const std::array<const char*, 34> kWords = {
    "the",    "a",       "an",      "red",    "green",   "blue",   "yellow",
    "circle", "square",  "triangle", "next",  "to",      "beside", "above",
    "under",  "near",    "with",    "and",    "scene",   "grid",   "of",
    "is",     "on",      "left",    "right",  "contains", "shapes", "colored",
    "small",  "picture", "showing", "image",  "in",      "holding",
};

constexpr int kOovBuckets = 64;

int word_id(const std::string& w) {
    for (std::size_t i = 0; i < kWords.size(); ++i) {
        if (w == kWords[i]) return static_cast<int>(i);
    }
    return static_cast<int>(kWords.size()) +
           static_cast<int>(fnv1a(w) % static_cast<std::uint64_t>(kOovBuckets));
}

}  // namespace

int vocab_size() {
    return static_cast<int>(kWords.size()) + kOovBuckets;
}

TextSeq tokenize(const std::string& text) {
    TextSeq out;
    out.source_text = text;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.tokens.push_back(word_id(word));
            word.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace ivl
