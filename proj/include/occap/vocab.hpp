#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "occap/manifest.hpp"

namespace occap::corpus {

// Lowercase, whitespace-split, leading/trailing punctuation stripped.
std::vector<std::string> tokenize(const std::string& text);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kStart = 1;
    static constexpr int kEnd = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> id_to_token; // [0..3] are the specials
    std::unordered_map<std::string, int> token_to_id;

    int size() const { return static_cast<int>(id_to_token.size()); }
    // <unk> for out-of-vocabulary tokens; never fails.
    int id_of(const std::string& token) const;
    const std::string& token_of(int id) const;
};

// Tokens with corpus frequency >= min_count, ordered by frequency
// descending then lexicographic.
Vocabulary build_vocab(const CorpusManifest& manifest, int min_count);

// <start> ... <end>, truncated to max_len total tokens.
struct CaptionSequence {
    std::vector<int> token_ids;

    int length() const { return static_cast<int>(token_ids.size()); }
    bool operator==(const CaptionSequence&) const = default;
};

CaptionSequence encode_caption(const std::string& text, const Vocabulary& vocab, int max_len);
// Words only, specials dropped.
std::string decode_caption(const CaptionSequence& seq, const Vocabulary& vocab);
std::vector<std::string> decode_tokens(const CaptionSequence& seq, const Vocabulary& vocab);

} // namespace occap::corpus
