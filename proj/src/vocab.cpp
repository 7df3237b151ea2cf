#include "occap/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "occap/errors.hpp"

namespace occap::corpus {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        std::size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) out.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return out;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw ContractError("token id " + std::to_string(id) + " out of range");
    return id_to_token[static_cast<std::size_t>(id)];
}

Vocabulary build_vocab(const CorpusManifest& manifest, int min_count) {
    if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
    std::map<std::string, std::int64_t> freq;
    for (const auto& a : manifest.annotations) {
        for (const auto& tok : tokenize(a.caption)) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [tok, n] : freq) {
        if (n >= min_count) kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.id_to_token = {"<pad>", "<start>", "<end>", "<unk>"};
    for (const auto& [tok, n] : kept) {
        v.token_to_id[tok] = v.size();
        v.id_to_token.push_back(tok);
    }
    return v;
}

CaptionSequence encode_caption(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 2) throw ContractError("encode_caption: max_len must allow <start> and <end>");
    CaptionSequence seq;
    seq.token_ids.push_back(Vocabulary::kStart);
    for (const auto& tok : tokenize(text)) {
        if (seq.length() == max_len - 1) break;
        seq.token_ids.push_back(vocab.id_of(tok));
    }
    seq.token_ids.push_back(Vocabulary::kEnd);
    return seq;
}

std::vector<std::string> decode_tokens(const CaptionSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> words;
    for (int id : seq.token_ids) {
        if (id == Vocabulary::kStart || id == Vocabulary::kEnd || id == Vocabulary::kPad) continue;
        words.push_back(vocab.token_of(id));
    }
    return words;
}

std::string decode_caption(const CaptionSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (const auto& w : decode_tokens(seq, vocab)) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

} // namespace occap::corpus
