#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace kbqa {

// Word-level vocabulary with reserved PAD/UNK slots. New tokens are appended
// in sorted order so a vocabulary built from the same corpus is canonical,
// and growing it later (transfer to a new domain) keeps old indices stable.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary();

    int size() const { return static_cast<int>(tokens_.size()); }
    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const { return tokens_[id]; }

    // tokenize + map; unknown words become kUnk
    std::vector<int> encode(const std::string& text) const;

    // Adds the unseen word tokens of `texts` in sorted order; returns how many
    // entries were appended.
    int extend(const std::vector<std::string>& texts);

    std::string serialize() const;  // JSON array of tokens
    static Vocabulary deserialize(const std::string& json_text);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocab(const std::vector<std::string>& texts);

}  // namespace kbqa
