#include "kbqa/vocab.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "kbqa/text.hpp"

namespace kbqa {

Vocabulary::Vocabulary() {
    tokens_ = {"<pad>", "<unk>"};
    index_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& tok : tokenize(text)) out.push_back(id(tok));
    return out;
}

int Vocabulary::extend(const std::vector<std::string>& texts) {
    std::set<std::string> fresh;
    for (const auto& t : texts)
        for (const auto& tok : tokenize(t))
            if (!index_.count(tok)) fresh.insert(tok);
    for (const auto& tok : fresh) {
        index_.emplace(tok, static_cast<int>(tokens_.size()));
        tokens_.push_back(tok);
    }
    return static_cast<int>(fresh.size());
}

std::string Vocabulary::serialize() const { return nlohmann::json(tokens_).dump(); }

Vocabulary Vocabulary::deserialize(const std::string& json_text) {
    auto j = nlohmann::json::parse(json_text);
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    for (const auto& t : j) {
        std::string tok = t.get<std::string>();
        v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(tok);
    }
    if (v.size() < 2 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>")
        throw std::runtime_error("vocabulary file lacks reserved <pad>/<unk> entries");
    return v;
}

Vocabulary build_vocab(const std::vector<std::string>& texts) {
    Vocabulary v;
    v.extend(texts);
    return v;
}

}  // namespace kbqa
