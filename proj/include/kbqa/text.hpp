#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kbqa {

// Canonical form used for all label and answer-string matching:
// ASCII case-fold, whitespace collapsed to single spaces, trimmed.
std::string normalize_label(std::string_view s);

// Lowercased word tokens: maximal runs of alphanumerics (bytes >= 0x80 kept
// so multi-byte UTF-8 words survive); punctuation and whitespace separate.
std::vector<std::string> tokenize(std::string_view s);

bool is_blank(std::string_view s);
std::string trim(std::string_view s);

}  // namespace kbqa
