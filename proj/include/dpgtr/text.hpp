#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace dpgtr {

// Identifier of the bundled English stop-word list.
inline constexpr std::string_view kStopWordListId = "en-v1";

const std::unordered_set<std::string>& stop_words();

bool is_stop_word(std::string_view word);

// Splits on ASCII whitespace, keeps every piece verbatim.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& words, std::string_view sep);

// Lowercases and strips leading/trailing punctuation; may return "".
std::string normalize_word(std::string_view raw);

// Shared normalization: whitespace split, punctuation strip, case fold, drop
// empty tokens, and optionally drop stop words. Order is preserved.
std::vector<std::string> normalize_tokens(std::string_view text, bool remove_stop_words);

}  // namespace dpgtr
