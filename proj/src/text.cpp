#include "dpgtr/text.hpp"

#include <array>
#include <cctype>

namespace dpgtr {
namespace {

// Frozen list; changing it requires a new kStopWordListId.
constexpr std::array<std::string_view, 179> kEnglishStopWords = {
    "i",          "me",       "my",         "myself",    "we",         "our",
    "ours",       "ourselves", "you",       "you're",    "you've",     "you'll",
    "you'd",      "your",     "yours",      "yourself",  "yourselves", "he",
    "him",        "his",      "himself",    "she",       "she's",      "her",
    "hers",       "herself",  "it",         "it's",      "its",        "itself",
    "they",       "them",     "their",      "theirs",    "themselves", "what",
    "which",      "who",      "whom",       "this",      "that",       "that'll",
    "these",      "those",    "am",         "is",        "are",        "was",
    "were",       "be",       "been",       "being",     "have",       "has",
    "had",        "having",   "do",         "does",      "did",        "doing",
    "a",          "an",       "the",        "and",       "but",        "if",
    "or",         "because",  "as",         "until",     "while",      "of",
    "at",         "by",       "for",        "with",      "about",      "against",
    "between",    "into",     "through",    "during",    "before",     "after",
    "above",      "below",    "to",         "from",      "up",         "down",
    "in",         "out",      "on",         "off",       "over",       "under",
    "again",      "further",  "then",       "once",      "here",       "there",
    "when",       "where",    "why",        "how",       "all",        "any",
    "both",       "each",     "few",        "more",      "most",       "other",
    "some",       "such",     "no",         "nor",       "not",        "only",
    "own",        "same",     "so",         "than",      "too",        "very",
    "s",          "t",        "can",        "will",      "just",       "don",
    "don't",      "should",   "should've",  "now",       "d",          "ll",
    "m",          "o",        "re",         "ve",        "y",          "ain",
    "aren",       "aren't",   "couldn",     "couldn't",  "didn",       "didn't",
    "doesn",      "doesn't",  "hadn",       "hadn't",    "hasn",       "hasn't",
    "haven",      "haven't",  "isn",        "isn't",     "ma",         "mightn",
    "mightn't",   "mustn",    "mustn't",    "needn",     "needn't",    "shan",
    "shan't",     "shouldn",  "shouldn't",  "wasn",      "wasn't",     "weren",
    "weren't",    "won",      "won't",      "wouldn",    "wouldn't",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> words = [] {
    std::unordered_set<std::string> out;
    for (auto w : kEnglishStopWords) out.emplace(w);
    return out;
  }();
  return words;
}

bool is_stop_word(std::string_view word) { return stop_words().contains(std::string(word)); }

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += sep;
    out += words[i];
  }
  return out;
}

std::string normalize_word(std::string_view raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_punct(raw[begin])) ++begin;
  while (end > begin && is_punct(raw[end - 1])) --end;
  std::string out(raw.substr(begin, end - begin));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> normalize_tokens(std::string_view text, bool remove_stop_words) {
  std::vector<std::string> out;
  for (const auto& piece : split_whitespace(text)) {
    std::string word = normalize_word(piece);
    if (word.empty()) continue;
    if (remove_stop_words && is_stop_word(word)) continue;
    out.push_back(std::move(word));
  }
  return out;
}

}  // namespace dpgtr
