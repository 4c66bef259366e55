#include "tgnet/stopwords.hpp"

namespace tgnet {

const std::unordered_set<std::string_view>& default_stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",
      "about",
      "above",
      "after",
      "again",
      "against",
      "all",
      "am",
      "an",
      "and",
      "any",
      "are",
      "as",
      "at",
      "be",
      "because",
      "been",
      "before",
      "being",
      "below",
      "between",
      "both",
      "but",
      "by",
      "can",
      "could",
      "did",
      "do",
      "does",
      "doing",
      "down",
      "during",
      "each",
      "few",
      "for",
      "from",
      "further",
      "had",
      "has",
      "have",
      "having",
      "he",
      "her",
      "here",
      "hers",
      "herself",
      "him",
      "himself",
      "his",
      "how",
      "i",
      "if",
      "in",
      "into",
      "is",
      "it",
      "its",
      "itself",
      "just",
      "me",
      "more",
      "most",
      "my",
      "myself",
      "no",
      "nor",
      "not",
      "now",
      "of",
      "off",
      "on",
      "once",
      "only",
      "or",
      "other",
      "our",
      "ours",
      "ourselves",
      "out",
      "over",
      "own",
      "same",
      "she",
      "should",
      "so",
      "some",
      "such",
      "than",
      "that",
      "the",
      "their",
      "theirs",
      "them",
      "themselves",
      "then",
      "there",
      "these",
      "they",
      "this",
      "those",
      "through",
      "to",
      "too",
      "under",
      "until",
      "up",
      "very",
      "was",
      "we",
      "were",
      "what",
      "when",
      "where",
      "which",
      "while",
      "who",
      "whom",
      "why",
      "will",
      "with",
      "would",
      "you",
      "your",
      "yours",
      "yourself",
      "yourselves",
      "also",
      "via",
      "using",
      "use",
      "used",
      "based",
      "new",
      "towards",
      "toward",
      "within",
      "without",
      "upon",
      "among",
      "amongst",
      "however",
      "thus",
      "may",
      "might",
      "must",
      "shall",
      "us",
      "yet",
      "ever",
      "every",
      "either",
      "neither",
      "else",
      "often",
      "onto",
      "per",
      "since",
      "still",
      "though",
      "although",
      "unless",
      "whether",
      "whose",
      "across",
      "along",
      "around",
      "behind",
      "beyond",
      "despite",
      "near",
  };
  return words;
}

bool is_stopword(std::string_view token) { return default_stopwords().count(token) != 0; }

}  // namespace tgnet
