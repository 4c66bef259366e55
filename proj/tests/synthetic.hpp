#pragma once

#include <string>
#include <vector>

#include "support.hpp"
#include "tgnet/data.hpp"

namespace tgtest {

// Pronounceable pseudo-words; distinct for distinct indices.
inline std::string pseudo_word(std::size_t i) {
  static const char* const onset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* const vowel[] = {"a", "e", "i", "o", "u"};
  std::string w;
  do {
    w += onset[i % 14];
    i /= 14;
    w += vowel[i % 5];
    i /= 5;
  } while (i > 0);
  return w;
}

struct SyntheticOptions {
  std::size_t documents = 50;
  std::size_t keyphrases = 4;  // per document, all present in the context
  std::size_t min_len = 2;
  std::size_t max_len = 3;
  std::size_t abstract_filler = 30;  // extra words around the keyphrases
  std::size_t word_pool = 600;
};

// Each document owns a block of keyphrase words; filler is drawn from the
// whole pool so rare words end up outside a capped vocabulary.
inline std::vector<tgnet::Document> keyphrase_corpus(std::uint64_t seed, const SyntheticOptions& o = {}) {
  Gen g(seed);
  std::vector<tgnet::Document> docs;
  for (std::size_t d = 0; d < o.documents; ++d) {
    tgnet::Document doc;
    for (std::size_t k = 0; k < o.keyphrases; ++k) {
      tgnet::Phrase p;
      const std::size_t len = o.min_len + g.index(o.max_len - o.min_len + 1);
      for (std::size_t t = 0; t < len; ++t) p.push_back(pseudo_word(g.index(o.word_pool / 2)));
      doc.keyphrases.push_back(p);
    }
    doc.title = doc.keyphrases[0];
    doc.title.push_back(pseudo_word(g.index(o.word_pool)));
    std::vector<std::vector<std::string>> chunks(doc.keyphrases.begin() + 1, doc.keyphrases.end());
    for (std::size_t f = 0; f < o.abstract_filler; ++f) chunks.push_back({pseudo_word(g.index(o.word_pool))});
    for (std::size_t i = chunks.size(); i > 1; --i) std::swap(chunks[i - 1], chunks[g.index(i)]);
    for (const auto& c : chunks) doc.abstract.insert(doc.abstract.end(), c.begin(), c.end());
    docs.push_back(std::move(doc));
  }
  return docs;
}

// The only keyphrase is a bigram placed at a random offset in the title and
// repeated once in the abstract. Every distractor bigram occurs twice in the
// abstract, so neither position nor repetition singles the keyphrase out;
// only its presence in the title does.
inline std::vector<tgnet::Document> title_bigram_corpus(std::uint64_t seed, std::size_t documents,
                                                        std::size_t word_pool = 120,
                                                        std::size_t distractors = 6,
                                                        std::size_t title_fillers = 6) {
  Gen g(seed);
  std::vector<tgnet::Document> docs;
  for (std::size_t d = 0; d < documents; ++d) {
    tgnet::Document doc;
    const tgnet::Phrase key = {pseudo_word(g.index(word_pool)), pseudo_word(g.index(word_pool))};
    for (std::size_t i = 0; i < title_fillers; ++i) doc.title.push_back(pseudo_word(g.index(word_pool)));
    const auto at = static_cast<std::ptrdiff_t>(g.index(title_fillers + 1));
    doc.title.insert(doc.title.begin() + at, key.begin(), key.end());
    std::vector<tgnet::Phrase> chunks = {key};
    for (std::size_t i = 0; i < distractors; ++i) {
      const tgnet::Phrase other = {pseudo_word(g.index(word_pool)), pseudo_word(g.index(word_pool))};
      chunks.push_back(other);
      chunks.push_back(other);
    }
    for (std::size_t i = chunks.size(); i > 1; --i) std::swap(chunks[i - 1], chunks[g.index(i)]);
    for (const auto& c : chunks) doc.abstract.insert(doc.abstract.end(), c.begin(), c.end());
    doc.keyphrases = {key};
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace tgtest
