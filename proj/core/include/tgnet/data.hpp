#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tgnet {

using TokenId = std::uint32_t;
using Phrase = std::vector<std::string>;

inline constexpr std::string_view kDigitToken = "<digit>";

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercases ASCII, splits on whitespace, and makes every ASCII punctuation
/// character its own token. Each maximal run of digits inside a token becomes
/// "<digit>", so "802.11b" yields "<digit>", ".", "<digit>b".
std::vector<std::string> tokenize_and_normalize(std::string_view text);

struct Document {
  std::vector<std::string> title;
  std::vector<std::string> abstract;
  std::vector<Phrase> keyphrases;

  // title followed by abstract
  std::vector<std::string> context() const;
};

class Vocabulary {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId unk = 1;
  static constexpr TokenId bos = 2;
  static constexpr TokenId eos = 3;
  static constexpr TokenId digit = 4;
  static constexpr std::size_t special_count = 5;

  Vocabulary();

  // Counts context and keyphrase tokens; keeps the most frequent words so the
  // total size (specials included) is at most `cap`. Ties go to the
  // lexicographically smaller word.
  static Vocabulary build(std::span<const Document> corpus, std::size_t cap);
  static Vocabulary from_words(std::span<const std::string> words);

  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  // One non-special word per line; line index (0-based) = id - special_count.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  void append(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct SourceEncoding {
  std::vector<TokenId> context_ids;   // UNK for out-of-vocabulary words
  std::vector<TokenId> title_ids;     // equals the first title_ids.size() context ids
  std::vector<TokenId> extended_ids;  // OOV words map to |V| + k
  std::vector<std::string> oov_words;

  std::size_t oov_count() const { return oov_words.size(); }
};

/// One training example. Triplets of the same document share one source.
struct Triplet {
  std::shared_ptr<const SourceEncoding> source;
  std::vector<TokenId> target_ids;  // extended ids, EOS-terminated
  std::size_t document = 0;
};

struct EncodeOptions {
  std::size_t max_context_len = 400;
};

// Contexts longer than max_context_len lose their tail; the title is kept whole.
SourceEncoding encode_source(const Document& doc, const Vocabulary& vocab,
                             const EncodeOptions& options = {});

std::vector<TokenId> encode_target(const Phrase& phrase, const Vocabulary& vocab,
                                   const SourceEncoding& source);

std::vector<Triplet> encode_triplets(const Document& doc, const Vocabulary& vocab,
                                     const EncodeOptions& options = {},
                                     std::size_t document_index = 0);

std::vector<Triplet> encode_corpus(std::span<const Document> docs, const Vocabulary& vocab,
                                   const EncodeOptions& options = {});

// Inverse of the extended-id mapping; EOS is not rendered.
std::vector<std::string> decode_ids(std::span<const TokenId> ids, const Vocabulary& vocab,
                                    std::span<const std::string> oov_words);

// Throws DataError when the line is not a usable document. Accepts raw text
// fields or already-normalized token arrays; "keyphrases" may be a list of
// strings or one ';'-separated string.
Document parse_document(std::string_view json_line);

struct CorpusStats {
  std::size_t lines = 0;
  std::size_t documents = 0;
  std::size_t malformed = 0;
  std::size_t dropped_keyphrases = 0;
};

/// Streams documents from a JSON Lines file, skipping malformed lines.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);

  std::optional<Document> next();
  const CorpusStats& stats() const { return stats_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  CorpusStats stats_;
};

struct Corpus {
  std::vector<Document> documents;
  CorpusStats stats;
};

Corpus load_corpus(const std::filesystem::path& path);

// Normalized documents as JSON Lines (token arrays), readable by load_corpus.
void write_normalized_corpus(const std::filesystem::path& path, std::span<const Document> docs);

/// Encoded-triplet cache: one JSON object per document holding the normalized
/// tokens plus the id encoding, so downstream commands never re-tokenize.
struct CachedDocument {
  Document document;
  std::shared_ptr<const SourceEncoding> source;
  std::vector<std::vector<TokenId>> targets;
};

void save_cache(const std::filesystem::path& path, std::span<const CachedDocument> docs);
std::vector<CachedDocument> load_cache(const std::filesystem::path& path);
std::vector<CachedDocument> build_cache(std::span<const Document> docs, const Vocabulary& vocab,
                                        const EncodeOptions& options = {});
std::vector<Triplet> triplets_from_cache(std::span<const CachedDocument> docs);

}  // namespace tgnet
