#include "tgnet/data.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace tgnet {

using nlohmann::json;

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(unsigned char c) {
  return c < 128 && ((c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
                     (c >= '{' && c <= '~'));
}

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

std::string collapse_digits(const std::string& token) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size();) {
    if (is_digit(static_cast<unsigned char>(token[i]))) {
      while (i < token.size() && is_digit(static_cast<unsigned char>(token[i]))) ++i;
      out += kDigitToken;
    } else {
      out += token[i++];
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize_and_normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(collapse_digits(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> Document::context() const {
  std::vector<std::string> out = title;
  out.insert(out.end(), abstract.begin(), abstract.end());
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) append(s);
  append(std::string(kDigitToken));
}

void Vocabulary::append(std::string word) {
  const auto id = static_cast<TokenId>(words_.size());
  if (!index_.emplace(word, id).second) throw DataError("vocabulary: duplicate word '" + word + "'");
  words_.push_back(std::move(word));
}

Vocabulary Vocabulary::build(std::span<const Document> corpus, std::size_t cap) {
  if (cap < special_count) throw std::invalid_argument("vocabulary cap below special count");
  Vocabulary vocab;
  std::map<std::string, std::size_t> counts;
  auto count = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (!vocab.contains(t)) ++counts[t];
    }
  };
  for (const auto& doc : corpus) {
    count(doc.title);
    count(doc.abstract);
    for (const auto& kp : doc.keyphrases) count(kp);
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is lexicographically ordered already; a stable sort keeps that for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), cap - special_count);
  for (std::size_t i = 0; i < keep; ++i) vocab.append(ranked[i].first);
  return vocab;
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  Vocabulary vocab;
  for (const auto& w : words) vocab.append(w);
  return vocab;
}

TokenId Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? unk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= words_.size()) throw std::out_of_range("vocabulary: id " + std::to_string(id));
  return words_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (std::size_t i = special_count; i < words_.size(); ++i) out << words_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) throw DataError("vocabulary file has an empty line: " + path.string());
    vocab.append(line);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Encoding

SourceEncoding encode_source(const Document& doc, const Vocabulary& vocab,
                             const EncodeOptions& options) {
  if (doc.title.empty()) throw DataError("document has an empty title");
  auto context = doc.context();
  const std::size_t limit = std::max(options.max_context_len, doc.title.size());
  if (context.size() > limit) context.resize(limit);

  SourceEncoding enc;
  enc.context_ids.reserve(context.size());
  enc.extended_ids.reserve(context.size());
  std::unordered_map<std::string, TokenId> oov_index;
  for (const auto& word : context) {
    const TokenId id = vocab.id(word);
    enc.context_ids.push_back(id);
    if (id != Vocabulary::unk || word == vocab.word(Vocabulary::unk)) {
      enc.extended_ids.push_back(id);
      continue;
    }
    auto [it, inserted] =
        oov_index.emplace(word, static_cast<TokenId>(vocab.size() + enc.oov_words.size()));
    if (inserted) enc.oov_words.push_back(word);
    enc.extended_ids.push_back(it->second);
  }
  enc.title_ids.assign(enc.context_ids.begin(), enc.context_ids.begin() + doc.title.size());
  return enc;
}

std::vector<TokenId> encode_target(const Phrase& phrase, const Vocabulary& vocab,
                                   const SourceEncoding& source) {
  std::vector<TokenId> ids;
  ids.reserve(phrase.size() + 1);
  for (const auto& word : phrase) {
    TokenId id = vocab.id(word);
    if (id == Vocabulary::unk) {
      const auto it = std::find(source.oov_words.begin(), source.oov_words.end(), word);
      if (it != source.oov_words.end()) {
        id = static_cast<TokenId>(vocab.size() + (it - source.oov_words.begin()));
      }
    }
    ids.push_back(id);
  }
  ids.push_back(Vocabulary::eos);
  return ids;
}

std::vector<Triplet> encode_triplets(const Document& doc, const Vocabulary& vocab,
                                     const EncodeOptions& options, std::size_t document_index) {
  auto source = std::make_shared<const SourceEncoding>(encode_source(doc, vocab, options));
  std::vector<Triplet> out;
  out.reserve(doc.keyphrases.size());
  for (const auto& kp : doc.keyphrases) {
    if (kp.empty()) {
      spdlog::warn("document {}: dropping empty keyphrase", document_index);
      continue;
    }
    out.push_back({source, encode_target(kp, vocab, *source), document_index});
  }
  return out;
}

std::vector<Triplet> encode_corpus(std::span<const Document> docs, const Vocabulary& vocab,
                                   const EncodeOptions& options) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto t = encode_triplets(docs[i], vocab, options, i);
    out.insert(out.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  return out;
}

std::vector<std::string> decode_ids(std::span<const TokenId> ids, const Vocabulary& vocab,
                                    std::span<const std::string> oov_words) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id == Vocabulary::eos) continue;
    if (id < vocab.size()) {
      out.push_back(vocab.word(id));
    } else if (id - vocab.size() < oov_words.size()) {
      out.push_back(oov_words[id - vocab.size()]);
    } else {
      throw std::out_of_range("decode: extended id " + std::to_string(id) + " has no OOV entry");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus IO

namespace {

std::vector<std::string> text_field(const json& obj, const char* key, bool required) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw DataError(std::string("missing field '") + key + "'");
    return {};
  }
  if (it->is_string()) return tokenize_and_normalize(it->get<std::string>());
  if (it->is_array()) {
    std::vector<std::string> tokens;
    for (const auto& t : *it) {
      if (!t.is_string()) throw DataError(std::string("non-string token in '") + key + "'");
      tokens.push_back(t.get<std::string>());
    }
    return tokens;
  }
  throw DataError(std::string("field '") + key + "' has the wrong type");
}

Document parse_document_counting(std::string_view line, std::size_t& dropped) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw DataError("line is not a JSON object");
  Document doc;
  doc.title = text_field(obj, "title", true);
  if (doc.title.empty()) throw DataError("empty title");
  doc.abstract = text_field(obj, "abstract", true);

  const auto kp = obj.find("keyphrases");
  if (kp == obj.end()) throw DataError("missing field 'keyphrases'");
  std::vector<Phrase> phrases;
  auto add_text = [&](const std::string& text) { phrases.push_back(tokenize_and_normalize(text)); };
  if (kp->is_string()) {
    const std::string all = kp->get<std::string>();
    std::size_t start = 0;
    while (start <= all.size()) {
      const std::size_t end = std::min(all.find(';', start), all.size());
      add_text(all.substr(start, end - start));
      start = end + 1;
    }
  } else if (kp->is_array()) {
    for (const auto& item : *kp) {
      if (item.is_string()) {
        add_text(item.get<std::string>());
      } else if (item.is_array()) {
        Phrase p;
        for (const auto& t : item) {
          if (!t.is_string()) throw DataError("non-string keyphrase token");
          p.push_back(t.get<std::string>());
        }
        phrases.push_back(std::move(p));
      } else {
        throw DataError("keyphrase entry has the wrong type");
      }
    }
  } else {
    throw DataError("field 'keyphrases' has the wrong type");
  }
  for (auto& p : phrases) {
    if (p.empty()) {
      ++dropped;
      continue;
    }
    doc.keyphrases.push_back(std::move(p));
  }
  return doc;
}

}  // namespace

Document parse_document(std::string_view json_line) {
  std::size_t dropped = 0;
  return parse_document_counting(json_line, dropped);
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : path_(path), in_(path) {
  if (!in_) throw DataError("cannot read corpus file " + path.string());
}

std::optional<Document> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++stats_.lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t dropped = 0;
      Document doc = parse_document_counting(line, dropped);
      if (dropped) {
        spdlog::warn("{}:{}: dropped {} empty keyphrase(s)", path_.string(), stats_.lines, dropped);
        stats_.dropped_keyphrases += dropped;
      }
      ++stats_.documents;
      return doc;
    } catch (const DataError& e) {
      ++stats_.malformed;
      spdlog::warn("{}:{}: skipping malformed line: {}", path_.string(), stats_.lines, e.what());
    }
  }
  return std::nullopt;
}

Corpus load_corpus(const std::filesystem::path& path) {
  CorpusReader reader(path);
  Corpus corpus;
  while (auto doc = reader.next()) corpus.documents.push_back(std::move(*doc));
  corpus.stats = reader.stats();
  return corpus;
}

void write_normalized_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : docs) {
    out << json{{"title", d.title}, {"abstract", d.abstract}, {"keyphrases", d.keyphrases}}.dump()
        << '\n';
  }
}

std::vector<CachedDocument> build_cache(std::span<const Document> docs, const Vocabulary& vocab,
                                        const EncodeOptions& options) {
  std::vector<CachedDocument> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    CachedDocument c;
    c.document = doc;
    c.source = std::make_shared<const SourceEncoding>(encode_source(doc, vocab, options));
    for (const auto& kp : doc.keyphrases) c.targets.push_back(encode_target(kp, vocab, *c.source));
    out.push_back(std::move(c));
  }
  return out;
}

void save_cache(const std::filesystem::path& path, std::span<const CachedDocument> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write cache " + path.string());
  for (const auto& c : docs) {
    const auto& d = c.document;
    json obj{{"title", d.title},
             {"abstract", d.abstract},
             {"keyphrases", d.keyphrases},
             {"context_ids", c.source->context_ids},
             {"title_len", c.source->title_ids.size()},
             {"extended_ids", c.source->extended_ids},
             {"oov", c.source->oov_words},
             {"targets", c.targets}};
    out << obj.dump() << '\n';
  }
}

std::vector<CachedDocument> load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read cache " + path.string());
  std::vector<CachedDocument> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json obj = json::parse(line);
      CachedDocument c;
      c.document.title = obj.at("title").get<std::vector<std::string>>();
      c.document.abstract = obj.at("abstract").get<std::vector<std::string>>();
      c.document.keyphrases = obj.at("keyphrases").get<std::vector<Phrase>>();
      SourceEncoding enc;
      enc.context_ids = obj.at("context_ids").get<std::vector<TokenId>>();
      enc.extended_ids = obj.at("extended_ids").get<std::vector<TokenId>>();
      enc.oov_words = obj.at("oov").get<std::vector<std::string>>();
      const auto title_len = obj.at("title_len").get<std::size_t>();
      if (title_len == 0 || title_len > enc.context_ids.size() ||
          enc.extended_ids.size() != enc.context_ids.size()) {
        throw DataError("inconsistent lengths");
      }
      enc.title_ids.assign(enc.context_ids.begin(), enc.context_ids.begin() + title_len);
      c.source = std::make_shared<const SourceEncoding>(std::move(enc));
      c.targets = obj.at("targets").get<std::vector<std::vector<TokenId>>>();
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad cache entry: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad cache entry: " + e.what());
    }
  }
  return out;
}

std::vector<Triplet> triplets_from_cache(std::span<const CachedDocument> docs) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (const auto& t : docs[i].targets) out.push_back({docs[i].source, t, i});
  }
  return out;
}

}  // namespace tgnet
