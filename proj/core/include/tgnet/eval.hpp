#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tgnet/data.hpp"

namespace tgnet {

struct PresentAbsent {
  std::vector<Phrase> present;
  std::vector<Phrase> absent;
};

// Present iff the stemmed phrase is a contiguous run of the stemmed context.
bool occurs_in_context(const Phrase& phrase, std::span<const std::string> context);
PresentAbsent split_present_absent(std::span<const Phrase> phrases,
                                   std::span<const std::string> context);

struct DocumentScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Scores one document at cutoff k after stemming both sides and dropping
/// stemmed duplicates (first occurrence wins). P = hits / min(k, #preds),
/// R = hits / #targets, F1 = 2PR / (P + R) or 0.
DocumentScore score_document(std::span<const Phrase> predictions, std::span<const Phrase> targets,
                             std::size_t k);

struct MetricTable {
  std::vector<std::size_t> ks;
  std::vector<double> precision, recall, f1;  // macro averages, one per k
  std::size_t documents = 0;  // documents with at least one target
  std::size_t targets = 0;
  std::size_t predictions = 0;
};

// Macro-averages over documents that have at least one target.
MetricTable compute_metrics(std::span<const std::vector<Phrase>> predictions,
                            std::span<const std::vector<Phrase>> targets,
                            std::span<const std::size_t> ks);

inline constexpr std::size_t kBucketCount = 5;

// Buckets [0,3%), [3%,6%), [6%,9%), [9%,12%), [12%,inf) numbered 1..5.
int bucket_by_title_ratio(std::size_t title_len, std::size_t context_len);
std::vector<int> bucket_by_title_ratio(std::span<const Document> docs);

struct EvalDocument {
  std::vector<std::string> title;
  std::vector<std::string> context;  // title followed by abstract
  std::vector<Phrase> targets;
  std::vector<Phrase> predictions;   // ranked
};

struct SplitReport {
  double f1_at_5 = 0.0;
  double f1_at_10 = 0.0;
  double r_at_10 = 0.0;
  double r_at_50 = 0.0;
  std::size_t documents = 0;
  std::size_t targets = 0;
  std::size_t predictions = 0;
};

struct BucketReport {
  std::size_t documents = 0;
  std::size_t scored_documents = 0;  // with at least one present target
  double f1_at_5 = 0.0;              // present split
};

struct EvalReport {
  std::size_t documents = 0;
  SplitReport present;
  SplitReport absent;
  std::array<BucketReport, kBucketCount> buckets{};
};

EvalReport evaluate(std::span<const EvalDocument> docs);

void to_json(nlohmann::json& j, const SplitReport& r);
void to_json(nlohmann::json& j, const EvalReport& r);
std::string format_report(const EvalReport& r);

struct TitleRelatedCounts {
  std::size_t total = 0;
  std::size_t related = 0;
  double percentage = 0.0;  // 100 * related / total, 0 when total is 0
};

struct TitleRelatedStats {
  TitleRelatedCounts present;
  TitleRelatedCounts absent;
};

using StopwordSet = std::unordered_set<std::string_view>;

// Shares a token with the title that is neither a stopword nor free of letters.
bool is_title_related(const Phrase& phrase, std::span<const std::string> title,
                      const StopwordSet& stopwords);

TitleRelatedStats title_related_stats(std::span<const Document> docs, const StopwordSet& stopwords);

void to_json(nlohmann::json& j, const TitleRelatedStats& s);

}  // namespace tgnet
