#include "tgnet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tgnet/porter.hpp"

namespace tgnet {

namespace {

using Stemmed = std::vector<std::string>;

bool contains_run(std::span<const std::string> hay, const Stemmed& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::vector<Stemmed> stem_unique(std::span<const Phrase> phrases) {
  std::vector<Stemmed> out;
  std::set<Stemmed> seen;
  for (const auto& p : phrases) {
    auto s = stem_tokens(p);
    if (s.empty() || !seen.insert(s).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

bool occurs_in_context(const Phrase& phrase, std::span<const std::string> context) {
  const auto ctx = stem_tokens(context);
  return contains_run(ctx, stem_tokens(phrase));
}

PresentAbsent split_present_absent(std::span<const Phrase> phrases,
                                   std::span<const std::string> context) {
  const auto ctx = stem_tokens(context);
  PresentAbsent out;
  for (const auto& p : phrases) {
    (contains_run(ctx, stem_tokens(p)) ? out.present : out.absent).push_back(p);
  }
  return out;
}

DocumentScore score_document(std::span<const Phrase> predictions, std::span<const Phrase> targets,
                             std::size_t k) {
  const auto preds = stem_unique(predictions);
  const auto gold = stem_unique(targets);
  DocumentScore s;
  if (gold.empty() || k == 0) return s;
  const std::set<Stemmed> gold_set(gold.begin(), gold.end());
  const std::size_t top = std::min(k, preds.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += gold_set.count(preds[i]);
  s.precision = top ? static_cast<double>(hits) / static_cast<double>(top) : 0.0;
  s.recall = static_cast<double>(hits) / static_cast<double>(gold.size());
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

MetricTable compute_metrics(std::span<const std::vector<Phrase>> predictions,
                            std::span<const std::vector<Phrase>> targets,
                            std::span<const std::size_t> ks) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("compute_metrics: prediction and target document counts differ");
  }
  MetricTable t;
  t.ks.assign(ks.begin(), ks.end());
  t.precision.assign(ks.size(), 0.0);
  t.recall.assign(ks.size(), 0.0);
  t.f1.assign(ks.size(), 0.0);
  for (std::size_t d = 0; d < targets.size(); ++d) {
    const std::size_t n_targets = stem_unique(targets[d]).size();
    t.predictions += predictions[d].size();
    if (n_targets == 0) continue;
    ++t.documents;
    t.targets += n_targets;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto s = score_document(predictions[d], targets[d], ks[i]);
      t.precision[i] += s.precision;
      t.recall[i] += s.recall;
      t.f1[i] += s.f1;
    }
  }
  if (t.documents > 0) {
    const double n = static_cast<double>(t.documents);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      t.precision[i] /= n;
      t.recall[i] /= n;
      t.f1[i] /= n;
    }
  }
  return t;
}

int bucket_by_title_ratio(std::size_t title_len, std::size_t context_len) {
  if (context_len == 0) throw std::invalid_argument("bucket_by_title_ratio: empty context");
  // floor(ratio / 3%) in integers: 100 * L_t / (3 * L_x)
  const std::size_t step = (100 * title_len) / (3 * context_len);
  return static_cast<int>(std::min<std::size_t>(step, kBucketCount - 1)) + 1;
}

std::vector<int> bucket_by_title_ratio(std::span<const Document> docs) {
  std::vector<int> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    out.push_back(bucket_by_title_ratio(d.title.size(), d.title.size() + d.abstract.size()));
  }
  return out;
}

EvalReport evaluate(std::span<const EvalDocument> docs) {
  std::vector<std::vector<Phrase>> pred_present, pred_absent, gold_present, gold_absent;
  for (const auto& d : docs) {
    auto p = split_present_absent(d.predictions, d.context);
    auto g = split_present_absent(d.targets, d.context);
    pred_present.push_back(std::move(p.present));
    pred_absent.push_back(std::move(p.absent));
    gold_present.push_back(std::move(g.present));
    gold_absent.push_back(std::move(g.absent));
  }
  const std::size_t ks[] = {5, 10, 50};
  auto split = [&](const auto& preds, const auto& gold) {
    const auto t = compute_metrics(preds, gold, ks);
    SplitReport r;
    r.f1_at_5 = t.f1[0];
    r.f1_at_10 = t.f1[1];
    r.r_at_10 = t.recall[1];
    r.r_at_50 = t.recall[2];
    r.documents = t.documents;
    r.targets = t.targets;
    r.predictions = t.predictions;
    return r;
  };
  EvalReport report;
  report.documents = docs.size();
  report.present = split(pred_present, gold_present);
  report.absent = split(pred_absent, gold_absent);

  for (std::size_t i = 0; i < docs.size(); ++i) {
    const int b = bucket_by_title_ratio(docs[i].title.size(), docs[i].context.size());
    auto& bucket = report.buckets[static_cast<std::size_t>(b - 1)];
    ++bucket.documents;
    if (stem_unique(gold_present[i]).empty()) continue;
    ++bucket.scored_documents;
    bucket.f1_at_5 += score_document(pred_present[i], gold_present[i], 5).f1;
  }
  for (auto& b : report.buckets) {
    if (b.scored_documents > 0) b.f1_at_5 /= static_cast<double>(b.scored_documents);
  }
  return report;
}

void to_json(nlohmann::json& j, const SplitReport& r) {
  j = nlohmann::json{{"F1@5", r.f1_at_5},         {"F1@10", r.f1_at_10},
                     {"R@10", r.r_at_10},         {"R@50", r.r_at_50},
                     {"documents", r.documents},  {"targets", r.targets},
                     {"predictions", r.predictions}};
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  static const char* const names[kBucketCount] = {"<3%", "3-6%", "6-9%", "9-12%", ">=12%"};
  nlohmann::json buckets = nlohmann::json::array();
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    buckets.push_back({{"bucket", b + 1},
                       {"range", names[b]},
                       {"documents", r.buckets[b].documents},
                       {"scored_documents", r.buckets[b].scored_documents},
                       {"F1@5", r.buckets[b].f1_at_5}});
  }
  j = nlohmann::json{
      {"documents", r.documents}, {"present", r.present}, {"absent", r.absent}, {"buckets", buckets}};
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "documents: %zu\n", r.documents);
  out += line;
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %6s %8s %8s\n", "split", "F1@5", "F1@10",
                "R@10", "R@50", "docs", "targets", "preds");
  out += line;
  auto row = [&](const char* name, const SplitReport& s) {
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %8.4f %6zu %8zu %8zu\n", name, s.f1_at_5,
                  s.f1_at_10, s.r_at_10, s.r_at_50, s.documents, s.targets, s.predictions);
    out += line;
  };
  row("present", r.present);
  row("absent", r.absent);
  out += "title/context ratio buckets (present F1@5):\n";
  static const char* const names[kBucketCount] = {"<3%", "3-6%", "6-9%", "9-12%", ">=12%"};
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    std::snprintf(line, sizeof line, "  %-6s docs %6zu  F1@5 %.4f\n", names[b],
                  r.buckets[b].documents, r.buckets[b].f1_at_5);
    out += line;
  }
  return out;
}

bool is_title_related(const Phrase& phrase, std::span<const std::string> title,
                      const StopwordSet& stopwords) {
  auto content = [&](const std::string& tok) {
    return std::any_of(tok.begin(), tok.end(), [](char c) { return c >= 'a' && c <= 'z'; }) &&
           tok != kDigitToken && stopwords.count(tok) == 0;
  };
  for (const auto& tok : phrase) {
    if (!content(tok)) continue;
    if (std::find(title.begin(), title.end(), tok) != title.end()) return true;
  }
  return false;
}

TitleRelatedStats title_related_stats(std::span<const Document> docs, const StopwordSet& stopwords) {
  TitleRelatedStats s;
  for (const auto& d : docs) {
    const auto ctx = d.context();
    const auto split = split_present_absent(d.keyphrases, ctx);
    for (const auto& p : split.present) {
      ++s.present.total;
      s.present.related += is_title_related(p, d.title, stopwords);
    }
    for (const auto& p : split.absent) {
      ++s.absent.total;
      s.absent.related += is_title_related(p, d.title, stopwords);
    }
  }
  for (auto* c : {&s.present, &s.absent}) {
    c->percentage = c->total ? 100.0 * static_cast<double>(c->related) / static_cast<double>(c->total)
                             : 0.0;
  }
  return s;
}

void to_json(nlohmann::json& j, const TitleRelatedStats& s) {
  auto one = [](const TitleRelatedCounts& c) {
    return nlohmann::json{{"total", c.total}, {"title_related", c.related}, {"percentage", c.percentage}};
  };
  j = nlohmann::json{{"present", one(s.present)}, {"absent", one(s.absent)}};
}

}  // namespace tgnet
