#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "tgnet/eval.hpp"
#include "tgnet/porter.hpp"
#include "tgnet/stopwords.hpp"

using namespace tgnet;

namespace {

Phrase ph(std::string_view text) { return tokenize_and_normalize(text); }

std::vector<Phrase> phrases(std::initializer_list<std::string_view> texts) {
  std::vector<Phrase> out;
  for (auto t : texts) out.push_back(ph(t));
  return out;
}

Document doc(std::string_view title, std::string_view abstract,
             std::initializer_list<std::string_view> kps) {
  return {tokenize_and_normalize(title), tokenize_and_normalize(abstract), phrases(kps)};
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

TEST_CASE("porter stemmer matches the bundled reference vocabulary") {
  std::ifstream in(std::string(TGNET_TEST_DATA) + "/porter_reference.tsv");
  REQUIRE(in.good());
  std::string line;
  std::size_t total = 0, matched = 0;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const auto word = line.substr(0, tab), stem = line.substr(tab + 1);
    ++total;
    if (porter_stem(word) == stem) {
      ++matched;
    } else {
      FAIL_CHECK(word << " -> " << porter_stem(word) << ", expected " << stem);
    }
  }
  CHECK(total == 200);
  CHECK(matched == total);
}

TEST_CASE("porter stemmer fixtures") {
  CHECK(porter_stem("caresses") == "caress");
  CHECK(porter_stem("sky") == "sky");
  CHECK(porter_stem("relational") == "relat");
  CHECK(porter_stem("ponies") == "poni");
  CHECK(porter_stem("as") == "as");
  CHECK(porter_stem("<digit>") == "<digit>");
  CHECK(porter_stem("b2b") == "b2b");
  CHECK(porter_stem("") == "");
}

TEST_CASE("present/absent split") {
  const auto ctx = tokenize_and_normalize("neural keyphrase generation with copy attention");
  CHECK(occurs_in_context(ph("neural keyphrase"), ctx));
  CHECK_FALSE(occurs_in_context(ph("neural summarization"), ctx));
  CHECK_FALSE(occurs_in_context(ph("keyphrase neural"), ctx));
  CHECK(occurs_in_context(ph("copy attentions"), ctx));  // stemmed match
  CHECK_FALSE(occurs_in_context(Phrase{}, ctx));
  const auto split = split_present_absent(phrases({"copy attention", "deep learning", "generation"}), ctx);
  CHECK(split.present == phrases({"copy attention", "generation"}));
  CHECK(split.absent == phrases({"deep learning"}));
}

TEST_CASE("present/absent split on the example record") {
  const auto c = load_corpus(std::string(TGNET_TEST_DATA) + "/example_record.jsonl");
  REQUIRE(c.documents.size() == 1);
  const auto& d = c.documents[0];
  const auto ctx = d.context();
  CHECK(occurs_in_context(ph("relevance profiling"), ctx));
  CHECK_FALSE(occurs_in_context(ph("interactive information retrieval"), ctx));
  CHECK_FALSE(occurs_in_context(ph("task-oriented evaluation"), ctx));
  const auto split = split_present_absent(d.keyphrases, ctx);
  CHECK(split.present.size() == 1);
  CHECK(split.absent.size() == 2);
}

TEST_CASE("metric fixtures") {
  SUBCASE("predictions equal to targets") {
    const auto t = phrases({"a b", "c", "d e f"});
    const auto s = score_document(t, t, 5);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);
  }
  SUBCASE("no overlap") {
    const auto s = score_document(phrases({"x", "y"}), phrases({"a", "b"}), 5);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f1 == 0.0);
  }
  SUBCASE("two of the top five correct, four targets") {
    const auto preds = phrases({"a", "x", "b", "y", "z", "c"});
    const auto s = score_document(preds, phrases({"a", "b", "c", "d"}), 5);
    CHECK(s.precision == 2.0 / 5.0);
    CHECK(s.recall == 2.0 / 4.0);
    CHECK(s.f1 == doctest::Approx(4.0 / 9.0).epsilon(1e-15));
    CHECK(std::fabs(s.f1 - 0.4444) < 1e-4);
  }
  SUBCASE("fewer predictions than the cutoff") {
    const auto s = score_document(phrases({"a", "x"}), phrases({"a", "b", "c"}), 5);
    CHECK(s.precision == 1.0 / 2.0);
    CHECK(s.recall == 1.0 / 3.0);
    CHECK(s.f1 == doctest::Approx(0.4).epsilon(1e-15));
  }
  SUBCASE("stemmed matching with stem-level duplicates removed") {
    // "models" and "model" share a stem, so the second copy is dropped before the cutoff
    const auto s = score_document(phrases({"neural models", "neural model", "graphs"}),
                                  phrases({"neural model", "graph", "trees"}), 2);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 2.0 / 3.0);
    CHECK(s.f1 == doctest::Approx(0.8).epsilon(1e-15));
  }
}

TEST_CASE("macro averaging skips documents without targets") {
  const std::vector<std::vector<Phrase>> preds = {phrases({"a", "x"}), phrases({"q"}), phrases({"b"})};
  const std::vector<std::vector<Phrase>> targets = {phrases({"a"}), {}, phrases({"c"})};
  const std::size_t ks[] = {1, 2};
  const auto t = compute_metrics(preds, targets, ks);
  CHECK(t.documents == 2);
  CHECK(t.targets == 2);
  CHECK(t.predictions == 4);
  CHECK(t.f1[0] == doctest::Approx((1.0 + 0.0) / 2.0));
  CHECK(t.f1[1] == doctest::Approx((f1_of(0.5, 1.0) + 0.0) / 2.0));
  CHECK(t.recall[1] == doctest::Approx(0.5));
  const std::vector<std::vector<Phrase>> short_targets = {phrases({"a"})};
  CHECK_THROWS_AS(compute_metrics(preds, short_targets, ks), std::invalid_argument);
}

TEST_CASE("recall at K never decreases with K and all scores lie in [0, 1]") {
  tgtest::Gen g(123);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
  const std::size_t ks[] = {1, 2, 3, 5, 10, 50};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<Phrase>> preds(3), targets(3);
    for (std::size_t d = 0; d < 3; ++d) {
      for (std::size_t i = g.index(12); i > 0; --i) preds[d].push_back({pool[g.index(pool.size())]});
      for (std::size_t i = g.index(5); i > 0; --i) targets[d].push_back({pool[g.index(pool.size())]});
    }
    const auto t = compute_metrics(preds, targets, ks);
    for (std::size_t i = 0; i < std::size(ks); ++i) {
      for (double v : {t.precision[i], t.recall[i], t.f1[i]}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      if (i > 0) CHECK(t.recall[i] >= t.recall[i - 1]);
    }
  }
}

TEST_CASE("F1 at K can fall as K grows because precision uses the top-K count") {
  const auto preds = phrases({"a", "x"});
  const auto targets = phrases({"a"});
  CHECK(score_document(preds, targets, 1).f1 == 1.0);
  CHECK(score_document(preds, targets, 2).f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("title length buckets") {
  CHECK(bucket_by_title_ratio(5, 100) == 2);
  CHECK(bucket_by_title_ratio(3, 100) == 2);
  CHECK(bucket_by_title_ratio(13, 100) == 5);
  CHECK(bucket_by_title_ratio(0, 10) == 1);
  CHECK(bucket_by_title_ratio(6, 100) == 3);
  CHECK(bucket_by_title_ratio(9, 100) == 4);
  CHECK(bucket_by_title_ratio(12, 100) == 5);
  CHECK(bucket_by_title_ratio(1, 34) == 1);  // 2.94%
  CHECK(bucket_by_title_ratio(1, 33) == 2);  // 3.03%
  CHECK_THROWS_AS(bucket_by_title_ratio(0, 0), std::invalid_argument);
}

TEST_CASE("six-document bucket fixture") {
  auto words = [](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += "w ";
    return s;
  };
  // (title, abstract) -> ratio: 1/50 = 2%, 3/100 = 3%, 2/32 = 6.25%,
  // 4/44 = 9.09%, 1/8 = 12.5%, 5/50 = 10%
  const std::pair<std::size_t, std::size_t> sizes[] = {{1, 49}, {3, 97}, {2, 30}, {4, 40}, {1, 7}, {5, 45}};
  std::vector<Document> docs;
  for (auto [t, a] : sizes) docs.push_back(doc(words(t), words(a), {"w"}));
  CHECK(bucket_by_title_ratio(docs) == std::vector<int>{1, 2, 3, 4, 5, 4});
}

TEST_CASE("title-related statistics") {
  const auto& stop = default_stopwords();
  CHECK(default_stopwords().size() == 170);
  CHECK(kStopwordListVersion == "tgnet-en-1");
  const auto title = tokenize_and_normalize("The art of retrieval");
  CHECK_FALSE(is_title_related(ph("the web"), title, stop));
  CHECK(is_title_related(ph("interactive information retrieval"), title, stop));
  CHECK_FALSE(is_title_related(ph("retrievals"), title, stop));  // exact tokens, not stems

  SUBCASE("four-document fixture") {
    // present:  graph neural networks (R), document ranking, query logs, text,
    //           sparse codes (R), dictionary learning          -> 2 / 6
    // absent:   information retrieval (R), the web, search engines (R),
    //           <digit> benchmark, learning theory (R), compressed sensing -> 3 / 6
    const std::vector<Document> docs = {
        doc("graph neural networks for retrieval", "we propose graph models for document ranking",
            {"graph neural networks", "document ranking", "information retrieval"}),
        doc("the art of the search", "a study of query logs", {"query logs", "the web", "search engines"}),
        doc("deep learning 2019", "models trained in 2020 on text",
            {"text", "2019 benchmark", "learning theory"}),
        doc("sparse coding", "dictionary learning with sparse codes",
            {"sparse codes", "dictionary learning", "compressed sensing"}),
    };
    const auto s = title_related_stats(docs, stop);
    CHECK(s.present.total == 6);
    CHECK(s.present.related == 2);
    CHECK(s.present.percentage == doctest::Approx(100.0 * 2.0 / 6.0).epsilon(1e-15));
    CHECK(s.absent.total == 6);
    CHECK(s.absent.related == 3);
    CHECK(s.absent.percentage == 50.0);
    nlohmann::json j = s;
    CHECK(j["present"]["title_related"] == 2);
  }
}

TEST_CASE("evaluate reports both splits and the title buckets") {
  std::vector<EvalDocument> docs;
  // doc 0: ratio 2/10 -> bucket 5; present target "a b" predicted first
  docs.push_back({ph("a b"), ph("a b c d e f g h"), phrases({"a b", "zz"}), phrases({"a b", "c d", "zz"})});
  // doc 1: ratio 1/40 -> bucket 1; nothing right
  std::string body = "x";
  for (int i = 0; i < 39; ++i) body += " y";
  docs.push_back({ph("x"), ph(body), phrases({"x y", "qq"}), phrases({"y x"})});
  const auto r = evaluate(docs);
  CHECK(r.documents == 2);
  CHECK(r.present.documents == 2);
  CHECK(r.present.targets == 2);
  // doc 0 present predictions: "a b", "c d" -> P@5 = 1/2, R = 1
  CHECK(r.present.f1_at_5 == doctest::Approx((f1_of(0.5, 1.0) + 0.0) / 2.0));
  CHECK(r.absent.documents == 2);
  // doc 0 absent predictions: "zz" -> hit; doc 1 absent predictions: "y x" (absent), miss
  CHECK(r.absent.r_at_10 == doctest::Approx(0.5));
  std::size_t bucket_docs = 0;
  for (const auto& b : r.buckets) bucket_docs += b.documents;
  CHECK(bucket_docs == r.documents);
  CHECK(r.buckets[4].documents == 1);
  CHECK(r.buckets[0].documents == 1);
  CHECK(r.buckets[4].f1_at_5 == doctest::Approx(f1_of(0.5, 1.0)));
  nlohmann::json j = r;
  CHECK(j["present"].contains("F1@5"));
  CHECK(j["absent"].contains("R@50"));
  CHECK(format_report(r).find("F1@5") != std::string::npos);
}
