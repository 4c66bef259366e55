#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_fixtures.hpp"
#include "support.hpp"
#include "tgnet/model.hpp"

using namespace tgnet;
using tgtest::Gen;

namespace {

using Ids = std::span<const TokenId>;

std::size_t gru_count(std::size_t in, std::size_t hid) {
  const std::size_t per_gate = in * hid + hid * hid + hid;
  return 3 * per_gate;
}

// Symbolic count from the field list: embedding; context, title and merge
// bi-GRUs (halves of width d/2); decoder GRU; W1, W2, W3; output layer; switch.
std::size_t count_from_fields(std::size_t de, std::size_t d, std::size_t v, bool title, bool copy) {
  const std::size_t h = d / 2;
  std::size_t n = v * de;                   // embedding
  n += 2 * gru_count(de, h);                // context encoder
  if (title) {
    n += 2 * gru_count(de, h);              // title encoder
    n += d * d;                             // W1
    n += 2 * gru_count(2 * d, h);           // merging layer
  }
  n += gru_count(de + d, d);                // decoder GRU
  n += d * d;                               // W2
  n += d * 2 * d;                           // W3
  n += d * v + v;                           // W_v, b_v
  if (copy) n += d + 1;                     // w_g, b_g
  return n;
}

ModelParams<double> tiny_model(std::uint64_t seed, Ablation a = Ablation::full, std::size_t de = 4,
                               std::size_t d = 8, std::size_t v = 12) {
  auto hp = tgtest::tiny_hparams(de, d, v);
  hp.init_range = 0.5;
  Rng rng(seed);
  return build_model<double>(hp, a, rng);
}

Tensor<double> logits_of(std::initializer_list<double> probs) {
  std::vector<double> v;
  for (double p : probs) v.push_back(std::log(p));
  return Tensor<double>::row(v);
}

CopySwitchParams<double> switch_with_bias(std::size_t d, double b) {
  return {Tensor<double>::zeros({d, 1}), Tensor<double>::filled({1, 1}, b)};
}

}  // namespace

TEST_CASE("parameter count matches the field-list closed form") {
  SUBCASE("default sizes") {
    Hyperparams hp;
    CHECK(expected_parameter_count(hp, Ablation::full) == count_from_fields(100, 256, 50000, true, true));
    CHECK(expected_parameter_count(hp, Ablation::no_title) ==
          count_from_fields(100, 256, 50000, false, true));
    CHECK(expected_parameter_count(hp, Ablation::no_copy) ==
          count_from_fields(100, 256, 50000, true, false));
  }
  SUBCASE("built default-size model") {
    Hyperparams hp;
    Rng rng(1);
    const auto m = build_model<float>(hp, Ablation::full, rng);
    CHECK(m.parameter_count() == count_from_fields(100, 256, 50000, true, true));
  }
  SUBCASE("built tiny models") {
    for (auto a : {Ablation::full, Ablation::no_title, Ablation::no_copy}) {
      const auto m = tiny_model(2, a, 4, 8, 12);
      CHECK(m.parameter_count() ==
            count_from_fields(4, 8, 12, a != Ablation::no_title, a != Ablation::no_copy));
    }
  }
}

TEST_CASE("structural shapes of the full model") {
  const auto m = tiny_model(3, Ablation::full, 5, 6, 20);
  CHECK(m.title_guide->merge_fwd.input_width() == 12);
  CHECK(m.title_guide->merge_fwd.hidden_width() == 3);
  CHECK(m.decoder.input_width() == 5 + 6);
  CHECK(m.decoder.hidden_width() == 6);
  CHECK(m.attentional.shape() == Shape{12, 6});
  CHECK(m.output_w.shape() == Shape{6, 20});
  CHECK(m.copy_switch->w.shape() == Shape{6, 1});
}

TEST_CASE("same seed gives bitwise identical parameters") {
  CHECK(tgtest::params_bitwise_equal(tiny_model(7), tiny_model(7)));
  CHECK_FALSE(tgtest::params_bitwise_equal(tiny_model(7), tiny_model(8)));
}

TEST_CASE("ablations drop their parameters") {
  auto has = [](const std::vector<std::string>& names, const std::string& prefix) {
    return std::any_of(names.begin(), names.end(),
                       [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
  };
  const auto full = tiny_model(1).parameter_names();
  const auto nt = tiny_model(1, Ablation::no_title).parameter_names();
  const auto nc = tiny_model(1, Ablation::no_copy).parameter_names();
  for (const char* p : {"matching", "merging", "title_encoder"}) {
    CHECK(has(full, p));
    CHECK_FALSE(has(nt, p));
    CHECK(has(nc, p));
  }
  CHECK(has(full, "copy_switch"));
  CHECK(has(nt, "copy_switch"));
  CHECK_FALSE(has(nc, "copy_switch"));
}

TEST_CASE("initial values lie in the init range and GRU biases start at zero") {
  auto hp = tgtest::tiny_hparams();
  hp.init_range = 0.1;
  Rng rng(5);
  const auto m = build_model<double>(hp, Ablation::full, rng);
  m.visit([&](const std::string& name, const Tensor<double>& t) {
    const bool gru_bias = name.find(".b_") != std::string::npos;
    for (double v : t.values()) {
      CHECK(std::fabs(v) <= 0.1);
      if (gru_bias) CHECK(v == 0.0);
    }
  });
}

TEST_CASE("hyperparameter validation") {
  Hyperparams hp = tgtest::tiny_hparams();
  CHECK_NOTHROW(hp.validate());
  auto bad = hp;
  bad.lambda = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = hp;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = hp;
  bad.hidden_dim = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = hp;
  bad.vocab_size = Vocabulary::special_count;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("lambda = 1 collapses the bank to the context bi-GRU states") {
  auto m = tiny_model(11);
  m.hp.lambda = 1.0;
  const auto src = tgtest::tiny_source();
  const auto bank = encode_context(m, Ids(src.context_ids), Ids(src.title_ids));
  const auto u = bigru_encode(m.context_fwd, m.context_bwd, gather<double>(m.embedding, Ids(src.context_ids)));
  CHECK(tgtest::bitwise_equal(bank.states, u.states));
}

TEST_CASE("lambda = 0.5 with a silent merging layer halves u") {
  auto m = tiny_model(12);
  auto& g = *m.title_guide;
  g.merge_fwd = GruParams<double>::zeros(g.merge_fwd.input_width(), g.merge_fwd.hidden_width());
  g.merge_bwd = g.merge_fwd;
  const auto src = tgtest::tiny_source();
  const auto bank = encode_context(m, Ids(src.context_ids), Ids(src.title_ids));
  const auto u = bigru_encode(m.context_fwd, m.context_bwd, gather<double>(m.embedding, Ids(src.context_ids)));
  for (std::size_t i = 0; i < u.states.numel(); ++i) {
    CHECK(bank.states.values()[i] == 0.5 * u.states.values()[i]);
  }
}

TEST_CASE("encoder matches a composition of the layer operations at d = 2") {
  auto m = tiny_model(13, Ablation::full, 3, 2, 10);
  const std::vector<TokenId> ctx = {6, 8, 5}, title = {6};
  const auto bank = encode_context(m, Ids(ctx), Ids(title));

  const auto& g = *m.title_guide;
  const auto x = gather<double>(m.embedding, Ids(ctx));
  const auto u = bigru_encode(m.context_fwd, m.context_bwd, x);
  const auto v = bigru_encode(g.title_fwd, g.title_bwd, gather<double>(m.embedding, Ids(title)));
  // one title position: every context position attends to it with weight 1
  std::vector<double> merged_in;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto c = bilinear_attention(row_of(u.states, i), v.states, g.matching);
    CHECK(c.weights.item() == 1.0);
    const auto ui = row_of(u.states, i);
    for (double e : ui.values()) merged_in.push_back(e);
    for (double e : v.states.values()) merged_in.push_back(e);
  }
  const auto merged = bigru_encode(g.merge_fwd, g.merge_bwd, Tensor<double>({3, 4}, merged_in));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double want = 0.5 * u.states.at(i, k) + 0.5 * merged.states.at(i, k);
      CHECK(bank.states.at(i, k) == doctest::Approx(want).epsilon(1e-14));
    }
  }
  CHECK(bank.initial_state.at(0, 0) == doctest::Approx(merged.states.at(2, 0)).epsilon(1e-14));
  CHECK(bank.initial_state.at(0, 1) == doctest::Approx(merged.states.at(0, 1)).epsilon(1e-14));
}

TEST_CASE("no_title bank is u and the decoder starts from the context encoder") {
  const auto m = tiny_model(14, Ablation::no_title);
  const auto src = tgtest::tiny_source();
  const auto bank = encode_context(m, Ids(src.context_ids), Ids(src.title_ids));
  const auto u = bigru_encode(m.context_fwd, m.context_bwd, gather<double>(m.embedding, Ids(src.context_ids)));
  CHECK(tgtest::bitwise_equal(bank.states, u.states));
  CHECK(tgtest::bitwise_equal(bank.initial_state, concat2(u.last_forward, u.first_backward)));
}

TEST_CASE("encoder input validation") {
  const auto m = tiny_model(15);
  const std::vector<TokenId> ctx = {6, 7}, empty, wrong = {7};
  CHECK_THROWS_AS(encode_context(m, Ids(ctx), Ids(empty)), std::invalid_argument);
  CHECK_THROWS_AS(encode_context(m, Ids(empty), Ids(empty)), std::invalid_argument);
  CHECK_THROWS_AS(encode_context(m, Ids(ctx), Ids(wrong)), std::invalid_argument);
}

TEST_CASE("decoder step fixtures") {
  auto m = tiny_model(16, Ablation::full, 3, 2, 10);
  SUBCASE("bank of length 1") {
    const std::vector<TokenId> ctx = {6};
    const auto bank = encode_context(m, Ids(ctx), Ids(ctx));
    const auto step = decode_token(m, initial_decoder_state(bank), Vocabulary::bos, bank);
    CHECK(step.attention.item() == 1.0);
  }
  SUBCASE("zero output layer gives a uniform generation distribution") {
    m.output_w = Tensor<double>::zeros(m.output_w.shape());
    m.output_b = Tensor<double>::zeros(m.output_b.shape());
    const std::vector<TokenId> ctx = {6, 7};
    const auto bank = encode_context(m, Ids(ctx), Ids(ctx).first(1));
    const auto step = decode_token(m, initial_decoder_state(bank), Vocabulary::bos, bank);
    const auto pv = softmax(step.logits);
    for (double p : pv.values()) CHECK(p == doctest::Approx(0.1));
  }
  SUBCASE("hand-unrolled step at d = 2") {
    const std::vector<TokenId> ctx = {6, 7, 8};
    const auto bank = encode_context(m, Ids(ctx), Ids(ctx).first(1));
    const auto s0 = initial_decoder_state(bank);
    const auto step = decode_token(m, s0, Vocabulary::bos, bank);
    const auto e = row_of(m.embedding, static_cast<std::size_t>(Vocabulary::bos));
    std::vector<double> in(e.values().begin(), e.values().end());
    in.push_back(0.0);
    in.push_back(0.0);
    const auto h = gru_cell_step(m.decoder, Tensor<double>::row(in), bank.initial_state);
    // scores s_i = h W2 m_i, then softmax over the three positions
    double s[3], mx = -1e300, z = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
          acc += h.at(0, a) * m.decoder_attention.w.at(a, b) * bank.states.at(i, b);
        }
      }
      s[i] = acc;
      mx = std::max(mx, acc);
    }
    double w[3], c[2] = {0.0, 0.0};
    for (double& v : s) z += std::exp(v - mx);
    for (std::size_t i = 0; i < 3; ++i) {
      w[i] = std::exp(s[i] - mx) / z;
      CHECK(step.attention.at(0, i) == doctest::Approx(w[i]).epsilon(1e-12));
      for (std::size_t k = 0; k < 2; ++k) c[k] += w[i] * bank.states.at(i, k);
    }
    const double cat[4] = {c[0], c[1], h.at(0, 0), h.at(0, 1)};
    for (std::size_t k = 0; k < 2; ++k) {
      double acc = 0.0;
      for (std::size_t r = 0; r < 4; ++r) acc += cat[r] * m.attentional.at(r, k);
      CHECK(step.state.h_tilde.at(0, k) == doctest::Approx(std::tanh(acc)).epsilon(1e-12));
      CHECK(step.state.h.at(0, k) == doctest::Approx(h.at(0, k)).epsilon(1e-14));
    }
  }
  SUBCASE("width mismatch is rejected") {
    const std::vector<TokenId> ctx = {6};
    auto bank = encode_context(m, Ids(ctx), Ids(ctx));
    auto s = initial_decoder_state(bank);
    s.h = Tensor<double>::zeros({1, 3});
    CHECK_THROWS_AS(decode_token(m, s, Vocabulary::bos, bank), ShapeError);
  }
}

TEST_CASE("final distribution fixture with g = 0.4") {
  const auto logits = logits_of({0.2, 0.3, 0.5});
  const auto att = Tensor<double>::row({0.5, 0.3, 0.2});
  const auto ht = Tensor<double>::zeros({1, 2});
  const auto sw = switch_with_bias(2, std::log(0.4 / 0.6));
  const std::vector<TokenId> ext = {2, 2, 3};
  const auto p = final_distribution(logits, att, ht, &sw, Ids(ext), 1);
  const double want[] = {0.6 * 0.2, 0.6 * 0.3, 0.6 * 0.5 + 0.4 * 0.8, 0.4 * 0.2};
  REQUIRE(p.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(want[i]).epsilon(1e-12));
  CHECK(std::fabs(p[2] - 0.62) < 1e-12);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("copy switch saturation") {
  const auto logits = logits_of({0.1, 0.2, 0.3, 0.4});
  const auto att = Tensor<double>::row({0.25, 0.5, 0.25});
  const auto ht = Tensor<double>::row({0.3, -0.7});
  const std::vector<TokenId> ext = {1, 4, 1};
  SUBCASE("g near 0") {
    const auto sw = switch_with_bias(2, -50.0);
    const auto p = final_distribution(logits, att, ht, &sw, Ids(ext), 1);
    const double want[] = {0.1, 0.2, 0.3, 0.4, 0.0};
    for (std::size_t i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK(p[4] < 1e-20);
  }
  SUBCASE("g near 1 accumulates repeated context words") {
    const auto sw = switch_with_bias(2, 50.0);
    const auto p = final_distribution(logits, att, ht, &sw, Ids(ext), 1);
    const double want[] = {0.0, 0.5, 0.0, 0.0, 0.5};
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::fabs(p[i] - want[i]) < 1e-12);
  }
  SUBCASE("extended id out of range") {
    const auto sw = switch_with_bias(2, 0.0);
    const std::vector<TokenId> bad = {1, 5, 1};
    CHECK_THROWS_AS(final_distribution(logits, att, ht, &sw, Ids(bad), 1), std::out_of_range);
  }
}

TEST_CASE("final distribution is a probability vector with the generation/copy decomposition") {
  Gen g(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t v = 2 + g.index(8), len = 1 + g.index(6), oov = g.index(3), d = 3;
    const auto logits = g.tensor({1, v}, -5, 5);
    auto att_raw = g.tensor({1, len}, 0.0, 1.0);
    const auto att = softmax(att_raw);
    const auto ht = g.tensor({1, d});
    const CopySwitchParams<double> sw{g.tensor({d, 1}, -3, 3), g.tensor({1, 1}, -3, 3)};
    std::vector<TokenId> ext(len);
    for (auto& id : ext) id = static_cast<TokenId>(g.index(v + oov));
    const auto p = final_distribution(logits, att, ht, &sw, Ids(ext), oov);
    REQUIRE(p.size() == v + oov);
    double total = 0.0;
    for (double x : p) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::fabs(total - 1.0) < 1e-5);

    const double gate = copy_gate(ht, sw).item();
    const auto pv_t = softmax(logits);
    const auto pv = pv_t.values();
    double lhs = 0.0, rhs = 0.0;
    for (TokenId y = 0; y < v; ++y) {
      if (std::find(ext.begin(), ext.end(), y) != ext.end()) continue;
      lhs += p[y];
      rhs += (1.0 - gate) * pv[y];
    }
    CHECK(std::fabs(lhs - rhs) < 1e-12);

    const auto no_copy = final_distribution<double>(logits, att, ht, nullptr, Ids(ext), oov);
    for (std::size_t i = v; i < v + oov; ++i) CHECK(no_copy[i] == 0.0);

    // tracked single-target path agrees with the full vector
    for (TokenId y = 0; y < v + oov; ++y) {
      CHECK(std::fabs(target_probability(logits, att, ht, &sw, Ids(ext), y).item() - p[y]) < 1e-12);
    }
  }
}

TEST_CASE("nll loss fixtures") {
  SUBCASE("certain targets cost nothing") {
    const std::vector<Tensor<double>> d = {Tensor<double>::row({0.0, 1.0}), Tensor<double>::row({1.0, 0.0})};
    const std::vector<TokenId> y = {1, 0};
    CHECK(nll_loss<double>(d, y).item() == 0.0);
  }
  SUBCASE("uniform over four symbols for two steps") {
    const auto u = Tensor<double>::filled({1, 4}, 0.25);
    const std::vector<Tensor<double>> d = {u, u};
    const std::vector<TokenId> y = {0, 3};
    const double got = nll_loss<double>(d, y).item();
    CHECK(got == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-14));
    CHECK(std::fabs(got - 2.7726) < 1e-4);
  }
  SUBCASE("single step at probability one half") {
    const std::vector<Tensor<double>> d = {Tensor<double>::row({0.5, 0.5})};
    const std::vector<TokenId> y = {1};
    const double got = nll_loss<double>(d, y).item();
    CHECK(got == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(std::fabs(got - 0.6931) < 1e-4);
  }
  SUBCASE("padding mask skips steps") {
    const std::vector<Tensor<double>> d = {Tensor<double>::row({0.5, 0.5}), Tensor<double>::row({0.1, 0.9})};
    const std::vector<TokenId> y = {1, 0};
    const std::uint8_t valid[] = {1, 0};
    CHECK(nll_loss<double>(d, y, ValidMask(valid)).item() == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("zero probability is clamped and reported") {
    const std::vector<Tensor<double>> d = {Tensor<double>::row({1.0, 0.0}), Tensor<double>::row({0.5, 0.5})};
    const std::vector<TokenId> y = {1, 0};
    LossDiagnostics diag;
    const double got = nll_loss<double>(d, y, {}, &diag).item();
    CHECK(got == doctest::Approx(-std::log(1e-12) + std::log(2.0)));
    CHECK(diag.clamped == 1);
    CHECK(diag.tokens == 2);
  }
  SUBCASE("length mismatch") {
    const std::vector<Tensor<double>> d = {Tensor<double>::row({1.0})};
    const std::vector<TokenId> y = {0, 0};
    CHECK_THROWS_AS(nll_loss<double>(d, y), ShapeError);
  }
}

TEST_CASE("sequence loss equals the summed -log of the inference distribution") {
  const auto m = tiny_model(21);
  const auto src = tgtest::tiny_source();
  const std::vector<TokenId> target = {12, 5, Vocabulary::eos};
  const auto bank = encode_context(m, Ids(src.context_ids), Ids(src.title_ids));
  double want = 0.0;
  auto state = initial_decoder_state(bank);
  for (TokenId y : target) {
    const auto step = decode_token(m, state, state.last, bank);
    const auto p = final_distribution(step.logits, step.attention, step.state.h_tilde,
                                      &*m.copy_switch, Ids(src.extended_ids), src.oov_count());
    want -= std::log(p[y]);
    state = step.state;
    state.last = y;
  }
  CHECK(sequence_loss(m, bank, src, target).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("no_copy maps OOV targets to UNK") {
  const auto m = tiny_model(22, Ablation::no_copy);
  const auto src = tgtest::tiny_source();
  const auto bank = encode_context(m, Ids(src.context_ids), Ids(src.title_ids));
  const std::vector<TokenId> oov = {12, Vocabulary::eos}, unk = {Vocabulary::unk, Vocabulary::eos};
  CHECK(sequence_loss(m, bank, src, oov).item() == sequence_loss(m, bank, src, unk).item());
}

TEST_CASE("batch loss is the mean of per-triplet losses") {
  const auto m = tiny_model(23);
  auto src = std::make_shared<const SourceEncoding>(tgtest::tiny_source());
  std::vector<Triplet> batch = {{src, {12, Vocabulary::eos}, 0}, {src, {5, 7, Vocabulary::eos}, 0}};
  const auto bank = encode_context(m, Ids(src->context_ids), Ids(src->title_ids));
  const double a = sequence_loss(m, bank, *src, batch[0].target_ids).item();
  const double b = sequence_loss(m, bank, *src, batch[1].target_ids).item();
  CHECK(batch_loss<double>(m, batch).item() == doctest::Approx((a + b) / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(batch_loss<double>(m, std::span<const Triplet>()), std::invalid_argument);
}

TEST_CASE("end-to-end gradients agree with finite differences") {
  for (auto a : {Ablation::full, Ablation::no_title, Ablation::no_copy}) {
    const auto report = tgtest::model_gradient_check(31, a);
    INFO("ablation " << ablation_name(a) << " worst " << report.worst_parameter << "["
                     << report.worst_index << "]");
    CHECK(report.entries_checked == expected_parameter_count(tgtest::tiny_hparams(4, 8, 12), a));
    CHECK(report.max_relative_error < 1e-4);
  }
}

TEST_CASE("precision casts round-trip") {
  const auto m = tiny_model(40);
  const auto f = m.cast<float>();
  const auto back = f.cast<double>();
  CHECK(back.parameter_names() == m.parameter_names());
  bool ok = true;
  std::vector<double> orig;
  m.visit([&](const std::string&, const Tensor<double>& t) {
    for (double v : t.values()) orig.push_back(v);
  });
  std::size_t i = 0;
  back.visit([&](const std::string&, const Tensor<double>& t) {
    for (double v : t.values()) ok = ok && v == static_cast<double>(static_cast<float>(orig[i++]));
  });
  CHECK(ok);
}
