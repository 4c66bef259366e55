#include <benchmark/benchmark.h>

#include <random>

#include "tgnet/model.hpp"
#include "tgnet/search.hpp"
#include "tgnet/train.hpp"

using namespace tgnet;

namespace {

Tensor<float> random_tensor(Shape shape, Rng& rng) { return uniform_tensor<float>(std::move(shape), 1.0, rng); }

SourceEncoding random_source(std::size_t len, std::size_t title_len, std::size_t vocab, Rng& rng) {
  std::uniform_int_distribution<TokenId> word(Vocabulary::special_count, static_cast<TokenId>(vocab - 1));
  SourceEncoding s;
  for (std::size_t i = 0; i < len; ++i) s.context_ids.push_back(word(rng));
  s.extended_ids = s.context_ids;
  s.title_ids.assign(s.context_ids.begin(), s.context_ids.begin() + static_cast<std::ptrdiff_t>(title_len));
  return s;
}

Hyperparams bench_hparams(std::size_t vocab) {
  Hyperparams hp;
  hp.vocab_size = vocab;
  hp.dropout = 0.0;
  return hp;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_tensor({1, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 512);

static void BM_GruStep(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto gru = GruParams<float>::uniform(100, d, 0.1, rng);
  const auto x = random_tensor({1, 100}, rng);
  auto h = random_tensor({1, d}, rng);
  for (auto _ : state) {
    h = gru_cell_step(gru, x, h);
    benchmark::DoNotOptimize(h);
  }
}
BENCHMARK(BM_GruStep)->Arg(128)->Arg(256);

// One decoder step with the default sizes: attention over the bank, output
// projection onto |V| and the copy-augmented distribution.
static void BM_DecodeStep(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto m = build_model<float>(bench_hparams(vocab), Ablation::full, rng);
  const auto src = random_source(200, 10, vocab, rng);
  const auto bank = encode_context(m, std::span<const TokenId>(src.context_ids),
                                   std::span<const TokenId>(src.title_ids));
  const auto init = initial_decoder_state(bank);
  for (auto _ : state) {
    const auto step = decode_token(m, init, Vocabulary::bos, bank);
    benchmark::DoNotOptimize(final_distribution(step.logits, step.attention, step.state.h_tilde,
                                                &*m.copy_switch, std::span<const TokenId>(src.extended_ids), 0));
  }
}
BENCHMARK(BM_DecodeStep)->Arg(5000)->Arg(50000)->Unit(benchmark::kMicrosecond);

static void BM_EncodeContext(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const auto m = build_model<float>(bench_hparams(5000), Ablation::full, rng);
  const auto src = random_source(len, 10, 5000, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_context(m, std::span<const TokenId>(src.context_ids),
                                            std::span<const TokenId>(src.title_ids)));
  }
}
BENCHMARK(BM_EncodeContext)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

static void BM_BeamSearch(benchmark::State& state) {
  const auto beam = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  auto hp = bench_hparams(2000);
  hp.embedding_dim = 32;
  hp.hidden_dim = 64;
  const auto m = build_model<float>(hp, Ablation::full, rng);
  const auto src = random_source(100, 8, 2000, rng);
  for (auto _ : state) benchmark::DoNotOptimize(predict(m, src, {beam, 6, false}));
}
BENCHMARK(BM_BeamSearch)->Arg(10)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

// Forward, backward and Adam update for one 8-triplet batch.
static void BM_TrainStep(benchmark::State& state) {
  Rng rng(6);
  auto hp = bench_hparams(2000);
  hp.embedding_dim = 32;
  hp.hidden_dim = 64;
  auto m = build_model<float>(hp, Ablation::full, rng);
  const auto src = std::make_shared<const SourceEncoding>(random_source(100, 8, 2000, rng));
  std::vector<Triplet> batch;
  for (TokenId k = 0; k < 8; ++k) batch.push_back({src, {src->context_ids[k], src->context_ids[k + 1], Vocabulary::eos}, 0});
  auto opt = OptimizerState<float>::init(m.parameters(), hp.learning_rate);
  for (auto _ : state) {
    Tape<float> tape;
    const auto bound = m.bind(tape);
    const auto grads = tape.backward(batch_loss(bound, std::span<const Triplet>(batch)));
    std::vector<Tensor<float>> g;
    bound.visit([&](const std::string&, const Tensor<float>& t) { g.push_back(grads.of(t)); });
    clip_gradients<float>(g, hp.clip_norm);
    adam_step<float>(m.parameters(), g, opt);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
