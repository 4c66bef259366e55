#include "tgnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tgnet {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_title: return "no_title";
    case Ablation::no_copy: return "no_copy";
  }
  return "?";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::full;
  if (name == "no_title" || name == "-title") return Ablation::no_title;
  if (name == "no_copy" || name == "-copy") return Ablation::no_copy;
  throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
}

void Hyperparams::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("hyperparams: " + why); };
  if (embedding_dim == 0) fail("embedding_dim must be positive");
  if (hidden_dim == 0 || hidden_dim % 2 != 0) fail("hidden_dim must be positive and even");
  if (!(lambda > 0.0 && lambda < 1.0)) fail("lambda must lie in (0, 1)");
  if (vocab_size <= Vocabulary::special_count) fail("vocab_size must exceed the special tokens");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (beam_size == 0 || max_depth == 0) fail("beam_size and max_depth must be positive");
  if (!(init_range > 0.0)) fail("init_range must be positive");
  if (max_context_len == 0) fail("max_context_len must be positive");
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"embedding_dim", hp.embedding_dim}, {"hidden_dim", hp.hidden_dim},
                     {"lambda", hp.lambda},               {"vocab_size", hp.vocab_size},
                     {"dropout", hp.dropout},             {"batch_size", hp.batch_size},
                     {"learning_rate", hp.learning_rate}, {"clip_norm", hp.clip_norm},
                     {"beam_size", hp.beam_size},         {"max_depth", hp.max_depth},
                     {"init_range", hp.init_range},       {"max_context_len", hp.max_context_len}};
}

void from_json(const nlohmann::json& j, Hyperparams& hp) {
  hp = Hyperparams{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("embedding_dim", hp.embedding_dim);
  get("hidden_dim", hp.hidden_dim);
  get("lambda", hp.lambda);
  get("vocab_size", hp.vocab_size);
  get("dropout", hp.dropout);
  get("batch_size", hp.batch_size);
  get("learning_rate", hp.learning_rate);
  get("clip_norm", hp.clip_norm);
  get("beam_size", hp.beam_size);
  get("max_depth", hp.max_depth);
  get("init_range", hp.init_range);
  get("max_context_len", hp.max_context_len);
}

// ---------------------------------------------------------------------------
// ModelParams

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  visit([&](const std::string& name, Tensor<T>& t) { out.push_back({name, &t}); });
  return out;
}

template <typename T>
std::vector<std::string> ModelParams<T>::parameter_names() const {
  std::vector<std::string> out;
  visit([&](const std::string& name, const Tensor<T>&) { out.push_back(name); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::bind(Tape<T>& tape) const {
  ModelParams out = *this;
  out.visit([&](const std::string&, Tensor<T>& t) { t = tape.leaf(t.detached()); });
  return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.hp = hp;
  out.ablation = ablation;
  if (title_guide) out.title_guide.emplace();
  if (copy_switch) out.copy_switch.emplace();
  std::vector<const Tensor<T>*> src;
  visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Tensor<U>& t) {
    const auto v = src[i++]->values();
    t = Tensor<U>(src[i - 1]->shape(), std::vector<U>(v.begin(), v.end()));
  });
  return out;
}

template <typename T>
ModelParams<T> build_model(const Hyperparams& hp, Ablation ablation, Rng& rng) {
  hp.validate();
  const std::size_t de = hp.embedding_dim, d = hp.hidden_dim, half = d / 2, v = hp.vocab_size;
  const double r = hp.init_range;
  ModelParams<T> m;
  m.hp = hp;
  m.ablation = ablation;
  m.embedding = uniform_tensor<T>({v, de}, r, rng);
  m.context_fwd = GruParams<T>::uniform(de, half, r, rng);
  m.context_bwd = GruParams<T>::uniform(de, half, r, rng);
  if (ablation != Ablation::no_title) {
    TitleGuideParams<T> g;
    g.title_fwd = GruParams<T>::uniform(de, half, r, rng);
    g.title_bwd = GruParams<T>::uniform(de, half, r, rng);
    g.matching.w = uniform_tensor<T>({d, d}, r, rng);
    g.merge_fwd = GruParams<T>::uniform(2 * d, half, r, rng);
    g.merge_bwd = GruParams<T>::uniform(2 * d, half, r, rng);
    m.title_guide = std::move(g);
  }
  m.decoder = GruParams<T>::uniform(de + d, d, r, rng);
  m.decoder_attention.w = uniform_tensor<T>({d, d}, r, rng);
  m.attentional = uniform_tensor<T>({2 * d, d}, r, rng);
  m.output_w = uniform_tensor<T>({d, v}, r, rng);
  m.output_b = uniform_tensor<T>({1, v}, r, rng);
  if (ablation != Ablation::no_copy) {
    CopySwitchParams<T> c;
    c.w = uniform_tensor<T>({d, 1}, r, rng);
    c.b = uniform_tensor<T>({1, 1}, r, rng);
    m.copy_switch = std::move(c);
  }
  return m;
}

std::size_t expected_parameter_count(const Hyperparams& hp, Ablation ablation) {
  const std::size_t de = hp.embedding_dim, d = hp.hidden_dim, h = d / 2, v = hp.vocab_size;
  auto gru = [](std::size_t in, std::size_t hid) { return 3 * (in * hid + hid * hid + hid); };
  std::size_t n = v * de + 2 * gru(de, h);
  if (ablation != Ablation::no_title) n += 2 * gru(de, h) + d * d + 2 * gru(2 * d, h);
  n += gru(de + d, d) + d * d + 2 * d * d + d * v + v;
  if (ablation != Ablation::no_copy) n += d + 1;
  return n;
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

template <typename T>
Tensor<T> embed(const ModelParams<T>& params, std::span<const TokenId> ids, const ForwardMode& mode) {
  auto x = gather<T>(params.embedding, ids);
  if (mode.training && params.hp.dropout > 0.0) {
    if (!mode.rng) throw std::invalid_argument("training forward pass needs an rng");
    x = dropout(x, params.hp.dropout, true, *mode.rng);
  }
  return x;
}

template <typename T>
Tensor<T> maybe_dropout(const ModelParams<T>& params, const Tensor<T>& x, const ForwardMode& mode) {
  if (!mode.training || params.hp.dropout == 0.0) return x;
  if (!mode.rng) throw std::invalid_argument("training forward pass needs an rng");
  return dropout(x, params.hp.dropout, true, *mode.rng);
}

}  // namespace

template <typename T>
MemoryBank<T> encode_context(const ModelParams<T>& params, std::span<const TokenId> context_ids,
                             std::span<const TokenId> title_ids, const ForwardMode& mode,
                             ValidMask context_valid, ValidMask title_valid) {
  if (context_ids.empty()) throw std::invalid_argument("encode_context: empty context");
  if (title_ids.empty()) throw std::invalid_argument("encode_context: empty title");
  if (title_ids.size() > context_ids.size() ||
      !std::equal(title_ids.begin(), title_ids.end(), context_ids.begin())) {
    throw std::invalid_argument("encode_context: title is not the leading part of the context");
  }
  const double lambda = params.hp.lambda;
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("encode_context: lambda");

  MemoryBank<T> bank;
  bank.valid.assign(context_valid.begin(), context_valid.end());
  const auto x = embed(params, context_ids, mode);
  const auto u = bigru_encode(params.context_fwd, params.context_bwd, x, context_valid);
  if (!params.title_guide) {
    bank.states = u.states;
    bank.initial_state = concat2(u.last_forward, u.first_backward);
    return bank;
  }
  const auto& g = *params.title_guide;
  const auto t = embed(params, title_ids, mode);
  const auto v = bigru_encode(g.title_fwd, g.title_bwd, t, title_valid);
  const auto matched = bilinear_attention(u.states, v.states, g.matching, title_valid);
  const auto merged =
      bigru_encode(g.merge_fwd, g.merge_bwd, concat2(u.states, matched.context), context_valid);
  bank.states = add(scale(u.states, lambda), scale(merged.states, 1.0 - lambda));
  bank.initial_state = concat2(merged.last_forward, merged.first_backward);
  return bank;
}

// ---------------------------------------------------------------------------
// Decoder

template <typename T>
DecoderState<T> initial_decoder_state(const MemoryBank<T>& bank) {
  return {bank.initial_state, Tensor<T>::zeros({1, bank.initial_state.cols()}), Vocabulary::bos};
}

template <typename T>
DecodeStep<T> decode_step(const ModelParams<T>& params, const DecoderState<T>& state,
                          const Tensor<T>& prev_embedding, const MemoryBank<T>& bank,
                          const ForwardMode& mode) {
  const std::size_t d = params.hidden_dim();
  if (bank.length() == 0) throw std::invalid_argument("decode_step: empty memory bank");
  if (state.h.shape() != Shape{1, d} || state.h_tilde.shape() != Shape{1, d} ||
      bank.states.cols() != d) {
    throw ShapeError("decode_step: state " + shape_str(state.h.shape()) + " / bank " +
                     shape_str(bank.states.shape()) + " vs hidden width " + std::to_string(d));
  }
  DecodeStep<T> out;
  const auto h = gru_cell_step(params.decoder, concat2(prev_embedding, state.h_tilde), state.h);
  const auto att = bilinear_attention(h, bank.states, params.decoder_attention, ValidMask(bank.valid));
  auto h_tilde = tanh(matmul(concat2(att.context, h), params.attentional));
  h_tilde = maybe_dropout(params, h_tilde, mode);
  out.logits = add(matmul(h_tilde, params.output_w), params.output_b);
  out.attention = att.weights;
  out.state = {h, h_tilde, state.last};
  return out;
}

template <typename T>
DecodeStep<T> decode_token(const ModelParams<T>& params, const DecoderState<T>& state,
                           TokenId token, const MemoryBank<T>& bank, const ForwardMode& mode) {
  const TokenId input = token < params.vocab_size() ? token : Vocabulary::unk;
  const TokenId ids[] = {input};
  auto step = decode_step(params, state, embed(params, ids, mode), bank, mode);
  step.state.last = token;
  return step;
}

template <typename T>
Tensor<T> copy_gate(const Tensor<T>& h_tilde, const CopySwitchParams<T>& copy) {
  return sigmoid(add(matmul(h_tilde, copy.w), copy.b));
}

template <typename T>
std::vector<double> final_distribution(const Tensor<T>& gen_logits, const Tensor<T>& attention,
                                       const Tensor<T>& h_tilde, const CopySwitchParams<T>* copy,
                                       std::span<const TokenId> context_extended_ids,
                                       std::size_t oov_count) {
  const std::size_t v = gen_logits.numel();
  const std::size_t total = v + oov_count;
  const auto att = attention.values();
  if (att.size() != context_extended_ids.size()) {
    throw ShapeError("final_distribution: attention over " + std::to_string(att.size()) +
                     " positions vs context of " + std::to_string(context_extended_ids.size()));
  }
  for (TokenId id : context_extended_ids) {
    if (id >= total) {
      throw std::out_of_range("final_distribution: extended id " + std::to_string(id) +
                              " outside dynamic vocabulary of " + std::to_string(total));
    }
  }
  const auto logits = gen_logits.values();
  std::vector<double> p(total, 0.0);
  double mx = logits[0];
  for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double z = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    z += p[i];
  }
  double g = 0.0;
  if (copy) {
    const auto hv = h_tilde.values();
    const auto wv = copy->w.values();
    double s = static_cast<double>(copy->b.item());
    for (std::size_t k = 0; k < hv.size(); ++k) {
      s += static_cast<double>(hv[k]) * static_cast<double>(wv[k]);
    }
    g = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  }
  for (std::size_t i = 0; i < v; ++i) p[i] = (1.0 - g) * (p[i] / z);
  if (copy) {
    for (std::size_t i = 0; i < att.size(); ++i) p[context_extended_ids[i]] += g * att[i];
  }
  return p;
}

template <typename T>
Tensor<T> target_probability(const Tensor<T>& gen_logits, const Tensor<T>& attention,
                             const Tensor<T>& h_tilde, const CopySwitchParams<T>* copy,
                             std::span<const TokenId> context_extended_ids, TokenId target) {
  const std::size_t v = gen_logits.cols();
  const auto p_v = softmax(gen_logits);
  if (!copy) {
    if (target >= v) throw std::out_of_range("target_probability: OOV target without copying");
    return slice(p_v, target, 1);
  }
  const auto g = copy_gate(h_tilde, *copy);
  std::optional<Tensor<T>> prob;
  if (target < v) {
    const auto one = Tensor<T>::filled({1, 1}, T{1});
    prob = mul(sub(one, g), slice(p_v, target, 1));
  }
  std::vector<T> indicator(context_extended_ids.size(), T{0});
  bool in_source = false;
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    if (context_extended_ids[i] == target) {
      indicator[i] = T{1};
      in_source = true;
    }
  }
  if (in_source) {
    const auto mass = matmul(attention, Tensor<T>::row(std::move(indicator)), true);
    const auto copied = mul(g, mass);
    prob = prob ? add(*prob, copied) : copied;
  }
  if (!prob) return Tensor<T>::zeros({1, 1});
  return *prob;
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> nll_from_probabilities(std::span<const Tensor<T>> probs, ValidMask valid,
                                 LossDiagnostics* diag) {
  std::optional<Tensor<T>> total;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (!valid.empty() && !valid[t]) continue;
    Tensor<T> p = probs[t];
    if (p.numel() != 1) throw ShapeError("nll: expected scalar probabilities");
    if (!(static_cast<double>(p.item()) >= kMinTargetProbability)) {
      p = Tensor<T>::filled(p.shape(), static_cast<T>(kMinTargetProbability));
      if (diag) ++diag->clamped;
    }
    const auto term = scale(log(p), -1.0);
    total = total ? add(*total, term) : term;
    if (diag) ++diag->tokens;
  }
  if (!total) return Tensor<T>::zeros({1, 1});
  return *total;
}

template <typename T>
Tensor<T> nll_loss(std::span<const Tensor<T>> distributions, std::span<const TokenId> targets,
                   ValidMask valid, LossDiagnostics* diag) {
  if (distributions.size() != targets.size()) {
    throw ShapeError("nll_loss: " + std::to_string(distributions.size()) + " distributions vs " +
                     std::to_string(targets.size()) + " targets");
  }
  std::vector<Tensor<T>> probs;
  probs.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& dist = distributions[t];
    probs.push_back(slice(dist.rank() == 2 ? dist : Tensor<T>(dist), targets[t], 1));
  }
  return nll_from_probabilities<T>(probs, valid, diag);
}

template <typename T>
Tensor<T> sequence_loss(const ModelParams<T>& params, const MemoryBank<T>& bank,
                        const SourceEncoding& source, std::span<const TokenId> target_ids,
                        const ForwardMode& mode, LossDiagnostics* diag) {
  const std::size_t v = params.vocab_size();
  const CopySwitchParams<T>* copy = params.copy_switch ? &*params.copy_switch : nullptr;
  auto state = initial_decoder_state(bank);
  std::vector<Tensor<T>> probs;
  probs.reserve(target_ids.size());
  for (TokenId raw : target_ids) {
    const TokenId target = (!copy && raw >= v) ? Vocabulary::unk : raw;
    auto step = decode_token(params, state, state.last, bank, mode);
    probs.push_back(target_probability(step.logits, step.attention, step.state.h_tilde, copy,
                                       std::span<const TokenId>(source.extended_ids), target));
    state = std::move(step.state);
    state.last = target;
  }
  return nll_from_probabilities<T>(probs, {}, diag);
}

template <typename T>
Tensor<T> batch_loss(const ModelParams<T>& params, std::span<const Triplet> batch,
                     const ForwardMode& mode, LossDiagnostics* diag) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::optional<Tensor<T>> total;
  const SourceEncoding* current = nullptr;
  MemoryBank<T> bank;
  for (const auto& ex : batch) {
    if (ex.source.get() != current) {
      current = ex.source.get();
      bank = encode_context(params, std::span<const TokenId>(current->context_ids),
                            std::span<const TokenId>(current->title_ids), mode);
    }
    const auto l = sequence_loss(params, bank, *current, ex.target_ids, mode, diag);
    total = total ? add(*total, l) : l;
  }
  return scale(*total, 1.0 / static_cast<double>(batch.size()));
}

#define TGNET_INSTANTIATE(T)                                                                      \
  template struct ModelParams<T>;                                                                 \
  template ModelParams<T> build_model<T>(const Hyperparams&, Ablation, Rng&);                     \
  template MemoryBank<T> encode_context(const ModelParams<T>&, std::span<const TokenId>,          \
                                        std::span<const TokenId>, const ForwardMode&,             \
                                        ValidMask, ValidMask);            \
  template DecoderState<T> initial_decoder_state(const MemoryBank<T>&);                           \
  template DecodeStep<T> decode_step(const ModelParams<T>&, const DecoderState<T>&,               \
                                     const Tensor<T>&, const MemoryBank<T>&, const ForwardMode&); \
  template DecodeStep<T> decode_token(const ModelParams<T>&, const DecoderState<T>&, TokenId,     \
                                      const MemoryBank<T>&, const ForwardMode&);                  \
  template Tensor<T> copy_gate(const Tensor<T>&, const CopySwitchParams<T>&);                     \
  template std::vector<double> final_distribution(const Tensor<T>&, const Tensor<T>&,             \
                                                  const Tensor<T>&, const CopySwitchParams<T>*,   \
                                                  std::span<const TokenId>, std::size_t);         \
  template Tensor<T> target_probability(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                        const CopySwitchParams<T>*, std::span<const TokenId>,     \
                                        TokenId);                                                 \
  template Tensor<T> nll_from_probabilities(std::span<const Tensor<T>>, ValidMask,    \
                                            LossDiagnostics*);                                    \
  template Tensor<T> nll_loss(std::span<const Tensor<T>>, std::span<const TokenId>,               \
                              ValidMask, LossDiagnostics*);                           \
  template Tensor<T> sequence_loss(const ModelParams<T>&, const MemoryBank<T>&,                   \
                                   const SourceEncoding&, std::span<const TokenId>,               \
                                   const ForwardMode&, LossDiagnostics*);                         \
  template Tensor<T> batch_loss(const ModelParams<T>&, std::span<const Triplet>,                  \
                                const ForwardMode&, LossDiagnostics*);

TGNET_INSTANTIATE(float)
TGNET_INSTANTIATE(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

#undef TGNET_INSTANTIATE

}  // namespace tgnet
