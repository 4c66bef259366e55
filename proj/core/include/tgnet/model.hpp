#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tgnet/data.hpp"
#include "tgnet/layers.hpp"
#include "tgnet/tensor.hpp"

namespace tgnet {

enum class Ablation : std::uint8_t { full = 0, no_title = 1, no_copy = 2 };

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);

struct Hyperparams {
  std::size_t embedding_dim = 100;
  std::size_t hidden_dim = 256;
  double lambda = 0.5;
  std::size_t vocab_size = 50000;
  double dropout = 0.1;
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  double clip_norm = 1.0;
  std::size_t beam_size = 200;
  std::size_t max_depth = 6;
  double init_range = 0.1;
  std::size_t max_context_len = 400;

  // hidden_dim even, 0 < lambda < 1, positive sizes, dropout in [0, 1).
  void validate() const;

  bool operator==(const Hyperparams&) const = default;
};

void to_json(nlohmann::json& j, const Hyperparams& hp);
void from_json(const nlohmann::json& j, Hyperparams& hp);

template <typename T>
struct TitleGuideParams {
  GruParams<T> title_fwd, title_bwd;    // title sequence encoder
  AttentionParams<T> matching;          // context-to-title bilinear attention
  GruParams<T> merge_fwd, merge_bwd;    // consume [u_i ; c_i]
};

template <typename T>
struct CopySwitchParams {
  Tensor<T> w;  // [d, 1]
  Tensor<T> b;  // [1, 1]
};

template <typename T>
struct ModelParams {
  Hyperparams hp;
  Ablation ablation = Ablation::full;

  Tensor<T> embedding;  // [|V|, d_e], shared by context, title and decoder inputs
  GruParams<T> context_fwd, context_bwd;
  std::optional<TitleGuideParams<T>> title_guide;  // absent for no_title
  GruParams<T> decoder;                             // input [e ; h~], hidden d
  AttentionParams<T> decoder_attention;
  Tensor<T> attentional;  // [2d, d], applied to [c^ ; h]
  Tensor<T> output_w;     // [d, |V|]
  Tensor<T> output_b;     // [1, |V|]
  std::optional<CopySwitchParams<T>> copy_switch;   // absent for no_copy

  std::size_t vocab_size() const { return output_b.cols(); }
  std::size_t hidden_dim() const { return attentional.cols(); }
  std::size_t embedding_dim() const { return embedding.cols(); }

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::vector<NamedTensor<T>> parameters();
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  // Copy whose tensors are tracked leaves on `tape`, visited in parameters() order.
  ModelParams bind(Tape<T>& tape) const;

  template <typename U>
  ModelParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, F& f) {
    f(std::string("embedding"), s.embedding);
    s.context_fwd.visit("context_encoder.fwd", f);
    s.context_bwd.visit("context_encoder.bwd", f);
    if (s.title_guide) {
      s.title_guide->title_fwd.visit("title_encoder.fwd", f);
      s.title_guide->title_bwd.visit("title_encoder.bwd", f);
      s.title_guide->matching.visit("matching", f);
      s.title_guide->merge_fwd.visit("merging.fwd", f);
      s.title_guide->merge_bwd.visit("merging.bwd", f);
    }
    s.decoder.visit("decoder.gru", f);
    s.decoder_attention.visit("decoder.attention", f);
    f(std::string("decoder.attentional.W"), s.attentional);
    f(std::string("decoder.output.W"), s.output_w);
    f(std::string("decoder.output.b"), s.output_b);
    if (s.copy_switch) {
      f(std::string("copy_switch.w"), s.copy_switch->w);
      f(std::string("copy_switch.b"), s.copy_switch->b);
    }
  }
};

/// Samples every matrix uniformly in [-init_range, init_range]; GRU biases
/// start at zero. no_title drops the title encoder, matching and merging
/// layers; no_copy drops the copy switch.
template <typename T>
ModelParams<T> build_model(const Hyperparams& hp, Ablation ablation, Rng& rng);

// Closed-form parameter count for the given configuration.
std::size_t expected_parameter_count(const Hyperparams& hp, Ablation ablation);

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

template <typename T>
struct MemoryBank {
  Tensor<T> states;         // [L_x, d]
  Tensor<T> initial_state;  // [1, d]: final forward and first backward state
  std::vector<std::uint8_t> valid;  // empty means all positions valid

  std::size_t length() const { return states.rows(); }
};

/// Context encoding steered by the title. `title_ids` must equal the leading context ids.
/// The bank is lambda * u_i + (1 - lambda) * merged_i; with no_title it is u_i.
template <typename T>
MemoryBank<T> encode_context(const ModelParams<T>& params, std::span<const TokenId> context_ids,
                             std::span<const TokenId> title_ids, const ForwardMode& mode = {},
                             ValidMask context_valid = {}, ValidMask title_valid = {});

template <typename T>
struct DecoderState {
  Tensor<T> h;        // [1, d]
  Tensor<T> h_tilde;  // [1, d], attentional vector fed back as input
  TokenId last = Vocabulary::bos;
};

template <typename T>
DecoderState<T> initial_decoder_state(const MemoryBank<T>& bank);

template <typename T>
struct DecodeStep {
  DecoderState<T> state;
  Tensor<T> attention;  // [1, L_x]
  Tensor<T> logits;     // [1, |V|]
};

template <typename T>
DecodeStep<T> decode_step(const ModelParams<T>& params, const DecoderState<T>& state,
                          const Tensor<T>& prev_embedding, const MemoryBank<T>& bank,
                          const ForwardMode& mode = {});

// Embeds `token` (extended ids fall back to UNK) and runs one decoder step.
template <typename T>
DecodeStep<T> decode_token(const ModelParams<T>& params, const DecoderState<T>& state,
                           TokenId token, const MemoryBank<T>& bank, const ForwardMode& mode = {});

// Copy switch g = sigmoid(h~ w + b), shape [1, 1].
template <typename T>
Tensor<T> copy_gate(const Tensor<T>& h_tilde, const CopySwitchParams<T>& copy);

/// Mixture over the dynamic vocabulary V u X (size |V| + oov_count):
/// (1 - g) * P_v padded with zeros, plus g times the attention mass of every
/// source position holding that id. A null `copy` means g = 0.
template <typename T>
std::vector<double> final_distribution(const Tensor<T>& gen_logits, const Tensor<T>& attention,
                                       const Tensor<T>& h_tilde, const CopySwitchParams<T>* copy,
                                       std::span<const TokenId> context_extended_ids,
                                       std::size_t oov_count);

// Differentiable P_final(target) as a [1, 1] tensor.
template <typename T>
Tensor<T> target_probability(const Tensor<T>& gen_logits, const Tensor<T>& attention,
                             const Tensor<T>& h_tilde, const CopySwitchParams<T>* copy,
                             std::span<const TokenId> context_extended_ids, TokenId target);

struct LossDiagnostics {
  std::size_t tokens = 0;
  std::size_t clamped = 0;  // target probabilities that underflowed to 0
};

inline constexpr double kMinTargetProbability = 1e-12;

// -sum_t log p_t over valid steps. Probabilities below 1e-12 are replaced by
// 1e-12 (no gradient) and counted in diagnostics.
template <typename T>
Tensor<T> nll_from_probabilities(std::span<const Tensor<T>> probs, ValidMask valid = {},
                                 LossDiagnostics* diag = nullptr);

// Same loss from full per-step distributions ([1, n] each).
template <typename T>
Tensor<T> nll_loss(std::span<const Tensor<T>> distributions, std::span<const TokenId> targets,
                   ValidMask valid = {}, LossDiagnostics* diag = nullptr);

/// Teacher-forced loss of one target sequence against an encoded source:
/// sum over steps of -log P_final(y_t).
template <typename T>
Tensor<T> sequence_loss(const ModelParams<T>& params, const MemoryBank<T>& bank,
                        const SourceEncoding& source, std::span<const TokenId> target_ids,
                        const ForwardMode& mode = {}, LossDiagnostics* diag = nullptr);

/// Mean of sequence_loss over the triplets; consecutive triplets sharing a
/// source are encoded once.
template <typename T>
Tensor<T> batch_loss(const ModelParams<T>& params, std::span<const Triplet> batch,
                     const ForwardMode& mode = {}, LossDiagnostics* diag = nullptr);

}  // namespace tgnet
