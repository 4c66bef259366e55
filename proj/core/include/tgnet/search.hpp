#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tgnet/data.hpp"
#include "tgnet/model.hpp"

namespace tgnet {

template <typename T>
struct BeamHypothesis {
  std::vector<TokenId> tokens;  // extended ids, EOS included when completed
  double log_prob = 0.0;
  DecoderState<T> state;
  bool completed = false;
};

struct ScoredPhrase {
  std::vector<TokenId> ids;  // extended ids, EOS stripped
  double score = 0.0;        // total log-probability (or its length-normalized form)
  bool completed = true;

  bool operator==(const ScoredPhrase&) const = default;
};

// Ranked best first.
struct Prediction {
  std::vector<ScoredPhrase> phrases;

  bool operator==(const Prediction&) const = default;
};

struct BeamOptions {
  std::size_t beam_size = 200;
  std::size_t max_depth = 6;
  bool length_normalize = false;  // rank by log-prob / length instead of the total
};

/// Beam search over the final distribution. Every step expands all live
/// hypotheses by every dynamic-vocabulary id with nonzero probability except
/// PAD and BOS, then keeps the beam_size best candidates overall. Candidates
/// ending in EOS leave the beam as completed hypotheses. Ties break on the
/// lower parent index, then the lower token id.
/// Output: completed hypotheses by score, followed by the hypotheses still
/// live at max_depth.
template <typename T>
Prediction beam_search(const ModelParams<T>& params, const MemoryBank<T>& bank,
                       const SourceEncoding& source, const BeamOptions& options);

// Encodes the source and runs beam_search.
template <typename T>
Prediction predict(const ModelParams<T>& params, const SourceEncoding& source,
                   const BeamOptions& options);

enum class PostMode { train_domain, transfer };

PostMode parse_post_mode(std::string_view name);

/// Removes empty and UNK-containing phrases and duplicate id sequences
/// (keeping the first, i.e. best). In transfer mode only the first
/// single-token phrase survives.
Prediction postprocess(const Prediction& pred, PostMode mode);

std::vector<Phrase> render_phrases(const Prediction& pred, const Vocabulary& vocab,
                                   std::span<const std::string> oov_words);

}  // namespace tgnet
