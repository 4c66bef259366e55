#include "tgnet/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace tgnet {

namespace {

struct Candidate {
  double log_prob;
  std::size_t parent;
  TokenId token;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.parent != b.parent) return a.parent < b.parent;
  return a.token < b.token;
}

double rank_score(const std::vector<TokenId>& tokens, double log_prob, bool normalize) {
  if (!normalize || tokens.empty()) return log_prob;
  return log_prob / static_cast<double>(tokens.size());
}

ScoredPhrase to_phrase(const std::vector<TokenId>& tokens, double score, bool completed) {
  ScoredPhrase p;
  p.ids = tokens;
  if (completed && !p.ids.empty() && p.ids.back() == Vocabulary::eos) p.ids.pop_back();
  p.score = score;
  p.completed = completed;
  return p;
}

}  // namespace

template <typename T>
Prediction beam_search(const ModelParams<T>& params, const MemoryBank<T>& bank,
                       const SourceEncoding& source, const BeamOptions& options) {
  if (options.beam_size == 0) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  if (options.max_depth == 0) throw std::invalid_argument("beam_search: max_depth must be >= 1");
  const CopySwitchParams<T>* copy = params.copy_switch ? &*params.copy_switch : nullptr;
  const std::size_t oov = source.oov_count();
  const std::span<const TokenId> ext(source.extended_ids);

  std::vector<BeamHypothesis<T>> live(1);
  live[0].state = initial_decoder_state(bank);
  std::vector<BeamHypothesis<T>> done;
  std::vector<Candidate> cands;

  for (std::size_t depth = 0; depth < options.max_depth && !live.empty(); ++depth) {
    cands.clear();
    std::vector<DecoderState<T>> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto step = decode_token(params, live[h].state, live[h].state.last, bank);
      const auto dist = final_distribution(step.logits, step.attention, step.state.h_tilde, copy,
                                           ext, oov);
      for (std::size_t id = 0; id < dist.size(); ++id) {
        if (id == Vocabulary::pad || id == Vocabulary::bos || !(dist[id] > 0.0)) continue;
        cands.push_back({live[h].log_prob + std::log(dist[id]), h, static_cast<TokenId>(id)});
      }
      next_states.push_back(std::move(step.state));
    }
    const std::size_t keep = std::min(options.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      better);

    std::vector<BeamHypothesis<T>> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = cands[c];
      BeamHypothesis<T> hyp;
      hyp.tokens = live[cand.parent].tokens;
      hyp.tokens.push_back(cand.token);
      hyp.log_prob = cand.log_prob;
      hyp.state = next_states[cand.parent];
      hyp.state.last = cand.token;
      hyp.completed = cand.token == Vocabulary::eos;
      (hyp.completed ? done : next).push_back(std::move(hyp));
    }
    live = std::move(next);
  }

  auto order = [&](const BeamHypothesis<T>& a, const BeamHypothesis<T>& b) {
    const double sa = rank_score(a.tokens, a.log_prob, options.length_normalize);
    const double sb = rank_score(b.tokens, b.log_prob, options.length_normalize);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };
  std::stable_sort(done.begin(), done.end(), order);
  std::stable_sort(live.begin(), live.end(), order);

  Prediction pred;
  pred.phrases.reserve(done.size() + live.size());
  for (const auto& h : done) {
    pred.phrases.push_back(
        to_phrase(h.tokens, rank_score(h.tokens, h.log_prob, options.length_normalize), true));
  }
  for (const auto& h : live) {
    pred.phrases.push_back(
        to_phrase(h.tokens, rank_score(h.tokens, h.log_prob, options.length_normalize), false));
  }
  return pred;
}

template <typename T>
Prediction predict(const ModelParams<T>& params, const SourceEncoding& source,
                   const BeamOptions& options) {
  const auto bank = encode_context(params, std::span<const TokenId>(source.context_ids),
                                   std::span<const TokenId>(source.title_ids));
  return beam_search(params, bank, source, options);
}

PostMode parse_post_mode(std::string_view name) {
  if (name == "train-domain" || name == "train_domain") return PostMode::train_domain;
  if (name == "transfer") return PostMode::transfer;
  throw std::invalid_argument("unknown post-processing mode: " + std::string(name));
}

Prediction postprocess(const Prediction& pred, PostMode mode) {
  Prediction out;
  std::set<std::vector<TokenId>> seen;
  bool single_kept = false;
  for (const auto& p : pred.phrases) {
    if (p.ids.empty()) continue;
    if (std::find(p.ids.begin(), p.ids.end(), Vocabulary::unk) != p.ids.end()) continue;
    if (!seen.insert(p.ids).second) continue;
    if (mode == PostMode::transfer && p.ids.size() == 1) {
      if (single_kept) continue;
      single_kept = true;
    }
    out.phrases.push_back(p);
  }
  return out;
}

std::vector<Phrase> render_phrases(const Prediction& pred, const Vocabulary& vocab,
                                   std::span<const std::string> oov_words) {
  std::vector<Phrase> out;
  out.reserve(pred.phrases.size());
  for (const auto& p : pred.phrases) {
    out.push_back(decode_ids(std::span<const TokenId>(p.ids), vocab, oov_words));
  }
  return out;
}

template Prediction beam_search(const ModelParams<float>&, const MemoryBank<float>&,
                                const SourceEncoding&, const BeamOptions&);
template Prediction beam_search(const ModelParams<double>&, const MemoryBank<double>&,
                                const SourceEncoding&, const BeamOptions&);
template Prediction predict(const ModelParams<float>&, const SourceEncoding&, const BeamOptions&);
template Prediction predict(const ModelParams<double>&, const SourceEncoding&, const BeamOptions&);

}  // namespace tgnet
