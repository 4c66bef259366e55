#include "tgnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace tgnet {

template <typename T>
OptimizerState<T> OptimizerState<T>::init(std::span<const NamedTensor<T>> params,
                                          double learning_rate) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.m.push_back(Tensor<T>::zeros(p.tensor->shape()));
    s.v.push_back(Tensor<T>::zeros(p.tensor->shape()));
  }
  return s;
}

template <typename T>
bool adam_step(std::span<const NamedTensor<T>> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& opt, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != opt.m.size() ||
      params.size() != opt.v.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i].tensor->shape();
    if (grads[i].shape() != shape || opt.m[i].shape() != shape || opt.v[i].shape() != shape) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
    for (T g : grads[i].values()) {
      if (!std::isfinite(static_cast<double>(g))) return false;
    }
  }
  const std::int64_t t = opt.step + 1;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor->mutable_values();
    auto m = opt.m[i].mutable_values();
    auto v = opt.v[i].mutable_values();
    const auto g = grads[i].values();
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double gd = static_cast<double>(g[e]);
      const double md = config.beta1 * static_cast<double>(m[e]) + (1.0 - config.beta1) * gd;
      const double vd = config.beta2 * static_cast<double>(v[e]) + (1.0 - config.beta2) * gd * gd;
      m[e] = static_cast<T>(md);
      v[e] = static_cast<T>(vd);
      const double update = opt.learning_rate * (md / c1) / (std::sqrt(vd / c2) + config.epsilon);
      w[e] = static_cast<T>(static_cast<double>(w[e]) - update);
    }
  }
  opt.step = t;
  return true;
}

template <typename T>
double global_norm(std::span<const Tensor<T>> grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T x : g.values()) sq += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_gradients(std::span<Tensor<T>> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  const double norm = global_norm<T>(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      for (auto& x : g.mutable_values()) x = static_cast<T>(static_cast<double>(x) * factor);
    }
  }
  return norm;
}

void TrainSchedule::validate() const {
  if (patience < 1) throw std::invalid_argument("schedule: patience must be >= 1");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("schedule: decay must be in (0, 1)");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("schedule: tolerance must be >= 0");
}

PlateauSchedule::PlateauSchedule(TrainSchedule schedule)
    : schedule_(schedule), best_(std::numeric_limits<double>::infinity()) {
  schedule_.validate();
}

PlateauSchedule::Decision PlateauSchedule::observe(double perplexity, double& learning_rate) {
  Decision d;
  if (perplexity < best_ - schedule_.tolerance) {
    best_ = perplexity;
    bad_ = 0;
    d.improved = true;
    return d;
  }
  ++bad_;
  learning_rate *= schedule_.decay;
  d.decayed = true;
  d.stop = bad_ >= schedule_.patience;
  return d;
}

template <typename T>
PerplexityResult validation_perplexity(const ModelParams<T>& params, std::span<const Triplet> data) {
  if (data.empty()) throw std::invalid_argument("validation_perplexity: empty data");
  PerplexityResult r;
  const SourceEncoding* current = nullptr;
  MemoryBank<T> bank;
  for (const auto& ex : data) {
    if (ex.source.get() != current) {
      current = ex.source.get();
      bank = encode_context(params, std::span<const TokenId>(current->context_ids),
                            std::span<const TokenId>(current->title_ids));
    }
    LossDiagnostics diag;
    const auto loss = sequence_loss(params, bank, *current, ex.target_ids, {}, &diag);
    r.total_nll += static_cast<double>(loss.item());
    r.tokens += diag.tokens;
  }
  r.perplexity = std::exp(r.total_nll / static_cast<double>(std::max<std::size_t>(r.tokens, 1)));
  if (!std::isfinite(r.perplexity)) {
    throw NumericError("validation perplexity is not finite (total NLL " +
                       std::to_string(r.total_nll) + " over " + std::to_string(r.tokens) +
                       " tokens)");
  }
  return r;
}

std::vector<std::vector<Triplet>> make_batches(std::span<const Triplet> data, std::size_t batch_size,
                                               Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) runs sharing a source
  for (std::size_t i = 0; i < data.size();) {
    std::size_t j = i + 1;
    while (j < data.size() && data[j].source == data[i].source) ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  // Fisher-Yates with an explicit draw so the order depends only on the seed.
  for (std::size_t i = groups.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(groups[i - 1], groups[pick(rng)]);
  }
  std::vector<std::vector<Triplet>> batches;
  std::vector<Triplet> current;
  for (const auto& [b, e] : groups) {
    for (std::size_t i = b; i < e; ++i) {
      current.push_back(data[i]);
      if (current.size() == batch_size) {
        batches.push_back(std::move(current));
        current.clear();
      }
    }
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

namespace {

void write_log(std::ostream* out, const nlohmann::json& line) {
  if (!out) return;
  *out << line.dump() << '\n';
  out->flush();
}

}  // namespace

TrainResult train_loop(ModelParams<float> model, std::span<const Triplet> train,
                       std::span<const Triplet> valid, const TrainConfig& config, Rng& rng) {
  if (train.empty()) throw std::invalid_argument("train_loop: empty training data");
  if (valid.empty()) throw std::invalid_argument("train_loop: empty validation data");
  config.schedule.validate();
  const Hyperparams& hp = model.hp;
  const auto start = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  if (!config.run_config.is_null()) write_log(config.log, {{"config", config.run_config}});

  PlateauSchedule plateau(config.schedule);
  TrainResult result;
  result.optimizer = OptimizerState<float>::init(model.parameters(), hp.learning_rate);
  result.best = model;
  result.best_perplexity = std::numeric_limits<double>::infinity();
  auto& opt = result.optimizer;
  OptimizerState<float> live_opt = opt;

  bool stop = false;
  std::size_t since_eval = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    const auto batches = make_batches(train, hp.batch_size, rng);
    for (std::size_t b = 0; b < batches.size() && !stop; ++b) {
      Tape<float> tape;
      auto bound = model.bind(tape);
      ForwardMode mode{true, &rng};
      const auto loss = batch_loss(bound, std::span<const Triplet>(batches[b]), mode);
      const auto grads_by_node = tape.backward(loss);

      const auto bound_params = bound.parameters();
      std::vector<Tensor<float>> grads;
      grads.reserve(bound_params.size());
      for (const auto& p : bound_params) grads.push_back(grads_by_node.of(*p.tensor));

      nlohmann::json line{{"step", result.steps + 1}, {"epoch", epoch + 1}};
      const double loss_value = static_cast<double>(loss.item());
      const bool finite = std::all_of(grads.begin(), grads.end(), [](const Tensor<float>& g) {
        const auto v = g.values();
        return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
      });
      if (finite) {
        clip_gradients<float>(grads, hp.clip_norm);
        adam_step<float>(model.parameters(), grads, live_opt);
      } else {
        ++result.skipped_batches;
        spdlog::warn("step {}: non-finite gradient, batch skipped", result.steps + 1);
        line["skipped"] = true;
      }
      ++result.steps;
      ++since_eval;

      const bool epoch_end = b + 1 == batches.size();
      const bool evaluate = config.schedule.eval_every > 0
                                ? since_eval >= config.schedule.eval_every
                                : epoch_end;
      line["loss"] = loss_value;
      line["lr"] = live_opt.learning_rate;
      if (evaluate) {
        since_eval = 0;
        const auto ppl = validation_perplexity(model, valid);
        const auto decision = plateau.observe(ppl.perplexity, live_opt.learning_rate);
        if (decision.improved) {
          result.best = model;
          result.best_perplexity = ppl.perplexity;
          opt = live_opt;
        }
        line["val_ppl"] = ppl.perplexity;
        if (decision.decayed) line["lr_after"] = live_opt.learning_rate;
        if (decision.stop) {
          result.early_stopped = true;
          stop = true;
        }
        if (config.target_valid_nll > 0.0 &&
            std::log(ppl.perplexity) < config.target_valid_nll) {
          stop = true;
        }
      } else {
        line["val_ppl"] = nullptr;
      }
      if (config.log_wall_time) line["wall_time"] = wall();
      write_log(config.log, line);
    }
    result.epochs = epoch + 1;
  }
  if (!std::isfinite(result.best_perplexity)) {
    // No evaluation happened (e.g. zero epochs); report the current model.
    result.best = model;
    result.best_perplexity = validation_perplexity(model, valid).perplexity;
    opt = live_opt;
  }
  return result;
}

#define TGNET_INSTANTIATE(T)                                                                   \
  template struct OptimizerState<T>;                                                           \
  template bool adam_step(std::span<const NamedTensor<T>>, std::span<const Tensor<T>>,         \
                          OptimizerState<T>&, const AdamConfig&);                              \
  template double global_norm(std::span<const Tensor<T>>);                                     \
  template double clip_gradients(std::span<Tensor<T>>, double);                                \
  template PerplexityResult validation_perplexity(const ModelParams<T>&, std::span<const Triplet>);

TGNET_INSTANTIATE(float)
TGNET_INSTANTIATE(double)

#undef TGNET_INSTANTIATE

}  // namespace tgnet
