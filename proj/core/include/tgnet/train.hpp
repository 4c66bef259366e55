#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tgnet/model.hpp"

namespace tgnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> m;  // first moments, parameters() order
  std::vector<Tensor<T>> v;  // second moments
  std::int64_t step = 0;
  double learning_rate = 0.001;

  static OptimizerState init(std::span<const NamedTensor<T>> params, double learning_rate);
};

/// Bias-corrected Adam, evaluated in double and stored back as T. Returns
/// false without touching anything when a gradient entry is not finite.
template <typename T>
bool adam_step(std::span<const NamedTensor<T>> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& opt, const AdamConfig& config = {});

template <typename T>
double global_norm(std::span<const Tensor<T>> grads);

// Rescales every gradient by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
template <typename T>
double clip_gradients(std::span<Tensor<T>> grads, double max_norm);

struct TrainSchedule {
  std::size_t eval_every = 0;  // batches between validations; 0 = once per epoch
  double decay = 0.5;
  std::size_t patience = 3;
  double tolerance = 1e-4;  // improvement means ppl < best - tolerance

  void validate() const;
};

/// Tracks validation perplexity. A non-improving evaluation multiplies the
/// learning rate by `decay`; `patience` consecutive ones request a stop.
class PlateauSchedule {
 public:
  struct Decision {
    bool improved = false;
    bool decayed = false;
    bool stop = false;
  };

  explicit PlateauSchedule(TrainSchedule schedule = {});

  Decision observe(double perplexity, double& learning_rate);

  double best() const { return best_; }
  std::size_t bad_evaluations() const { return bad_; }

 private:
  TrainSchedule schedule_;
  double best_;
  std::size_t bad_ = 0;
};

struct PerplexityResult {
  double perplexity = 0.0;
  double total_nll = 0.0;
  std::size_t tokens = 0;
};

// exp(total NLL / target tokens) with dropout off. Throws NumericError when
// the result is not finite.
template <typename T>
PerplexityResult validation_perplexity(const ModelParams<T>& params, std::span<const Triplet> data);

/// Consecutive runs of triplets from the same document, visited in a shuffled
/// document order, cut into batches of `batch_size` triplets.
std::vector<std::vector<Triplet>> make_batches(std::span<const Triplet> data, std::size_t batch_size,
                                               Rng& rng);

struct TrainConfig {
  TrainSchedule schedule;
  std::size_t max_epochs = 50;
  // Stop once validation per-token NLL falls below this value (0 disables).
  double target_valid_nll = 0.0;
  std::ostream* log = nullptr;  // JSON Lines sink
  bool log_wall_time = true;
  nlohmann::json run_config;  // echoed as the first log line when non-null
};

struct TrainResult {
  ModelParams<float> best;
  OptimizerState<float> optimizer;  // state at the best evaluation
  double best_perplexity = 0.0;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t skipped_batches = 0;
  bool early_stopped = false;
};

/// Adam on the mean per-triplet loss with global-norm clipping, learning rate
/// halving on validation plateaus and early stopping. Training is serial;
/// all randomness (batch order, dropout) comes from `rng`.
TrainResult train_loop(ModelParams<float> model, std::span<const Triplet> train,
                       std::span<const Triplet> valid, const TrainConfig& config, Rng& rng);

}  // namespace tgnet
