#include "tgnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tgnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void bytes(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    bytes(name);
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(static_cast<std::uint32_t>(d));
    const auto v = t.values();
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename U>
  U get() {
    need(sizeof(U), "scalar");
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(const char* what) {
    const auto n = get<std::uint32_t>();
    need(n, what);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Tensor<float> tensor(const std::string& want_name, const Shape& want_shape) {
    const auto name = bytes("tensor name");
    if (name != want_name) {
      throw CheckpointError("checkpoint: expected tensor '" + want_name + "', found '" + name + "'");
    }
    const auto rank = get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint32_t>();
    if (shape != want_shape) {
      throw CheckpointError("checkpoint: tensor " + name + " has shape " + shape_str(shape) +
                            ", configuration expects " + shape_str(want_shape));
    }
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    need(n * sizeof(float), "tensor payload");
    std::vector<float> values(n);
    std::memcpy(values.data(), in_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return Tensor<float>(std::move(shape), std::move(values));
  }
  void expect_end() const {
    if (pos_ != in_.size()) {
      throw CheckpointError("checkpoint: " + std::to_string(in_.size() - pos_) +
                            " unexpected trailing bytes");
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint: truncated while reading ") + what);
    }
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.bytes(nlohmann::json(ckpt.params.hp).dump());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(ckpt.params.ablation));

  const auto& words = ckpt.vocab.words();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(words.size() - Vocabulary::special_count));
  for (std::size_t i = Vocabulary::special_count; i < words.size(); ++i) w.bytes(words[i]);

  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  ckpt.params.visit([&](const std::string& name, const Tensor<float>& t) {
    tensors.emplace_back(name, &t);
  });
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) w.tensor(name, *t);

  w.put<std::uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& opt = *ckpt.optimizer;
    if (opt.m.size() != tensors.size() || opt.v.size() != tensors.size()) {
      throw std::invalid_argument("checkpoint: optimizer state does not match the parameters");
    }
    w.put<std::int64_t>(opt.step);
    w.put<double>(opt.learning_rate);
    for (std::size_t i = 0; i < tensors.size(); ++i) w.tensor(tensors[i].first + ".m", opt.m[i]);
    for (std::size_t i = 0; i < tensors.size(); ++i) w.tensor(tensors[i].first + ".v", opt.v[i]);
  }
  w.put<double>(ckpt.best_perplexity);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  for (char c : kCheckpointMagic) {
    if (r.get<char>() != c) throw CheckpointError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Hyperparams hp;
  try {
    hp = nlohmann::json::parse(r.bytes("hyperparameters")).get<Hyperparams>();
    hp.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad hyperparameters: ") + e.what());
  }
  const auto ablation_raw = r.get<std::uint8_t>();
  if (ablation_raw > static_cast<std::uint8_t>(Ablation::no_copy)) {
    throw CheckpointError("checkpoint: unknown ablation flag " + std::to_string(ablation_raw));
  }
  const auto ablation = static_cast<Ablation>(ablation_raw);

  const auto n_words = r.get<std::uint32_t>();
  std::vector<std::string> words;
  words.reserve(n_words);
  for (std::uint32_t i = 0; i < n_words; ++i) words.push_back(r.bytes("vocabulary word"));
  Checkpoint ckpt;
  try {
    ckpt.vocab = Vocabulary::from_words(words);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad vocabulary: ") + e.what());
  }
  if (ckpt.vocab.size() != hp.vocab_size) {
    throw CheckpointError("checkpoint: vocabulary has " + std::to_string(ckpt.vocab.size()) +
                          " entries, hyperparameters say " + std::to_string(hp.vocab_size));
  }

  // Skeleton for names and shapes; its values are overwritten below.
  Rng scratch(0);
  ModelParams<float> params = build_model<float>(hp, ablation, scratch);
  auto named = params.parameters();
  const auto n_tensors = r.get<std::uint32_t>();
  if (n_tensors != named.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(n_tensors) + " tensors, configuration has " +
                          std::to_string(named.size()));
  }
  for (auto& p : named) *p.tensor = r.tensor(p.name, p.tensor->shape());

  const auto has_opt = r.get<std::uint8_t>();
  if (has_opt > 1) throw CheckpointError("checkpoint: bad optimizer flag");
  if (has_opt) {
    OptimizerState<float> opt;
    opt.step = r.get<std::int64_t>();
    opt.learning_rate = r.get<double>();
    for (const auto& p : named) opt.m.push_back(r.tensor(p.name + ".m", p.tensor->shape()));
    for (const auto& p : named) opt.v.push_back(r.tensor(p.name + ".v", p.tensor->shape()));
    ckpt.optimizer = std::move(opt);
  }
  ckpt.best_perplexity = r.get<double>();
  r.expect_end();
  ckpt.params = std::move(params);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace tgnet
