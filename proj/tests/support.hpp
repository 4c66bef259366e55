#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "tgnet/model.hpp"
#include "tgnet/tensor.hpp"

namespace tgtest {

// SplitMix64: small, seedable and independent of the library's RNG.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

  template <typename T = double>
  tgnet::Tensor<T> tensor(tgnet::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(uniform(lo, hi));
    return tgnet::Tensor<T>(std::move(shape), std::move(v));
  }

 private:
  std::uint64_t state_;
};

inline bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

template <typename T>
bool bitwise_equal(const tgnet::Tensor<T>& a, const tgnet::Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::memcmp(&x[i], &y[i], sizeof(T)) != 0) return false;
  }
  return true;
}

template <typename T>
bool params_bitwise_equal(const tgnet::ModelParams<T>& a, const tgnet::ModelParams<T>& b) {
  std::vector<const tgnet::Tensor<T>*> ta, tb;
  a.visit([&](const std::string&, const tgnet::Tensor<T>& t) { ta.push_back(&t); });
  b.visit([&](const std::string&, const tgnet::Tensor<T>& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!bitwise_equal(*ta[i], *tb[i])) return false;
  }
  return true;
}

inline tgnet::Hyperparams tiny_hparams(std::size_t de = 4, std::size_t d = 8, std::size_t v = 12) {
  tgnet::Hyperparams hp;
  hp.embedding_dim = de;
  hp.hidden_dim = d;
  hp.vocab_size = v;
  hp.dropout = 0.0;
  hp.batch_size = 4;
  return hp;
}

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tgnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace tgtest
