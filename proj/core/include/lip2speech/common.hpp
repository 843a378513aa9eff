// lip2speech/common.hpp

// Copyright 2026  The Lip2Speech Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LIP2SPEECH_COMMON_HPP_
#define LIP2SPEECH_COMMON_HPP_

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2s {

// Raised for violated preconditions and malformed inputs (maps to CLI exit 2).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for internal failures, e.g. non-finite losses (maps to CLI exit 1).
class InternalError : public std::runtime_error {
 public:
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void Require(bool cond, const std::string& msg) {
  if (!cond) throw InputError(msg);
}

inline void Check(bool cond, const std::string& msg) {
  if (!cond) throw InternalError(msg);
}

// 64-bit FNV-1a; used for vocabulary hashes and determinism checks.
uint64_t Fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t Fnv1a64(const std::string& s);

// Counter-based deterministic RNG (splitmix64 core within independently
// keyed streams). State is two u64 words, so it serializes trivially and
// behaves identically on every platform. All randomness in the project
// (init, shuffles, augmentation, phase init) goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  // Uniform in [lo, hi).
  double Uniform(double lo, double hi);
  // Uniform integer in [0, n); n > 0.
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller (no cached spare; one draw per call).
  double Normal();

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

  // Derives an independent child stream; order-insensitive given the tags.
  Rng Fork(uint64_t tag) const;

 private:
  uint64_t key_;
  uint64_t counter_;
};

// Fisher-Yates shuffle driven by Rng (std::shuffle is not portable).
template <typename T>
void Shuffle(std::vector<T>* v, Rng* rng) {
  for (size_t i = v->size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng->UniformInt(i));
    std::swap((*v)[i - 1], (*v)[j]);
  }
}

inline bool IsFinite(double x) { return std::isfinite(x); }

// Fixed-format double printing shared by every log/report writer so that
// identical runs produce byte-identical files.
std::string FormatDouble(double x);

}  // namespace l2s

#endif  // LIP2SPEECH_COMMON_HPP_
