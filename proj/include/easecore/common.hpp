#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace easecore {

// Error raised when an input file or directory cannot be ingested.
class LoadError : public std::runtime_error {
 public:
  explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

// Error raised when a value violates a documented precondition or invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a training run produces a non-finite loss. Carries the index
// of the SGD update at which the divergence was detected.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t update_index)
      : std::runtime_error(what), update_index_(update_index) {}
  std::int64_t update_index() const noexcept { return update_index_; }

 private:
  std::int64_t update_index_;
};

// 64-bit FNV-1a. Used for content fingerprints and cache keys; stability of
// the constant across builds is part of the cache format.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(const std::string& s) { return update(s.data(), s.size()); }
  std::uint64_t value() const noexcept { return state_; }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(const std::string& s) {
  return Fnv1a().update(s).hex();
}

}  // namespace easecore
