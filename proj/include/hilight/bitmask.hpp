#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "hilight/common.hpp"

namespace hilight {

/// Fixed-width dynamic bitset over label ids.
class Bitmask {
 public:
  Bitmask() = default;
  explicit Bitmask(std::size_t nbits) : nbits_(nbits), words_((nbits + 63) / 64, 0) {}

  static Bitmask of(std::size_t nbits, const std::vector<LabelId>& ids) {
    Bitmask m(nbits);
    for (LabelId i : ids) m.set(static_cast<std::size_t>(i));
    return m;
  }

  std::size_t size() const { return nbits_; }

  void set(std::size_t i) {
    check_bounds(i);
    words_[i >> 6] |= (std::uint64_t{1} << (i & 63));
  }

  void reset(std::size_t i) {
    check_bounds(i);
    words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
  }

  bool test(std::size_t i) const {
    check_bounds(i);
    return (words_[i >> 6] >> (i & 63)) & 1;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  bool any() const {
    for (std::uint64_t w : words_)
      if (w) return true;
    return false;
  }

  bool none() const { return !any(); }

  Bitmask& operator|=(const Bitmask& other) {
    check_shape(other);
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] |= other.words_[k];
    return *this;
  }

  Bitmask& operator&=(const Bitmask& other) {
    check_shape(other);
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] &= other.words_[k];
    return *this;
  }

  /// Clears every bit that is set in `other`.
  Bitmask& subtract(const Bitmask& other) {
    check_shape(other);
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] &= ~other.words_[k];
    return *this;
  }

  friend Bitmask operator|(Bitmask a, const Bitmask& b) { return a |= b; }
  friend Bitmask operator&(Bitmask a, const Bitmask& b) { return a &= b; }

  bool operator==(const Bitmask&) const = default;

  std::vector<LabelId> to_vector() const {
    std::vector<LabelId> out;
    out.reserve(count());
    for_each([&](std::size_t i) { out.push_back(static_cast<LabelId>(i)); });
    return out;
  }

  template <class Fn>
  void for_each(Fn fn) const {
    for (std::size_t k = 0; k < words_.size(); ++k) {
      std::uint64_t w = words_[k];
      while (w) {
        const int bit = std::countr_zero(w);
        fn(k * 64 + static_cast<std::size_t>(bit));
        w &= w - 1;
      }
    }
  }

 private:
  void check_bounds(std::size_t i) const {
    if (i >= nbits_) fail(ErrorCode::ShapeMismatch, "bit index out of range");
  }
  void check_shape(const Bitmask& other) const {
    if (nbits_ != other.nbits_) fail(ErrorCode::ShapeMismatch, "bitmask sizes differ");
  }

  std::size_t nbits_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace hilight
