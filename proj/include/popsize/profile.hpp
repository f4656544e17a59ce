#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "popsize/error.hpp"
#include "popsize/numeric.hpp"

namespace popsize {

inline constexpr int kMaxLists = 30;

/// Membership of one unit across K lists. Bit k of the mask is list k
/// (0-based).
class CaptureProfile {
 public:
  CaptureProfile() = default;

  CaptureProfile(std::uint64_t mask, int lists) : mask_(mask), lists_(lists) {
    if (lists < 1 || lists > kMaxLists)
      throw ConfigError("list count must be in [1, " + std::to_string(kMaxLists) + "]");
    if (mask >> lists) throw DomainError("capture profile has bits beyond list count");
  }

  static CaptureProfile from_bits(const std::vector<bool>& bits) {
    std::uint64_t mask = 0;
    for (std::size_t k = 0; k < bits.size(); ++k)
      if (bits[k]) mask |= std::uint64_t{1} << k;
    return CaptureProfile(mask, static_cast<int>(bits.size()));
  }

  int lists() const { return lists_; }
  std::uint64_t mask() const { return mask_; }
  bool operator[](int k) const { return (mask_ >> k) & 1U; }
  int order() const { return popcount(mask_); }
  bool is_zero() const { return mask_ == 0; }

  // "101" for lists (1, 0, 1); list 1 is leftmost.
  std::string to_string() const {
    std::string s(static_cast<std::size_t>(lists_), '0');
    for (int k = 0; k < lists_; ++k)
      if ((*this)[k]) s[static_cast<std::size_t>(k)] = '1';
    return s;
  }

  friend bool operator==(const CaptureProfile&, const CaptureProfile&) = default;

 private:
  std::uint64_t mask_ = 0;
  int lists_ = 1;
};

// The J lists entering the conditional log-linear model, plus the K - J
// lists that are conditioned to be zero.
//
// Canonical profile order: index i (0-based) is the profile whose bits on the
// selected lists spell i + 1 in binary, least significant bit = first
// selected list. Every q-vector in the library is stored in this order.
class ListSubset {
 public:
  ListSubset(int lists, std::vector<int> selected) : lists_(lists), selected_(std::move(selected)) {
    if (lists < 1 || lists > kMaxLists)
      throw ConfigError("list count must be in [1, " + std::to_string(kMaxLists) + "]");
    if (selected_.empty() || static_cast<int>(selected_.size()) > lists)
      throw ConfigError("subset size J must satisfy 1 <= J <= K");
    for (int s : selected_) {
      if (s < 0 || s >= lists) throw ConfigError("subset index out of range");
      const std::uint64_t bit = std::uint64_t{1} << s;
      if (selected_mask_ & bit) throw ConfigError("subset index repeated");
      selected_mask_ |= bit;
    }
    for (int k = 0; k < lists; ++k)
      if (!(selected_mask_ >> k & 1U)) complement_.push_back(k);
  }

  // All K lists, in order.
  static ListSubset all(int lists) {
    std::vector<int> idx(static_cast<std::size_t>(lists));
    for (int k = 0; k < lists; ++k) idx[static_cast<std::size_t>(k)] = k;
    return ListSubset(lists, std::move(idx));
  }

  int lists() const { return lists_; }
  int size() const { return static_cast<int>(selected_.size()); }
  const std::vector<int>& selected() const { return selected_; }
  const std::vector<int>& complement() const { return complement_; }
  std::uint64_t selected_mask() const { return selected_mask_; }
  std::uint64_t complement_mask() const {
    const std::uint64_t full = (std::uint64_t{1} << lists_) - 1;
    return full & ~selected_mask_;
  }

  // 2^J - 1
  std::size_t profile_count() const { return (std::size_t{1} << selected_.size()) - 1; }

  CaptureProfile profile_at(std::size_t index) const {
    const std::uint64_t local = index + 1;
    std::uint64_t mask = 0;
    for (std::size_t j = 0; j < selected_.size(); ++j)
      if (local >> j & 1U) mask |= std::uint64_t{1} << selected_[j];
    return CaptureProfile(mask, lists_);
  }

  // Canonical index of a suffix-zero nonzero profile; nullopt when the
  // profile is zero or touches a complement list.
  std::optional<std::size_t> index_of(const CaptureProfile& y) const {
    if (y.lists() != lists_) throw DomainError("profile list count does not match subset");
    if (y.mask() & complement_mask()) return std::nullopt;
    std::uint64_t local = 0;
    for (std::size_t j = 0; j < selected_.size(); ++j)
      if (y[selected_[j]]) local |= std::uint64_t{1} << j;
    if (local == 0) return std::nullopt;
    return static_cast<std::size_t>(local - 1);
  }

 private:
  int lists_;
  std::vector<int> selected_;
  std::vector<int> complement_;
  std::uint64_t selected_mask_ = 0;
};

// (-1)^(|y|+1) for the profile at canonical index `index`.
inline int profile_sign(std::size_t index) { return popcount(index + 1) % 2 == 1 ? 1 : -1; }

inline std::vector<CaptureProfile> enumerate_suffix_zero_profiles(const ListSubset& subset) {
  std::vector<CaptureProfile> out;
  out.reserve(subset.profile_count());
  for (std::size_t i = 0; i < subset.profile_count(); ++i) out.push_back(subset.profile_at(i));
  return out;
}

// Number of subset lists J implied by a q-vector of length 2^J - 1.
inline int subset_size_for(std::size_t q_length) {
  const std::size_t cells = q_length + 1;
  if (q_length == 0 || (cells & (cells - 1)) != 0)
    throw DomainError("q-vector length must be 2^J - 1, got " + std::to_string(q_length));
  return std::countr_zero(cells);
}

}  // namespace popsize
