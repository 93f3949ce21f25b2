#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tiermem {

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed derived from (global seed, key, stream) so per-key draws are independent
// of which other keys exist.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key,
                          std::uint64_t stream = 0) noexcept;

// mt19937_64 with a portable bounded draw (the std distributions are not
// specified bit-for-bit across standard libraries).
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // First `k` elements of a Fisher-Yates shuffle of `items`, in draw order.
  template <typename T>
  std::vector<T> sample(std::vector<T> items, std::size_t k) {
    if (k > items.size()) k = items.size();
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(below(items.size() - i));
      std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tiermem
