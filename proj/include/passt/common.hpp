#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace passt {

// Error with a machine-readable kind ("shape", "nonfinite", "format", "bounds",
// "usage", "io", "state"). The CLI maps kinds onto structured JSON errors.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// FNV-1a 64-bit, used for file checksums and checkpoint ids.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t file_checksum(const std::string& path);

// Exact (error-free) sum of doubles via Shewchuk's expansion algorithm.
// The result is the correctly rounded sum, so it is independent of the
// order of the addends. Used where permutation invariance must hold at
// the bit level (window averaging).
double exact_sum(std::span<const double> values);

}  // namespace passt
