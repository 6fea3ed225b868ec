#include "passt/rng.hpp"

#include <algorithm>
#include <numeric>

namespace passt {

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
  if (k > n) throw Error("bounds", "sample_without_replacement: k > n");
  std::vector<size_t> pool(n);
  std::iota(pool.begin(), pool.end(), size_t{0});
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<size_t> Rng::permutation(size_t n) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = 0; i + 1 < n; ++i) {
    size_t j = i + static_cast<size_t>(uniform_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace passt
