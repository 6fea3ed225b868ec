#include "passt/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace passt {

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open file for checksum: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

namespace {

// two_sum: a + b = s + err exactly.
inline void two_sum(double a, double b, double& s, double& err) {
  s = a + b;
  double bv = s - a;
  err = (a - (s - bv)) + (b - bv);
}

}  // namespace

double exact_sum(std::span<const double> values) {
  // Maintain a list of non-overlapping partials; their exact sum equals the
  // running total. Final result is the float closest to the exact sum.
  std::vector<double> partials;
  for (double x : values) {
    size_t used = 0;
    for (double p : partials) {
      if (std::abs(x) < std::abs(p)) std::swap(x, p);
      double s, err;
      two_sum(x, p, s, err);
      if (err != 0.0) partials[used++] = err;
      x = s;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  // Round the exact value represented by the partials to the nearest double,
  // including the half-way correction, so the result is independent of the
  // order the inputs arrived in.
  if (partials.empty()) return 0.0;
  size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    double x = hi;
    double y = partials[--n];
    hi = x + y;
    double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) ||
                (lo > 0.0 && partials[n - 1] > 0.0))) {
    double y = lo * 2.0;
    double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace passt
