#include "cbob/sobol.hpp"

#include <array>
#include <bit>
#include <random>
#include <stdexcept>

namespace cbob {

namespace {

struct DirectionRow {
  std::uint32_t poly;  // full binary encoding of the primitive polynomial
  std::array<std::uint32_t, 8> m;
};

// Standard direction-number table (first 32 dimensions).
constexpr DirectionRow kTable[SobolSequence::kMaxDim] = {
    {1u, {1u}},
    {3u, {1u}},
    {7u, {1u, 3u}},
    {11u, {1u, 3u, 1u}},
    {13u, {1u, 1u, 1u}},
    {19u, {1u, 1u, 3u, 3u}},
    {25u, {1u, 3u, 5u, 13u}},
    {37u, {1u, 1u, 5u, 5u, 17u}},
    {41u, {1u, 1u, 5u, 5u, 5u}},
    {47u, {1u, 1u, 7u, 11u, 19u}},
    {55u, {1u, 1u, 5u, 1u, 1u}},
    {59u, {1u, 1u, 1u, 3u, 11u}},
    {61u, {1u, 3u, 5u, 5u, 31u}},
    {67u, {1u, 3u, 3u, 9u, 7u, 49u}},
    {91u, {1u, 1u, 1u, 15u, 21u, 21u}},
    {97u, {1u, 3u, 1u, 13u, 27u, 49u}},
    {103u, {1u, 1u, 1u, 15u, 7u, 5u}},
    {109u, {1u, 3u, 1u, 15u, 13u, 25u}},
    {115u, {1u, 1u, 5u, 5u, 19u, 61u}},
    {131u, {1u, 3u, 7u, 11u, 23u, 15u, 103u}},
    {137u, {1u, 3u, 7u, 13u, 13u, 15u, 69u}},
    {143u, {1u, 1u, 3u, 13u, 7u, 35u, 63u}},
    {145u, {1u, 3u, 5u, 9u, 1u, 25u, 53u}},
    {157u, {1u, 3u, 1u, 13u, 9u, 35u, 107u}},
    {167u, {1u, 3u, 1u, 5u, 27u, 61u, 31u}},
    {171u, {1u, 1u, 5u, 11u, 19u, 41u, 61u}},
    {185u, {1u, 3u, 5u, 3u, 3u, 13u, 69u}},
    {191u, {1u, 1u, 7u, 13u, 1u, 19u, 1u}},
    {193u, {1u, 3u, 7u, 5u, 13u, 19u, 59u}},
    {203u, {1u, 1u, 3u, 9u, 25u, 29u, 41u}},
    {211u, {1u, 3u, 5u, 13u, 23u, 1u, 55u}},
    {213u, {1u, 3u, 7u, 3u, 13u, 59u, 17u}},
};

}  // namespace

SobolSequence::SobolSequence(int dim, std::uint64_t seed, bool scramble)
    : dim_(dim), scramble_(scramble) {
  if (dim < 1 || dim > kMaxDim)
    throw std::invalid_argument("SobolSequence: dimension must be in [1, 32]");
  v_.resize(dim_);
  state_.assign(dim_, 0u);
  shift_.assign(dim_, 0u);

  for (int d = 0; d < dim_; ++d) {
    auto& v = v_[d];
    if (d == 0) {
      for (int k = 1; k <= kBits; ++k) v[k] = 1u << (kBits - k);
      continue;
    }
    const DirectionRow& row = kTable[d];
    const int s = std::bit_width(row.poly) - 1;
    const std::uint32_t a = (row.poly & ~(1u << s)) >> 1;
    for (int k = 1; k <= s && k <= kBits; ++k) v[k] = row.m[k - 1] << (kBits - k);
    for (int k = s + 1; k <= kBits; ++k) {
      v[k] = v[k - s] ^ (v[k - s] >> s);
      for (int i = 1; i <= s - 1; ++i)
        if ((a >> (s - 1 - i)) & 1u) v[k] ^= v[k - i];
    }
  }

  if (scramble_) {
    std::mt19937_64 gen(seed);
    for (int d = 0; d < dim_; ++d)
      shift_[d] = static_cast<std::uint32_t>(gen() >> 32);
  }
}

Eigen::VectorXd SobolSequence::next() {
  Eigen::VectorXd p(dim_);
  for (int d = 0; d < dim_; ++d) {
    const std::uint32_t bits = state_[d] ^ shift_[d];
    // The half-integer offset keeps scrambled points strictly inside (0,1).
    p(d) = scramble_ ? (static_cast<double>(bits) + 0.5) * 0x1.0p-32
                     : static_cast<double>(bits) * 0x1.0p-32;
  }
  const int c = std::countr_one(index_) + 1;  // position of lowest zero bit
  if (c <= kBits)
    for (int d = 0; d < dim_; ++d) state_[d] ^= v_[d][c];
  ++index_;
  return p;
}

Eigen::MatrixXd SobolSequence::take(int count) {
  Eigen::MatrixXd pts(dim_, count);
  for (int i = 0; i < count; ++i) pts.col(i) = next();
  return pts;
}

Eigen::MatrixXd sobol_points(int dim, int count, std::uint64_t seed) {
  return SobolSequence(dim, seed, true).take(count);
}

}  // namespace cbob
