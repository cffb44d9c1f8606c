#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace cbob {

// Gray-code Sobol generator (32-bit direction integers, standard primitive
// polynomial table, up to 32 dimensions). When scrambling is enabled every
// dimension gets a seeded random digital shift, which keeps the base-2 net
// structure while decorrelating designs across seeds.
class SobolSequence {
 public:
  static constexpr int kMaxDim = 32;
  static constexpr int kBits = 32;

  SobolSequence(int dim, std::uint64_t seed, bool scramble = true);

  // Next point. Scrambled points lie strictly inside (0,1)^dim; the
  // unscrambled sequence starts at the origin (reference convention).
  Eigen::VectorXd next();

  // dim x count matrix of consecutive points.
  Eigen::MatrixXd take(int count);

  [[nodiscard]] int dim() const { return dim_; }

 private:
  int dim_;
  bool scramble_;
  std::uint64_t index_ = 0;
  std::vector<std::uint32_t> state_;
  std::vector<std::uint32_t> shift_;
  std::vector<std::array<std::uint32_t, kBits + 1>> v_;
};

// Convenience: dim x count scrambled Sobol batch.
Eigen::MatrixXd sobol_points(int dim, int count, std::uint64_t seed);

}  // namespace cbob
