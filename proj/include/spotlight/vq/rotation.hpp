#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace spotlight::vq {

inline constexpr double kNormEpsilon = 1e-8;
inline constexpr double kAntiparallelEpsilon = 1e-6;

/// Thrown when a vector is too short to define a direction.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Orthogonal map taking the direction of e onto the direction of q, applied
/// matrix-free in O(D):
///   r = (e^ + q^) / |e^ + q^|,  R x = x - 2 r (r.x) + 2 q^ (e^.x).
/// When e^ and q^ are antiparallel the single Householder reflection
/// H = I - 2 v v^T with v = (e^ - q^) / |e^ - q^| is used instead.
class Rotation {
 public:
  static Rotation align(std::span<const double> e, std::span<const double> q);

  std::size_t dim() const { return e_hat_.size(); }
  bool is_reflection() const { return reflection_; }
  void apply(std::span<const double> x, std::span<double> out) const;
  void apply_transpose(std::span<const double> x, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_transpose(std::span<const double> x) const;

 private:
  std::vector<double> e_hat_;
  std::vector<double> q_hat_;
  std::vector<double> r_;  // reflection axis (v when reflection_)
  bool reflection_ = false;
};

/// R with R e^ = q^.
inline Rotation rotation_align(std::span<const double> e, std::span<const double> q) {
  return Rotation::align(e, q);
}

double norm(std::span<const double> x);

}  // namespace spotlight::vq
