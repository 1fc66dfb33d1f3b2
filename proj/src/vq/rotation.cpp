#include "spotlight/vq/rotation.hpp"

#include <cmath>
#include <string>

namespace spotlight::vq {

double norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

Rotation Rotation::align(std::span<const double> e, std::span<const double> q) {
  if (e.size() != q.size()) {
    throw std::invalid_argument("rotation_align: dimensions " + std::to_string(e.size()) +
                                " and " + std::to_string(q.size()) + " differ");
  }
  const double ne = norm(e), nq = norm(q);
  if (ne <= kNormEpsilon || nq <= kNormEpsilon) {
    throw DegenerateInput("rotation_align: vector norm below 1e-8");
  }
  Rotation rot;
  const std::size_t d = e.size();
  rot.e_hat_.resize(d);
  rot.q_hat_.resize(d);
  rot.r_.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    rot.e_hat_[i] = e[i] / ne;
    rot.q_hat_[i] = q[i] / nq;
    rot.r_[i] = rot.e_hat_[i] + rot.q_hat_[i];
  }
  double nr = norm(rot.r_);
  if (nr < kAntiparallelEpsilon) {
    rot.reflection_ = true;
    for (std::size_t i = 0; i < d; ++i) rot.r_[i] = rot.e_hat_[i] - rot.q_hat_[i];
    nr = norm(rot.r_);
  }
  for (auto& v : rot.r_) v /= nr;
  return rot;
}

void Rotation::apply(std::span<const double> x, std::span<double> out) const {
  const double rx = dot(r_, x);
  if (reflection_) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - 2.0 * r_[i] * rx;
    return;
  }
  const double ex = dot(e_hat_, x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - 2.0 * r_[i] * rx + 2.0 * q_hat_[i] * ex;
}

void Rotation::apply_transpose(std::span<const double> x, std::span<double> out) const {
  const double rx = dot(r_, x);
  if (reflection_) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - 2.0 * r_[i] * rx;
    return;
  }
  const double qx = dot(q_hat_, x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - 2.0 * r_[i] * rx + 2.0 * e_hat_[i] * qx;
}

std::vector<double> Rotation::apply(std::span<const double> x) const {
  std::vector<double> out(x.size());
  apply(x, out);
  return out;
}

std::vector<double> Rotation::apply_transpose(std::span<const double> x) const {
  std::vector<double> out(x.size());
  apply_transpose(x, out);
  return out;
}

}  // namespace spotlight::vq
