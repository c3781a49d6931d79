#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "colortrigger/errors.hpp"

namespace colortrigger {

using Vector = std::vector<double>;
using Timestep = std::uint64_t;

/// A unit-norm frame descriptor tagged with its timestep.
struct FrameFeature {
  Timestep t = 0;
  Vector f;

  friend bool operator==(const FrameFeature&, const FrameFeature&) = default;
};

inline constexpr double kZeroNormThreshold = 1e-12;

/// Scales `raw` to unit l2 norm. Single-precision input is widened before any
/// arithmetic. Throws errc::zero_vector for (near) blank descriptors.
template <typename Real>
  requires std::is_floating_point_v<Real>
Vector normalize_feature(std::span<const Real> raw) {
  if (raw.empty()) {
    throw error(errc::dimension_mismatch, "feature must have dimension >= 1");
  }
  Vector out(raw.begin(), raw.end());
  double sq = 0.0;
  for (double x : out) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm >= kZeroNormThreshold)) {
    throw error(errc::zero_vector, "feature norm " + std::to_string(norm) + " below threshold");
  }
  for (double& x : out) x /= norm;
  return out;
}

inline Vector normalize_feature(const Vector& raw) {
  return normalize_feature(std::span<const double>(raw));
}

/// Inner product with four interleaved partial sums (fixed summation order,
/// so results are reproducible while still vectorizable).
inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s2) + (s1 + s3);
}

/// Dense symmetric n x n matrix, row-major.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  explicit AffinityMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * n_, n_};
  }

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const AffinityMatrix&, const AffinityMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Off-diagonal affinity for a cosine similarity: (1 + cos) / 2, clamped to [0, 1].
inline double affinity_from_cosine(double cosine) noexcept {
  return std::clamp(0.5 * (cosine + 1.0), 0.0, 1.0);
}

/// Causal ring buffer of the most recent `capacity` frames, oldest first.
///
/// Pairwise dot products are cached per slot as frames arrive, so affinity()
/// costs O(W^2) plus O(W*d) per push. build_affinity() below recomputes the
/// full Gram matrix from the stored features and is the reference path; both
/// produce bit-identical matrices because each entry is the same dot product
/// summed in the same order.
class AffinityWindow {
 public:
  explicit AffinityWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw error(errc::invalid_config, "window capacity must be >= 1");
    slots_.resize(capacity);
    gram_.assign(capacity * capacity, 0.0);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  /// Feature dimension, fixed by the first push (0 before that).
  std::size_t dim() const noexcept { return dim_; }

  const FrameFeature& operator[](std::size_t i) const noexcept { return slots_[slot(i)]; }
  const FrameFeature& oldest() const noexcept { return (*this)[0]; }
  const FrameFeature& newest() const noexcept { return (*this)[size_ - 1]; }

  void push(FrameFeature feat) {
    if (feat.f.empty()) throw error(errc::dimension_mismatch, "empty feature");
    if (dim_ != 0 && feat.f.size() != dim_) {
      throw error(errc::dimension_mismatch, "expected dim " + std::to_string(dim_) + ", got " +
                                                std::to_string(feat.f.size()));
    }
    if (size_ > 0 && feat.t <= newest().t) {
      throw error(errc::non_monotonic_timestep, "timestep " + std::to_string(feat.t) +
                                                    " does not follow " +
                                                    std::to_string(newest().t));
    }
    dim_ = feat.f.size();

    std::size_t target;
    if (size_ < capacity_) {
      target = slot(size_);
      ++size_;
    } else {
      target = head_;
      head_ = (head_ + 1) % capacity_;
    }
    slots_[target] = std::move(feat);

    const auto& fresh = slots_[target].f;
    for (std::size_t i = 0; i < size_; ++i) {
      const std::size_t other = slot(i);
      const double g = dot(fresh, slots_[other].f);
      gram_[target * capacity_ + other] = g;
      gram_[other * capacity_ + target] = g;
    }
  }

  /// Affinity matrix from the cached dot products (incremental path).
  AffinityMatrix affinity() const {
    AffinityMatrix a(size_);
    for (std::size_t i = 0; i < size_; ++i) {
      a(i, i) = 1.0;
      for (std::size_t j = i + 1; j < size_; ++j) {
        const double v = affinity_from_cosine(gram_[slot(i) * capacity_ + slot(j)]);
        a(i, j) = v;
        a(j, i) = v;
      }
    }
    return a;
  }

 private:
  std::size_t slot(std::size_t i) const noexcept { return (head_ + i) % capacity_; }

  std::size_t capacity_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
  std::vector<FrameFeature> slots_;
  std::vector<double> gram_;
};

/// Value-semantics form of AffinityWindow::push.
inline AffinityWindow push_frame(AffinityWindow window, FrameFeature feat) {
  window.push(std::move(feat));
  return window;
}

/// Reference affinity: full F F^T recompute over the window, rows oldest
/// first, off-diagonals mapped through affinity_from_cosine and the diagonal
/// overwritten with exactly 1.
inline AffinityMatrix build_affinity(const AffinityWindow& window) {
  const std::size_t n = window.size();
  AffinityMatrix a(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = affinity_from_cosine(dot(window[i].f, window[j].f));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) a(j, i) = a(i, j);
    a(i, i) = 1.0;
  }
  return a;
}

}  // namespace colortrigger
