#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ahcq/error.hpp"

namespace ahcq {

/// Dense row-major float tensor with an explicit channel axis.
///
/// The value is immutable after construction: every element is finite, the
/// extents multiply to the payload length and the channel axis is in range.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> dims, std::vector<float> data, std::size_t channel_axis = 0)
      : dims_(std::move(dims)), data_(std::move(data)), channel_axis_(channel_axis) {
    validate();
  }

  static Tensor zeros(std::vector<std::size_t> dims, std::size_t channel_axis = 0) {
    const std::size_t n = product(dims);
    return Tensor(std::move(dims), std::vector<float>(n, 0.0f), channel_axis);
  }

  static Tensor filled(std::vector<std::size_t> dims, float value, std::size_t channel_axis = 0) {
    const std::size_t n = product(dims);
    return Tensor(std::move(dims), std::vector<float>(n, value), channel_axis);
  }

  /// Builds a [rows, cols] tensor from nested initializer lists; channel axis 1.
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows) {
    std::vector<float> data;
    std::size_t cols = 0;
    for (const auto& r : rows) {
      if (cols == 0) cols = r.size();
      if (r.size() != cols) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data), 1);
  }

  static std::size_t product(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t channel_axis() const noexcept { return channel_axis_; }
  std::size_t channels() const noexcept { return dims_.empty() ? 0 : dims_[channel_axis_]; }
  std::span<const float> data() const noexcept { return data_; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t rows() const {
    require_rank(2);
    return dims_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return dims_[1];
  }
  float at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  /// Number of elements between consecutive indices of the channel axis.
  std::size_t channel_stride() const noexcept {
    std::size_t stride = 1;
    for (std::size_t a = channel_axis_ + 1; a < dims_.size(); ++a) stride *= dims_[a];
    return stride;
  }

  /// Channel index of the element at flat offset i.
  std::size_t channel_of(std::size_t i) const noexcept {
    return (i / channel_stride()) % dims_[channel_axis_];
  }

  Tensor with_channel_axis(std::size_t axis) const { return Tensor(dims_, data_, axis); }

  bool operator==(const Tensor& other) const = default;

 private:
  void require_rank(std::size_t r) const {
    if (dims_.size() != r) throw ShapeError("expected rank " + std::to_string(r) + " tensor");
  }

  void validate() const {
    if (dims_.empty()) throw ShapeError("tensor rank must be at least 1");
    for (std::size_t d : dims_)
      if (d == 0) throw ShapeError("tensor extents must be positive");
    if (product(dims_) != data_.size())
      throw ShapeError("extent product " + std::to_string(product(dims_)) + " != payload length " +
                       std::to_string(data_.size()));
    if (channel_axis_ >= dims_.size()) throw ShapeError("channel axis out of range");
    for (float v : data_)
      if (!std::isfinite(v)) throw DomainError("tensor values must be finite");
  }

  std::vector<std::size_t> dims_;
  std::vector<float> data_;
  std::size_t channel_axis_ = 0;
};

/// Per-channel min/max/mean along the tensor's channel axis.
struct ChannelStats {
  std::vector<float> min;
  std::vector<float> max;
  std::vector<float> mean;

  std::size_t channels() const noexcept { return min.size(); }
};

inline ChannelStats channel_stats(const Tensor& t) {
  if (t.empty()) throw DomainError("channel_stats of an empty tensor");
  const std::size_t c = t.channels();
  std::vector<float> lo(c, std::numeric_limits<float>::infinity());
  std::vector<float> hi(c, -std::numeric_limits<float>::infinity());
  std::vector<double> sum(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t ch = t.channel_of(i);
    const float v = t[i];
    lo[ch] = std::min(lo[ch], v);
    hi[ch] = std::max(hi[ch], v);
    sum[ch] += v;
    ++count[ch];
  }
  ChannelStats out{lo, hi, std::vector<float>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Clamp guards the float rounding of the mean against the exact bounds.
    const float m = static_cast<float>(sum[ch] / static_cast<double>(count[ch]));
    out.mean[ch] = std::clamp(m, lo[ch], hi[ch]);
  }
  return out;
}

/// out[n,m] = sum_k a[n,k] * b[k,m], summed in ascending k.
///
/// Products and partial sums are carried in double and rounded to float once,
/// so the result is reproducible bit for bit and independent of build flags.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul inner dimension mismatch: " + std::to_string(k) + " vs " +
                     std::to_string(b.rows()));
  std::vector<float> out(n * m);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<double>(av[i * k + p]) * static_cast<double>(bv[p * m + j]);
      out[i * m + j] = static_cast<float>(acc);
    }
  }
  return Tensor({n, m}, std::move(out), 1);
}

}  // namespace ahcq
