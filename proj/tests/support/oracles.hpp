#pragma once

#include <vector>

#include "ahcq/quantizers.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::testing {

// Straightforward restatement of the HLUQ calibration objective ||XW - XqW||^2.
inline double objective_oracle(const Tensor& x, const Tensor& w, const HluqConfig& c) {
  std::vector<double> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = hluq_dequant(hluq_quant(x[i], c), c);
  std::vector<double> ref(x.rows() * w.cols(), 0.0), got(ref.size(), 0.0);
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t m = 0; m < w.cols(); ++m)
      for (std::size_t k = 0; k < x.cols(); ++k) {
        ref[n * w.cols() + m] += static_cast<double>(x.at(n, k)) * w.at(k, m);
        got[n * w.cols() + m] += q[n * x.cols() + k] * w.at(k, m);
      }
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) acc += (ref[i] - got[i]) * (ref[i] - got[i]);
  return acc;
}

}  // namespace ahcq::testing
