#pragma once

#include <cmath>

#include "signnet/model.hpp"

namespace signnet::testing {

/// Plain scaled dot-product multi-head attention followed by the output
/// projection, written without the autodiff engine.
inline ad::Matrix vanilla_attention(const ad::Matrix& h, const LayerParams& l, int heads) {
  const ad::Matrix q = h * l.w_q.value();
  const ad::Matrix k = h * l.w_k.value();
  const ad::Matrix v = h * l.w_v.value();
  const Eigen::Index dk = q.cols() / heads;
  ad::Matrix concat(h.rows(), q.cols());
  for (int hd = 0; hd < heads; ++hd) {
    const ad::Matrix qh = q.middleCols(hd * dk, dk);
    const ad::Matrix kh = k.middleCols(hd * dk, dk);
    ad::Matrix s = qh * kh.transpose() / std::sqrt(static_cast<double>(dk));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      double total = 0;
      const double top = s.row(i).maxCoeff();
      for (Eigen::Index j = 0; j < s.cols(); ++j) total += s(i, j) = std::exp(s(i, j) - top);
      s.row(i) /= total;
    }
    concat.middleCols(hd * dk, dk) = s * v.middleCols(hd * dk, dk);
  }
  return concat * l.w_o.value() + l.b_o.value().replicate(h.rows(), 1);
}

}  // namespace signnet::testing
