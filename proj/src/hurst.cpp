// SPDX-License-Identifier: Apache-2.0
#include "pit/error.hpp"
#include "pit/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pit {

namespace {

// Mean R/S over the non-overlapping blocks of the given size. Blocks with
// zero standard deviation are skipped; returns 0 when every block is flat.
double mean_rescaled_range(const Eigen::Ref<const Vector>& x, Index block) {
  const Index blocks = x.size() / block;
  double total = 0.0;
  Index used = 0;
  for (Index b = 0; b < blocks; ++b) {
    const auto seg = x.segment(b * block, block);
    const double mu = seg.sum() / double(block);
    double cum = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double ss = 0.0;
    for (Index i = 0; i < block; ++i) {
      const double dev = seg(i) - mu;
      cum += dev;
      lo = std::min(lo, cum);
      hi = std::max(hi, cum);
      ss += dev * dev;
    }
    const double sd = std::sqrt(ss / double(block));
    if (sd > 0.0) {
      total += (hi - lo) / sd;
      ++used;
    }
  }
  return used > 0 ? total / double(used) : 0.0;
}

// Anis-Lloyd expected R/S of n i.i.d. Gaussian samples, with the small-sample
// factor (n - 1/2) / n.
double expected_rescaled_range(Index n) {
  double tail = 0.0;
  for (Index i = 1; i < n; ++i) tail += std::sqrt(double(n - i) / double(i));
  const double nd = double(n);
  const double gamma_ratio =
      n <= 340 ? std::exp(std::lgamma((nd - 1.0) / 2.0) - std::lgamma(nd / 2.0)) / std::sqrt(M_PI)
               : 1.0 / std::sqrt(nd * M_PI / 2.0);
  return (nd - 0.5) / nd * gamma_ratio * tail;
}

}  // namespace

HurstEstimate estimate_hurst_rs(const Eigen::Ref<const Vector>& series, Index min_block,
                                Index num_scales) {
  const Index n = series.size();
  if (min_block < 2 || num_scales < 2) {
    throw ContractError("estimate_hurst_rs: min_block must be >= 2 and num_scales >= 2");
  }
  if (n < 4 * min_block) {
    throw ContractError("estimate_hurst_rs: series of length " + std::to_string(n) +
                        " is shorter than 4 * min_block = " + std::to_string(4 * min_block));
  }
  const double mu = series.mean();
  if ((series.array() - mu).abs().maxCoeff() == 0.0) return HurstEstimate{0.5, true};

  const double lo = std::log(double(min_block));
  const double hi = std::log(double(n / 2));
  std::vector<Index> sizes;
  for (Index k = 0; k < num_scales; ++k) {
    const double t = double(k) / double(num_scales - 1);
    const Index size = static_cast<Index>(std::llround(std::exp(lo + t * (hi - lo))));
    if (sizes.empty() || size != sizes.back()) sizes.push_back(size);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (Index size : sizes) {
    const double rs = mean_rescaled_range(series, size);
    if (rs <= 0.0) continue;
    xs.push_back(std::log(double(size)));
    ys.push_back(std::log(rs) - std::log(expected_rescaled_range(size)));
  }
  if (xs.size() < 2) return HurstEstimate{0.5, true};

  // Least-squares slope.
  const double count = double(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= count;
  my /= count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = 0.5 + sxy / sxx;
  return HurstEstimate{std::clamp(slope, 0.01, 0.99), false};
}

}  // namespace pit
