#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockcw/model.hpp"
#include "blockcw/types.hpp"

namespace blockcw {

// Enumeration of the magnetization lattice: block i contributes n p_i + 1 levels
// M_i in {-n p_i, -n p_i + 2, ..., n p_i}, indexed in mixed radix with the last
// block fastest. Every level is reachable, so the enumeration is exactly the
// state space of the lumped chain.
class StateSpace {
 public:
  static constexpr std::int64_t default_cap = 50'000'000;

  explicit StateSpace(const BlockModel& model, std::int64_t cap = default_cap) {
    const int m = model.block_count();
    sizes_ = model.block_sizes();
    dims_.resize(m);
    stride_.resize(m);
    std::int64_t total = 1;
    for (int i = 0; i < m; ++i) dims_[i] = sizes_[i] + 1;
    for (int i = m - 1; i >= 0; --i) {
      stride_[i] = total;
      require(total <= cap / dims_[i], Errc::state_space_too_large,
              "magnetization state space exceeds the configured cap of " + std::to_string(cap));
      total *= dims_[i];
    }
    size_ = total;
  }

  std::int64_t size() const { return size_; }
  int block_count() const { return static_cast<int>(dims_.size()); }
  const IndexVector& dims() const { return dims_; }
  std::int64_t stride(int i) const { return stride_[i]; }

  bool contains(const MagVector& mag) const {
    if (mag.size() != dims_.size()) return false;
    for (int i = 0; i < dims_.size(); ++i) {
      if (std::abs(mag[i]) > sizes_[i]) return false;
      if (((mag[i] + sizes_[i]) & 1) != 0) return false;
    }
    return true;
  }

  std::int64_t index(const MagVector& mag) const {
    require(contains(mag), Errc::state_out_of_range, "magnetization not in state space");
    std::int64_t idx = 0;
    for (int i = 0; i < dims_.size(); ++i) idx += std::int64_t((mag[i] + sizes_[i]) / 2) * stride_[i];
    return idx;
  }

  MagVector state(std::int64_t idx) const {
    MagVector mag(dims_.size());
    for (int i = 0; i < dims_.size(); ++i) {
      const std::int64_t digit = idx / stride_[i];
      idx -= digit * stride_[i];
      mag[i] = static_cast<int>(2 * digit) - sizes_[i];
    }
    return mag;
  }

 private:
  IndexVector dims_;
  IndexVector sizes_;
  std::vector<std::int64_t> stride_;
  std::int64_t size_ = 0;
};

// Exact stationary distribution of the lumped chain, normalized by log-sum-exp.
inline Vector lumped_stationary(const BlockModel& model, double beta,
                                std::int64_t cap = StateSpace::default_cap) {
  const StateSpace space(model, cap);
  Vector logw(space.size());
  for (std::int64_t idx = 0; idx < space.size(); ++idx)
    logw[idx] = lumped_log_weight(model, beta, space.state(idx));
  const double mx = logw.maxCoeff();
  Vector w = (logw.array() - mx).exp();
  w /= w.sum();
  return w;
}

}  // namespace blockcw
