#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "blockcw/types.hpp"

namespace blockcw {

// Heat-bath acceptance rates r±(s) = e^{±βs} / (e^{βs} + e^{-βs}) = (1 ± tanh(βs)) / 2.
template <class Scalar>
Scalar rate_plus(Scalar beta, Scalar s) {
  using std::tanh;
  return (Scalar(1) + tanh(beta * s)) / Scalar(2);
}

template <class Scalar>
Scalar rate_minus(Scalar beta, Scalar s) {
  using std::tanh;
  return (Scalar(1) - tanh(beta * s)) / Scalar(2);
}

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

// Block Ising instance on the complete graph: n sites partitioned into m blocks
// with proportions p_i (so block i has exactly n*p_i sites), and pairwise coupling
// k_ij / n between a site in block i and a site in block j. The inverse temperature
// is not stored here; it is a call-site parameter so one instance can be swept.
class BlockModel {
 public:
  static BlockModel create(int n, const Vector& p, const Matrix& k) {
    require(n >= 1, Errc::bad_proportions, "site count must be positive");
    require(p.size() >= 1, Errc::bad_proportions, "need at least one block");
    require(k.rows() == p.size() && k.cols() == p.size(), Errc::dimension_mismatch,
            "interaction matrix must be m x m");
    const int m = static_cast<int>(p.size());
    require(n >= m, Errc::bad_proportions, "need n >= m");
    require(std::abs(p.sum() - 1.0) <= 1e-12, Errc::bad_proportions,
            "block proportions must sum to 1");
    IndexVector sizes(m);
    for (int i = 0; i < m; ++i) {
      const double npi = double(n) * p[i];
      const auto rounded = std::llround(npi);
      require(std::abs(npi - double(rounded)) <= 1e-6, Errc::non_integer_block_size,
              "n*p_" + std::to_string(i) + " = " + std::to_string(npi) + " is not an integer");
      require(rounded >= 1, Errc::non_integer_block_size,
              "block " + std::to_string(i) + " must hold at least one site");
      sizes[i] = static_cast<int>(rounded);
    }
    require(sizes.sum() == n, Errc::bad_proportions, "block sizes must sum to n");
    validate_interaction(k);
    return BlockModel(n, sizes, k);
  }

  // Exact-proportion constructor; n*num_i must be divisible by den_i.
  static BlockModel create(int n, const std::vector<Fraction>& p, const Matrix& k) {
    const int m = static_cast<int>(p.size());
    require(m >= 1, Errc::bad_proportions, "need at least one block");
    require(k.rows() == m && k.cols() == m, Errc::dimension_mismatch,
            "interaction matrix must be m x m");
    IndexVector sizes(m);
    std::int64_t total = 0;
    for (int i = 0; i < m; ++i) {
      require(p[i].den > 0 && p[i].num >= 0, Errc::bad_proportions, "proportions must be >= 0");
      const std::int64_t numer = std::int64_t(n) * p[i].num;
      require(numer % p[i].den == 0, Errc::non_integer_block_size,
              "n*p_" + std::to_string(i) + " is not an integer");
      const std::int64_t s = numer / p[i].den;
      require(s >= 1, Errc::non_integer_block_size,
              "block " + std::to_string(i) + " must hold at least one site");
      sizes[i] = static_cast<int>(s);
      total += s;
    }
    require(total == n, Errc::bad_proportions, "block proportions must sum to 1");
    validate_interaction(k);
    return BlockModel(n, sizes, k);
  }

  int n() const { return n_; }
  int block_count() const { return static_cast<int>(sizes_.size()); }
  const Vector& p() const { return p_; }
  const Matrix& k() const { return k_; }
  const IndexVector& block_sizes() const { return sizes_; }
  int block_of(int site) const { return site_block_[static_cast<std::size_t>(site)]; }
  int block_begin(int i) const { return offsets_[i]; }
  int block_end(int i) const { return offsets_[i + 1]; }

  Vector to_s(const MagVector& mag) const { return mag.cast<double>() / double(n_); }

 private:
  BlockModel(int n, IndexVector sizes, Matrix k)
      : n_(n), sizes_(std::move(sizes)), k_(std::move(k)) {
    const int m = static_cast<int>(sizes_.size());
    // proportions are rebuilt from the materialized integer sizes, so n*p_i is exact
    p_ = sizes_.cast<double>() / double(n_);
    offsets_.resize(m + 1);
    offsets_[0] = 0;
    for (int i = 0; i < m; ++i) offsets_[i + 1] = offsets_[i] + sizes_[i];
    site_block_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < m; ++i)
      for (int v = offsets_[i]; v < offsets_[i + 1]; ++v) site_block_[v] = i;
  }

  static void validate_interaction(const Matrix& k) {
    const int m = static_cast<int>(k.rows());
    const double scale = k.cwiseAbs().maxCoeff();
    for (int i = 0; i < m; ++i) {
      require(k(i, i) >= 0.0, Errc::non_positive_interaction, "diagonal couplings must be >= 0");
      for (int j = i + 1; j < m; ++j) {
        require(std::abs(k(i, j) - k(j, i)) <= 1e-14 * std::max(1.0, scale),
                Errc::asymmetric_interaction, "interaction matrix must be symmetric");
        require(k(i, j) > 0.0, Errc::non_positive_interaction,
                "off-diagonal couplings must be > 0 (ferromagnetic)");
      }
    }
  }

  int n_ = 0;
  IndexVector sizes_;
  Matrix k_;
  Vector p_;
  IndexVector offsets_;
  std::vector<std::int32_t> site_block_;
};

// Full spin assignment with cached block magnetizations.
struct SpinConfig {
  std::vector<std::int8_t> spin;  // values in {-1,+1}
  MagVector mag;
};

inline SpinConfig uniform_config(const BlockModel& model, std::int8_t value) {
  SpinConfig cfg;
  cfg.spin.assign(static_cast<std::size_t>(model.n()), value);
  cfg.mag = model.block_sizes() * int(value);
  return cfg;
}

inline SpinConfig all_plus(const BlockModel& model) { return uniform_config(model, +1); }
inline SpinConfig all_minus(const BlockModel& model) { return uniform_config(model, -1); }

inline SpinConfig config_from_spins(const BlockModel& model, std::vector<std::int8_t> spins) {
  require(static_cast<int>(spins.size()) == model.n(), Errc::dimension_mismatch,
          "configuration length must equal n");
  SpinConfig cfg;
  cfg.spin = std::move(spins);
  cfg.mag = MagVector::Zero(model.block_count());
  for (int v = 0; v < model.n(); ++v) {
    require(cfg.spin[v] == 1 || cfg.spin[v] == -1, Errc::bad_input, "spins must be +-1");
    cfg.mag[model.block_of(v)] += cfg.spin[v];
  }
  return cfg;
}

inline void set_spin(const BlockModel& model, SpinConfig& cfg, int site, std::int8_t value) {
  const std::int8_t old = cfg.spin[static_cast<std::size_t>(site)];
  if (old == value) return;
  cfg.spin[static_cast<std::size_t>(site)] = value;
  cfg.mag[model.block_of(site)] += int(value) - int(old);
}

inline bool mag_in_range(const BlockModel& model, const MagVector& mag) {
  if (mag.size() != model.block_count()) return false;
  for (int i = 0; i < model.block_count(); ++i) {
    const int s = model.block_sizes()[i];
    if (std::abs(mag[i]) > s) return false;
    if (((mag[i] + s) & 1) != 0) return false;  // M_i == n p_i (mod 2)
  }
  return true;
}

// H(sigma) = -sum over unordered distinct pairs of K(v,w) sigma(v) sigma(w),
// evaluated through the block quadratic form:
//   H = -(1/(2n)) <M, K M> + (1/2) sum_i k_ii p_i.
inline double hamiltonian(const BlockModel& model, const SpinConfig& cfg) {
  const Vector mf = cfg.mag.cast<double>();
  const double quad = mf.dot(model.k() * mf) / double(model.n());
  return -0.5 * quad + 0.5 * model.k().diagonal().dot(model.p());
}

inline double log_binom(int n, int k) {
  return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
         std::lgamma(double(n - k) + 1.0);
}

// Unnormalized log weight of a magnetization vector under the lumped Gibbs measure:
// log prod_i C(n p_i, (n p_i + M_i)/2) + (beta/2n) <M, K M>.
inline double lumped_log_weight(const BlockModel& model, double beta, const MagVector& mag) {
  require(mag_in_range(model, mag), Errc::state_out_of_range,
          "magnetization outside the reachable lattice");
  double lw = 0.0;
  for (int i = 0; i < model.block_count(); ++i) {
    const int s = model.block_sizes()[i];
    lw += log_binom(s, (s + mag[i]) / 2);
  }
  const Vector mf = mag.cast<double>();
  lw += 0.5 * beta / double(model.n()) * mf.dot(model.k() * mf);
  return lw;
}

}  // namespace blockcw
