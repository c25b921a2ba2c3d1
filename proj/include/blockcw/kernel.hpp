#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

#include "blockcw/model.hpp"
#include "blockcw/spectral.hpp"
#include "blockcw/state_space.hpp"
#include "blockcw/types.hpp"

namespace blockcw {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Row-stochastic transition kernel of the lumped magnetization chain. Each row
// holds at most 2m+1 entries: the stay probability and one entry per feasible
// move S -> S +- (2/n) e_i with probability ((p_i -+ S_i)/2) r±(X_i +- k_ii/n),
// X_i = sum_j k_ij S_j. The transpose is kept alongside for distribution pushes.
struct SparseKernel {
  StateSpace space;
  SparseMatrix p;
  SparseMatrix pt;
  double max_row_sum_error = 0.0;  // max |row sum - 1| observed at build time
};

inline SparseKernel build_kernel(const BlockModel& model, double beta,
                                 std::int64_t cap = StateSpace::default_cap, int threads = 1) {
  SparseKernel kernel{StateSpace(model, cap), {}, {}, 0.0};
  const StateSpace& space = kernel.space;
  const int m = model.block_count();
  const std::int64_t size = space.size();
  const double n = model.n();
  const int width = 2 * m + 1;
  using StorageIndex = SparseMatrix::StorageIndex;

  // rows are independent: fill fixed-width slots in parallel, then compact
  std::vector<StorageIndex> slot_col(static_cast<std::size_t>(size) * width);
  std::vector<double> slot_val(static_cast<std::size_t>(size) * width);
  std::vector<std::int8_t> slot_count(static_cast<std::size_t>(size));
  const int workers = std::max(1, threads);
  std::vector<double> worst(static_cast<std::size_t>(workers), 0.0);

  auto fill_rows = [&](std::int64_t lo, std::int64_t hi, double& row_err) {
    MagVector mag = space.state(lo);
    Vector up(m), down(m);
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const Vector s = mag.cast<double>() / n;
      double sum = 0.0, comp = 0.0;  // Kahan accumulation of the move mass
      for (int i = 0; i < m; ++i) {
        const double xi = model.k().row(i).dot(s);
        const double kii = model.k()(i, i) / n;
        up[i] = 0.5 * (model.p()[i] - s[i]) * rate_plus(beta, xi + kii);
        down[i] = 0.5 * (model.p()[i] + s[i]) * rate_minus(beta, xi - kii);
        for (double v : {up[i], down[i]}) {
          const double y = v - comp;
          const double t = sum + y;
          comp = (t - sum) - y;
          sum = t;
        }
      }
      const double stay = 1.0 - sum;
      row_err = std::max(row_err, std::abs(sum + stay - 1.0));
      // ascending column order: strides decrease with the block index
      const std::size_t base = static_cast<std::size_t>(idx) * width;
      int c = 0;
      for (int i = 0; i < m; ++i)
        if (down[i] > 0.0) {
          slot_col[base + c] = StorageIndex(idx - space.stride(i));
          slot_val[base + c++] = down[i];
        }
      slot_col[base + c] = StorageIndex(idx);
      slot_val[base + c++] = stay;
      for (int i = m - 1; i >= 0; --i)
        if (up[i] > 0.0) {
          slot_col[base + c] = StorageIndex(idx + space.stride(i));
          slot_val[base + c++] = up[i];
        }
      slot_count[static_cast<std::size_t>(idx)] = std::int8_t(c);
      // odometer increment of the magnetization digits, last block fastest
      for (int i = m - 1; i >= 0; --i) {
        if (mag[i] < model.block_sizes()[i]) {
          mag[i] += 2;
          break;
        }
        mag[i] = -model.block_sizes()[i];
      }
    }
  };

  if (workers <= 1 || size < 4096) {
    fill_rows(0, size, worst[0]);
  } else {
    std::vector<std::thread> pool;
    const std::int64_t chunk = (size + workers - 1) / workers;
    for (int t = 1; t < workers; ++t) {
      const std::int64_t lo = t * chunk;
      if (lo >= size) break;
      pool.emplace_back(fill_rows, lo, std::min(size, lo + chunk),
                        std::ref(worst[static_cast<std::size_t>(t)]));
    }
    fill_rows(0, std::min(size, chunk), worst[0]);
    for (auto& th : pool) th.join();
  }
  for (double w : worst) kernel.max_row_sum_error = std::max(kernel.max_row_sum_error, w);

  std::vector<StorageIndex> outer(static_cast<std::size_t>(size) + 1);
  outer[0] = 0;
  for (std::int64_t idx = 0; idx < size; ++idx)
    outer[static_cast<std::size_t>(idx) + 1] =
        outer[static_cast<std::size_t>(idx)] + slot_count[static_cast<std::size_t>(idx)];
  const std::size_t nnz = static_cast<std::size_t>(outer[static_cast<std::size_t>(size)]);
  std::vector<StorageIndex> inner(nnz);
  std::vector<double> values(nnz);
  for (std::int64_t idx = 0; idx < size; ++idx) {
    const std::size_t base = static_cast<std::size_t>(idx) * width;
    std::size_t at = static_cast<std::size_t>(outer[static_cast<std::size_t>(idx)]);
    for (int c = 0; c < slot_count[static_cast<std::size_t>(idx)]; ++c, ++at) {
      inner[at] = slot_col[base + c];
      values[at] = slot_val[base + c];
    }
  }
  kernel.p = Eigen::Map<const SparseMatrix>(size, size, StorageIndex(nnz), outer.data(),
                                            inner.data(), values.data());
  kernel.pt = kernel.p.transpose();
  return kernel;
}

// Probability vector over the magnetization state space. The mass drift is the
// accumulated |1 - sum| after evolution steps; it is reported, never repaired.
struct DistVector {
  Vector w;
  double mass_drift = 0.0;
};

inline DistVector point_mass(const StateSpace& space, const MagVector& mag) {
  DistVector d{Vector::Zero(space.size()), 0.0};
  d.w[space.index(mag)] = 1.0;
  return d;
}

inline DistVector stationary_dist(const BlockModel& model, double beta,
                                  std::int64_t cap = StateSpace::default_cap) {
  return {lumped_stationary(model, beta, cap), 0.0};
}

namespace detail {

inline void apply_transpose(const SparseMatrix& pt, const Vector& in, Vector& out, int threads) {
  const auto rows = pt.rows();
  auto run = [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index j = lo; j < hi; ++j) {
      double acc = 0.0;
      for (SparseMatrix::InnerIterator it(pt, j); it; ++it) acc += it.value() * in[it.col()];
      out[j] = acc;
    }
  };
  if (threads <= 1 || rows < 4096) {
    run(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (rows + threads - 1) / threads;
  for (int t = 1; t < threads; ++t) {
    const Eigen::Index lo = t * chunk;
    if (lo >= rows) break;
    pool.emplace_back(run, lo, std::min(rows, lo + chunk));
  }
  run(0, std::min(rows, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace detail

inline void evolve_in_place(const SparseKernel& kernel, DistVector& dist, std::int64_t steps,
                            int threads = 1) {
  require(dist.w.size() == kernel.space.size(), Errc::dimension_mismatch,
          "distribution does not match the kernel state space");
  if (steps <= 0) return;
  Vector next(dist.w.size());
  for (std::int64_t t = 0; t < steps; ++t) {
    detail::apply_transpose(kernel.pt, dist.w, next, threads);
    dist.w.swap(next);
  }
  dist.mass_drift = std::abs(1.0 - dist.w.sum());
}

inline DistVector evolve(const SparseKernel& kernel, const DistVector& dist, std::int64_t steps,
                         int threads = 1) {
  DistVector out = dist;
  evolve_in_place(kernel, out, steps, threads);
  return out;
}

inline double tv_distance(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), Errc::dimension_mismatch, "distributions differ in length");
  return 0.5 * (a - b).lpNorm<1>();
}

inline double tv_distance(const DistVector& a, const DistVector& b) {
  return tv_distance(a.w, b.w);
}

struct TVCurvePoint {
  std::int64_t t = 0;
  double d = 0.0;
};

struct TVCurve {
  std::vector<TVCurvePoint> points;
  double beta = 0.0;
  MagVector start;
  std::int64_t stride = 1;
  double mass_drift = 0.0;
  double max_monotonicity_violation = 0.0;  // TV to stationarity never increases
};

inline TVCurve tv_curve(const BlockModel& model, double beta, const MagVector& start,
                        std::int64_t t_max, std::int64_t stride = 1, int threads = 1,
                        std::int64_t cap = StateSpace::default_cap) {
  require(stride >= 1, Errc::bad_input, "stride must be >= 1");
  const SparseKernel kernel = build_kernel(model, beta, cap);
  const Vector pi = lumped_stationary(model, beta, cap);
  DistVector dist = point_mass(kernel.space, start);
  TVCurve curve;
  curve.beta = beta;
  curve.start = start;
  curve.stride = stride;
  double prev = tv_distance(dist.w, pi);
  curve.points.push_back({0, prev});
  for (std::int64_t t = stride; t <= t_max; t += stride) {
    evolve_in_place(kernel, dist, stride, threads);
    const double d = tv_distance(dist.w, pi);
    curve.max_monotonicity_violation =
        std::max(curve.max_monotonicity_violation, d - prev);
    curve.points.push_back({t, d});
    prev = d;
  }
  curve.mass_drift = dist.mass_drift;
  return curve;
}

// Every reachable magnetization state; the exhaustive start set for small n.
inline std::vector<MagVector> all_states(const BlockModel& model,
                                         std::int64_t cap = StateSpace::default_cap) {
  const StateSpace space(model, cap);
  std::vector<MagVector> states;
  states.reserve(static_cast<std::size_t>(space.size()));
  for (std::int64_t idx = 0; idx < space.size(); ++idx) states.push_back(space.state(idx));
  return states;
}

// The 2^m extremal states M = (+-n p_1, ..., +-n p_m).
inline std::vector<MagVector> corner_states(const BlockModel& model) {
  const int m = model.block_count();
  std::vector<MagVector> corners;
  for (int mask = 0; mask < (1 << m); ++mask) {
    MagVector mag(m);
    for (int i = 0; i < m; ++i)
      mag[i] = (mask >> i) & 1 ? model.block_sizes()[i] : -model.block_sizes()[i];
    corners.push_back(std::move(mag));
  }
  return corners;
}

// First t with TV(delta_start P^t, pi) <= eps, by doubling then bisection with
// re-evolution from the left checkpoint.
inline std::int64_t tv_hitting_time(const SparseKernel& kernel, const Vector& pi,
                                    const MagVector& start, double eps, std::int64_t ceiling,
                                    int threads = 1) {
  DistVector lo_dist = point_mass(kernel.space, start);
  if (tv_distance(lo_dist.w, pi) <= eps) return 0;
  std::int64_t lo = 0;
  std::int64_t hi = 1;
  DistVector cur = lo_dist;
  evolve_in_place(kernel, cur, 1, threads);
  while (tv_distance(cur.w, pi) > eps) {
    lo = hi;
    lo_dist = cur;
    require(hi <= ceiling, Errc::not_converged,
            "mixing-time search exceeded the step ceiling");
    evolve_in_place(kernel, cur, hi, threads);  // doubles the horizon
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    DistVector tmp = lo_dist;
    evolve_in_place(kernel, tmp, mid - lo, threads);
    if (tv_distance(tmp.w, pi) <= eps) {
      hi = mid;
    } else {
      lo = mid;
      lo_dist = std::move(tmp);
    }
  }
  return hi;
}

// max over the start set of min { t : TV(delta_s P^t, pi) <= eps }.
inline std::int64_t mixing_time_exact(const BlockModel& model, double beta, double eps,
                                      const std::vector<MagVector>& start_set,
                                      std::int64_t ceiling = 100'000'000, int threads = 1,
                                      std::int64_t cap = StateSpace::default_cap) {
  require(eps > 0.0 && eps <= 1.0, Errc::bad_input, "eps must lie in (0,1]");
  require(!start_set.empty(), Errc::bad_input, "start set must be nonempty");
  const SparseKernel kernel = build_kernel(model, beta, cap);
  const Vector pi = lumped_stationary(model, beta, cap);
  std::int64_t worst = 0;
  for (const auto& start : start_set)
    worst = std::max(worst, tv_hitting_time(kernel, pi, start, eps, ceiling, threads));
  return worst;
}

inline std::int64_t mixing_time_exact(const BlockModel& model, double beta, double eps = 0.25,
                                      std::int64_t ceiling = 100'000'000, int threads = 1,
                                      std::int64_t cap = StateSpace::default_cap) {
  return mixing_time_exact(model, beta, eps, corner_states(model), ceiling, threads, cap);
}

// max over stored transitions of |pi(s) P(s,s') - pi(s') P(s',s)|.
inline double check_reversibility(const SparseKernel& kernel, const Vector& pi) {
  require(pi.size() == kernel.space.size(), Errc::dimension_mismatch,
          "stationary vector does not match the kernel");
  double worst = 0.0;
  for (std::int64_t s = 0; s < kernel.space.size(); ++s) {
    SparseMatrix::InnerIterator fwd(kernel.p, s);   // P(s, .)
    SparseMatrix::InnerIterator bwd(kernel.pt, s);  // P(., s)
    while (fwd || bwd) {
      const auto cf = fwd ? fwd.col() : std::numeric_limits<Eigen::Index>::max();
      const auto cb = bwd ? bwd.col() : std::numeric_limits<Eigen::Index>::max();
      if (cf == cb) {
        worst = std::max(worst, std::abs(pi[s] * fwd.value() - pi[cf] * bwd.value()));
        ++fwd;
        ++bwd;
      } else if (cf < cb) {
        worst = std::max(worst, std::abs(pi[s] * fwd.value()));
        ++fwd;
      } else {
        worst = std::max(worst, std::abs(pi[cb] * bwd.value()));
        ++bwd;
      }
    }
  }
  return worst;
}

struct ConductanceResult {
  double phi = 0.0;
  double flow = 0.0;  // sum over s in A, s' not in A of pi(s) P(s,s')
  double pi_a = 0.0;
  double pi_ac = 0.0;
};

// Bottleneck ratio of a cut. The default cut puts { M : a^T M < 0 } on the A side
// and assigns the boundary a^T M = 0 to the complement.
inline ConductanceResult conductance(const BlockModel& model, double beta,
                                     const std::function<bool(const MagVector&)>& in_a,
                                     std::int64_t cap = StateSpace::default_cap) {
  const SparseKernel kernel = build_kernel(model, beta, cap);
  const Vector pi = lumped_stationary(model, beta, cap);
  const std::int64_t size = kernel.space.size();
  std::vector<char> side(static_cast<std::size_t>(size));
  for (std::int64_t s = 0; s < size; ++s) side[s] = in_a(kernel.space.state(s)) ? 1 : 0;
  ConductanceResult res;
  for (std::int64_t s = 0; s < size; ++s) {
    if (!side[s]) continue;
    res.pi_a += pi[s];
    for (SparseMatrix::InnerIterator it(kernel.p, s); it; ++it)
      if (!side[it.col()]) res.flow += pi[s] * it.value();
  }
  res.pi_ac = 1.0 - res.pi_a;
  require(res.pi_a > 0.0 && res.pi_ac > 0.0, Errc::empty_side,
          "conductance cut leaves one side empty");
  res.phi = res.flow / std::min(res.pi_a, res.pi_ac);
  return res;
}

inline ConductanceResult conductance(const BlockModel& model, double beta,
                                     std::int64_t cap = StateSpace::default_cap) {
  const Vector a = perron_left(scaled_interaction(model), model.p()).left;
  return conductance(
      model, beta, [&a](const MagVector& mag) { return a.dot(mag.cast<double>()) < 0.0; }, cap);
}

struct UMarginal {
  Vector u;     // sorted atom locations of U^(m)
  Vector prob;  // matching stationary masses
};

// Exact pushforward of the lumped stationary measure at beta_cr under the
// top-direction statistic U^(m)(M) = n^{-3/4} sum_i V_im M_i / sqrt(p_i).
inline UMarginal exact_u_marginal(const BlockModel& model,
                                  std::int64_t cap = StateSpace::default_cap) {
  const CriticalBasis basis = critical_decomposition(model);
  const StateSpace space(model, cap);
  const Vector pi = lumped_stationary(model, basis.beta_cr, cap);
  const int m = model.block_count();
  const double scale = std::pow(double(model.n()), 0.75);
  Vector raw(space.size());
  for (std::int64_t idx = 0; idx < space.size(); ++idx) {
    const MagVector mag = space.state(idx);
    double u = 0.0;
    for (int i = 0; i < m; ++i)
      u += basis.v(i, m - 1) * double(mag[i]) / std::sqrt(model.p()[i]);
    raw[idx] = u / scale;
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(space.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&raw](std::int64_t a, std::int64_t b) { return raw[a] < raw[b]; });
  std::vector<double> us, ps;
  for (std::int64_t idx : order) {
    if (!us.empty() && raw[idx] - us.back() <= 1e-12) {
      ps.back() += pi[idx];
    } else {
      us.push_back(raw[idx]);
      ps.push_back(pi[idx]);
    }
  }
  UMarginal out;
  out.u = Eigen::Map<Vector>(us.data(), static_cast<Eigen::Index>(us.size()));
  out.prob = Eigen::Map<Vector>(ps.data(), static_cast<Eigen::Index>(ps.size()));
  return out;
}

}  // namespace blockcw
