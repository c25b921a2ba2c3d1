#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "blockcw/model.hpp"
#include "blockcw/spectral.hpp"
#include "blockcw/types.hpp"

namespace blockcw {

// Counter-based generator (splitmix64): the t-th output is a hash of seed + t*phi,
// so identical seeds give identical trajectories and replicas can be keyed
// independently of any execution order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream for_replica(std::uint64_t seed, std::uint64_t replica) {
    return RngStream(mix(mix(seed) ^ mix(replica + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  double next_uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }  // [0,1)

  int next_index(int n) {  // uniform on {0,...,n-1}, Lemire with rejection
    const std::uint64_t nn = std::uint64_t(n);
    std::uint64_t x = next_u64();
    __uint128_t prod = __uint128_t(x) * nn;
    auto low = std::uint64_t(prod);
    if (low < nn) {
      const std::uint64_t threshold = (0 - nn) % nn;
      while (low < threshold) {
        x = next_u64();
        prod = __uint128_t(x) * nn;
        low = std::uint64_t(prod);
      }
    }
    return int(prod >> 64);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Mean field at a site, excluding the site's own spin:
// (sum_l k_jl M_l - k_jj sigma(v)) / n for v in block j.
inline double local_field(const BlockModel& model, const SpinConfig& cfg, int site) {
  const int j = model.block_of(site);
  const double num = model.k().row(j).dot(cfg.mag.cast<double>()) -
                     model.k()(j, j) * double(cfg.spin[static_cast<std::size_t>(site)]);
  return num / double(model.n());
}

// One heat-bath update: uniform site, then resample its spin from the
// conditional law, +1 with probability r_+(field). Draw order is (site, uniform).
inline void glauber_step(const BlockModel& model, double beta, SpinConfig& cfg, RngStream& rng) {
  const int v = rng.next_index(model.n());
  const double u = rng.next_uniform();
  const std::int8_t s = u < rate_plus(beta, local_field(model, cfg, v)) ? +1 : -1;
  set_spin(model, cfg, v, s);
}

enum class CoupleMode { monotone, modified_matching, same_magnetization, independent };

// Two chains over one instance plus the per-block Hamming distances, kept
// incrementally consistent by the coupled step functions.
struct CoupledPair {
  SpinConfig a, b;
  IndexVector dist;  // dist_i = #{v in block i : a(v) != b(v)}
  CoupleMode mode = CoupleMode::monotone;
};

inline IndexVector block_hamming(const BlockModel& model, const SpinConfig& a,
                                 const SpinConfig& b) {
  IndexVector d = IndexVector::Zero(model.block_count());
  for (int v = 0; v < model.n(); ++v)
    if (a.spin[static_cast<std::size_t>(v)] != b.spin[static_cast<std::size_t>(v)])
      ++d[model.block_of(v)];
  return d;
}

inline CoupledPair make_pair(const BlockModel& model, SpinConfig a, SpinConfig b,
                             CoupleMode mode) {
  CoupledPair pair{std::move(a), std::move(b), {}, mode};
  pair.dist = block_hamming(model, pair.a, pair.b);
  return pair;
}

namespace detail {

inline void set_pair_spin(const BlockModel& model, CoupledPair& pair, bool second, int site,
                          std::int8_t value) {
  SpinConfig& own = second ? pair.b : pair.a;
  const SpinConfig& other = second ? pair.a : pair.b;
  const std::size_t sv = static_cast<std::size_t>(site);
  const bool differed = own.spin[sv] != other.spin[sv];
  set_spin(model, own, site, value);
  const bool differs = own.spin[sv] != other.spin[sv];
  pair.dist[model.block_of(site)] += int(differs) - int(differed);
}

}  // namespace detail

// Grand coupling: both chains share (site, uniform) and apply their own
// heat-bath thresholds. Preserves the sitewise order of ordered starts.
inline void monotone_coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                                  RngStream& rng) {
  const int v = rng.next_index(model.n());
  const double u = rng.next_uniform();
  const std::int8_t sa = u < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
  const std::int8_t sb = u < rate_plus(beta, local_field(model, pair.b, v)) ? +1 : -1;
  detail::set_pair_spin(model, pair, false, v, sa);
  detail::set_pair_spin(model, pair, true, v, sb);
}

inline void independent_coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                                     RngStream& rng) {
  const int va = rng.next_index(model.n());
  const double ua = rng.next_uniform();
  const std::int8_t sa = ua < rate_plus(beta, local_field(model, pair.a, va)) ? +1 : -1;
  detail::set_pair_spin(model, pair, false, va, sa);
  const int vb = rng.next_index(model.n());
  const double ub = rng.next_uniform();
  const std::int8_t sb = ub < rate_plus(beta, local_field(model, pair.b, vb)) ? +1 : -1;
  detail::set_pair_spin(model, pair, true, vb, sb);
}

// Per-block bijection pairing like spins first (ascending site index), the
// leftover unlike spins again by ascending index.
inline std::vector<std::int32_t> modified_matching(const BlockModel& model, const SpinConfig& a,
                                                   const SpinConfig& b) {
  std::vector<std::int32_t> f(static_cast<std::size_t>(model.n()));
  std::vector<int> plus_a, minus_a, plus_b, minus_b;
  for (int i = 0; i < model.block_count(); ++i) {
    plus_a.clear(); minus_a.clear(); plus_b.clear(); minus_b.clear();
    for (int v = model.block_begin(i); v < model.block_end(i); ++v) {
      (a.spin[static_cast<std::size_t>(v)] > 0 ? plus_a : minus_a).push_back(v);
      (b.spin[static_cast<std::size_t>(v)] > 0 ? plus_b : minus_b).push_back(v);
    }
    const std::size_t np = std::min(plus_a.size(), plus_b.size());
    const std::size_t nm = std::min(minus_a.size(), minus_b.size());
    for (std::size_t t = 0; t < np; ++t) f[static_cast<std::size_t>(plus_a[t])] = plus_b[t];
    for (std::size_t t = 0; t < nm; ++t) f[static_cast<std::size_t>(minus_a[t])] = minus_b[t];
    // at most one of the spin classes has leftovers on each side, equal in number
    std::size_t ra = np, rb = nm;
    for (std::size_t t = np; t < plus_a.size(); ++t)
      f[static_cast<std::size_t>(plus_a[t])] = minus_b[rb++];
    for (std::size_t t = nm; t < minus_a.size(); ++t)
      f[static_cast<std::size_t>(minus_a[t])] = plus_b[ra++];
  }
  return f;
}

// Matched update: the second chain updates the partner site under the shared
// uniform. The per-block matching is recomputed from the current configurations.
inline void matching_coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                                  RngStream& rng) {
  const auto f = modified_matching(model, pair.a, pair.b);
  const int v = rng.next_index(model.n());
  const int w = f[static_cast<std::size_t>(v)];
  const double u = rng.next_uniform();
  const std::int8_t sa = u < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
  const std::int8_t sb = u < rate_plus(beta, local_field(model, pair.b, w)) ? +1 : -1;
  detail::set_pair_spin(model, pair, false, v, sa);
  detail::set_pair_spin(model, pair, true, w, sb);
}

// Coupling used once the block magnetizations agree; they then agree forever.
// Shared (site, uniform) produce one new spin; if the chains disagree at the
// chosen site, the second chain applies it at a uniformly chosen disagreement
// site currently holding that spin. The block Hamming distance never increases.
inline void same_mag_coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                                  RngStream& rng) {
  require(pair.a.mag == pair.b.mag, Errc::magnetization_mismatch,
          "same-magnetization coupling entered with unequal magnetizations");
  const int v = rng.next_index(model.n());
  const double u = rng.next_uniform();
  const std::int8_t s = u < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
  const std::size_t sv = static_cast<std::size_t>(v);
  if (pair.b.spin[sv] == pair.a.spin[sv]) {
    detail::set_pair_spin(model, pair, false, v, s);
    detail::set_pair_spin(model, pair, true, v, s);
    return;
  }
  const int j = model.block_of(v);
  const std::int8_t target = pair.a.spin[sv];
  std::vector<int> candidates;
  for (int w = model.block_begin(j); w < model.block_end(j); ++w) {
    const std::size_t sw = static_cast<std::size_t>(w);
    if (pair.b.spin[sw] == target && pair.a.spin[sw] != pair.b.spin[sw]) candidates.push_back(w);
  }
  const int w = candidates[static_cast<std::size_t>(rng.next_index(int(candidates.size())))];
  detail::set_pair_spin(model, pair, false, v, s);
  detail::set_pair_spin(model, pair, true, w, s);
}

// Variant that resamples the partner uniformly over the whole spin class of the
// chosen site (not only disagreement sites); also preserves equal magnetizations.
inline void spin_class_coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                                    RngStream& rng) {
  require(pair.a.mag == pair.b.mag, Errc::magnetization_mismatch,
          "spin-class coupling entered with unequal magnetizations");
  const int v = rng.next_index(model.n());
  const double u = rng.next_uniform();
  const std::int8_t cls = pair.a.spin[static_cast<std::size_t>(v)];
  const std::int8_t s = u < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
  const int j = model.block_of(v);
  std::vector<int> candidates;
  for (int w = model.block_begin(j); w < model.block_end(j); ++w)
    if (pair.b.spin[static_cast<std::size_t>(w)] == cls) candidates.push_back(w);
  const int w = candidates[static_cast<std::size_t>(rng.next_index(int(candidates.size())))];
  detail::set_pair_spin(model, pair, false, v, s);
  detail::set_pair_spin(model, pair, true, w, s);
}

inline void coupled_step(const BlockModel& model, double beta, CoupledPair& pair,
                         RngStream& rng) {
  switch (pair.mode) {
    case CoupleMode::monotone: monotone_coupled_step(model, beta, pair, rng); break;
    case CoupleMode::modified_matching: matching_coupled_step(model, beta, pair, rng); break;
    case CoupleMode::same_magnetization: same_mag_coupled_step(model, beta, pair, rng); break;
    case CoupleMode::independent: independent_coupled_step(model, beta, pair, rng); break;
  }
}

template <class Body>
void parallel_replicas(int reps, int threads, Body&& body) {
  if (threads <= 1 || reps <= 1) {
    for (int r = 0; r < reps; ++r) body(r);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (reps + threads - 1) / threads;
  auto run = [&body](int lo, int hi) {
    for (int r = lo; r < hi; ++r) body(r);
  };
  for (int t = 1; t < threads; ++t) {
    const int lo = t * chunk;
    if (lo >= reps) break;
    pool.emplace_back(run, lo, std::min(reps, lo + chunk));
  }
  run(0, std::min(reps, chunk));
  for (auto& th : pool) th.join();
}

struct CouplingSample {
  std::int64_t tau_mag = 0;
  std::int64_t tau_full = 0;
  bool censored_mag = false;
  bool censored_full = false;
};

enum class CouplingStrategy { plain_monotone, two_phase };

struct CouplingOptions {
  CouplingStrategy strategy = CouplingStrategy::two_phase;
  std::int64_t horizon = 0;
  std::uint64_t seed = 1;
  int threads = 1;
  std::int64_t phase1_steps = -1;  // < 0: alpha n log n at high temperature, n^{3/2} otherwise
};

namespace detail {

// Drift phase of the two-phase schedule: blocks whose Hamming distance is
// already <= 1 get matched updates; in the others the chains update the shared
// site with independent uniforms.
inline void two_phase_middle_step(const BlockModel& model, double beta, CoupledPair& pair,
                                  RngStream& rng) {
  const int v = rng.next_index(model.n());
  const int j = model.block_of(v);
  if (pair.dist[j] <= 1) {
    const auto f = modified_matching(model, pair.a, pair.b);
    const int w = f[static_cast<std::size_t>(v)];
    const double u = rng.next_uniform();
    const std::int8_t sa = u < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
    const std::int8_t sb = u < rate_plus(beta, local_field(model, pair.b, w)) ? +1 : -1;
    set_pair_spin(model, pair, false, v, sa);
    set_pair_spin(model, pair, true, w, sb);
  } else {
    const double ua = rng.next_uniform();
    const double ub = rng.next_uniform();
    const std::int8_t sa = ua < rate_plus(beta, local_field(model, pair.a, v)) ? +1 : -1;
    const std::int8_t sb = ub < rate_plus(beta, local_field(model, pair.b, v)) ? +1 : -1;
    set_pair_spin(model, pair, false, v, sa);
    set_pair_spin(model, pair, true, v, sb);
  }
}

}  // namespace detail

// First times of magnetization agreement and full agreement for coupled chains,
// censored at the horizon. The two-phase strategy runs the grand coupling for a
// burn-in, then the drift phase until every block distance is <= 1, then matched
// updates until the magnetizations meet, and the same-magnetization coupling to
// full coalescence.
inline std::vector<CouplingSample> coupling_time(const BlockModel& model, double beta,
                                                 const SpinConfig& start_a,
                                                 const SpinConfig& start_b, int reps,
                                                 const CouplingOptions& options) {
  require(options.horizon > 0, Errc::bad_input, "horizon must be positive");
  std::int64_t phase1 = options.phase1_steps;
  if (phase1 < 0) {
    const double bc = beta_critical(model);
    const double n = model.n();
    phase1 = beta < bc ? std::int64_t(std::ceil(cutoff_alpha(model, beta) * n * std::log(n)))
                       : std::int64_t(std::ceil(std::pow(n, 1.5)));
  }
  std::vector<CouplingSample> samples(static_cast<std::size_t>(reps));
  parallel_replicas(reps, options.threads, [&](int r) {
    RngStream rng = RngStream::for_replica(options.seed, std::uint64_t(r));
    CoupledPair pair = make_pair(model, start_a, start_b, CoupleMode::monotone);
    CouplingSample sample;
    bool mag_met = pair.a.mag == pair.b.mag;
    bool full_met = pair.dist.sum() == 0;
    bool drift_done = pair.dist.maxCoeff() <= 1;
    std::int64_t t = 0;
    const bool plain = options.strategy == CouplingStrategy::plain_monotone;
    bool mag_recorded = mag_met;
    while (t < options.horizon && !(mag_recorded && full_met)) {
      if (plain) {
        monotone_coupled_step(model, beta, pair, rng);
      } else if (mag_met) {
        same_mag_coupled_step(model, beta, pair, rng);
      } else if (t < phase1) {
        monotone_coupled_step(model, beta, pair, rng);
      } else if (!drift_done) {
        detail::two_phase_middle_step(model, beta, pair, rng);
      } else {
        matching_coupled_step(model, beta, pair, rng);
      }
      ++t;
      if (!drift_done && pair.dist.maxCoeff() <= 1) drift_done = true;
      mag_met = !plain ? (mag_met || pair.a.mag == pair.b.mag) : pair.a.mag == pair.b.mag;
      if (!mag_recorded && pair.a.mag == pair.b.mag) {
        mag_recorded = true;
        sample.tau_mag = t;
      }
      if (!full_met && pair.dist.sum() == 0) {
        full_met = true;
        sample.tau_full = t;
        if (!mag_recorded) {  // full agreement implies equal magnetizations
          mag_recorded = true;
          sample.tau_mag = t;
        }
      }
    }
    sample.censored_mag = !mag_recorded;
    sample.censored_full = !full_met;
    if (sample.censored_mag) sample.tau_mag = options.horizon;
    if (sample.censored_full) sample.tau_full = options.horizon;
    samples[static_cast<std::size_t>(r)] = sample;
  });
  return samples;
}

// 2m-coordinate bookkeeping against a fixed reference configuration.
struct CoordinateRef {
  SpinConfig ref;
  IndexVector u_bar;  // plus-spin counts of the reference per block
  IndexVector v_bar;  // minus-spin counts
};

// The reference must assign spins evenly: |S_i(ref)| <= p_i / 2 per block.
inline CoordinateRef make_coordinate_ref(const BlockModel& model, SpinConfig ref) {
  for (int i = 0; i < model.block_count(); ++i)
    require(2 * std::abs(ref.mag[i]) <= model.block_sizes()[i], Errc::bad_reference,
            "reference configuration is outside the good set");
  CoordinateRef out{std::move(ref), {}, {}};
  out.u_bar = (model.block_sizes() + out.ref.mag) / 2;
  out.v_bar = model.block_sizes() - out.u_bar;
  return out;
}

struct CoordinateCounts {
  IndexVector u;  // per block: sites agreeing with the reference at +1
  IndexVector v;  // per block: sites agreeing with the reference at -1
};

inline CoordinateCounts coordinate_counts(const BlockModel& model, const CoordinateRef& ref,
                                          const SpinConfig& cfg) {
  CoordinateCounts c{IndexVector::Zero(model.block_count()),
                     IndexVector::Zero(model.block_count())};
  for (int v = 0; v < model.n(); ++v) {
    const std::size_t sv = static_cast<std::size_t>(v);
    if (cfg.spin[sv] != ref.ref.spin[sv]) continue;
    if (cfg.spin[sv] > 0)
      ++c.u[model.block_of(v)];
    else
      ++c.v[model.block_of(v)];
  }
  return c;
}

// Magnetization recovered from the coordinates: M_i = 2 (U_i - V_i) - (u_bar_i - v_bar_i).
inline MagVector coordinate_magnetization(const CoordinateRef& ref, const CoordinateCounts& c) {
  return 2 * (c.u - c.v) - (ref.u_bar - ref.v_bar);
}

inline std::vector<CoordinateCounts> coordinate_chain_track(
    const BlockModel& model, const CoordinateRef& ref, const std::vector<SpinConfig>& trajectory) {
  std::vector<CoordinateCounts> series;
  series.reserve(trajectory.size());
  for (const auto& cfg : trajectory) series.push_back(coordinate_counts(model, ref, cfg));
  return series;
}

struct ExitSamples {
  std::vector<std::int64_t> tau;
  std::vector<char> censored;
  bool high_temp_warning = false;  // beta <= beta_cr: no metastable trap expected
};

// First hitting time of { a^T S <= 0 } from the all-plus configuration.
inline ExitSamples metastable_exit_time(const BlockModel& model, double beta, int reps,
                                        std::int64_t horizon, std::uint64_t seed,
                                        int threads = 1) {
  require(horizon > 0, Errc::bad_input, "horizon must be positive");
  const Vector a = perron_left(scaled_interaction(model), model.p()).left;
  ExitSamples out;
  out.tau.assign(static_cast<std::size_t>(reps), horizon);
  out.censored.assign(static_cast<std::size_t>(reps), 1);
  out.high_temp_warning = beta <= beta_critical(model);
  parallel_replicas(reps, threads, [&](int r) {
    RngStream rng = RngStream::for_replica(seed, std::uint64_t(r));
    SpinConfig cfg = all_plus(model);
    for (std::int64_t t = 1; t <= horizon; ++t) {
      glauber_step(model, beta, cfg, rng);
      if (a.dot(cfg.mag.cast<double>()) <= 0.0) {
        out.tau[static_cast<std::size_t>(r)] = t;
        out.censored[static_cast<std::size_t>(r)] = 0;
        break;
      }
    }
  });
  return out;
}

}  // namespace blockcw
