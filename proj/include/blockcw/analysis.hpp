#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "blockcw/dynamics.hpp"
#include "blockcw/kernel.hpp"
#include "blockcw/model.hpp"
#include "blockcw/spectral.hpp"
#include "blockcw/types.hpp"

namespace blockcw {

namespace detail {
inline void check_interior(const Vector& chi) {
  require((chi.array().abs() < 1.0 - 1e-12).all(), Errc::boundary_value,
          "chi must lie strictly inside (-1,1)^m");
}
}  // namespace detail

// Log-density rate of the block magnetization profile chi_i = M_i / (n p_i):
//   f(chi) = (beta/2) sum_ij k_ij p_i p_j chi_i chi_j
//          - sum_i p_i [ (1+chi_i)/2 ln((1+chi_i)/2) + (1-chi_i)/2 ln((1-chi_i)/2) ].
// The stationary measure is ~ exp(n f), so maxima of f are the free-energy wells.
inline double free_energy(const BlockModel& model, double beta, const Vector& chi) {
  detail::check_interior(chi);
  const Vector pc = model.p().cwiseProduct(chi);
  const double quad = 0.5 * beta * pc.dot(model.k() * pc);
  double ent = 0.0;
  for (int i = 0; i < model.block_count(); ++i) {
    const double up = 0.5 * (1.0 + chi[i]);
    const double dn = 0.5 * (1.0 - chi[i]);
    ent += model.p()[i] * (up * std::log(up) + dn * std::log(dn));
  }
  return quad - ent;
}

// d f / d chi_i = beta sum_j k_ij p_i p_j chi_j - (p_i/2) ln((1+chi_i)/(1-chi_i)).
inline Vector free_energy_grad(const BlockModel& model, double beta, const Vector& chi) {
  detail::check_interior(chi);
  const Vector pc = model.p().cwiseProduct(chi);
  Vector g = beta * model.p().cwiseProduct(model.k() * pc);
  for (int i = 0; i < model.block_count(); ++i) g[i] -= model.p()[i] * std::atanh(chi[i]);
  return g;
}

inline Matrix free_energy_hessian(const BlockModel& model, double beta, const Vector& chi) {
  detail::check_interior(chi);
  Matrix h = beta * (model.p() * model.p().transpose()).cwiseProduct(model.k());
  for (int i = 0; i < model.block_count(); ++i)
    h(i, i) -= model.p()[i] / (1.0 - chi[i] * chi[i]);
  return h;
}

// Solves chi = tanh(beta K (p o chi)) by damped iteration (omega = 1/2) followed
// by a Newton polish; plain iteration oscillates near beta_cr, and Newton repairs
// the power-law stall exactly at criticality.
inline Vector mean_field_solve(const BlockModel& model, double beta, const Vector& init,
                               double tol = 1e-12, int max_iter = 100'000) {
  const int m = model.block_count();
  require(init.size() == m, Errc::dimension_mismatch, "init has wrong dimension");
  require((init.array().abs() <= 1.0).all(), Errc::bad_input, "init must lie in [-1,1]^m");
  auto apply_map = [&](const Vector& chi) -> Vector {
    return (beta * (model.k() * model.p().cwiseProduct(chi))).array().tanh().matrix();
  };
  Vector chi = init;
  int used = 0;
  double delta = 1.0;
  const int damped_cap = std::min(max_iter, 20'000);
  for (; used < damped_cap; ++used) {
    const Vector next = 0.5 * chi + 0.5 * apply_map(chi);
    delta = (next - chi).lpNorm<Eigen::Infinity>();
    chi = next;
    if (delta <= tol) break;
  }
  // Newton on F(chi) = chi - tanh(y), y = beta K (p o chi)
  for (int it = 0; it < 200 && used < max_iter; ++it, ++used) {
    const Vector y = beta * (model.k() * model.p().cwiseProduct(chi));
    const Vector t = y.array().tanh().matrix();
    const Vector res = chi - t;
    if (res.lpNorm<Eigen::Infinity>() <= 1e-13) return chi;
    Matrix jac = Matrix::Identity(m, m);
    for (int i = 0; i < m; ++i)
      jac.row(i) -= (1.0 - t[i] * t[i]) * beta *
                    (model.k().row(i).cwiseProduct(model.p().transpose()));
    const Vector dx = jac.fullPivLu().solve(-res);
    Vector next = chi + dx;
    for (int i = 0; i < m; ++i) next[i] = std::clamp(next[i], -1.0 + 1e-15, 1.0 - 1e-15);
    chi = next;
  }
  const Vector res = chi - apply_map(chi);
  require(res.lpNorm<Eigen::Infinity>() <= 1e-10 || delta <= tol, Errc::no_convergence,
          "mean-field iteration did not converge");
  return chi;
}

enum class FixedPointClass { minimum, maximum, saddle, degenerate };

struct FixedPoint {
  Vector chi;
  FixedPointClass cls = FixedPointClass::degenerate;
};

// Fixed points of the mean-field map from the init grid {0, +-corners}, with
// Hessian classification. "minimum" means a free-energy well, i.e. the Hessian
// of f is negative definite there.
struct Landscape {
  std::vector<FixedPoint> points;
  int minima = 0;
  bool degenerate = false;
};

inline Landscape landscape(const BlockModel& model, double beta) {
  const int m = model.block_count();
  std::vector<Vector> inits{Vector::Zero(m)};
  for (int mask = 0; mask < (1 << m); ++mask) {
    Vector c(m);
    for (int i = 0; i < m; ++i) c[i] = (mask >> i) & 1 ? 1.0 : -1.0;
    inits.push_back(c);
  }
  Landscape scape;
  for (const auto& init : inits) {
    const Vector chi = mean_field_solve(model, beta, init);
    bool known = false;
    for (const auto& fp : scape.points)
      if ((fp.chi - chi).lpNorm<Eigen::Infinity>() <= 1e-7) {
        known = true;
        break;
      }
    if (known) continue;
    FixedPoint fp;
    fp.chi = chi;
    const Matrix h = free_energy_hessian(model, beta, chi);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    if (std::abs(lo) <= 1e-8 * scale || std::abs(hi) <= 1e-8 * scale) {
      fp.cls = FixedPointClass::degenerate;
      scape.degenerate = true;
    } else if (hi < 0.0) {
      fp.cls = FixedPointClass::minimum;
      ++scape.minima;
    } else if (lo > 0.0) {
      fp.cls = FixedPointClass::maximum;
    } else {
      fp.cls = FixedPointClass::saddle;
    }
    scape.points.push_back(std::move(fp));
  }
  return scape;
}

struct MinimaReport {
  int count = 0;
  bool degenerate = false;
};

// One well below beta_cr (chi = 0), two above (+-chi_0); exactly at beta_cr the
// origin is degenerate and still the unique well.
inline MinimaReport count_minima(const BlockModel& model, double beta) {
  const RegimeReport regime = classify_regime(model, beta);
  if (regime.regime == Regime::critical) return {1, true};
  const Landscape scape = landscape(model, beta);
  if (scape.minima == 0) return {1, true};
  return {scape.minima, scape.degenerate};
}

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  Vector residuals;
};

inline FitResult linear_fit(const Vector& x, const Vector& y) {
  require(x.size() == y.size() && x.size() >= 2, Errc::dimension_mismatch,
          "fit needs matching x/y with at least two points");
  const double xm = x.mean(), ym = y.mean();
  const Vector dx = x.array() - xm;
  const Vector dy = y.array() - ym;
  const double sxx = dx.squaredNorm();
  require(sxx > 0.0, Errc::bad_input, "fit abscissae are constant");
  FitResult fit;
  fit.slope = dx.dot(dy) / sxx;
  fit.intercept = ym - fit.slope * xm;
  fit.residuals = y - (fit.slope * x.array() + fit.intercept).matrix();
  const double ss_res = fit.residuals.squaredNorm();
  const double ss_tot = dy.squaredNorm();
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// A (p, k) shape swept over n; every n in a sweep must make each n p_i integral.
struct ModelFamily {
  Vector p;
  Matrix k;
  BlockModel at(int n) const { return BlockModel::create(n, p, k); }
  static ModelFamily of(const BlockModel& model) { return {model.p(), model.k()}; }
};

struct CutoffRow {
  int n = 0;
  double gamma = 0.0;
  std::int64_t t = 0;
  double d = 0.0;
};

struct CutoffPerN {
  int n = 0;
  double beta = 0.0;
  double alpha = 0.0;
  double t_n = 0.0;               // alpha n log n
  std::int64_t t_mix = 0;         // first t with max-corner TV <= 1/4
  std::int64_t t75 = 0;           // first t with TV <= 3/4
  double ratio = 0.0;             // t_mix / (n log n)
  double window_steps = 0.0;      // t_mix - t75
};

struct CutoffProfile {
  std::vector<CutoffRow> table;
  std::vector<CutoffPerN> per_n;
};

// d_n(t_n + gamma n) over a gamma grid, where d_n maximizes over the 2^m corner
// starts, plus the per-n mixing time and the [0.25, 0.75] TV-drop window.
inline CutoffProfile cutoff_experiment(const ModelFamily& family, double beta_frac,
                                       const std::vector<int>& n_list,
                                       const std::vector<double>& gamma_list, int threads = 1,
                                       std::int64_t cap = StateSpace::default_cap) {
  require(beta_frac >= 0.0 && beta_frac < 1.0, Errc::not_high_temperature,
          "cutoff experiment needs beta = frac * beta_cr with frac < 1");
  CutoffProfile profile;
  for (int n : n_list) {
    const BlockModel model = family.at(n);
    const double beta = beta_frac * beta_critical(model);
    const double alpha = cutoff_alpha(model, beta);
    const double t_n = alpha * double(n) * std::log(double(n));
    std::vector<std::int64_t> targets;
    for (double g : gamma_list) targets.push_back(std::max<std::int64_t>(
        0, std::int64_t(std::llround(t_n + g * double(n)))));
    std::int64_t horizon = std::int64_t(std::llround(10.0 * t_n + 100.0 * n));
    for (auto t : targets) horizon = std::max(horizon, t);

    const SparseKernel kernel = build_kernel(model, beta, cap);
    const Vector pi = lumped_stationary(model, beta, cap);
    const std::int64_t max_target =
        targets.empty() ? 0 : *std::max_element(targets.begin(), targets.end());
    std::vector<double> d_at(targets.size(), 0.0);
    std::int64_t t25 = 0, t75 = 0;
    for (const auto& corner : corner_states(model)) {
      DistVector dist = point_mass(kernel.space, corner);
      std::int64_t c25 = -1, c75 = -1;
      for (std::int64_t t = 0; t <= horizon; ++t) {
        const double d = tv_distance(dist.w, pi);
        for (std::size_t g = 0; g < targets.size(); ++g)
          if (targets[g] == t) d_at[g] = std::max(d_at[g], d);
        if (c75 < 0 && d <= 0.75) c75 = t;
        if (c25 < 0 && d <= 0.25) c25 = t;
        if (c25 >= 0 && t >= max_target) break;
        evolve_in_place(kernel, dist, 1, threads);
      }
      require(c25 >= 0, Errc::not_converged, "cutoff horizon too short");
      t25 = std::max(t25, c25);
      t75 = std::max(t75, c75);
    }
    CutoffPerN row{n,   beta, alpha, t_n, t25, t75,
                   double(t25) / (double(n) * std::log(double(n))), double(t25 - t75)};
    profile.per_n.push_back(row);
    for (std::size_t g = 0; g < targets.size(); ++g)
      profile.table.push_back({n, gamma_list[g], targets[g], d_at[g]});
  }
  return profile;
}

struct ExponentFit {
  FitResult fit;  // log t_mix against log n
  std::vector<std::int64_t> t_mix;
  double beta_frac = 1.0;
};

inline ExponentFit exponent_fit(const ModelFamily& family, const std::vector<int>& n_list,
                                double beta_frac, double eps = 0.25, int threads = 1,
                                std::int64_t cap = StateSpace::default_cap) {
  require(n_list.size() >= 2, Errc::bad_input, "need at least two sizes");
  Vector x(n_list.size()), y(n_list.size());
  ExponentFit out;
  out.beta_frac = beta_frac;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const BlockModel model = family.at(n_list[i]);
    const double beta = beta_frac * beta_critical(model);
    const std::int64_t t =
        mixing_time_exact(model, beta, eps, corner_states(model), 100'000'000, threads, cap);
    out.t_mix.push_back(t);
    x[static_cast<Eigen::Index>(i)] = std::log(double(n_list[i]));
    y[static_cast<Eigen::Index>(i)] = std::log(double(t));
  }
  out.fit = linear_fit(x, y);
  return out;
}

// Slope of log t_mix vs log n at beta_cr; the theoretical target is 3/2.
inline ExponentFit critical_exponent_fit(const ModelFamily& family,
                                         const std::vector<int>& n_list, int threads = 1,
                                         std::int64_t cap = StateSpace::default_cap) {
  return exponent_fit(family, n_list, 1.0, 0.25, threads, cap);
}

struct MetastabilityReport {
  FitResult conductance_fit;  // log phi against n
  FitResult exit_fit;         // log median exit time against n
  std::vector<double> phi;
  std::vector<std::int64_t> median_exit;
  double max_censored_fraction = 0.0;
};

inline MetastabilityReport metastability_fit(const ModelFamily& family, double beta,
                                             const std::vector<int>& n_list, int reps = 200,
                                             std::int64_t horizon = 2'000'000,
                                             std::uint64_t seed = 1, int threads = 1) {
  require(n_list.size() >= 2, Errc::bad_input, "need at least two sizes");
  MetastabilityReport rep;
  Vector x(n_list.size()), yphi(n_list.size()), yexit(n_list.size());
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const BlockModel model = family.at(n_list[i]);
    const double phi = conductance(model, beta).phi;
    rep.phi.push_back(phi);
    ExitSamples samples = metastable_exit_time(model, beta, reps, horizon, seed, threads);
    std::vector<std::int64_t> taus = samples.tau;
    std::nth_element(taus.begin(), taus.begin() + taus.size() / 2, taus.end());
    const std::int64_t median = taus[taus.size() / 2];
    rep.median_exit.push_back(median);
    double censored = 0.0;
    for (char c : samples.censored) censored += c;
    rep.max_censored_fraction =
        std::max(rep.max_censored_fraction, censored / double(samples.censored.size()));
    x[static_cast<Eigen::Index>(i)] = double(n_list[i]);
    yphi[static_cast<Eigen::Index>(i)] = std::log(phi);
    yexit[static_cast<Eigen::Index>(i)] = std::log(double(median));
  }
  rep.conductance_fit = linear_fit(x, yphi);
  rep.exit_fit = linear_fit(x, yexit);
  return rep;
}

struct NonCltReport {
  int n = 0;
  double ks = 0.0;         // sup-distance between the exact atomic CDF and the limit CDF
  double binned_tv = 0.0;  // width-0.1 bins on [-5,5] plus two tail cells
  double z_quadrature = 0.0;
  double z_gamma = 0.0;    // 2 c4^{-1/4} Gamma(5/4)
};

inline NonCltReport nonclt_compare(const BlockModel& model,
                                   std::int64_t cap = StateSpace::default_cap) {
  const CriticalBasis basis = critical_decomposition(model);
  const QuarticLaw law = quartic_limit_law(model, basis);
  const UMarginal marg = exact_u_marginal(model, cap);
  NonCltReport rep;
  rep.n = model.n();
  rep.z_quadrature = law.z;
  rep.z_gamma = 2.0 * std::pow(law.c4, -0.25) * std::tgamma(1.25);

  // limit CDF at the atoms, integrated incrementally left to right
  const double c4 = law.c4;
  auto dens = [c4](double x) { return std::exp(-c4 * std::pow(x, 4)); };
  const Eigen::Index count = marg.u.size();
  Vector limit_cdf(count);
  double acc = integrate(dens, -law.half_width, std::max(-law.half_width, marg.u[0]));
  limit_cdf[0] = acc / law.z;
  for (Eigen::Index i = 1; i < count; ++i) {
    acc += integrate(dens, std::max(-law.half_width, marg.u[i - 1]),
                     std::clamp(marg.u[i], -law.half_width, law.half_width));
    limit_cdf[i] = std::min(1.0, acc / law.z);
  }
  double cum = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    rep.ks = std::max(rep.ks, std::abs(cum - limit_cdf[i]));
    cum += marg.prob[i];
    rep.ks = std::max(rep.ks, std::abs(cum - limit_cdf[i]));
  }

  // binned comparison, fixed grid for reproducibility
  const double lo = -5.0, width = 0.1;
  const int bins = 100;
  Vector exact_mass = Vector::Zero(bins + 2);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double u = marg.u[i];
    int cell;
    if (u < lo)
      cell = 0;
    else if (u >= -lo)
      cell = bins + 1;
    else
      cell = 1 + std::min(bins - 1, int(std::floor((u - lo) / width)));
    exact_mass[cell] += marg.prob[i];
  }
  Vector limit_mass = Vector::Zero(bins + 2);
  double prev_cdf = nonclt_cdf(law, lo);
  limit_mass[0] = prev_cdf;
  for (int b = 0; b < bins; ++b) {
    const double edge = lo + width * (b + 1);
    const double next_cdf = nonclt_cdf(law, edge);
    limit_mass[b + 1] = next_cdf - prev_cdf;
    prev_cdf = next_cdf;
  }
  limit_mass[bins + 1] = 1.0 - prev_cdf;
  rep.binned_tv = 0.5 * (exact_mass - limit_mass).lpNorm<1>();
  return rep;
}

struct DriftAuditPoint {
  std::int64_t t = 0;
  double eta = 0.0;
};

struct DriftAuditReport {
  std::vector<DriftAuditPoint> eta;
  double eta0 = 0.0;
  double band = 0.0;        // c1 n^{-1/2}
  bool reached = false;
  std::int64_t t_reach = 0;
  double theta_fit = 0.0;   // slope of 1/eta against t/n over the decay stretch
};

// Exact evolution of eta_t = sum_i p_i (E|X_t^(i)|)^2 at criticality from the
// all-plus corner; eta should fall to O(n^{-1/2}) within O(n^{3/2}) steps.
inline DriftAuditReport critical_drift_audit(const BlockModel& model, double band_constant = 5.0,
                                             std::int64_t horizon = -1, std::int64_t stride = -1,
                                             int threads = 1,
                                             std::int64_t cap = StateSpace::default_cap) {
  const double beta = beta_critical(model);
  const SparseKernel kernel = build_kernel(model, beta, cap);
  const StateSpace& space = kernel.space;
  const int m = model.block_count();
  const double n = model.n();
  if (horizon < 0) horizon = std::int64_t(std::llround(20.0 * std::pow(n, 1.5)));
  if (stride < 0) stride = std::max<std::int64_t>(1, horizon / 2000);

  // |X_i| per state, precomputed once
  Matrix absx(space.size(), m);
  for (std::int64_t idx = 0; idx < space.size(); ++idx) {
    const Vector s = space.state(idx).cast<double>() / n;
    for (int i = 0; i < m; ++i) absx(idx, i) = std::abs(model.k().row(i).dot(s));
  }
  auto eta_of = [&](const Vector& w) {
    double eta = 0.0;
    for (int i = 0; i < m; ++i) {
      const double e = absx.col(i).dot(w);
      eta += model.p()[i] * e * e;
    }
    return eta;
  };

  MagVector top = model.block_sizes();
  DistVector dist = point_mass(space, top);
  DriftAuditReport rep;
  rep.band = band_constant / std::sqrt(n);
  rep.eta0 = eta_of(dist.w);
  rep.eta.push_back({0, rep.eta0});
  for (std::int64_t t = stride; t <= horizon; t += stride) {
    evolve_in_place(kernel, dist, stride, threads);
    const double eta = eta_of(dist.w);
    rep.eta.push_back({t, eta});
    if (eta <= rep.band) {
      rep.reached = true;
      rep.t_reach = t;
      break;
    }
  }
  // 1/eta grows linearly in t/n while the quartic drift dominates
  std::vector<double> xs, ys;
  for (const auto& pt : rep.eta)
    if (pt.eta < 0.8 * rep.eta0 && pt.eta > std::max(1.2 * rep.band, 1e-12)) {
      xs.push_back(double(pt.t) / n);
      ys.push_back(1.0 / pt.eta);
    }
  if (xs.size() >= 2) {
    const Vector x = Eigen::Map<Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Vector y = Eigen::Map<Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    rep.theta_fit = linear_fit(x, y).slope;
  }
  return rep;
}

}  // namespace blockcw
