// Acceptance suite: one line per criterion, exit code = number of failures.
// Every tolerance is pinned here; nothing is deferred to later calibration.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <random>
#include <vector>

#include "blockcw/analysis.hpp"
#include "blockcw/dynamics.hpp"
#include "blockcw/kernel.hpp"
#include "blockcw/model.hpp"
#include "blockcw/spectral.hpp"
#include "oracles.hpp"

using namespace blockcw;

namespace {

int failures = 0;

void report(int number, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s -- %s\n", ok ? "PASS" : "FAIL", number, name, detail.c_str());
  if (!ok) ++failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix k(2, 2);
  k << a, b, c, d;
  return k;
}

// ---------------------------------------------------------------- criterion 1
void criterion_oracle_equivalence() {
  double worst_stationary = 0.0, worst_step = 0.0, worst_balance = 0.0;
  std::mt19937 gen(2025);
  for (const auto& model : oracle::small_instances()) {
    const StateSpace space(model);
    for (double beta : {0.0, 0.5, 1.0, 1.5}) {
      const Vector lumped = lumped_stationary(model, beta);
      const Vector pushed = oracle::push_to_mag(model, space, oracle::full_gibbs(model, beta));
      worst_stationary =
          std::max(worst_stationary, (lumped - pushed).cwiseAbs().maxCoeff());

      const SparseKernel kernel = build_kernel(model, beta);
      for (int trial = 0; trial < 4; ++trial) {
        const std::uint32_t cfg = gen() & ((1u << model.n()) - 1);
        Vector full = Vector::Zero(1u << model.n());
        full[cfg] = 1.0;
        const Vector after =
            oracle::push_to_mag(model, space, oracle::full_chain_step(model, beta, full));
        DistVector lumped_step = point_mass(space, oracle::magnetization(model, cfg));
        evolve_in_place(kernel, lumped_step, 1);
        worst_step = std::max(worst_step, (after - lumped_step.w).cwiseAbs().maxCoeff());
      }
      worst_balance = std::max(worst_balance, check_reversibility(kernel, lumped));
    }
  }
  const bool ok = worst_stationary <= 1e-12 && worst_step <= 1e-12 && worst_balance <= 1e-12;
  report(1, "exact oracle equivalence (n <= 12)", ok,
         fmt("stationary %.2e, one-step %.2e, detailed balance %.2e (all <= 1e-12)",
             worst_stationary, worst_step, worst_balance));
}

// ---------------------------------------------------------------- criterion 2
void criterion_spectral_constants() {
  const BlockModel cw = BlockModel::create(64, Vector::Ones(1), Matrix::Ones(1, 1));
  const double classical = std::abs(beta_critical(cw) - 1.0);

  std::mt19937 gen(4096);
  double worst_route = 0.0, worst_scale = 0.0, worst_alpha = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const BlockModel model = oracle::random_instance(gen);
    const Vector d = model.p().array().sqrt().matrix();
    Eigen::SelfAdjointEigenSolver<Matrix> es(d.asDiagonal() * model.k() * d.asDiagonal());
    const double bc = beta_critical(model);
    worst_route = std::max(worst_route, std::abs(bc * es.eigenvalues().maxCoeff() - 1.0));

    const BlockModel scaled = BlockModel::create(4 * model.n(), model.p(), model.k());
    worst_scale = std::max(worst_scale, std::abs(bc - beta_critical(scaled)));

    const double beta = 0.7 * bc;
    for (const BlockModel* m : {&model, &scaled}) {
      const SpectralData data = spectral_data(*m, beta);
      worst_alpha = std::max(
          worst_alpha, std::abs(1.0 / (2.0 * m->n() * (1.0 - data.rho)) - data.alpha));
    }
  }
  const bool ok =
      classical <= 1e-12 && worst_route <= 1e-10 && worst_scale <= 1e-12 && worst_alpha <= 1e-10;
  report(2, "spectral constants", ok,
         fmt("classical |beta_cr-1| %.2e, route gap %.2e, n-dependence %.2e, alpha gap %.2e",
             classical, worst_route, worst_scale, worst_alpha));
}

// ---------------------------------------------------------------- criterion 3
void criterion_cutoff_trend() {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const std::vector<int> n_list{64, 128, 256, 512};
  const CutoffProfile profile = cutoff_experiment(family, 0.5, n_list, {}, 4);
  bool ratios_ok = true;
  std::string ratios;
  for (const auto& per : profile.per_n) {
    ratios_ok = ratios_ok && per.ratio >= 0.7 && per.ratio <= 1.5;
    ratios += fmt(" %.3f", per.ratio);
  }
  const auto& last = profile.per_n.back();
  const double window = last.window_steps;
  const double in_units_of_n = window / double(last.n);
  const double in_units_of_nlogn = window / (double(last.n) * std::log(double(last.n)));
  const bool window_ok = window > 0.0 && in_units_of_nlogn <= 0.5 * in_units_of_n;
  report(3, "cutoff trend at beta = 0.5 beta_cr", ratios_ok && window_ok,
         fmt("t_mix/(n log n) =%s in [0.7,1.5]; n=512 window %g steps = %.2f n = %.3f n log n "
             "(o(t_n) check %.3f <= %.3f)",
             ratios.c_str(), window, in_units_of_n, in_units_of_nlogn, in_units_of_nlogn,
             0.5 * in_units_of_n));
}

// ---------------------------------------------------------------- criterion 4
void criterion_critical_exponent() {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const std::vector<int> n_list{64, 128, 256, 512};
  const ExponentFit critical = critical_exponent_fit(family, n_list, 4);
  const ExponentFit control = exponent_fit(family, n_list, 0.5, 0.25, 4);
  const bool ok = critical.fit.slope >= 1.3 && critical.fit.slope <= 1.7 &&
                  critical.fit.r2 >= 0.99 && control.fit.slope >= 0.95 &&
                  control.fit.slope <= 1.25 && control.fit.r2 >= 0.99;
  report(4, "critical exponent n^{3/2}", ok,
         fmt("critical slope %.4f (R2 %.5f) in [1.3,1.7]; control slope %.4f (R2 %.5f) in "
             "[0.95,1.25]",
             critical.fit.slope, critical.fit.r2, control.fit.slope, control.fit.r2));
}

// ---------------------------------------------------------------- criterion 5
void criterion_metastability() {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const std::vector<int> n_list{16, 24, 32, 40, 48};
  const MetastabilityReport low =
      metastability_fit(family, 1.3, n_list, 200, 2'000'000, 90210, 4);
  const MetastabilityReport high =
      metastability_fit(family, 0.8, n_list, 40, 2'000'000, 90210, 4);
  const double s_low = low.conductance_fit.slope;
  const double s_high = high.conductance_fit.slope;
  // "flat" control: the polynomial decay of Phi at high temperature must stay
  // well below the exponential decay rate seen in the metastable phase
  const bool ok = s_low < -0.01 && low.conductance_fit.r2 >= 0.98 &&
                  std::abs(s_high) <= 0.5 * std::abs(s_low) && low.exit_fit.slope > 0.0 &&
                  low.max_censored_fraction <= 0.25;
  report(5, "metastability: conductance decay and exit growth", ok,
         fmt("conductance slope %.4f (R2 %.4f) at 1.3 beta_cr vs %.4f at 0.8 beta_cr; exit "
             "slope %.4f; censored <= %.2f",
             s_low, low.conductance_fit.r2, s_high, low.exit_fit.slope,
             low.max_censored_fraction));
}

// ---------------------------------------------------------------- criterion 6
void criterion_nonclt() {
  const ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  std::vector<NonCltReport> reports;
  for (int n : {200, 800, 2000}) reports.push_back(nonclt_compare(family.at(n)));
  const bool ks_decreasing =
      reports[0].ks > reports[1].ks && reports[1].ks > reports[2].ks;
  const bool tv_ok = reports[2].binned_tv <= 0.08;
  const double z_gap = std::abs(reports[2].z_quadrature - reports[2].z_gamma);
  const bool ok = ks_decreasing && tv_ok && z_gap <= 1e-6;
  report(6, "non-CLT of the top-direction statistic", ok,
         fmt("KS %.5f > %.5f > %.5f; binned TV(n=2000) %.5f <= 0.08; |Z_quad - Z_gamma| %.2e "
             "(Z = %.6f)",
             reports[0].ks, reports[1].ks, reports[2].ks, reports[2].binned_tv, z_gap,
             reports[2].z_quadrature));
}

// ---------------------------------------------------------------- criterion 7
void criterion_couplings() {
  const BlockModel model =
      BlockModel::create(100, (Vector(2) << 0.5, 0.5).finished(), mat2(1, 0.5, 0.5, 1));
  const double beta = 0.5 * beta_critical(model);

  // monotone order audit over one million coupled steps
  std::int64_t violations = 0;
  std::int64_t audited = 0;
  std::mt19937 gen(777);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::int8_t> lo(100), hi(100);
    for (int v = 0; v < 100; ++v) {
      const int r = int(gen() % 3);
      lo[static_cast<std::size_t>(v)] = r == 2 ? +1 : -1;
      hi[static_cast<std::size_t>(v)] = r == 0 ? -1 : +1;
    }
    RngStream rng = RngStream::for_replica(4242, std::uint64_t(rep));
    CoupledPair pair = make_pair(model, config_from_spins(model, lo),
                                 config_from_spins(model, hi), CoupleMode::monotone);
    for (int t = 0; t < 20'000; ++t) {
      monotone_coupled_step(model, beta, pair, rng);
      ++audited;
      for (int v = 0; v < model.n(); ++v)
        if (pair.a.spin[static_cast<std::size_t>(v)] > pair.b.spin[static_cast<std::size_t>(v)]) {
          ++violations;
          break;
        }
    }
  }

  // mean contraction of the weighted block distance at t = n
  const SpectralData data = spectral_data(model, beta);
  const int reps = 10'000;
  std::vector<double> values(reps);
  parallel_replicas(reps, 4, [&](int r) {
    RngStream rng = RngStream::for_replica(31337, std::uint64_t(r));
    CoupledPair pair = make_pair(model, all_minus(model), all_plus(model), CoupleMode::monotone);
    for (int t = 0; t < model.n(); ++t) monotone_coupled_step(model, beta, pair, rng);
    values[static_cast<std::size_t>(r)] = data.a.dot(pair.dist.cast<double>());
  });
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= reps;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (reps - 1) / reps);
  const double bound =
      std::pow(data.rho, model.n()) * data.a.dot(model.block_sizes().cast<double>());
  const bool contraction_ok = mean <= bound + 3.0 * se;

  // same-magnetization coupling: magnetizations pinned, full coupling fast
  const BlockModel cw = BlockModel::create(50, Vector::Ones(1), Matrix::Ones(1, 1));
  std::vector<std::int8_t> half(50, -1), flipped(50, +1);
  for (int v = 0; v < 25; ++v) {
    half[static_cast<std::size_t>(v)] = +1;
    flipped[static_cast<std::size_t>(v)] = -1;
  }
  const SpinConfig sa = config_from_spins(cw, half);
  const SpinConfig sb = config_from_spins(cw, flipped);
  const std::int64_t budget = std::int64_t(20.0 * 50.0 * std::log(50.0));
  const int mag_reps = 501;
  std::vector<std::int64_t> taus(mag_reps);
  std::vector<std::int64_t> breaks(mag_reps, 0);
  parallel_replicas(mag_reps, 4, [&](int r) {
    RngStream rng = RngStream::for_replica(9000, std::uint64_t(r));
    CoupledPair pair = make_pair(cw, sa, sb, CoupleMode::same_magnetization);
    std::int64_t t = 0;
    while (pair.dist.sum() != 0 && t < 50 * budget) {
      same_mag_coupled_step(cw, 1.0, pair, rng);
      if (pair.a.mag != pair.b.mag) ++breaks[static_cast<std::size_t>(r)];
      ++t;
    }
    taus[static_cast<std::size_t>(r)] = t;
  });
  std::int64_t mag_breaks = 0;
  for (std::int64_t b : breaks) mag_breaks += b;
  std::nth_element(taus.begin(), taus.begin() + mag_reps / 2, taus.end());
  const bool same_mag_ok = mag_breaks == 0 && taus[mag_reps / 2] <= budget;

  const bool ok = violations == 0 && audited >= 1'000'000 && contraction_ok && same_mag_ok;
  report(7, "coupling properties", ok,
         fmt("monotone violations %lld / %lld steps; contraction mean %.3f <= %.3f (+3SE %.3f); "
             "same-mag breaks %lld, median full-coupling %lld <= %lld",
             static_cast<long long>(violations), static_cast<long long>(audited), mean, bound,
             bound + 3.0 * se, static_cast<long long>(mag_breaks),
             static_cast<long long>(taus[mag_reps / 2]), static_cast<long long>(budget)));
}

// ---------------------------------------------------------------- criterion 8
void criterion_landscape() {
  // gradient vs central differences
  std::mt19937 gen(515);
  std::uniform_real_distribution<double> cdist(-0.9, 0.9);
  double worst_grad = 0.0;
  for (const auto& model : oracle::small_instances()) {
    for (double beta : {0.4, 1.1, 1.8}) {
      for (int trial = 0; trial < 10; ++trial) {
        Vector chi(model.block_count());
        for (int i = 0; i < chi.size(); ++i) chi[i] = cdist(gen);
        const auto f = [&](const Vector& x) { return free_energy(model, beta, x); };
        worst_grad = std::max(worst_grad,
                              (oracle::central_difference_grad(f, chi) -
                               free_energy_grad(model, beta, chi))
                                  .cwiseAbs()
                                  .maxCoeff());
      }
    }
  }

  // well count across a 20-instance sweep
  bool wells_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const BlockModel model = oracle::random_instance(gen);
    const double bc = beta_critical(model);
    wells_ok = wells_ok && count_minima(model, 0.8 * bc).count == 1 &&
               count_minima(model, 1.2 * bc).count == 2;
  }

  // classical fixed point against the bisection oracle
  const BlockModel cw = BlockModel::create(128, Vector::Ones(1), Matrix::Ones(1, 1));
  const double root =
      oracle::bisect([](double x) { return x - std::tanh(1.2 * x); }, 0.1, 0.999);
  Vector one(1);
  one << 1.0;
  const double chi0 = mean_field_solve(cw, 1.2, one)[0];
  const double root_gap = std::abs(chi0 - root);

  // stationary argmax against the wells at n = 128
  const Vector pi = lumped_stationary(cw, 1.2);
  Eigen::Index arg = 0;
  pi.maxCoeff(&arg);
  const StateSpace space(cw);
  const double arg_gap = std::abs(std::abs(space.state(arg)[0]) / 128.0 - chi0);

  const bool ok = worst_grad <= 1e-7 && wells_ok && root_gap <= 1e-9 && arg_gap <= 4.0 / 128.0;
  report(8, "free-energy landscape", ok,
         fmt("grad-FD gap %.2e <= 1e-7; wells 1 below / 2 above on 20 instances: %s; "
             "|chi0 - bisect| %.2e <= 1e-9 (chi0 %.4f); argmax gap %.4f <= %.4f",
             worst_grad, wells_ok ? "yes" : "no", root_gap, chi0, arg_gap, 4.0 / 128.0));
}

}  // namespace

int main() {
  std::printf("acceptance suite (exact + Monte Carlo gates)\n");
  criterion_oracle_equivalence();
  criterion_spectral_constants();
  criterion_cutoff_trend();
  criterion_critical_exponent();
  criterion_metastability();
  criterion_nonclt();
  criterion_couplings();
  criterion_landscape();
  if (failures == 0)
    std::printf("all acceptance criteria passed\n");
  else
    std::printf("%d acceptance criteria FAILED\n", failures);
  return failures;
}
