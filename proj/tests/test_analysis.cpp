#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "blockcw/analysis.hpp"
#include "oracles.hpp"

using namespace blockcw;

namespace {
Matrix mat2(double a, double b, double c, double d) {
  Matrix k(2, 2);
  k << a, b, c, d;
  return k;
}
Vector vec2(double a, double b) {
  Vector p(2);
  p << a, b;
  return p;
}
}  // namespace

TEST_CASE("free energy at the origin, symmetry, boundary guard") {
  for (const auto& model : oracle::small_instances()) {
    const Vector zero = Vector::Zero(model.block_count());
    CHECK(free_energy(model, 0.8, zero) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(free_energy_grad(model, 0.8, zero).cwiseAbs().maxCoeff() <= 1e-14);

    std::mt19937 gen(23);
    std::uniform_real_distribution<double> cdist(-0.95, 0.95);
    for (int trial = 0; trial < 20; ++trial) {
      Vector chi(model.block_count());
      for (int i = 0; i < chi.size(); ++i) chi[i] = cdist(gen);
      const Vector neg = -chi;
      CHECK(free_energy(model, 1.1, chi) ==
            doctest::Approx(free_energy(model, 1.1, neg)).epsilon(1e-13));
    }
  }
  const BlockModel cw = BlockModel::create(8, Vector::Ones(1), Matrix::Ones(1, 1));
  Vector edge(1);
  edge << 1.0;
  CHECK_THROWS_AS(free_energy(cw, 1.0, edge), Error);
  try {
    free_energy_grad(cw, 1.0, edge);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::boundary_value);
  }
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937 gen(29);
  std::uniform_real_distribution<double> cdist(-0.9, 0.9);
  int checked = 0;
  for (const auto& model : oracle::small_instances()) {
    for (double beta : {0.3, 1.0, 1.7}) {
      for (int trial = 0; trial < 7; ++trial) {
        Vector chi(model.block_count());
        for (int i = 0; i < chi.size(); ++i) chi[i] = cdist(gen);
        const auto f = [&](const Vector& x) { return free_energy(model, beta, x); };
        const Vector numeric = oracle::central_difference_grad(f, chi);
        const Vector analytic = free_energy_grad(model, beta, chi);
        CHECK((numeric - analytic).cwiseAbs().maxCoeff() <= 1e-7);
        ++checked;
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("mean-field roots: unique at high temperature, classical pair at 1.2") {
  std::mt19937 gen(31);
  for (int trial = 0; trial < 15; ++trial) {
    const BlockModel model = oracle::random_instance(gen);
    const double beta = 0.8 * beta_critical(model);
    std::uniform_real_distribution<double> cdist(-1.0, 1.0);
    Vector init(model.block_count());
    for (int i = 0; i < init.size(); ++i) init[i] = cdist(gen);
    const Vector chi = mean_field_solve(model, beta, init);
    CHECK(chi.cwiseAbs().maxCoeff() <= 1e-9);
  }

  const BlockModel cw = BlockModel::create(16, Vector::Ones(1), Matrix::Ones(1, 1));
  Vector one(1), minus(1);
  one << 1.0;
  minus << -1.0;
  const double root = oracle::bisect([](double x) { return x - std::tanh(1.2 * x); }, 0.1, 0.999);
  const Vector chi = mean_field_solve(cw, 1.2, one);
  CHECK(std::abs(chi[0] - root) <= 1e-9);
  CHECK(chi[0] == doctest::Approx(0.6586).epsilon(2e-4));
  const Vector chim = mean_field_solve(cw, 1.2, minus);
  CHECK(std::abs(chim[0] + root) <= 1e-9);

  // fixed points are zeros of the free-energy gradient
  for (const auto& model : oracle::small_instances()) {
    for (double frac : {0.7, 1.3}) {
      const double beta = frac * beta_critical(model);
      const Landscape scape = landscape(model, beta);
      for (const auto& fp : scape.points)
        CHECK(free_energy_grad(model, beta, fp.chi).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("spectral radius of the iteration Jacobian at the origin is beta/beta_cr") {
  std::mt19937 gen(37);
  for (int trial = 0; trial < 20; ++trial) {
    const BlockModel model = oracle::random_instance(gen);
    const double bc = beta_critical(model);
    for (double beta : {0.3, 0.9, 1.6}) {
      const Vector d = model.p().array().sqrt().matrix();
      Eigen::SelfAdjointEigenSolver<Matrix> es(d.asDiagonal() * model.k() * d.asDiagonal());
      const double radius = beta * es.eigenvalues().maxCoeff();
      CHECK(std::abs(radius - beta / bc) <= 1e-10);
    }
  }
}

TEST_CASE("well counts across the transition") {
  const BlockModel cw = BlockModel::create(16, Vector::Ones(1), Matrix::Ones(1, 1));
  CHECK(count_minima(cw, 0.8).count == 1);
  CHECK(count_minima(cw, 1.2).count == 2);
  const MinimaReport at_cr = count_minima(cw, 1.0);
  CHECK(at_cr.count == 1);
  CHECK(at_cr.degenerate);

  std::mt19937 gen(41);
  for (int trial = 0; trial < 8; ++trial) {
    const BlockModel model = oracle::random_instance(gen);
    const double bc = beta_critical(model);
    CHECK(count_minima(model, 0.8 * bc).count == 1);
    CHECK(count_minima(model, 1.2 * bc).count == 2);
  }
}

TEST_CASE("stationary mode matches the mean-field wells") {
  const BlockModel model = BlockModel::create(128, Vector::Ones(1), Matrix::Ones(1, 1));
  const double beta = 1.2;
  Vector one(1);
  one << 1.0;
  const double chi0 = mean_field_solve(model, beta, one)[0];
  const Vector pi = lumped_stationary(model, beta);
  Eigen::Index arg = 0;
  pi.maxCoeff(&arg);
  const StateSpace space(model);
  const double s_star = model.p()[0] * chi0;
  CHECK(std::abs(std::abs(space.state(arg)[0]) / double(model.n()) - s_star) <= 4.0 / model.n());

  // below beta_cr the argmax sits at the near-zero state
  const Vector pi_high = lumped_stationary(model, 0.7);
  pi_high.maxCoeff(&arg);
  CHECK(std::abs(space.state(arg)[0]) <= 2);
}

TEST_CASE("linear fit recovers an exact line") {
  Vector x(4), y(4);
  x << 1, 2, 3, 4;
  y = (2.5 * x.array() - 1.0).matrix();
  const FitResult fit = linear_fit(x, y);
  CHECK(fit.slope == doctest::Approx(2.5).epsilon(1e-13));
  CHECK(fit.intercept == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("cutoff profile: gamma monotone, sharpening window") {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const std::vector<int> n_list{128, 256};
  const std::vector<double> gamma_list{-6, -3, 0, 3, 10, 25};
  const CutoffProfile profile = cutoff_experiment(family, 0.5, n_list, gamma_list, 2);

  for (int n : n_list) {
    double prev = 2.0;
    for (const auto& row : profile.table) {
      if (row.n != n) continue;
      CHECK(row.d <= prev + 1e-12);  // nonincreasing in gamma
      prev = row.d;
    }
  }
  for (const auto& per : profile.per_n) {
    CHECK(per.ratio >= 0.7);
    CHECK(per.ratio <= 1.5);
  }
  // the window in units of n, relative to log n, shrinks with n
  const double w0 = profile.per_n[0].window_steps / n_list[0] / std::log(double(n_list[0]));
  const double w1 = profile.per_n[1].window_steps / n_list[1] / std::log(double(n_list[1]));
  CHECK(w1 < w0);
}

TEST_CASE("cutoff band values at n = 512") {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const CutoffProfile profile = cutoff_experiment(family, 0.5, {512}, {-6.0, 25.0}, 4);
  REQUIRE(profile.table.size() == 2);
  CHECK(profile.table[0].d >= 0.6);   // still far from stationarity at t_n - 6n
  CHECK(profile.table[1].d <= 0.15);  // essentially mixed at t_n + 25n
}

TEST_CASE("high-temperature conductance decays polynomially, not exponentially") {
  // across the a^T S = 0 cut the flow is carried by the O(n^{-1/2}) boundary
  // mass, so log Phi against n follows -0.5 log n; the fitted slope lands near
  // that prediction and far from the metastable decay rate
  const std::vector<int> n_list{16, 24, 32, 40, 48};
  Vector x(5), y_high(5), y_pred(5), y_low(5);
  for (int i = 0; i < 5; ++i) {
    const BlockModel model = BlockModel::create(n_list[static_cast<std::size_t>(i)],
                                                Vector::Ones(1), Matrix::Ones(1, 1));
    x[i] = double(n_list[static_cast<std::size_t>(i)]);
    y_high[i] = std::log(conductance(model, 0.8).phi);
    y_low[i] = std::log(conductance(model, 1.3).phi);
    y_pred[i] = -0.5 * std::log(x[i]);
  }
  const double s_high = linear_fit(x, y_high).slope;
  const double s_low = linear_fit(x, y_low).slope;
  const double s_pred = linear_fit(x, y_pred).slope;
  CHECK(std::abs(s_high - s_pred) <= 0.012);
  CHECK(std::abs(s_high) <= 0.5 * std::abs(s_low));
  CHECK(s_low < -0.04);
}

TEST_CASE("quartic-law comparison at moderate size") {
  const BlockModel model = BlockModel::create(200, Vector::Ones(1), Matrix::Ones(1, 1));
  const NonCltReport rep = nonclt_compare(model);
  CHECK(rep.ks < 0.05);
  CHECK(rep.binned_tv < 0.15);
  CHECK(std::abs(rep.z_quadrature - rep.z_gamma) <= 1e-6);
}

TEST_CASE("critical drift audit: start value and the n^{-1/2} band") {
  const BlockModel model = BlockModel::create(256, Vector::Ones(1), Matrix::Ones(1, 1));
  const DriftAuditReport rep = critical_drift_audit(model);
  // eta_0 = sum_i p_i (sum_j k_ij p_j)^2 from the deterministic start
  CHECK(rep.eta0 == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& pt : rep.eta) CHECK(pt.eta >= 0.0);
  CHECK(rep.reached);
  CHECK(rep.t_reach <= std::int64_t(20.0 * std::pow(256.0, 1.5)));
  CHECK(rep.theta_fit > 0.0);

  const BlockModel two = BlockModel::create(24, vec2(0.5, 0.5), mat2(1, 0.5, 0.5, 1));
  const DriftAuditReport rep2 = critical_drift_audit(two, 5.0, 4000, 10);
  const Vector expected_x = two.k() * two.p();
  double eta0 = 0.0;
  for (int i = 0; i < 2; ++i) eta0 += two.p()[i] * expected_x[i] * expected_x[i];
  CHECK(rep2.eta0 == doctest::Approx(eta0).epsilon(1e-12));
}

TEST_CASE("gaussian block variance approaches diag((1-lambda_i)^-1)") {
  // exact second moment of the first (non-top) coordinate of U under the
  // stationary law at beta_cr; the limit variance is 1/(1 - lambda_1)
  const ModelFamily family{vec2(0.5, 0.5), mat2(1, 0.5, 0.5, 1)};
  double prev_ratio = 0.0;
  for (int n : {100, 200, 400}) {
    const BlockModel model = family.at(n);
    const CriticalBasis basis = critical_decomposition(model);
    const double target = 1.0 / (1.0 - basis.lambda[0]);
    const StateSpace space(model);
    const Vector pi = lumped_stationary(model, basis.beta_cr);
    double var = 0.0;
    for (std::int64_t idx = 0; idx < space.size(); ++idx) {
      const double u1 = u_statistic(model, basis, space.state(idx))[0];
      var += pi[idx] * u1 * u1;
    }
    const double ratio = var / target;
    CHECK(ratio > prev_ratio);  // finite-n variance rises toward the limit
    prev_ratio = ratio;
  }
  CHECK(prev_ratio > 0.9);
  CHECK(prev_ratio < 1.0);
}

TEST_CASE("metastability signs on a small sweep") {
  ModelFamily family{Vector::Ones(1), Matrix::Ones(1, 1)};
  const MetastabilityReport rep =
      metastability_fit(family, 1.3, {16, 24, 32}, 80, 400'000, 7, 4);
  CHECK(rep.conductance_fit.slope < -0.01);
  CHECK(rep.exit_fit.slope > 0.0);
  CHECK(rep.max_censored_fraction <= 0.05);
}
