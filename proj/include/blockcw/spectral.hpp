#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "blockcw/model.hpp"
#include "blockcw/types.hpp"

namespace blockcw {

inline Matrix scaled_interaction(const BlockModel& model) {
  // B = (p_i k_ij)
  return model.p().asDiagonal() * model.k();
}

inline Matrix contraction_matrix(const BlockModel& model, double beta) {
  // Q = (1 - 1/n) I + (beta/n) B
  const int m = model.block_count();
  const double n = model.n();
  return (1.0 - 1.0 / n) * Matrix::Identity(m, m) + (beta / n) * scaled_interaction(model);
}

struct PerronPair {
  double value = 0.0;  // largest eigenvalue
  Vector left;         // positive left eigenvector, ||.||_1 = 1
};

namespace detail {

inline void check_irreducible(const Matrix& b) {
  const int m = static_cast<int>(b.rows());
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < m; ++j)
      if (!seen[j] && (b(i, j) != 0.0 || b(j, i) != 0.0)) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  for (char s : seen)
    require(s != 0, Errc::reducible_matrix, "matrix is reducible; no Perron pair");
}

// Power iteration for the top eigenpair of a symmetric nonnegative matrix.
// A Gershgorin shift keeps the target eigenvalue the one of largest modulus
// (zero diagonals can otherwise make the spectrum symmetric).
inline std::pair<double, Vector> symmetric_top_pair(const Matrix& x, int max_iter, double tol) {
  const int m = static_cast<int>(x.rows());
  if (m == 1) return {x(0, 0), Vector::Ones(1)};
  const double shift = x.cwiseAbs().rowwise().sum().maxCoeff();
  const Matrix xs = x + shift * Matrix::Identity(m, m);
  Vector v = Vector::Ones(m) / std::sqrt(double(m));
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = xs * v;
    const double norm = w.norm();
    require(norm > 0.0, Errc::no_convergence, "power iteration collapsed to zero");
    w /= norm;
    lambda = w.dot(x * w);
    const double resid = (x * w - lambda * w).norm();
    v = w;
    if (resid <= tol * std::max(1.0, std::abs(lambda))) return {lambda, v};
  }
  fail(Errc::no_convergence, "power iteration did not reach the residual target");
}

}  // namespace detail

// Left Perron pair of B = (p_i k_ij). All eigenwork runs on the symmetric
// conjugate D K D with D = diag(sqrt(p_i)); B^T a = lambda a iff (DKD)(Da) = lambda (Da).
inline PerronPair perron_left(const Matrix& b, const Vector& p, int max_iter = 1'000'000,
                              double tol = 1e-12) {
  const int m = static_cast<int>(b.rows());
  require(b.cols() == m && p.size() == m, Errc::dimension_mismatch, "B must be m x m, p length m");
  require((p.array() > 0.0).all(), Errc::bad_proportions, "weights must be positive");
  require((b.array() >= 0.0).all(), Errc::non_positive_interaction, "B must be nonnegative");
  detail::check_irreducible(b);

  const Vector d = p.array().sqrt().matrix();
  const Matrix dkd = d.cwiseInverse().asDiagonal() * b * d.asDiagonal();
  require((dkd - dkd.transpose()).cwiseAbs().maxCoeff() <=
              1e-10 * std::max(1.0, dkd.cwiseAbs().maxCoeff()),
          Errc::asymmetric_interaction, "D^-1 B D must be symmetric (B = P K with symmetric K)");

  auto [lambda, w] = detail::symmetric_top_pair(0.5 * (dkd + dkd.transpose()), max_iter, tol);
  Vector a = w.cwiseQuotient(d);
  if (a.sum() < 0.0) a = -a;
  require((a.array() > 0.0).all(), Errc::no_convergence, "Perron vector is not positive");
  a /= a.lpNorm<1>();
  return {lambda, a};
}

// beta_cr = 1 / sum_ij a_i p_i k_ij, cross-checked against 1/lambda_max(PK).
inline double beta_critical(const BlockModel& model, int max_iter = 1'000'000,
                            double tol = 1e-12) {
  const auto pair = perron_left(scaled_interaction(model), model.p(), max_iter, tol);
  double s = 0.0;
  for (int i = 0; i < model.block_count(); ++i)
    s += pair.left[i] * model.p()[i] * model.k().row(i).sum();
  const double bc = 1.0 / s;
  require(std::abs(bc * pair.value - 1.0) <= 1e-10, Errc::no_convergence,
          "beta_cr routes disagree: 1/sum(a p k) vs 1/lambda_max(PK)");
  return bc;
}

// alpha = 1 / (2 (1 - beta/beta_cr)); only defined in the high temperature regime.
inline double cutoff_alpha(const BlockModel& model, double beta) {
  const double bc = beta_critical(model);
  require(beta >= 0.0 && beta < bc, Errc::not_high_temperature,
          "alpha requires 0 <= beta < beta_cr");
  return 1.0 / (2.0 * (1.0 - beta / bc));
}

enum class Regime { high, critical, low };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::high: return "High";
    case Regime::critical: return "Critical";
    case Regime::low: return "Low";
  }
  return "?";
}

struct RegimeReport {
  Regime regime = Regime::high;
  double beta_cr = 0.0;
  bool k_positive_definite = false;  // needed for critical-regime experiments
};

inline RegimeReport classify_regime(const BlockModel& model, double beta, double tol = 1e-9) {
  RegimeReport rep;
  rep.beta_cr = beta_critical(model);
  if (beta < rep.beta_cr - tol)
    rep.regime = Regime::high;
  else if (beta > rep.beta_cr + tol)
    rep.regime = Regime::low;
  else
    rep.regime = Regime::critical;
  Eigen::SelfAdjointEigenSolver<Matrix> es(model.k());
  rep.k_positive_definite = es.eigenvalues().minCoeff() > 0.0;
  return rep;
}

// Orthogonal eigensystem of beta_cr * D K D with eigenvalues ascending; the top
// eigenvalue equals 1 at beta_cr by construction of beta_cr.
struct CriticalBasis {
  Matrix v;       // columns are eigenvectors; last column is the Perron direction
  Vector lambda;  // ascending, lambda_m = 1
  double beta_cr = 0.0;
};

inline CriticalBasis critical_decomposition(const BlockModel& model) {
  const int m = model.block_count();
  const double bc = beta_critical(model);
  const Vector d = model.p().array().sqrt().matrix();
  const Matrix dkd = bc * (d.asDiagonal() * model.k() * d.asDiagonal());
  Eigen::SelfAdjointEigenSolver<Matrix> es(dkd);
  require(es.info() == Eigen::Success, Errc::no_convergence, "eigendecomposition failed");
  CriticalBasis basis;
  basis.beta_cr = bc;
  basis.lambda = es.eigenvalues();
  basis.v = es.eigenvectors();
  require(basis.lambda.minCoeff() > 0.0, Errc::not_positive_definite,
          "interaction matrix K is not positive definite");
  require(std::abs(basis.lambda[m - 1] - 1.0) <= 1e-6, Errc::top_eigenvalue_not_one,
          "top eigenvalue of beta_cr*DKD is not 1; beta_cr inconsistent");
  if (m >= 2)
    require(basis.lambda[m - 1] - basis.lambda[m - 2] > 1e-9, Errc::top_eigenvalue_not_one,
            "top eigenvalue is numerically degenerate");
  // deterministic sign convention: Perron column positive, others lead with their
  // largest-magnitude entry positive
  if (basis.v.col(m - 1).sum() < 0.0) basis.v.col(m - 1) = -basis.v.col(m - 1);
  for (int j = 0; j + 1 < m; ++j) {
    int lead = 0;
    basis.v.col(j).cwiseAbs().maxCoeff(&lead);
    if (basis.v(lead, j) < 0.0) basis.v.col(j) = -basis.v.col(j);
  }
  return basis;
}

// Diagonals of the critical scaling matrices: Gamma_n = diag(n^-1/2, ..., n^-3/4)
// rescales the rotated magnetizations, C_n = diag(lambda_1, ..., lambda_{m-1}, n^1/2)
// weights the quadratic form they produce.
inline Vector critical_scaling_gamma(const BlockModel& model) {
  const int m = model.block_count();
  Vector g = Vector::Constant(m, 1.0 / std::sqrt(double(model.n())));
  g[m - 1] = std::pow(double(model.n()), -0.75);
  return g;
}

inline Vector critical_scaling_c(const BlockModel& model, const CriticalBasis& basis) {
  const int m = model.block_count();
  Vector c(m);
  for (int i = 0; i + 1 < m; ++i) c[i] = basis.lambda[i];
  c[m - 1] = std::sqrt(double(model.n()));
  return c;
}

// U(M) = Gamma_n V^T D^-1 M with Gamma_n = diag(n^-1/2, ..., n^-1/2, n^-3/4).
inline Vector u_statistic(const BlockModel& model, const CriticalBasis& basis,
                          const MagVector& mag) {
  const int m = model.block_count();
  const Vector dinv = model.p().array().rsqrt().matrix();
  Vector u = basis.v.transpose() * (dinv.cwiseProduct(mag.cast<double>()));
  const double n = model.n();
  for (int j = 0; j + 1 < m; ++j) u[j] /= std::sqrt(n);
  u[m - 1] /= std::pow(n, 0.75);
  return u;
}

inline Vector u_statistic(const BlockModel& model, const MagVector& mag) {
  return u_statistic(model, critical_decomposition(model), mag);
}

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
  require(depth < 60, Errc::quadrature_failure, "adaptive quadrature recursion exhausted");
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-13) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 0);
}

// Limit law of the top-direction statistic at criticality: density
// f(x) = Z^-1 exp(-c4 x^4) with c4 = (1/12) sum_i V_im^4 / p_i.
struct QuarticLaw {
  double c4 = 0.0;
  double z = 0.0;          // normalizing constant, by quadrature
  double half_width = 0.0; // integration window; tail mass beyond it < 1e-17
};

inline QuarticLaw quartic_limit_law(const BlockModel& model, const CriticalBasis& basis) {
  const int m = model.block_count();
  QuarticLaw law;
  for (int i = 0; i < m; ++i) law.c4 += std::pow(basis.v(i, m - 1), 4) / model.p()[i];
  law.c4 /= 12.0;
  law.half_width = std::max(10.0, std::pow(40.0 / law.c4, 0.25));
  const double c4 = law.c4;
  law.z = integrate([c4](double x) { return std::exp(-c4 * std::pow(x, 4)); }, -law.half_width,
                    law.half_width);
  require(law.z > 0.0 && std::isfinite(law.z), Errc::quadrature_failure,
          "quartic normalization failed");
  return law;
}

inline QuarticLaw quartic_limit_law(const BlockModel& model) {
  return quartic_limit_law(model, critical_decomposition(model));
}

inline double nonclt_density(const QuarticLaw& law, double x) {
  return std::exp(-law.c4 * std::pow(x, 4)) / law.z;
}

inline double nonclt_cdf(const QuarticLaw& law, double x) {
  if (x <= -law.half_width) return 0.0;
  if (x >= law.half_width) return 1.0;
  const double c4 = law.c4;
  const double mass =
      integrate([c4](double t) { return std::exp(-c4 * std::pow(t, 4)); }, -law.half_width, x);
  const double f = mass / law.z;
  return std::min(1.0, std::max(0.0, f));
}

inline double nonclt_density(const BlockModel& model, double x) {
  return nonclt_density(quartic_limit_law(model), x);
}

inline double nonclt_cdf(const BlockModel& model, double x) {
  return nonclt_cdf(quartic_limit_law(model), x);
}

// Bundle of the spectral quantities attached to an instance at a given beta.
struct SpectralData {
  Matrix b;       // (p_i k_ij)
  Matrix q;       // (1-1/n) I + (beta/n) B
  double rho = 0.0;      // Perron eigenvalue of Q
  Vector a;              // left Perron vector, ||a||_1 = 1
  double beta_cr = 0.0;
  double alpha = std::numeric_limits<double>::quiet_NaN();  // defined for beta < beta_cr
  Matrix v;       // eigenvectors of beta D K D, ascending eigenvalues
  Vector lambda;  // eigenvalues of beta D K D
};

inline SpectralData spectral_data(const BlockModel& model, double beta) {
  SpectralData s;
  s.b = scaled_interaction(model);
  s.q = contraction_matrix(model, beta);
  const auto pair = perron_left(s.b, model.p());
  s.a = pair.left;
  s.rho = 1.0 - 1.0 / double(model.n()) + beta * pair.value / double(model.n());
  s.beta_cr = beta_critical(model);
  if (beta < s.beta_cr) s.alpha = 1.0 / (2.0 * (1.0 - beta / s.beta_cr));
  const Vector d = model.p().array().sqrt().matrix();
  Eigen::SelfAdjointEigenSolver<Matrix> es(beta * (d.asDiagonal() * model.k() * d.asDiagonal()));
  s.lambda = es.eigenvalues();
  s.v = es.eigenvectors();
  return s;
}

}  // namespace blockcw
