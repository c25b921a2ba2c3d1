#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blockcw {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using IndexVector = Eigen::VectorXi;

// Integer block magnetizations M^(i) = sum of spins over block i.
using MagVector = Eigen::VectorXi;

enum class Errc {
  non_integer_block_size,
  asymmetric_interaction,
  non_positive_interaction,
  bad_proportions,
  state_out_of_range,
  state_space_too_large,
  no_convergence,
  reducible_matrix,
  not_high_temperature,
  not_positive_definite,
  top_eigenvalue_not_one,
  quadrature_failure,
  dimension_mismatch,
  not_converged,
  empty_side,
  magnetization_mismatch,
  bad_reference,
  boundary_value,
  bad_input,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::non_integer_block_size: return "NonIntegerBlockSize";
    case Errc::asymmetric_interaction: return "AsymmetricInteraction";
    case Errc::non_positive_interaction: return "NonPositiveInteraction";
    case Errc::bad_proportions: return "BadProportions";
    case Errc::state_out_of_range: return "StateOutOfRange";
    case Errc::state_space_too_large: return "StateSpaceTooLarge";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::reducible_matrix: return "ReducibleMatrix";
    case Errc::not_high_temperature: return "NotHighTemperature";
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::top_eigenvalue_not_one: return "TopEigenvalueNotOne";
    case Errc::quadrature_failure: return "QuadratureFailure";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::not_converged: return "NotConverged";
    case Errc::empty_side: return "EmptySide";
    case Errc::magnetization_mismatch: return "MagnetizationMismatch";
    case Errc::bad_reference: return "BadReference";
    case Errc::boundary_value: return "BoundaryValue";
    case Errc::bad_input: return "BadInput";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace blockcw
