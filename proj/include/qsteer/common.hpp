#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qsteer {

using cxd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Input violated a documented precondition.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numeric routine produced an unusable result (NaN, divergence, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative solver ran out of iterations; carries the last residual.
struct ConvergenceError : NumericError {
  ConvergenceError(const std::string& what, double residual_)
      : NumericError(what), residual(residual_) {}
  double residual;
};

// Artifact file problems: malformed, wrong version, digest mismatch.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. calling a generative-only operation on a property-mode net.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Probability vector over measurement outcomes.
using OutcomeDistribution = VectorXd;

// Throws ValidationError unless entries are nonnegative and sum to 1 within tol.
void validate_distribution(const OutcomeDistribution& d, double tol = 1e-10);

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace qsteer
