#pragma once

#include <cstdint>
#include <vector>

#include "qsteer/qcore.hpp"
#include "qsteer/rng.hpp"

// Single bosonic mode in a truncated Fock space {|0>, ..., |cutoff-1>}.
//
// Quadrature convention: x_theta = (e^{i theta} a^dag + e^{-i theta} a)/2,
// so the vacuum has variance 1/4 and a coherent state |alpha> has mean
// Re(alpha e^{-i theta}). The Wigner function uses the same units: a
// coherent state peaks at (Re alpha, Im alpha) with height 2/pi.

namespace qsteer::cv {

inline constexpr double kPi = 3.14159265358979323846;

using FockState = qc::QuantumState;

// c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!), renormalized after truncation.
// Requires cutoff >= 4|alpha|^2 + 20 and checks that the top five
// amplitudes carry <= 1e-8 weight.
FockState coherent_state(cxd alpha, int cutoff = 40);

// Even cat N(|alpha> + |-alpha>); alpha = 0 degenerates to the vacuum.
FockState cat_state(cxd alpha, int cutoff = 40);

// -a^dag^2 a^2 + alpha^2 a^dag^2 + conj(alpha)^2 a^2. The cat_state above
// is an eigenstate with eigenvalue |alpha|^4.
qc::SparseHermitian kerr_hamiltonian(cxd alpha, int cutoff = 40);

// Self-Kerr evolution c_n -> e^{-i n(n-1)} c_n (unit time, K = a^dag^2 a^2).
FockState kerr_gate(const FockState& psi);

// D(r e^{i psi}) |0> as a truncated coherent state.
FockState displaced_vacuum(double r, double psi, int cutoff = 40);

struct HomodyneSpec {
  double theta = 0.0;  // quadrature angle
  int bins = 100;
  double xmin = -4.0, xmax = 4.0;  // edge bins absorb the outside tails
};

// Precomputed Hermite-function table at quadrature nodes; reusable across
// states for a fixed (cutoff, spec geometry).
class HomodyneWorkspace {
 public:
  HomodyneWorkspace(int cutoff, const HomodyneSpec& geometry);
  int cutoff() const { return cutoff_; }
  const HomodyneSpec& geometry() const { return geom_; }

  OutcomeDistribution bin_probabilities(const VectorXcd& rotated_amps) const;

 private:
  int cutoff_;
  HomodyneSpec geom_;
  MatrixXd phi_;            // (cutoff x n_points) Hermite-function values
  VectorXd weight_;         // quadrature weights per point
  std::vector<int> bin_of_;  // point -> bin
};

// Probability of each of spec.bins outcomes for measuring x_theta,
// integrating |sum_n c_n e^{-i n theta} phi_n(x)|^2 over each bin.
OutcomeDistribution homodyne_distribution(const FockState& psi,
                                          const HomodyneSpec& spec);
OutcomeDistribution homodyne_distribution(const FockState& psi,
                                          const HomodyneSpec& spec,
                                          const HomodyneWorkspace& ws);

// Adds N(0, sigma2) independently per bin, clips negatives to zero and
// renormalizes. Throws NumericError if everything clips to zero.
OutcomeDistribution add_measurement_noise(const OutcomeDistribution& d,
                                          double sigma2, Rng& rng);

// Empirical frequencies from `shots` categorical draws; the returned vector
// sums to exactly 1.0.
OutcomeDistribution multinomial_sample(const OutcomeDistribution& d,
                                       long shots, Rng& rng);

// Cat-control action: stencil index as in the spin grid (0:(-1,-1) ...
// 7:(+1,+1)) moving (Re alpha, Im alpha) by +-beta; |alpha| radially
// clamped to max_abs.
cxd apply_action_cat(cxd alpha, int action, double beta, double max_abs = 3.0);

struct DisplacementParams {
  double r = 0.0;    // [0, 3]
  double psi = 0.0;  // [0, 2 pi), wraps
};

// Four sign pairs: 0:(+dr,+dpsi) 1:(+dr,-dpsi) 2:(-dr,+dpsi) 3:(-dr,-dpsi).
DisplacementParams apply_action_displacement(const DisplacementParams& p,
                                             int action, double dr = 0.09,
                                             double dpsi = 0.06 * kPi);

// <m|D(alpha)|n> in the truncated space (Laguerre form).
MatrixXcd displacement_matrix(cxd alpha, int cutoff);

struct WignerGrid {
  int nx = 101, np = 101;
  double xmin = -5.0, xmax = 5.0, pmin = -5.0, pmax = 5.0;
};

// W(x, p) on the grid, entry (ix, ip). Normalized so the full-plane
// integral is 1.
MatrixXd wigner_function(const FockState& psi, const WignerGrid& grid);

// Orthonormal Hermite functions phi_n(x) for the variance-1/4 convention,
// n = 0..n_max-1, evaluated by stable recurrence. Exposed for tests.
VectorXd hermite_functions(int n_max, double x);

}  // namespace qsteer::cv
