#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "qsteer/common.hpp"

// Exact linear-algebra layer for small quantum systems.
//
// Basis convention, used everywhere downstream: subsystem 0 is the most
// significant digit. For qubits, basis index n enumerates bit strings with
// qubit 0 as the leftmost bit, so |01> on two qubits is index 1.

namespace qsteer::qc {

// Pure state; amplitudes normalized to unit 2-norm.
class QuantumState {
 public:
  // Validates ||amps|| == 1 within 1e-10.
  explicit QuantumState(VectorXcd amps);

  // Normalizes amps (throws ValidationError on the zero vector).
  static QuantumState normalized(VectorXcd amps);

  const VectorXcd& amps() const { return amps_; }
  Eigen::Index dim() const { return amps_.size(); }

 private:
  VectorXcd amps_;
};

// Hermitian operator in sparse triplet form; hermiticity checked at build
// time (max |A - A^dag| entry <= 1e-12 * max |A| entry).
class SparseHermitian {
 public:
  using Triplet = Eigen::Triplet<cxd>;

  SparseHermitian(Eigen::Index dim, const std::vector<Triplet>& entries);

  Eigen::Index dim() const { return mat_.rows(); }
  VectorXcd apply(const VectorXcd& v) const { return mat_ * v; }
  const Eigen::SparseMatrix<cxd>& matrix() const { return mat_; }
  MatrixXcd dense() const { return MatrixXcd(mat_); }

 private:
  Eigen::SparseMatrix<cxd> mat_;
};

struct GroundStateResult {
  QuantumState state;
  double energy;
  double residual;    // ||H x - E x||
  int iterations;     // 0 for the dense path
};

// Lowest eigenpair. Dense solve for dim <= 64; otherwise Lanczos with full
// reorthogonalization from a seeded random start vector. Postcondition:
// residual <= tol * spectral_scale(H). Throws ConvergenceError if max_iter
// Lanczos steps cannot reach tol.
GroundStateResult lanczos_ground_state(const SparseHermitian& h,
                                       std::uint64_t seed,
                                       double tol = 1e-10,
                                       int max_iter = 400);

// |<a|b>|^2. Dimensions must match.
double fidelity(const QuantumState& a, const QuantumState& b);

// Fidelity <psi|rho|psi> between a pure state and a density matrix.
double fidelity(const QuantumState& psi, const MatrixXcd& rho);

// Reduced density matrix over `keep` (ascending subsystem indices), tracing
// out the rest. local_dims[i] is the dimension of subsystem i; the product
// must equal the state dimension.
MatrixXcd partial_trace(const QuantumState& psi,
                        const std::vector<int>& local_dims,
                        const std::vector<int>& keep);

// Order-2 Renyi entropy, base 2: -log2 tr(rho^2). Clamped at 0 so pure
// states do not go negative by rounding.
double renyi2_entropy(const MatrixXcd& rho);

// S2(A) + S2(B) - S2(AB) for disjoint subsystem index sets A and B.
double renyi2_mutual_info(const QuantumState& psi,
                          const std::vector<int>& local_dims,
                          const std::vector<int>& sub_a,
                          const std::vector<int>& sub_b);

enum class Pauli : int { X = 0, Y = 1, Z = 2 };

// Tensor product of single-qubit Paulis at the given qubit positions
// (identity elsewhere) on an n_qubit register. Positions must be distinct
// and in range.
SparseHermitian pauli_string_operator(int n_qubits,
                                      const std::vector<int>& positions,
                                      const std::vector<Pauli>& paulis);

}  // namespace qsteer::qc
