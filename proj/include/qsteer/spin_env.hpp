#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qsteer/qcore.hpp"
#include "qsteer/rng.hpp"

// Spin-chain systems and their measurement statistics.
//
// Bond-alternating XXZ chain, open boundary, qubit 0 leftmost:
//   H = sum_bonds c_b (XX + YY + delta ZZ),  c_b = j_ratio on even bonds
//   (0,1),(2,3),... and 1 on odd bonds (1,2),(3,4),...
// Transverse-field Ising chain with site-dependent couplings:
//   H = -sum_i J_i Z_i Z_{i+1} - sum_j X_j

namespace qsteer::spin {

inline constexpr double kXxzStepJ = 0.15;   // grid spacing in j_ratio
inline constexpr double kXxzStepD = 0.20;   // grid spacing in delta
inline constexpr int kXxzGridMax = 20;      // node indices run 0..20
inline constexpr double kXxzMaxJ = 3.0;
inline constexpr double kXxzMaxD = 4.0;

struct XxzParams {
  int n_qubits = 8;      // even, >= 4
  double j_ratio = 1.0;  // [0, 3], snaps to the 21-node grid under actions
  double delta = 1.0;    // [0, 4]
};

struct IsingParams {
  int n_qubits = 6;
  std::vector<double> couplings;  // length n_qubits - 1, each in (-1, 1)
};

qc::SparseHermitian build_xxz_hamiltonian(const XxzParams& p);
qc::SparseHermitian build_ising_hamiltonian(const IsingParams& p);

// Ground state of h plus a uniform tie-break field -1e-6 * sum_i Z_i, so
// degenerate ground spaces that differ in magnetization resolve the same way
// every run. The field commutes with both builders' Hamiltonians.
qc::GroundStateResult ground_state_tiebroken(const qc::SparseHermitian& h,
                                             int n_qubits, std::uint64_t seed);

// Three consecutive single-qubit Paulis measured jointly at qubits
// [position, position+2].
struct PauliWindow {
  int position = 0;
  std::array<qc::Pauli, 3> paulis{qc::Pauli::Z, qc::Pauli::Z, qc::Pauli::Z};
};

// Joint outcome probabilities, 8 entries. Outcome bit 0 means eigenvalue +1;
// index = o0*4 + o1*2 + o2 with o0 the leftmost window qubit.
OutcomeDistribution pauli_marginal_statistics(const qc::QuantumState& psi,
                                              int n_qubits,
                                              const PauliWindow& w);

// `count` distinct windows drawn without replacement from the
// (n_qubits-2)*27 possibilities; deterministic in seed, sorted by
// (position, pauli triple).
std::vector<PauliWindow> sample_pauli_measurement_set(int n_qubits, int count,
                                                      std::uint64_t seed);

// One Pauli per qubit measured jointly; 2^L outcomes indexed with qubit 0 as
// the most significant bit, bit 0 = eigenvalue +1.
OutcomeDistribution full_basis_statistics(const qc::QuantumState& psi,
                                          const std::vector<qc::Pauli>& basis);

std::vector<qc::Pauli> sample_full_basis(int n_qubits, Rng& rng);

// Action index -> (dj, dd) over the 3x3 stencil without the center, row-major
// in dj then dd: 0:(-1,-1) 1:(-1,0) 2:(-1,+1) 3:(0,-1) 4:(0,+1) 5:(+1,-1)
// 6:(+1,0) 7:(+1,+1). Moves are one grid step; the result snaps to the
// nearest grid node and clamps to [0,3]x[0,4].
XxzParams apply_action_xxz(const XxzParams& p, int action);

// moves[i] in {-1, 0, +1} shifts coupling i by moves[i]*step, clamped to the
// largest step multiple strictly inside (-1, 1).
IsingParams apply_action_ising(const IsingParams& p,
                               const std::vector<int>& moves, double step);

double ising_clamp_bound(double step);

}  // namespace qsteer::spin
