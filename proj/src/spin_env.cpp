#include "qsteer/spin_env.hpp"

#include <algorithm>
#include <cmath>

namespace qsteer::spin {

namespace {

using Triplet = qc::SparseHermitian::Triplet;

int bit_at(long n, int n_qubits, int q) {
  return static_cast<int>((n >> (n_qubits - 1 - q)) & 1L);
}

long flip2(long n, int n_qubits, int q1, int q2) {
  return n ^ (1L << (n_qubits - 1 - q1)) ^ (1L << (n_qubits - 1 - q2));
}

// Single-qubit basis change making a Pauli measurement computational:
// X -> Hadamard, Y -> H S^dag, Z -> identity.
void rotate_to_z(VectorXcd& amps, int n_qubits, int q, qc::Pauli p) {
  if (p == qc::Pauli::Z) return;
  const double s = 1.0 / std::sqrt(2.0);
  cxd u00(s, 0), u01(s, 0), u10(s, 0), u11(-s, 0);
  if (p == qc::Pauli::Y) {
    u01 = cxd(0, -s);  // H * diag(1, -i)
    u11 = cxd(0, s);
  }
  const long hi = 1L << (n_qubits - 1 - q);
  const long dim = amps.size();
  for (long n = 0; n < dim; ++n) {
    if (n & hi) continue;
    const cxd a0 = amps[n], a1 = amps[n | hi];
    amps[n] = u00 * a0 + u01 * a1;
    amps[n | hi] = u10 * a0 + u11 * a1;
  }
}

}  // namespace

qc::SparseHermitian build_xxz_hamiltonian(const XxzParams& p) {
  require(p.n_qubits >= 4 && p.n_qubits % 2 == 0 && p.n_qubits <= 14,
          "xxz chain length must be even, 4..14");
  require(p.j_ratio >= -1e-12 && p.j_ratio <= kXxzMaxJ + 1e-12,
          "j_ratio outside [0, 3]");
  require(p.delta >= -1e-12 && p.delta <= kXxzMaxD + 1e-12,
          "delta outside [0, 4]");
  const int L = p.n_qubits;
  const long dim = 1L << L;
  std::vector<Triplet> t;
  t.reserve(dim * (L / 2));
  for (long n = 0; n < dim; ++n) {
    double diag = 0.0;
    for (int b = 0; b < L - 1; ++b) {
      const double c = (b % 2 == 0) ? p.j_ratio : 1.0;
      const int za = bit_at(n, L, b), zb = bit_at(n, L, b + 1);
      diag += c * p.delta * (za == zb ? 1.0 : -1.0);
      if (za != zb)  // XX+YY maps |01> <-> |10> with weight 2
        t.emplace_back(flip2(n, L, b, b + 1), n, cxd(2.0 * c, 0.0));
    }
    if (diag != 0.0) t.emplace_back(n, n, cxd(diag, 0.0));
  }
  return qc::SparseHermitian(dim, t);
}

qc::SparseHermitian build_ising_hamiltonian(const IsingParams& p) {
  const int L = p.n_qubits;
  require(L >= 2 && L <= 14, "ising chain length must be 2..14");
  require(static_cast<int>(p.couplings.size()) == L - 1,
          "need n_qubits - 1 couplings");
  for (double j : p.couplings)
    require(std::abs(j) < 1.0 + 1e-12, "couplings must lie in (-1, 1)");
  const long dim = 1L << L;
  std::vector<Triplet> t;
  t.reserve(dim * (L + 1));
  for (long n = 0; n < dim; ++n) {
    double diag = 0.0;
    for (int b = 0; b < L - 1; ++b) {
      const int za = bit_at(n, L, b), zb = bit_at(n, L, b + 1);
      diag -= p.couplings[b] * (za == zb ? 1.0 : -1.0);
    }
    if (diag != 0.0) t.emplace_back(n, n, cxd(diag, 0.0));
    for (int q = 0; q < L; ++q)
      t.emplace_back(n ^ (1L << (L - 1 - q)), n, cxd(-1.0, 0.0));
  }
  return qc::SparseHermitian(dim, t);
}

qc::GroundStateResult ground_state_tiebroken(const qc::SparseHermitian& h,
                                             int n_qubits,
                                             std::uint64_t seed) {
  require((1L << n_qubits) == h.dim(), "qubit count does not match operator");
  std::vector<Triplet> t;
  const auto& m = h.matrix();
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<cxd>::InnerIterator it(m, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  const double field = 1e-6;
  for (long n = 0; n < h.dim(); ++n) {
    const int pop = static_cast<int>(__builtin_popcountll(n));
    const double total_z = n_qubits - 2.0 * pop;
    t.emplace_back(n, n, cxd(-field * total_z, 0.0));
  }
  return qc::lanczos_ground_state(qc::SparseHermitian(h.dim(), t), seed);
}

OutcomeDistribution pauli_marginal_statistics(const qc::QuantumState& psi,
                                              int n_qubits,
                                              const PauliWindow& w) {
  require((1L << n_qubits) == psi.dim(), "qubit count does not match state");
  require(w.position >= 0 && w.position + 2 < n_qubits,
          "window does not fit the chain");
  VectorXcd amps = psi.amps();
  for (int k = 0; k < 3; ++k)
    rotate_to_z(amps, n_qubits, w.position + k, w.paulis[k]);
  OutcomeDistribution probs = OutcomeDistribution::Zero(8);
  const long dim = amps.size();
  for (long n = 0; n < dim; ++n) {
    const int o = bit_at(n, n_qubits, w.position) * 4 +
                  bit_at(n, n_qubits, w.position + 1) * 2 +
                  bit_at(n, n_qubits, w.position + 2);
    probs[o] += std::norm(amps[n]);
  }
  return probs;
}

std::vector<PauliWindow> sample_pauli_measurement_set(int n_qubits, int count,
                                                      std::uint64_t seed) {
  require(n_qubits >= 3, "need at least 3 qubits");
  const int total = (n_qubits - 2) * 27;
  require(count >= 1 && count <= total,
          "measurement count exceeds the number of distinct windows");
  std::vector<int> ids(total);
  for (int i = 0; i < total; ++i) ids[i] = i;
  Rng rng(derive_seed(seed, 0x7061756cULL));
  rng.shuffle(ids);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  std::vector<PauliWindow> out;
  out.reserve(count);
  for (int id : ids) {
    PauliWindow w;
    w.position = id / 27;
    int code = id % 27;  // base-3 digits, leftmost qubit most significant
    w.paulis = {static_cast<qc::Pauli>(code / 9),
                static_cast<qc::Pauli>((code / 3) % 3),
                static_cast<qc::Pauli>(code % 3)};
    out.push_back(w);
  }
  return out;
}

OutcomeDistribution full_basis_statistics(const qc::QuantumState& psi,
                                          const std::vector<qc::Pauli>& basis) {
  const int L = static_cast<int>(basis.size());
  require((1L << L) == psi.dim(), "basis length does not match state");
  VectorXcd amps = psi.amps();
  for (int q = 0; q < L; ++q) rotate_to_z(amps, L, q, basis[q]);
  return amps.array().abs2();
}

std::vector<qc::Pauli> sample_full_basis(int n_qubits, Rng& rng) {
  std::vector<qc::Pauli> basis(n_qubits);
  for (int q = 0; q < n_qubits; ++q)
    basis[q] = static_cast<qc::Pauli>(rng.uniform_int(3));
  return basis;
}

XxzParams apply_action_xxz(const XxzParams& p, int action) {
  require(action >= 0 && action < 8, "xxz action index out of range");
  static constexpr int kMoves[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                       {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  const double nj = p.j_ratio + kMoves[action][0] * kXxzStepJ;
  const double nd = p.delta + kMoves[action][1] * kXxzStepD;
  const long kj = std::clamp<long>(std::lround(nj / kXxzStepJ), 0, kXxzGridMax);
  const long kd = std::clamp<long>(std::lround(nd / kXxzStepD), 0, kXxzGridMax);
  XxzParams out = p;
  out.j_ratio = kj * kXxzStepJ;
  out.delta = kd * kXxzStepD;
  return out;
}

double ising_clamp_bound(double step) {
  require(step > 0.0 && step < 1.0, "ising action step must be in (0, 1)");
  return std::floor((1.0 - 1e-9) / step) * step;
}

IsingParams apply_action_ising(const IsingParams& p,
                               const std::vector<int>& moves, double step) {
  require(moves.size() == p.couplings.size(),
          "need one move per coupling");
  const double bound = ising_clamp_bound(step);
  IsingParams out = p;
  for (std::size_t i = 0; i < moves.size(); ++i) {
    require(moves[i] >= -1 && moves[i] <= 1, "ising move must be -1, 0 or +1");
    out.couplings[i] =
        std::clamp(p.couplings[i] + moves[i] * step, -bound, bound);
  }
  return out;
}

}  // namespace qsteer::spin
