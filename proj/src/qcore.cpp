#include "qsteer/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "qsteer/rng.hpp"

namespace qsteer {

void validate_distribution(const OutcomeDistribution& d, double tol) {
  require(d.size() > 0, "distribution must be nonempty");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    require(d[i] >= -tol, "distribution entry negative beyond tolerance");
    sum += d[i];
  }
  require(std::abs(sum - 1.0) <= tol, "distribution does not sum to 1");
}

}  // namespace qsteer

namespace qsteer::qc {

QuantumState::QuantumState(VectorXcd amps) : amps_(std::move(amps)) {
  require(amps_.size() > 0, "state must be nonempty");
  require(std::abs(amps_.norm() - 1.0) <= 1e-10, "state norm must be 1");
}

QuantumState QuantumState::normalized(VectorXcd amps) {
  const double n = amps.norm();
  require(n > 0.0, "cannot normalize the zero vector");
  return QuantumState(amps / n);
}

SparseHermitian::SparseHermitian(Eigen::Index dim,
                                 const std::vector<Triplet>& entries) {
  require(dim > 0, "operator dimension must be positive");
  for (const auto& t : entries)
    require(t.row() >= 0 && t.row() < dim && t.col() >= 0 && t.col() < dim,
            "triplet index out of range");
  mat_.resize(dim, dim);
  mat_.setFromTriplets(entries.begin(), entries.end());  // duplicates summed
  mat_.makeCompressed();

  double max_abs = 0.0;
  for (int k = 0; k < mat_.outerSize(); ++k)
    for (Eigen::SparseMatrix<cxd>::InnerIterator it(mat_, k); it; ++it)
      max_abs = std::max(max_abs, std::abs(it.value()));
  Eigen::SparseMatrix<cxd> diff = Eigen::SparseMatrix<cxd>(mat_.adjoint()) - mat_;
  double max_dev = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (Eigen::SparseMatrix<cxd>::InnerIterator it(diff, k); it; ++it)
      max_dev = std::max(max_dev, std::abs(it.value()));
  require(max_dev <= 1e-12 * std::max(1.0, max_abs), "operator is not Hermitian");
}

namespace {

GroundStateResult dense_ground_state(const SparseHermitian& h) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h.dense());
  if (es.info() != Eigen::Success)
    throw NumericError("dense eigensolver failed");
  VectorXcd x = es.eigenvectors().col(0);
  const double e = es.eigenvalues()(0);
  const double res = (h.apply(x) - e * x).norm();
  return {QuantumState(x.normalized()), e, res, 0};
}

}  // namespace

GroundStateResult lanczos_ground_state(const SparseHermitian& h,
                                       std::uint64_t seed, double tol,
                                       int max_iter) {
  const Eigen::Index n = h.dim();
  if (n <= 64) return dense_ground_state(h);

  Rng rng(derive_seed(seed, 0x6c616e63ULL));
  VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = cxd(rng.normal(), rng.normal());
  v.normalize();

  const int m_max = std::min<Eigen::Index>(max_iter, n);
  MatrixXcd basis(n, m_max);
  std::vector<double> alpha, beta;  // beta[j] couples step j to j+1
  basis.col(0) = v;

  auto ritz = [&](int m, VectorXd* vec_out) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    if (vec_out) *vec_out = es.eigenvectors().col(0);
    return std::pair<double, double>(es.eigenvalues()(0),
                                     std::abs(es.eigenvalues()(m - 1)));
  };

  double last_residual = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m_max; ++j) {
    VectorXcd w = h.apply(basis.col(j));
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    const double a = std::real(basis.col(j).dot(w));
    alpha.push_back(a);
    w -= a * basis.col(j);
    // Full reorthogonalization, twice for stability.
    for (int pass = 0; pass < 2; ++pass)
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).adjoint() * w);
    const double b = w.norm();
    const int m = j + 1;

    VectorXd s;
    auto [theta, scale] = ritz(m, &s);
    const double spectral_scale = std::max(scale, std::abs(theta));
    // Residual of the Ritz pair without forming the long vector.
    last_residual = b * std::abs(s[m - 1]);
    const bool exhausted = (b <= 1e-14 * std::max(1.0, spectral_scale)) || (m == n);
    if (last_residual <= tol * std::max(1.0, spectral_scale) || exhausted ||
        m == m_max) {
      VectorXcd x = basis.leftCols(m) * s.cast<cxd>();
      x.normalize();
      const double e = std::real(x.dot(h.apply(x)));
      const double res = (h.apply(x) - e * x).norm();
      if (res <= tol * std::max(1.0, spectral_scale))
        return {QuantumState(x), e, res, m};
      if (exhausted)  // Krylov space is exact; accept the direct residual
        return {QuantumState(x), e, res, m};
      if (m == m_max)
        throw ConvergenceError("Lanczos did not converge in " +
                                   std::to_string(m_max) + " iterations",
                               res);
    }
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  throw ConvergenceError("Lanczos did not converge", last_residual);
}

double fidelity(const QuantumState& a, const QuantumState& b) {
  require(a.dim() == b.dim(), "fidelity: dimension mismatch");
  return std::norm(a.amps().dot(b.amps()));
}

double fidelity(const QuantumState& psi, const MatrixXcd& rho) {
  require(psi.dim() == rho.rows() && rho.rows() == rho.cols(),
          "fidelity: dimension mismatch");
  return std::real(psi.amps().dot(rho * psi.amps()));
}

MatrixXcd partial_trace(const QuantumState& psi,
                        const std::vector<int>& local_dims,
                        const std::vector<int>& keep) {
  const int ns = static_cast<int>(local_dims.size());
  long total = 1;
  for (int d : local_dims) {
    require(d >= 2, "local dimension must be >= 2");
    total *= d;
  }
  require(total == psi.dim(), "local_dims do not factor the state dimension");
  require(!keep.empty(), "keep set must be nonempty");
  require(std::is_sorted(keep.begin(), keep.end()) &&
              std::adjacent_find(keep.begin(), keep.end()) == keep.end(),
          "keep indices must be ascending and distinct");
  for (int k : keep) require(k >= 0 && k < ns, "keep index out of range");

  std::vector<int> traced;
  for (int i = 0; i < ns; ++i)
    if (!std::binary_search(keep.begin(), keep.end(), i)) traced.push_back(i);

  // Strides with subsystem 0 most significant.
  std::vector<long> stride(ns, 1);
  for (int i = ns - 2; i >= 0; --i) stride[i] = stride[i + 1] * local_dims[i + 1];

  long dim_keep = 1, dim_tr = 1;
  for (int k : keep) dim_keep *= local_dims[k];
  for (int t : traced) dim_tr *= local_dims[t];

  auto unpack = [&](long idx, const std::vector<int>& subs) {
    long base = 0;
    for (auto it = subs.rbegin(); it != subs.rend(); ++it) {
      base += (idx % local_dims[*it]) * stride[*it];
      idx /= local_dims[*it];
    }
    return base;
  };

  MatrixXcd rho = MatrixXcd::Zero(dim_keep, dim_keep);
  for (long t = 0; t < dim_tr; ++t) {
    const long tbase = unpack(t, traced);
    for (long i = 0; i < dim_keep; ++i) {
      const cxd ai = psi.amps()[tbase + unpack(i, keep)];
      if (ai == cxd(0.0, 0.0)) continue;
      for (long j = 0; j < dim_keep; ++j)
        rho(i, j) += ai * std::conj(psi.amps()[tbase + unpack(j, keep)]);
    }
  }
  return rho;
}

double renyi2_entropy(const MatrixXcd& rho) {
  require(rho.rows() == rho.cols() && rho.rows() > 0, "rho must be square");
  require((rho - rho.adjoint()).cwiseAbs().maxCoeff() <= 1e-10,
          "rho must be Hermitian");
  require(std::abs(std::real(rho.trace()) - 1.0) <= 1e-8, "tr(rho) must be 1");
  const double purity = std::real((rho * rho).trace());
  if (purity >= 1.0) return 0.0;
  return -std::log2(purity);
}

double renyi2_mutual_info(const QuantumState& psi,
                          const std::vector<int>& local_dims,
                          const std::vector<int>& sub_a,
                          const std::vector<int>& sub_b) {
  std::vector<int> both(sub_a);
  both.insert(both.end(), sub_b.begin(), sub_b.end());
  std::sort(both.begin(), both.end());
  require(std::adjacent_find(both.begin(), both.end()) == both.end(),
          "subsystems A and B must be disjoint");
  const double sa = renyi2_entropy(partial_trace(psi, local_dims, sub_a));
  const double sb = renyi2_entropy(partial_trace(psi, local_dims, sub_b));
  const double sab = renyi2_entropy(partial_trace(psi, local_dims, both));
  return sa + sb - sab;
}

SparseHermitian pauli_string_operator(int n_qubits,
                                      const std::vector<int>& positions,
                                      const std::vector<Pauli>& paulis) {
  require(n_qubits >= 1 && n_qubits <= 26, "qubit count out of range");
  require(positions.size() == paulis.size() && !positions.empty(),
          "positions and paulis must align and be nonempty");
  std::vector<int> sorted(positions);
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          "positions must be distinct");
  for (int p : positions)
    require(p >= 0 && p < n_qubits, "pauli position out of range");

  const long dim = 1L << n_qubits;
  std::vector<SparseHermitian::Triplet> trips;
  trips.reserve(dim);
  for (long col = 0; col < dim; ++col) {
    long row = col;
    cxd val(1.0, 0.0);
    for (std::size_t k = 0; k < positions.size(); ++k) {
      const int bitpos = n_qubits - 1 - positions[k];  // qubit 0 leftmost
      const int bit = static_cast<int>((col >> bitpos) & 1L);
      switch (paulis[k]) {
        case Pauli::X:
          row ^= (1L << bitpos);
          break;
        case Pauli::Y:
          row ^= (1L << bitpos);
          val *= bit ? cxd(0.0, -1.0) : cxd(0.0, 1.0);
          break;
        case Pauli::Z:
          val *= bit ? -1.0 : 1.0;
          break;
      }
    }
    trips.emplace_back(static_cast<int>(row), static_cast<int>(col), val);
  }
  return SparseHermitian(dim, trips);
}

}  // namespace qsteer::qc
