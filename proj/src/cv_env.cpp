#include "qsteer/cv_env.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace qsteer::cv {

namespace {

// 16-point Gauss-Legendre rule on [-1, 1] (positive half; nodes are +-x).
constexpr int kGlHalf = 8;
constexpr double kGlNode[kGlHalf] = {
    0.09501250983763744, 0.28160355077925891, 0.45801677765722739,
    0.61787624440264375, 0.75540440835500303, 0.86563120238783174,
    0.94457502307323258, 0.98940093499164993};
constexpr double kGlWeight[kGlHalf] = {
    0.18945061045506850, 0.18260341504492359, 0.16915651939500254,
    0.14959598881657673, 0.12462897125553387, 0.09515851168249278,
    0.06225352393864789, 0.02715245941175409};

void append_gl_points(double a, double b, int bin, std::vector<double>& xs,
                      std::vector<double>& ws, std::vector<int>& bins) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < kGlHalf; ++i) {
    xs.push_back(mid - half * kGlNode[i]);
    ws.push_back(half * kGlWeight[i]);
    bins.push_back(bin);
    xs.push_back(mid + half * kGlNode[i]);
    ws.push_back(half * kGlWeight[i]);
    bins.push_back(bin);
  }
}

// Truncated coherent amplitudes without final normalization.
VectorXcd coherent_amplitudes(cxd alpha, int cutoff) {
  const double t = std::norm(alpha);
  VectorXcd c(cutoff);
  cxd term = std::exp(-0.5 * t);
  for (int n = 0; n < cutoff; ++n) {
    c[n] = term;
    term *= alpha / std::sqrt(double(n + 1));
  }
  return c;
}

void check_truncation_health(const VectorXcd& amps, cxd alpha, int cutoff) {
  if (cutoff < 1) throw ValidationError("cutoff must be positive");
  const double needed = 4.0 * std::norm(alpha) + 20.0;
  if (double(cutoff) < needed)
    throw ValidationError("cutoff too small for |alpha|: need >= 4|a|^2+20");
  double tail = 0.0;
  for (int n = std::max(0, cutoff - 5); n < cutoff; ++n)
    tail += std::norm(amps[n]);
  if (tail > 1e-8)
    throw NumericError("truncated state carries too much top-level weight");
}

}  // namespace

FockState coherent_state(cxd alpha, int cutoff) {
  VectorXcd c = coherent_amplitudes(alpha, cutoff);
  check_truncation_health(c, alpha, cutoff);
  return qc::QuantumState::normalized(c);
}

FockState cat_state(cxd alpha, int cutoff) {
  VectorXcd c = coherent_amplitudes(alpha, cutoff);
  check_truncation_health(c, alpha, cutoff);
  for (int n = 1; n < cutoff; n += 2) c[n] = 0.0;
  return qc::QuantumState::normalized(c);
}

qc::SparseHermitian kerr_hamiltonian(cxd alpha, int cutoff) {
  if (cutoff < 3) throw ValidationError("kerr_hamiltonian needs cutoff >= 3");
  const cxd a2 = alpha * alpha;
  std::vector<qc::SparseHermitian::Triplet> t;
  for (int n = 0; n < cutoff; ++n)
    t.emplace_back(n, n, cxd(-double(n) * double(n - 1), 0.0));
  for (int n = 0; n + 2 < cutoff; ++n) {
    const double amp = std::sqrt(double(n + 1) * double(n + 2));
    t.emplace_back(n + 2, n, a2 * amp);
    t.emplace_back(n, n + 2, std::conj(a2) * amp);
  }
  return qc::SparseHermitian(cutoff, t);
}

FockState kerr_gate(const FockState& psi) {
  VectorXcd c = psi.amps();
  for (int n = 0; n < c.size(); ++n) {
    const double phase = -double(n) * double(n - 1);
    c[n] *= cxd(std::cos(phase), std::sin(phase));
  }
  return qc::QuantumState(c);
}

FockState displaced_vacuum(double r, double psi, int cutoff) {
  if (r < 0.0) throw ValidationError("displacement radius must be >= 0");
  return coherent_state(r * cxd(std::cos(psi), std::sin(psi)), cutoff);
}

VectorXd hermite_functions(int n_max, double x) {
  require(n_max >= 1, "hermite_functions needs n_max >= 1");
  const double u = std::sqrt(2.0) * x;
  const double scale = std::pow(2.0, 0.25);  // phi_n(x) = 2^{1/4} psi_n(u)
  VectorXd phi(n_max);
  double prev = 0.0;
  double cur = std::pow(kPi, -0.25) * std::exp(-0.5 * u * u);
  phi[0] = scale * cur;
  for (int n = 0; n + 1 < n_max; ++n) {
    const double next = std::sqrt(2.0 / (n + 1)) * u * cur -
                        std::sqrt(double(n) / (n + 1)) * prev;
    prev = cur;
    cur = next;
    phi[n + 1] = scale * cur;
  }
  return phi;
}

HomodyneWorkspace::HomodyneWorkspace(int cutoff, const HomodyneSpec& geometry)
    : cutoff_(cutoff), geom_(geometry) {
  if (cutoff < 1) throw ValidationError("cutoff must be positive");
  if (geom_.bins < 2) throw ValidationError("need at least two bins");
  if (!(geom_.xmax > geom_.xmin)) throw ValidationError("empty bin range");

  std::vector<double> xs, ws;
  std::vector<int> bins;
  const double width = (geom_.xmax - geom_.xmin) / geom_.bins;
  for (int b = 0; b < geom_.bins; ++b)
    append_gl_points(geom_.xmin + b * width, geom_.xmin + (b + 1) * width, b,
                     xs, ws, bins);

  // Edge bins also collect the mass outside [xmin, xmax], integrated out to
  // past the classical turning point of the highest Fock state.
  const double reach =
      std::max({std::abs(geom_.xmin), std::abs(geom_.xmax),
                std::sqrt(cutoff + 0.5) + 2.5});
  auto add_tail = [&](double from, double to, int bin) {
    const int n_seg = std::max(1, int(std::ceil((to - from) / 0.35)));
    for (int s = 0; s < n_seg; ++s)
      append_gl_points(from + (to - from) * s / n_seg,
                       from + (to - from) * (s + 1) / n_seg, bin, xs, ws, bins);
  };
  add_tail(-reach, geom_.xmin, 0);
  add_tail(geom_.xmax, reach, geom_.bins - 1);

  const int n_pts = int(xs.size());
  phi_.resize(cutoff, n_pts);
  weight_.resize(n_pts);
  bin_of_ = std::move(bins);
  for (int p = 0; p < n_pts; ++p) {
    phi_.col(p) = hermite_functions(cutoff, xs[p]);
    weight_[p] = ws[p];
  }
}

OutcomeDistribution HomodyneWorkspace::bin_probabilities(
    const VectorXcd& rotated_amps) const {
  require(rotated_amps.size() == cutoff_, "amplitude/cutoff mismatch");
  const VectorXd re = phi_.transpose() * rotated_amps.real();
  const VectorXd im = phi_.transpose() * rotated_amps.imag();
  OutcomeDistribution p = OutcomeDistribution::Zero(geom_.bins);
  for (int i = 0; i < re.size(); ++i)
    p[bin_of_[i]] += weight_[i] * (re[i] * re[i] + im[i] * im[i]);
  const double total = p.sum();
  if (std::abs(total - 1.0) > 1e-8)
    throw NumericError("homodyne quadrature lost probability mass");
  return p / total;
}

OutcomeDistribution homodyne_distribution(const FockState& psi,
                                          const HomodyneSpec& spec,
                                          const HomodyneWorkspace& ws) {
  if (ws.cutoff() != psi.dim())
    throw ValidationError("workspace cutoff does not match state");
  const HomodyneSpec& g = ws.geometry();
  if (g.bins != spec.bins || g.xmin != spec.xmin || g.xmax != spec.xmax)
    throw ValidationError("workspace geometry does not match spec");
  VectorXcd c = psi.amps();
  for (int n = 0; n < c.size(); ++n) {
    const double ph = -double(n) * spec.theta;
    c[n] *= cxd(std::cos(ph), std::sin(ph));
  }
  return ws.bin_probabilities(c);
}

OutcomeDistribution homodyne_distribution(const FockState& psi,
                                          const HomodyneSpec& spec) {
  return homodyne_distribution(psi, spec, HomodyneWorkspace(psi.dim(), spec));
}

OutcomeDistribution add_measurement_noise(const OutcomeDistribution& d,
                                          double sigma2, Rng& rng) {
  validate_distribution(d);
  if (sigma2 < 0.0) throw ValidationError("noise variance must be >= 0");
  if (sigma2 == 0.0) return d;
  const double sigma = std::sqrt(sigma2);
  OutcomeDistribution out = d;
  for (int i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
  out = out.cwiseMax(0.0);
  const double total = out.sum();
  if (total <= 0.0)
    throw NumericError("measurement noise clipped all probability mass");
  return out / total;
}

OutcomeDistribution multinomial_sample(const OutcomeDistribution& d,
                                       long shots, Rng& rng) {
  validate_distribution(d);
  if (shots < 1) throw ValidationError("need at least one shot");
  VectorXd counts = VectorXd::Zero(d.size());
  for (long s = 0; s < shots; ++s) counts[rng.categorical(d)] += 1.0;
  OutcomeDistribution freq = counts / double(shots);
  // Float division can leave the sum a few ulps off 1; push the residual
  // into the largest bin so downstream validation sees an exact unit sum.
  int imax = 0;
  freq.maxCoeff(&imax);
  freq[imax] += 1.0 - freq.sum();
  return freq;
}

cxd apply_action_cat(cxd alpha, int action, double beta, double max_abs) {
  static constexpr int kMove[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                      {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  if (action < 0 || action >= 8) throw ValidationError("cat action in [0,8)");
  if (beta <= 0.0) throw ValidationError("step size must be positive");
  cxd next = alpha + beta * cxd(kMove[action][0], kMove[action][1]);
  const double mag = std::abs(next);
  if (mag > max_abs) next *= max_abs / mag;
  return next;
}

DisplacementParams apply_action_displacement(const DisplacementParams& p,
                                             int action, double dr,
                                             double dpsi) {
  if (action < 0 || action >= 4)
    throw ValidationError("displacement action in [0,4)");
  const double r_step = (action < 2) ? dr : -dr;
  const double psi_step = (action % 2 == 0) ? dpsi : -dpsi;
  DisplacementParams next;
  next.r = std::clamp(p.r + r_step, 0.0, 3.0);
  next.psi = std::fmod(p.psi + psi_step, 2.0 * kPi);
  if (next.psi < 0.0) next.psi += 2.0 * kPi;
  if (next.psi >= 2.0 * kPi) next.psi = 0.0;
  return next;
}

MatrixXcd displacement_matrix(cxd alpha, int cutoff) {
  if (cutoff < 1) throw ValidationError("cutoff must be positive");
  MatrixXcd d(cutoff, cutoff);
  if (alpha == cxd(0.0, 0.0)) {
    d.setIdentity();
    return d;
  }
  const double t = std::norm(alpha);
  // lag(k, j) = L_j^{(k)}(t) by the three-term recurrence in j.
  MatrixXd lag(cutoff, cutoff);
  for (int k = 0; k < cutoff; ++k) {
    lag(k, 0) = 1.0;
    if (cutoff > 1) lag(k, 1) = 1.0 + k - t;
    for (int j = 1; j + 1 < cutoff; ++j)
      lag(k, j + 1) =
          ((2.0 * j + k + 1.0 - t) * lag(k, j) - (j + k) * lag(k, j - 1)) /
          (j + 1.0);
  }
  const double pref = std::exp(-0.5 * t);
  for (int n = 0; n < cutoff; ++n) {
    cxd up = pref;  // alpha^{m-n} sqrt(n!/m!) e^{-t/2} at m = n
    for (int m = n; m < cutoff; ++m) {
      d(m, n) = up * lag(m - n, n);
      up *= alpha / std::sqrt(double(m + 1));
    }
    cxd down = pref;
    for (int m = n - 1; m >= 0; --m) {
      down *= -std::conj(alpha) / std::sqrt(double(m + 1));
      d(m, n) = down * lag(n - m, m);
    }
  }
  return d;
}

MatrixXd wigner_function(const FockState& psi, const WignerGrid& grid) {
  if (grid.nx < 2 || grid.np < 2) throw ValidationError("wigner grid too small");
  if (!(grid.xmax > grid.xmin) || !(grid.pmax > grid.pmin))
    throw ValidationError("empty wigner grid range");
  const int n = int(psi.dim());
  const VectorXcd& c = psi.amps();
  MatrixXd w(grid.nx, grid.np);
  // W(beta) = (2/pi) tr[rho D(beta) Pi D(-beta)] with D(beta) Pi D(-beta)
  // = D(2 beta) Pi; the finite double sum over Fock indices is exact for a
  // truncated state, unlike summing the parity expansion past the cutoff.
  VectorXcd parity_c = c;
  for (int k = 1; k < n; k += 2) parity_c[k] = -parity_c[k];
  for (int ix = 0; ix < grid.nx; ++ix) {
    const double x =
        grid.xmin + (grid.xmax - grid.xmin) * ix / double(grid.nx - 1);
    for (int ip = 0; ip < grid.np; ++ip) {
      const double p =
          grid.pmin + (grid.pmax - grid.pmin) * ip / double(grid.np - 1);
      const MatrixXcd d2 = displacement_matrix(2.0 * cxd(x, p), n);
      w(ix, ip) = 2.0 / kPi * (c.adjoint() * d2 * parity_c).value().real();
    }
  }
  return w;
}

}  // namespace qsteer::cv
