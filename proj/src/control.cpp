#include "qsteer/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

namespace qsteer::ctl {

namespace {

// Seed-stream tags so the initial draw, the noise stream and the action
// stream of one seed never overlap.
constexpr std::uint64_t kTagInit = 0x696e6974;    // initial-condition draw
constexpr std::uint64_t kTagNoise = 0x6e6f6973;   // measurement noise
constexpr std::uint64_t kTagActions = 0x616374;   // action sampling
constexpr std::uint64_t kTagEnvReset = 0x656e76;  // per-episode reset seed
constexpr std::uint64_t kTagPolicy = 0x706f6c;    // policy initialization
constexpr std::uint64_t kTagUpdate = 0x757064;    // minibatch shuffling
constexpr std::uint64_t kTagEpisode = 0x6570;     // training episode counter
constexpr std::uint64_t kTagGround = 0x6773;      // per-cell eigensolver seed
constexpr std::uint64_t kTagBases = 0x62617365;   // Ising basis draw
constexpr std::uint64_t kTagThetas = 0x746874;    // quadrature angle draw

OutcomeDistribution apply_noise(OutcomeDistribution d, const NoiseModel& nm,
                                Rng& rng) {
  if (nm.shots > 0) d = cv::multinomial_sample(d, nm.shots, rng);
  if (nm.sigma2 > 0.0) d = cv::add_measurement_noise(d, nm.sigma2, rng);
  return d;
}

int grid_index(double value, double step, int max_idx, const std::string& label) {
  const long k = std::lround(value / step);
  require(k >= 0 && k <= max_idx && std::abs(value - double(k) * step) < 1e-9,
          label + " must sit on the parameter grid");
  return int(k);
}

std::string real_pair_key(double a, double b) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g", a, b);
  return buf;
}

std::vector<int> select_actions(const ppo::PolicySpec& policy,
                                const VectorXd& obs, ActionMode mode,
                                const std::vector<int>& factors, Rng& rng) {
  switch (mode) {
    case ActionMode::Greedy:
      return ppo::greedy_action(policy, obs);
    case ActionMode::Sample:
      return ppo::sample_action(policy, obs, rng).actions;
    case ActionMode::Random: {
      std::vector<int> a;
      a.reserve(factors.size());
      for (int f : factors) a.push_back(int(rng.uniform_int(f)));
      return a;
    }
  }
  throw ContractError("unknown action mode");
}

VectorXd make_observation(const VectorXd& r_now, const VectorXd& r_target,
                          bool concat_target) {
  if (!concat_target) return r_now;
  VectorXd obs(r_now.size() + r_target.size());
  obs << r_now, r_target;
  return obs;
}

}  // namespace

std::uint64_t xxz_cell_seed(std::uint64_t measurement_seed, long kj, long kd) {
  const long key = kj * 64 + kd;
  return derive_seed(derive_seed(measurement_seed, kTagGround),
                     std::uint64_t(key));
}

std::uint64_t ising_cell_seed(std::uint64_t measurement_seed,
                              const std::vector<double>& couplings,
                              double step) {
  std::uint64_t seed = derive_seed(measurement_seed, kTagGround);
  for (double c : couplings)
    seed = derive_seed(seed, std::uint64_t(std::lround(c / step) + 512));
  return seed;
}

std::vector<std::vector<qc::Pauli>> draw_ising_bases(
    int n_qubits, int n_bases, std::uint64_t measurement_seed) {
  require(n_bases >= 1, "ising: need at least one basis");
  Rng rng(derive_seed(measurement_seed, kTagBases));
  std::vector<std::vector<qc::Pauli>> bases;
  bases.reserve(std::size_t(n_bases));
  int attempts = 0;
  while (int(bases.size()) < n_bases) {
    auto b = spin::sample_full_basis(n_qubits, rng);
    if (std::find(bases.begin(), bases.end(), b) == bases.end())
      bases.push_back(std::move(b));
    require(++attempts <= 10000, "ising: could not draw enough distinct bases");
  }
  return bases;
}

double reward(const VectorXd& rep_now, const VectorXd& rep_target, double scale,
              int d) {
  require(d >= 1, "reward: representation dimension must be positive");
  require(scale > 0.0, "reward: scale must be positive");
  require(rep_now.size() == d && rep_target.size() == d,
          "reward: representation dimension mismatch");
  return -scale * (rep_now - rep_target).norm() / std::sqrt(double(d));
}

double effective_terminate_eps(const EpisodeConfig& cfg, int d) {
  require(d >= 1, "episode: representation dimension must be positive");
  require(cfg.reward_scale > 0.0, "episode: reward_scale must be positive");
  if (cfg.terminate_eps > 0.0) return cfg.terminate_eps;
  return 0.05 * cfg.reward_scale / std::sqrt(double(d));
}

VectorXd RepCache::get(Environment& env, const rep::RepNet& net) {
  if (!env.deterministic_measurements())
    return rep::encode(net, env.measure());
  const std::string key = env.name() + "|" + env.state_key();
  auto it = by_key_.find(key);
  if (it != by_key_.end()) return it->second;
  VectorXd r = rep::encode(net, env.measure());
  if (by_key_.size() >= kMaxEntries) by_key_.clear();
  by_key_.emplace(key, r);
  return r;
}

// ---------------------------------------------------------------------------
// XXZ environment

XxzEnv::XxzEnv(const XxzEnvOptions& opt) : opt_(opt) {
  require(opt.n_qubits >= 3 && opt.n_qubits <= 10,
          "xxz: n_qubits must lie in [3, 10]");
  require(opt.n_measurements >= 1, "xxz: need at least one measurement");
  windows_ = spin::sample_pauli_measurement_set(opt.n_qubits,
                                                opt.n_measurements,
                                                opt.measurement_seed);
  encodings_.reserve(windows_.size());
  for (const auto& w : windows_)
    encodings_.push_back(rep::encode_pauli_window(opt.n_qubits, w));

  target_.n_qubits = opt.n_qubits;
  target_.j_ratio = opt.target_j;
  target_.delta = opt.target_delta;
  grid_index(opt.target_j, spin::kXxzStepJ, spin::kXxzGridMax, "xxz: target j");
  grid_index(opt.target_delta, spin::kXxzStepD, spin::kXxzGridMax,
             "xxz: target delta");
  if (opt.fixed_initial) {
    grid_index(opt.fixed_initial->first, spin::kXxzStepJ, spin::kXxzGridMax,
               "xxz: initial j");
    grid_index(opt.fixed_initial->second, spin::kXxzStepD, spin::kXxzGridMax,
               "xxz: initial delta");
  }
  params_ = target_;  // placeholder until reset()
}

void XxzEnv::reset(std::uint64_t seed) {
  noise_rng_ = Rng(derive_seed(seed, kTagNoise));
  params_.n_qubits = opt_.n_qubits;
  if (opt_.fixed_initial) {
    params_.j_ratio = opt_.fixed_initial->first;
    params_.delta = opt_.fixed_initial->second;
    return;
  }
  // Uniform over the (max+1)^2 grid nodes excluding the target cell: a
  // single draw over the remaining nodes stays unbiased.
  Rng rng(derive_seed(seed, kTagInit));
  const long side = spin::kXxzGridMax + 1;
  const long tj = std::lround(target_.j_ratio / spin::kXxzStepJ);
  const long td = std::lround(target_.delta / spin::kXxzStepD);
  const long target_idx = tj * side + td;
  long idx = long(rng.uniform_int(side * side - 1));
  if (idx >= target_idx) ++idx;
  params_.j_ratio = double(idx / side) * spin::kXxzStepJ;
  params_.delta = double(idx % side) * spin::kXxzStepD;
}

void XxzEnv::step(const std::vector<int>& actions) {
  require(actions.size() == 1, "xxz: expected a single action index");
  params_ = spin::apply_action_xxz(params_, actions[0]);
}

const XxzEnv::Cell& XxzEnv::cell(const spin::XxzParams& p) {
  const long side = 64;  // key stride; grid side is at most 21
  const long kj = std::lround(p.j_ratio / spin::kXxzStepJ);
  const long kd = std::lround(p.delta / spin::kXxzStepD);
  const long key = kj * side + kd;
  auto it = cells_.find(key);
  if (it != cells_.end()) return it->second;
  auto h = spin::build_xxz_hamiltonian(p);
  auto gs = spin::ground_state_tiebroken(h, opt_.n_qubits,
                                         xxz_cell_seed(opt_.measurement_seed, kj, kd));
  Cell c{std::move(gs.state), {}};
  c.stats.reserve(windows_.size());
  for (const auto& w : windows_)
    c.stats.push_back(spin::pauli_marginal_statistics(c.state, opt_.n_qubits, w));
  return cells_.emplace(key, std::move(c)).first->second;
}

std::vector<rep::MeasurementPair> XxzEnv::noisy_pairs(const Cell& c) {
  std::vector<rep::MeasurementPair> out;
  out.reserve(windows_.size());
  for (std::size_t i = 0; i < windows_.size(); ++i)
    out.emplace_back(encodings_[i], apply_noise(c.stats[i], opt_.noise, noise_rng_));
  return out;
}

std::vector<rep::MeasurementPair> XxzEnv::measure() {
  return noisy_pairs(cell(params_));
}

std::vector<rep::MeasurementPair> XxzEnv::target_measurement_pairs() {
  const Cell& c = cell(target_);
  std::vector<rep::MeasurementPair> out;
  out.reserve(windows_.size());
  for (std::size_t i = 0; i < windows_.size(); ++i)
    out.emplace_back(encodings_[i], c.stats[i]);
  return out;
}

const qc::QuantumState& XxzEnv::current_state() { return cell(params_).state; }
const qc::QuantumState& XxzEnv::target_state() { return cell(target_).state; }

VectorXd XxzEnv::params() const {
  VectorXd p(2);
  p << params_.j_ratio, params_.delta;
  return p;
}

VectorXd XxzEnv::target_params() const {
  VectorXd p(2);
  p << target_.j_ratio, target_.delta;
  return p;
}

std::string XxzEnv::state_key() const {
  const long kj = std::lround(params_.j_ratio / spin::kXxzStepJ);
  const long kd = std::lround(params_.delta / spin::kXxzStepD);
  return std::to_string(kj) + "," + std::to_string(kd);
}

// ---------------------------------------------------------------------------
// Ising environment

namespace {

long ising_lattice_index(double coupling, double step, double bound,
                         const std::string& label) {
  const long k = std::lround(coupling / step);
  require(std::abs(coupling - double(k) * step) < 1e-9 &&
              std::abs(coupling) <= bound + 1e-9,
          label + " must be a step multiple inside the clamp bound");
  return k;
}

}  // namespace

IsingEnv::IsingEnv(const IsingEnvOptions& opt) : opt_(opt) {
  require(opt.n_qubits >= 2 && opt.n_qubits <= 8,
          "ising: n_qubits must lie in [2, 8]");
  require(opt.action_step > 0.0 && opt.action_step < 1.0,
          "ising: action_step must lie in (0, 1)");
  require(int(opt.target_couplings.size()) == opt.n_qubits - 1,
          "ising: target_couplings must have n_qubits-1 entries");
  const double bound = spin::ising_clamp_bound(opt.action_step);
  for (double c : opt.target_couplings)
    ising_lattice_index(c, opt.action_step, bound, "ising: target coupling");
  if (opt.fixed_initial) {
    require(opt.fixed_initial->size() == opt.target_couplings.size(),
            "ising: fixed_initial must match target length");
    for (double c : *opt.fixed_initial)
      ising_lattice_index(c, opt.action_step, bound, "ising: initial coupling");
  }
  bases_ = draw_ising_bases(opt.n_qubits, opt.n_bases, opt.measurement_seed);
  encodings_.reserve(bases_.size());
  for (const auto& b : bases_) encodings_.push_back(rep::encode_full_basis(b));

  target_.n_qubits = opt.n_qubits;
  target_.couplings = opt.target_couplings;
  params_ = target_;  // placeholder until reset()
}

void IsingEnv::reset(std::uint64_t seed) {
  noise_rng_ = Rng(derive_seed(seed, kTagNoise));
  params_.n_qubits = opt_.n_qubits;
  if (opt_.fixed_initial) {
    params_.couplings = *opt_.fixed_initial;
    return;
  }
  // Each coupling uniform over the step lattice inside the clamp bound;
  // the exact target vector is excluded by redraw.
  Rng rng(derive_seed(seed, kTagInit));
  const double step = opt_.action_step;
  const long half = std::lround(spin::ising_clamp_bound(step) / step);
  const long levels = 2 * half + 1;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> draw(target_.couplings.size());
    for (double& c : draw)
      c = double(long(rng.uniform_int(levels)) - half) * step;
    bool at_target = true;
    for (std::size_t i = 0; i < draw.size(); ++i)
      if (std::lround(draw[i] / step) != std::lround(target_.couplings[i] / step))
        at_target = false;
    if (!at_target) {
      params_.couplings = std::move(draw);
      return;
    }
  }
  throw ContractError("ising: initial draw kept landing on the target");
}

void IsingEnv::step(const std::vector<int>& actions) {
  require(actions.size() == target_.couplings.size(),
          "ising: expected one action per coupling");
  std::vector<int> moves(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    require(actions[i] >= 0 && actions[i] < 3,
            "ising: per-coupling actions index {-step, 0, +step}");
    moves[i] = actions[i] - 1;
  }
  params_ = spin::apply_action_ising(params_, moves, opt_.action_step);
}

std::vector<int> IsingEnv::action_structure() const {
  return std::vector<int>(target_.couplings.size(), 3);
}

std::string IsingEnv::key_of(const spin::IsingParams& p) const {
  std::string key;
  for (double c : p.couplings) {
    if (!key.empty()) key += ',';
    key += std::to_string(std::lround(c / opt_.action_step));
  }
  return key;
}

IsingEnv::Cell IsingEnv::solve_cell(const spin::IsingParams& p) const {
  const std::uint64_t cell_seed =
      ising_cell_seed(opt_.measurement_seed, p.couplings, opt_.action_step);
  auto h = spin::build_ising_hamiltonian(p);
  auto gs = spin::ground_state_tiebroken(h, opt_.n_qubits, cell_seed);
  Cell c{std::move(gs.state), {}};
  c.stats.reserve(bases_.size());
  for (const auto& b : bases_)
    c.stats.push_back(spin::full_basis_statistics(c.state, b));
  return c;
}

const IsingEnv::Cell& IsingEnv::cell(const spin::IsingParams& p) {
  const std::string key = key_of(p);
  auto it = cells_.find(key);
  if (it != cells_.end()) return it->second;
  // The coupling lattice has far more nodes than the XXZ grid; cap the
  // cache and start over when it fills.
  if (cells_.size() >= 30000) cells_.clear();
  return cells_.emplace(key, solve_cell(p)).first->second;
}

const IsingEnv::Cell& IsingEnv::target_cell() {
  if (!target_cell_) target_cell_ = solve_cell(target_);
  return *target_cell_;
}

std::vector<rep::MeasurementPair> IsingEnv::noisy_pairs(const Cell& c) {
  std::vector<rep::MeasurementPair> out;
  out.reserve(bases_.size());
  for (std::size_t i = 0; i < bases_.size(); ++i)
    out.emplace_back(encodings_[i], apply_noise(c.stats[i], opt_.noise, noise_rng_));
  return out;
}

std::vector<rep::MeasurementPair> IsingEnv::measure() {
  return noisy_pairs(cell(params_));
}

std::vector<rep::MeasurementPair> IsingEnv::target_measurement_pairs() {
  const Cell& c = target_cell();
  std::vector<rep::MeasurementPair> out;
  out.reserve(bases_.size());
  for (std::size_t i = 0; i < bases_.size(); ++i)
    out.emplace_back(encodings_[i], c.stats[i]);
  return out;
}

const qc::QuantumState& IsingEnv::current_state() { return cell(params_).state; }
const qc::QuantumState& IsingEnv::target_state() { return target_cell().state; }

VectorXd IsingEnv::params() const {
  return Eigen::Map<const VectorXd>(params_.couplings.data(),
                                    long(params_.couplings.size()));
}

VectorXd IsingEnv::target_params() const {
  return Eigen::Map<const VectorXd>(target_.couplings.data(),
                                    long(target_.couplings.size()));
}

std::string IsingEnv::state_key() const { return key_of(params_); }

// ---------------------------------------------------------------------------
// Cat-state environment

CatEnv::CatEnv(const CatEnvOptions& opt)
    : opt_(opt), ws_(opt.cutoff, cv::HomodyneSpec{}) {
  // One above the coherent-state bound: |alpha|^2 computed from polar
  // coordinates can exceed max_abs^2 by an ulp.
  require(opt.cutoff >= int(4.0 * opt.max_abs * opt.max_abs) + 21,
          "cat: cutoff too small for max_abs");
  require(opt.n_thetas >= 1, "cat: need at least one quadrature");
  require(opt.horizon >= 1, "cat: horizon must be positive");
  require(opt.beta0 > 0.0, "cat: beta0 must be positive");
  require(opt.init_radius > 0.0 && opt.init_radius <= opt.max_abs,
          "cat: init_radius must lie in (0, max_abs]");
  require(std::abs(opt.target_alpha) <= opt.max_abs,
          "cat: target outside the reachable disk");
  if (opt.fixed_initial)
    require(std::abs(*opt.fixed_initial) <= opt.max_abs,
            "cat: fixed initial outside the reachable disk");

  Rng rng(derive_seed(opt.measurement_seed, kTagThetas));
  thetas_.reserve(opt.n_thetas);
  encodings_.reserve(opt.n_thetas);
  for (int i = 0; i < opt.n_thetas; ++i) {
    thetas_.push_back(rng.uniform(0.0, cv::kPi));
    encodings_.push_back(rep::encode_homodyne(thetas_.back()));
  }
  alpha_ = opt.fixed_initial ? *opt.fixed_initial : opt.target_alpha;
}

void CatEnv::reset(std::uint64_t seed) {
  noise_rng_ = Rng(derive_seed(seed, kTagNoise));
  steps_taken_ = 0;
  if (opt_.fixed_initial) {
    alpha_ = *opt_.fixed_initial;
  } else {
    // Uniform over the disk |alpha| <= init_radius (area-uniform draw).
    Rng rng(derive_seed(seed, kTagInit));
    const double r = opt_.init_radius * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * cv::kPi);
    alpha_ = std::polar(r, phi);
  }
  state_.reset();
}

double CatEnv::beta_at(int t) const {
  require(t >= 1, "cat: step index is 1-based");
  if (opt_.constant_beta) return opt_.beta0;
  const int tc = std::min(t, opt_.horizon);
  return (1.0 - double(tc - 1) / double(opt_.horizon)) * opt_.beta0;
}

void CatEnv::step(const std::vector<int>& actions) {
  const double beta = beta_at(steps_taken_ + 1);
  if (opt_.factored_actions) {
    require(actions.size() == 2, "cat: factored actions need 2 entries");
    for (int a : actions)
      require(a >= 0 && a < 3, "cat: factored actions index {-beta, 0, +beta}");
    const int da = actions[0] - 1, db = actions[1] - 1;
    if (da != 0 || db != 0) {
      // Map the signed pair onto the 8-way stencil (center removed).
      const int idx0 = (da + 1) * 3 + (db + 1);
      alpha_ = cv::apply_action_cat(alpha_, idx0 > 4 ? idx0 - 1 : idx0, beta,
                                    opt_.max_abs);
    }
  } else {
    require(actions.size() == 1, "cat: expected a single action index");
    alpha_ = cv::apply_action_cat(alpha_, actions[0], beta, opt_.max_abs);
  }
  ++steps_taken_;
  state_.reset();
}

std::vector<int> CatEnv::action_structure() const {
  if (opt_.factored_actions) return {3, 3};
  return {8};
}

std::vector<rep::MeasurementPair> CatEnv::pairs_of(const qc::QuantumState& psi,
                                                   bool with_noise) {
  std::vector<rep::MeasurementPair> out;
  out.reserve(thetas_.size());
  for (std::size_t i = 0; i < thetas_.size(); ++i) {
    cv::HomodyneSpec spec = ws_.geometry();
    spec.theta = thetas_[i];
    OutcomeDistribution d = cv::homodyne_distribution(psi, spec, ws_);
    if (with_noise) d = apply_noise(std::move(d), opt_.noise, noise_rng_);
    out.emplace_back(encodings_[i], std::move(d));
  }
  return out;
}

std::vector<rep::MeasurementPair> CatEnv::measure() {
  return pairs_of(current_state(), true);
}

std::vector<rep::MeasurementPair> CatEnv::target_measurement_pairs() {
  if (!target_pairs_) target_pairs_ = pairs_of(target_state(), false);
  return *target_pairs_;
}

const qc::QuantumState& CatEnv::current_state() {
  if (!state_) state_ = cv::cat_state(alpha_, opt_.cutoff);
  return *state_;
}

const qc::QuantumState& CatEnv::target_state() {
  if (!target_state_) target_state_ = cv::cat_state(opt_.target_alpha, opt_.cutoff);
  return *target_state_;
}

VectorXd CatEnv::params() const {
  VectorXd p(2);
  p << alpha_.real(), alpha_.imag();
  return p;
}

VectorXd CatEnv::target_params() const {
  VectorXd p(2);
  p << opt_.target_alpha.real(), opt_.target_alpha.imag();
  return p;
}

std::string CatEnv::state_key() const {
  return real_pair_key(alpha_.real(), alpha_.imag());
}

// ---------------------------------------------------------------------------
// Kerr process-output environment

ProcessEnv::ProcessEnv(const ProcessEnvOptions& opt)
    : opt_(opt), ws_(opt.cutoff, cv::HomodyneSpec{}) {
  // Actions clamp r into [0, 3], so the truncation must cover r = 3
  // regardless of the draw box.
  require(opt.cutoff >= 57, "process: cutoff too small for r up to 3");
  require(opt.n_thetas >= 1, "process: need at least one quadrature");
  require(opt.r_max > 0.0 && opt.r_max <= 3.0,
          "process: r_max must lie in (0, 3]");
  require(opt.dr > 0.0 && opt.dpsi > 0.0, "process: step sizes must be positive");
  auto check = [](const cv::DisplacementParams& p, const std::string& label) {
    require(p.r >= 0.0 && p.r <= 3.0 && std::isfinite(p.psi),
            label + " must have r in [0, 3] and finite psi");
  };
  if (opt.fixed_target) check(*opt.fixed_target, "process: fixed target");
  if (opt.fixed_initial) check(*opt.fixed_initial, "process: fixed initial");

  Rng rng(derive_seed(opt.measurement_seed, kTagThetas));
  thetas_.reserve(opt.n_thetas);
  encodings_.reserve(opt.n_thetas);
  for (int i = 0; i < opt.n_thetas; ++i) {
    thetas_.push_back(rng.uniform(0.0, cv::kPi));
    encodings_.push_back(rep::encode_homodyne(thetas_.back()));
  }
  params_ = opt.fixed_initial ? *opt.fixed_initial : cv::DisplacementParams{};
  target_ = opt.fixed_target ? *opt.fixed_target : cv::DisplacementParams{};
}

void ProcessEnv::reset(std::uint64_t seed) {
  noise_rng_ = Rng(derive_seed(seed, kTagNoise));
  Rng rng(derive_seed(seed, kTagInit));
  auto draw = [&]() {
    cv::DisplacementParams p;
    p.r = rng.uniform(0.0, opt_.r_max);
    p.psi = rng.uniform(0.0, 2.0 * cv::kPi);
    return p;
  };
  // Initial first, then target, so fixing one leaves the other's draw
  // unchanged only when it comes later in this order.
  params_ = opt_.fixed_initial ? *opt_.fixed_initial : draw();
  target_ = opt_.fixed_target ? *opt_.fixed_target : draw();
  state_.reset();
  target_state_.reset();
  target_pairs_.reset();
}

void ProcessEnv::step(const std::vector<int>& actions) {
  require(actions.size() == 1, "process: expected a single action index");
  params_ = cv::apply_action_displacement(params_, actions[0], opt_.dr, opt_.dpsi);
  state_.reset();
}

qc::QuantumState ProcessEnv::output_of(const cv::DisplacementParams& p) const {
  return cv::kerr_gate(cv::displaced_vacuum(p.r, p.psi, opt_.cutoff));
}

std::vector<rep::MeasurementPair> ProcessEnv::pairs_of(
    const qc::QuantumState& psi, bool with_noise) {
  std::vector<rep::MeasurementPair> out;
  out.reserve(thetas_.size());
  for (std::size_t i = 0; i < thetas_.size(); ++i) {
    cv::HomodyneSpec spec = ws_.geometry();
    spec.theta = thetas_[i];
    OutcomeDistribution d = cv::homodyne_distribution(psi, spec, ws_);
    if (with_noise) d = apply_noise(std::move(d), opt_.noise, noise_rng_);
    out.emplace_back(encodings_[i], std::move(d));
  }
  return out;
}

std::vector<rep::MeasurementPair> ProcessEnv::measure() {
  return pairs_of(current_state(), true);
}

std::vector<rep::MeasurementPair> ProcessEnv::target_measurement_pairs() {
  if (!target_pairs_) target_pairs_ = pairs_of(target_state(), false);
  return *target_pairs_;
}

const qc::QuantumState& ProcessEnv::current_state() {
  if (!state_) state_ = output_of(params_);
  return *state_;
}

const qc::QuantumState& ProcessEnv::target_state() {
  if (!target_state_) target_state_ = output_of(target_);
  return *target_state_;
}

VectorXd ProcessEnv::params() const {
  VectorXd p(2);
  p << params_.r, params_.psi;
  return p;
}

VectorXd ProcessEnv::target_params() const {
  VectorXd p(2);
  p << target_.r, target_.psi;
  return p;
}

std::string ProcessEnv::state_key() const {
  return real_pair_key(params_.r, params_.psi);
}

// ---------------------------------------------------------------------------
// Scenario catalog and environment factory

namespace {

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

VectorXd vecn(std::initializer_list<double> xs) {
  VectorXd v(long(xs.size()));
  long i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

std::vector<ScenarioSpec> scenario_catalog() {
  std::vector<ScenarioSpec> out;
  // XXZ phase archetypes on the (j, delta) grid: trivial-paramagnet TP,
  // topological TR, symmetry-broken SB, plus a phase-boundary node.
  const VectorXd tp = vec2(0.45, 1.0);
  const VectorXd tr = vec2(2.40, 1.0);
  const VectorXd sb = vec2(1.50, 3.60);
  const VectorXd boundary = vec2(2.40, 2.0);
  out.push_back({"xxz_sb_to_tp", "xxz", sb, tp, 30});
  out.push_back({"xxz_tr_to_sb", "xxz", tr, sb, 30});
  out.push_back({"xxz_tr_to_tp", "xxz", tr, tp, 30});
  out.push_back({"xxz_tp_to_sb", "xxz", tp, sb, 30});
  out.push_back({"xxz_tr_to_boundary", "xxz", tr, boundary, 30});

  // Cat scenarios share one target; initials ordered by |alpha|.
  const VectorXd cat_target = vec2(0.5, -1.8);
  out.push_back({"cat_1", "cat", vec2(0.4, -0.3), cat_target, 20});
  out.push_back({"cat_2", "cat", vec2(-0.6, -1.0), cat_target, 20});
  out.push_back({"cat_3", "cat", vec2(1.3, 0.7), cat_target, 20});
  out.push_back({"cat_4", "cat", vec2(-1.6, -1.5), cat_target, 20});

  // Ising targets steered from the all-zero couplings (the |+>^n ground
  // state of the bare transverse field).
  const VectorXd ising_init = VectorXd::Zero(5);
  out.push_back({"ising_1", "ising", ising_init,
                 vecn({0.8, 0.8, 0.8, 0.8, 0.8}), 50});
  out.push_back({"ising_2", "ising", ising_init,
                 vecn({0.8, -0.8, 0.8, -0.8, 0.8}), 50});
  out.push_back({"ising_3", "ising", ising_init,
                 vecn({0.8, 0.8, 0.8, -0.8, -0.8}), 50});
  out.push_back({"ising_4", "ising", ising_init,
                 vecn({0.3, -0.5, 0.7, -0.1, 0.4}), 50});

  // Kerr process output with a fresh random (initial, target) pair per
  // episode.
  out.push_back({"process_random", "process_output", VectorXd(), VectorXd(), 55});
  return out;
}

std::unique_ptr<Environment> make_environment(const ScenarioSpec& spec,
                                              const EnvBuild& build) {
  if (spec.task == "xxz") {
    require(spec.target.size() == 2, "xxz scenario: target must be (j, delta)");
    XxzEnvOptions o;
    o.n_qubits = build.xxz_qubits;
    o.n_measurements = build.xxz_measurements;
    o.measurement_seed = build.measurement_seed;
    o.noise = build.noise;
    o.target_j = spec.target[0];
    o.target_delta = spec.target[1];
    if (spec.initial.size() > 0) {
      require(spec.initial.size() == 2, "xxz scenario: initial must be (j, delta)");
      o.fixed_initial = std::make_pair(spec.initial[0], spec.initial[1]);
    }
    return std::make_unique<XxzEnv>(o);
  }
  if (spec.task == "ising") {
    require(spec.target.size() >= 1, "ising scenario: target couplings required");
    IsingEnvOptions o;
    o.n_qubits = int(spec.target.size()) + 1;
    o.n_bases = build.ising_bases;
    o.measurement_seed = build.measurement_seed;
    o.action_step = build.ising_action_step;
    o.noise = build.noise;
    o.target_couplings.assign(spec.target.data(),
                              spec.target.data() + spec.target.size());
    if (spec.initial.size() > 0) {
      require(spec.initial.size() == spec.target.size(),
              "ising scenario: initial must match target length");
      o.fixed_initial = std::vector<double>(
          spec.initial.data(), spec.initial.data() + spec.initial.size());
    }
    return std::make_unique<IsingEnv>(o);
  }
  if (spec.task == "cat") {
    require(spec.target.size() == 2, "cat scenario: target must be (re, im)");
    CatEnvOptions o;
    o.cutoff = build.cv_cutoff;
    o.n_thetas = build.cv_thetas;
    o.measurement_seed = build.measurement_seed;
    o.noise = build.noise;
    o.target_alpha = cxd(spec.target[0], spec.target[1]);
    o.beta0 = build.cat_beta0;
    o.constant_beta = build.cat_constant_beta;
    o.factored_actions = build.cat_factored_actions;
    o.init_radius = build.cat_init_radius;
    o.horizon = spec.max_steps;
    if (spec.initial.size() > 0) {
      require(spec.initial.size() == 2, "cat scenario: initial must be (re, im)");
      o.fixed_initial = cxd(spec.initial[0], spec.initial[1]);
    }
    return std::make_unique<CatEnv>(o);
  }
  if (spec.task == "process_output") {
    ProcessEnvOptions o;
    o.cutoff = build.cv_cutoff;
    o.n_thetas = build.cv_thetas;
    o.measurement_seed = build.measurement_seed;
    o.noise = build.noise;
    if (spec.target.size() > 0) {
      require(spec.target.size() == 2, "process scenario: target must be (r, psi)");
      o.fixed_target = cv::DisplacementParams{spec.target[0], spec.target[1]};
    }
    if (spec.initial.size() > 0) {
      require(spec.initial.size() == 2, "process scenario: initial must be (r, psi)");
      o.fixed_initial = cv::DisplacementParams{spec.initial[0], spec.initial[1]};
    }
    return std::make_unique<ProcessEnv>(o);
  }
  throw ValidationError("unknown task '" + spec.task + "'");
}

// ---------------------------------------------------------------------------
// Episode rollout

Trajectory run_episode(Environment& env, const ppo::PolicySpec& policy,
                       const rep::RepNet& net, const EpisodeConfig& cfg,
                       std::uint64_t seed, ActionMode mode, RepCache* cache) {
  require(cfg.max_steps >= 1, "episode: max_steps must be positive");
  const double eps = effective_terminate_eps(cfg, net.d);
  const std::vector<int> factors = env.action_structure();
  require(policy.factors == factors,
          "episode: policy action factors do not match the environment");
  const int obs_dim = cfg.concat_target ? 2 * net.d : net.d;
  require(policy.actor.in_dim() == obs_dim,
          "episode: policy input width does not match the observation");

  Rng act_rng(derive_seed(seed, kTagActions));
  env.reset(derive_seed(seed, kTagEnvReset));

  Trajectory traj;
  int t = 0;
  try {
    const VectorXd r_target = rep::encode(net, env.target_measurement_pairs());
    std::vector<int> pending_actions;
    for (t = 0;; ++t) {
      const VectorXd r_now =
          cache ? cache->get(env, net) : rep::encode(net, env.measure());
      const double rew = reward(r_now, r_target, cfg.reward_scale, net.d);
      StepRecord rec;
      rec.step = t;
      rec.actions = pending_actions;
      rec.reward = rew;
      rec.rep_distance = rep::representation_distance(r_now, r_target);
      rec.fidelity = qc::fidelity(env.current_state(), env.target_state());
      rec.params = env.params();
      traj.steps.push_back(std::move(rec));
      if (std::abs(rew) <= eps) {
        traj.reached_target = true;
        break;
      }
      if (t >= cfg.max_steps) break;
      const VectorXd obs = make_observation(r_now, r_target, cfg.concat_target);
      pending_actions = select_actions(policy, obs, mode, factors, act_rng);
      env.step(pending_actions);
    }
  } catch (const NumericError& e) {
    throw NumericError("episode aborted at step " + std::to_string(t) + ": " +
                       e.what());
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_rgrl(Environment& env, const rep::RepNet& net,
                       const TrainConfig& cfg) {
  const ppo::PpoHyper& hp = cfg.hyper;
  require(hp.k_step >= 1, "train: k_step must be positive");
  require(hp.total_steps >= hp.k_step,
          "train: total_steps must cover at least one update");
  const int m_updates = int(hp.total_steps / hp.k_step);
  const double eps = effective_terminate_eps(cfg.episode, net.d);
  const int horizon = cfg.episode.max_steps;
  require(horizon >= 1, "train: max_steps must be positive");

  const int obs_dim = cfg.episode.concat_target ? 2 * net.d : net.d;
  ppo::PolicySpec policy = ppo::make_policy(obs_dim, env.action_structure(),
                                            derive_seed(cfg.seed, kTagPolicy));
  nn::AdamState actor_adam = nn::adam_init(policy.actor);
  nn::AdamState critic_adam = nn::adam_init(policy.critic);
  Rng act_rng(derive_seed(cfg.seed, kTagActions));
  Rng upd_rng(derive_seed(cfg.seed, kTagUpdate));
  RepCache cache;

  // Episode state persists across rollout boundaries: an episode truncated
  // by the buffer resumes under the updated policy.
  bool ep_active = false;
  int ep_t = 0;
  double ep_return = 0.0;
  VectorXd r_target;
  std::uint64_t ep_counter = 0;
  long zero_action_streak = 0;

  ppo::Transition pending;
  bool has_pending = false;  // invariant: false at every rollout boundary

  ppo::RolloutBuffer buffer(hp.k_step);
  std::vector<UpdateRecord> log;
  log.reserve(size_t(m_updates));

  for (int k = 1; k <= m_updates; ++k) {
    buffer.clear();
    buffer.bootstrap_value = 0.0;
    double reward_sum = 0.0;
    double finished_return_sum = 0.0;
    int finished = 0;

    while (!buffer.full()) {
      if (!ep_active) {
        env.reset(derive_seed(derive_seed(cfg.seed, kTagEpisode), ep_counter++));
        r_target = rep::encode(net, env.target_measurement_pairs());
        ep_t = 0;
        ep_return = 0.0;
        ep_active = true;
      }
      const VectorXd r_now = cache.get(env, net);
      const double rew = reward(r_now, r_target, cfg.episode.reward_scale, net.d);
      const VectorXd obs = make_observation(r_now, r_target, cfg.episode.concat_target);
      const bool ep_end = std::abs(rew) <= eps || ep_t >= horizon;

      if (has_pending) {
        pending.done = ep_end;
        buffer.add(std::move(pending));
        has_pending = false;
        if (buffer.full() && !ep_end)
          buffer.bootstrap_value = ppo::state_value(policy, obs);
      }

      if (ep_end) {
        ep_active = false;
        ++finished;
        finished_return_sum += ep_return;
        zero_action_streak = (ep_t == 0) ? zero_action_streak + 1 : 0;
        if (zero_action_streak >= 10000)
          throw ContractError(
              "train: episodes keep terminating without acting; the initial "
              "distribution appears to coincide with the target");
        continue;
      }
      if (buffer.full()) break;  // mid-episode boundary; resume next rollout

      ppo::ActionSample as = ppo::sample_action(policy, obs, act_rng);
      pending = ppo::Transition{obs, as.actions, as.log_prob, rew,
                                ppo::state_value(policy, obs), false};
      has_pending = true;
      ep_return += rew;
      reward_sum += rew;
      env.step(pending.actions);
      ++ep_t;
    }

    const double lr = ppo::lr_schedule(k, m_updates, hp.alpha0);
    UpdateRecord rec;
    rec.update = k;
    rec.lr = lr;
    rec.mean_reward = reward_sum / double(hp.k_step);
    rec.episodes_finished = finished;
    rec.mean_episode_return =
        finished > 0 ? finished_return_sum / double(finished) : 0.0;
    rec.diag = ppo::ppo_update(policy, buffer, hp, actor_adam, critic_adam, lr,
                               upd_rng);
    log.push_back(rec);
  }
  return TrainResult{std::move(policy), std::move(log)};
}

// ---------------------------------------------------------------------------
// Evaluation

ScenarioResult evaluate_scenario(Environment& env,
                                 const ppo::PolicySpec& policy,
                                 const rep::RepNet& net,
                                 const EpisodeConfig& cfg, int n_experiments,
                                 std::uint64_t seed, ActionMode mode) {
  require(n_experiments >= 1, "evaluate: n_experiments must be positive");
  RepCache cache;
  ScenarioResult res;
  res.name = env.name();
  res.n_experiments = n_experiments;
  res.ci_degenerate = (n_experiments == 1);
  res.trajectories.reserve(size_t(n_experiments));

  std::vector<double> finals;
  finals.reserve(size_t(n_experiments));
  double init_sum = 0.0, reward_sum = 0.0;
  int reached = 0;
  for (int e = 0; e < n_experiments; ++e) {
    Trajectory tr = run_episode(env, policy, net, cfg,
                                derive_seed(seed, std::uint64_t(e)), mode,
                                &cache);
    finals.push_back(tr.final_step().fidelity);
    init_sum += tr.steps.front().fidelity;
    reward_sum += tr.final_step().reward;
    if (tr.reached_target) ++reached;
    res.trajectories.push_back(std::move(tr));
  }
  const double n = double(n_experiments);
  const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / n;
  double ci = 0.0;
  if (n_experiments > 1) {
    double ss = 0.0;
    for (double f : finals) ss += (f - mean) * (f - mean);
    ci = 1.96 * std::sqrt(ss / (n - 1.0) / n);
  }
  res.mean_final_fidelity = mean;
  res.ci_half_width = ci;
  res.mean_initial_fidelity = init_sum / n;
  res.mean_final_reward = reward_sum / n;
  res.reach_fraction = double(reached) / n;
  return res;
}

EvalReport evaluate(const ppo::PolicySpec& policy, const rep::RepNet& net,
                    const std::vector<ScenarioSpec>& scenarios,
                    const EnvBuild& build, const EpisodeConfig& base_cfg,
                    int n_experiments, std::uint64_t seed, ActionMode mode) {
  require(!scenarios.empty(), "evaluate: scenario list is empty");
  EvalReport report;
  report.scenarios.reserve(scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    auto env = make_environment(scenarios[i], build);
    EpisodeConfig cfg = base_cfg;
    cfg.max_steps = scenarios[i].max_steps;
    ScenarioResult res =
        evaluate_scenario(*env, policy, net, cfg, n_experiments,
                          derive_seed(seed, std::uint64_t(i)), mode);
    res.name = scenarios[i].name;
    report.scenarios.push_back(std::move(res));
  }
  return report;
}

}  // namespace qsteer::ctl
