#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qsteer/common.hpp"
#include "qsteer/cv_env.hpp"
#include "qsteer/ppo.hpp"
#include "qsteer/qcore.hpp"
#include "qsteer/repnet.hpp"
#include "qsteer/rng.hpp"
#include "qsteer/spin_env.hpp"

// The control loop: environments expose measurement statistics of an
// otherwise hidden quantum state; the agent observes only encoder outputs
// and is rewarded by distance to the target in representation space.
// Ground-truth states and fidelities are tracked for diagnostics but never
// enter the observation.
//
// Reward timing: the reward attached to step k is computed from the state
// *before* action k, so an episode that starts at the target terminates
// immediately without acting.

namespace qsteer::ctl {

// -scale * ||rep_now - rep_target|| / sqrt(d). Nonpositive; zero only when
// the representations coincide.
double reward(const VectorXd& rep_now, const VectorXd& rep_target,
              double scale, int d);

// Per-distribution distortions applied to every measured statistic, in
// order: multinomial finite-shot resampling (shots > 0), then additive
// Gaussian noise of variance sigma2 with clip-and-renormalize. The target's
// statistics always stay exact.
struct NoiseModel {
  double sigma2 = 0.0;
  long shots = 0;
  bool active() const { return sigma2 > 0.0 || shots > 0; }
};

// Uniform contract over the controllable quantum systems. Implementations
// are deterministic given the reset seed; measure() consumes the internal
// noise stream, so call order matters when noise is active.
class Environment {
 public:
  virtual ~Environment() = default;

  // Draws the episode's initial configuration (and, where configured, a
  // fresh target), resets the step counter and reseeds the noise stream.
  virtual void reset(std::uint64_t seed) = 0;
  virtual void step(const std::vector<int>& actions) = 0;
  // Logit-block widths for the policy, one entry per action factor.
  virtual std::vector<int> action_structure() const = 0;

  // One (encoding, outcome distribution) pair per configured measurement,
  // noise model applied.
  virtual std::vector<rep::MeasurementPair> measure() = 0;
  // Noiseless statistics of the target under the same measurement set.
  virtual std::vector<rep::MeasurementPair> target_measurement_pairs() = 0;

  // Ground truth for diagnostics only; never shown to the agent.
  virtual const qc::QuantumState& current_state() = 0;
  virtual const qc::QuantumState& target_state() = 0;

  virtual VectorXd params() const = 0;
  virtual VectorXd target_params() const = 0;

  // Memoization key: within one instance, equal keys guarantee identical
  // measure() statistics (before noise).
  virtual std::string state_key() const = 0;
  virtual bool deterministic_measurements() const = 0;
  virtual std::string name() const = 0;
};

// Deterministic eigensolver seeds shared by the environments and the
// dataset generator, so both see bit-identical ground states.
std::uint64_t xxz_cell_seed(std::uint64_t measurement_seed, long kj, long kd);
std::uint64_t ising_cell_seed(std::uint64_t measurement_seed,
                              const std::vector<double>& couplings,
                              double step);

// The Ising environments' fixed measurement bases. Drawing n + k bases with
// one seed yields the n-basis set as a prefix, so held-out query bases can
// extend a control set.
std::vector<std::vector<qc::Pauli>> draw_ising_bases(
    int n_qubits, int n_bases, std::uint64_t measurement_seed);

// Memoizes encoder outputs per state_key for noise-free environments;
// recomputes every time when measurements are stochastic.
class RepCache {
 public:
  VectorXd get(Environment& env, const rep::RepNet& net);

 private:
  static constexpr std::size_t kMaxEntries = 100000;
  std::map<std::string, VectorXd> by_key_;
};

// ---------------------------------------------------------------------------
// Environments

struct XxzEnvOptions {
  int n_qubits = 8;
  int n_measurements = 50;
  std::uint64_t measurement_seed = 2024;  // fixed Pauli-window set
  double target_j = 0.45;
  double target_delta = 1.0;
  // Unset: uniform over the 21x21 grid excluding the target cell.
  std::optional<std::pair<double, double>> fixed_initial;
  NoiseModel noise;
};

class XxzEnv final : public Environment {
 public:
  explicit XxzEnv(const XxzEnvOptions& opt);

  void reset(std::uint64_t seed) override;
  void step(const std::vector<int>& actions) override;
  std::vector<int> action_structure() const override { return {8}; }
  std::vector<rep::MeasurementPair> measure() override;
  std::vector<rep::MeasurementPair> target_measurement_pairs() override;
  const qc::QuantumState& current_state() override;
  const qc::QuantumState& target_state() override;
  VectorXd params() const override;
  VectorXd target_params() const override;
  std::string state_key() const override;
  bool deterministic_measurements() const override { return !opt_.noise.active(); }
  std::string name() const override { return "xxz"; }

  const std::vector<spin::PauliWindow>& windows() const { return windows_; }

 private:
  struct Cell {
    qc::QuantumState state;
    std::vector<OutcomeDistribution> stats;  // one per window, exact
  };
  const Cell& cell(const spin::XxzParams& p);
  std::vector<rep::MeasurementPair> noisy_pairs(const Cell& c);

  XxzEnvOptions opt_;
  std::vector<spin::PauliWindow> windows_;
  std::vector<VectorXd> encodings_;
  spin::XxzParams params_, target_;
  std::map<long, Cell> cells_;
  Rng noise_rng_{0};
};

struct IsingEnvOptions {
  int n_qubits = 6;
  int n_bases = 5;
  std::uint64_t measurement_seed = 2024;  // fixed full-basis set
  double action_step = 0.1;
  std::vector<double> target_couplings;   // length n_qubits - 1
  // Unset: each coupling uniform over the step lattice, target excluded.
  std::optional<std::vector<double>> fixed_initial;
  NoiseModel noise;
};

class IsingEnv final : public Environment {
 public:
  explicit IsingEnv(const IsingEnvOptions& opt);

  void reset(std::uint64_t seed) override;
  void step(const std::vector<int>& actions) override;
  std::vector<int> action_structure() const override;
  std::vector<rep::MeasurementPair> measure() override;
  std::vector<rep::MeasurementPair> target_measurement_pairs() override;
  const qc::QuantumState& current_state() override;
  const qc::QuantumState& target_state() override;
  VectorXd params() const override;
  VectorXd target_params() const override;
  std::string state_key() const override;
  bool deterministic_measurements() const override { return !opt_.noise.active(); }
  std::string name() const override { return "ising"; }

  const std::vector<std::vector<qc::Pauli>>& bases() const { return bases_; }

 private:
  struct Cell {
    qc::QuantumState state;
    std::vector<OutcomeDistribution> stats;
  };
  Cell solve_cell(const spin::IsingParams& p) const;
  // References into the capped cache are valid until the next call on the
  // environment; the target cell is pinned outside it.
  const Cell& cell(const spin::IsingParams& p);
  const Cell& target_cell();
  std::vector<rep::MeasurementPair> noisy_pairs(const Cell& c);
  std::string key_of(const spin::IsingParams& p) const;

  IsingEnvOptions opt_;
  std::vector<std::vector<qc::Pauli>> bases_;
  std::vector<VectorXd> encodings_;
  spin::IsingParams params_, target_;
  std::map<std::string, Cell> cells_;
  std::optional<Cell> target_cell_;
  Rng noise_rng_{0};
};

struct CatEnvOptions {
  int cutoff = 64;  // admits |alpha| <= 3 under the truncation precondition
  int n_thetas = 3;
  std::uint64_t measurement_seed = 2024;  // fixed quadrature angles
  cxd target_alpha{0.5, -1.8};
  std::optional<cxd> fixed_initial;  // unset: uniform over |alpha| <= init_radius
  double init_radius = 2.5;
  double max_abs = 3.0;
  double beta0 = 0.3;
  // Step size beta_t = (1 - (t-1)/horizon) * beta0 within each episode;
  // constant_beta pins it at beta0 instead.
  int horizon = 20;
  bool constant_beta = false;
  // false: single factor of 8 stencil moves; true: two factors of 3 moves
  // each (per-axis -beta/0/+beta, including the joint no-op).
  bool factored_actions = false;
  NoiseModel noise;
};

class CatEnv final : public Environment {
 public:
  explicit CatEnv(const CatEnvOptions& opt);

  void reset(std::uint64_t seed) override;
  void step(const std::vector<int>& actions) override;
  std::vector<int> action_structure() const override;
  std::vector<rep::MeasurementPair> measure() override;
  std::vector<rep::MeasurementPair> target_measurement_pairs() override;
  const qc::QuantumState& current_state() override;
  const qc::QuantumState& target_state() override;
  VectorXd params() const override;
  VectorXd target_params() const override;
  std::string state_key() const override;
  bool deterministic_measurements() const override { return !opt_.noise.active(); }
  std::string name() const override { return "cat"; }

  const std::vector<double>& thetas() const { return thetas_; }
  double beta_at(int t) const;  // t is the 1-based step index

 private:
  std::vector<rep::MeasurementPair> pairs_of(const qc::QuantumState& psi,
                                             bool with_noise);

  CatEnvOptions opt_;
  std::vector<double> thetas_;
  std::vector<VectorXd> encodings_;
  cv::HomodyneWorkspace ws_;
  cxd alpha_;
  int steps_taken_ = 0;
  std::optional<qc::QuantumState> state_, target_state_;
  std::optional<std::vector<rep::MeasurementPair>> target_pairs_;
  Rng noise_rng_{0};
};

struct ProcessEnvOptions {
  int cutoff = 64;
  int n_thetas = 3;
  std::uint64_t measurement_seed = 2024;
  double dr = 0.09;
  double dpsi = 0.06 * cv::kPi;
  double r_max = 3.0;
  // Unset: a fresh target input is drawn at every reset (random-pair task).
  std::optional<cv::DisplacementParams> fixed_target;
  std::optional<cv::DisplacementParams> fixed_initial;
  NoiseModel noise;
};

// Kerr process output control: the hidden state is U(D(r e^{i psi})|0>)
// with U the unit-time self-Kerr gate; actions tune (r, psi).
class ProcessEnv final : public Environment {
 public:
  explicit ProcessEnv(const ProcessEnvOptions& opt);

  void reset(std::uint64_t seed) override;
  void step(const std::vector<int>& actions) override;
  std::vector<int> action_structure() const override { return {4}; }
  std::vector<rep::MeasurementPair> measure() override;
  std::vector<rep::MeasurementPair> target_measurement_pairs() override;
  const qc::QuantumState& current_state() override;
  const qc::QuantumState& target_state() override;
  VectorXd params() const override;
  VectorXd target_params() const override;
  std::string state_key() const override;
  bool deterministic_measurements() const override { return !opt_.noise.active(); }
  std::string name() const override { return "process_output"; }

  const std::vector<double>& thetas() const { return thetas_; }

 private:
  qc::QuantumState output_of(const cv::DisplacementParams& p) const;
  std::vector<rep::MeasurementPair> pairs_of(const qc::QuantumState& psi,
                                             bool with_noise);

  ProcessEnvOptions opt_;
  std::vector<double> thetas_;
  std::vector<VectorXd> encodings_;
  cv::HomodyneWorkspace ws_;
  cv::DisplacementParams params_, target_;
  std::optional<qc::QuantumState> state_, target_state_;
  std::optional<std::vector<rep::MeasurementPair>> target_pairs_;
  Rng noise_rng_{0};
};

// ---------------------------------------------------------------------------
// Scenarios

// Plain-data task description; parameter packing per task:
//   xxz            (j_ratio, delta)
//   ising          (J_0..J_{L-2})
//   cat            (Re alpha, Im alpha)
//   process_output (r, psi)
// An empty vector means "drawn at random per episode".
struct ScenarioSpec {
  std::string name;
  std::string task;  // xxz | ising | cat | process_output
  VectorXd initial;
  VectorXd target;
  int max_steps = 30;
};

// The full task catalog: five XXZ phase-steering scenarios, four cat-state
// scenarios sharing one target, four Ising target states, and the
// random-pair process-output task.
std::vector<ScenarioSpec> scenario_catalog();

// Shared environment-construction knobs (measurement sets, noise, sizes).
struct EnvBuild {
  std::uint64_t measurement_seed = 2024;
  NoiseModel noise;
  int xxz_qubits = 8;
  int xxz_measurements = 50;
  int ising_bases = 5;
  double ising_action_step = 0.1;
  int cv_cutoff = 64;
  int cv_thetas = 3;
  double cat_beta0 = 0.3;
  bool cat_constant_beta = false;
  bool cat_factored_actions = false;
  double cat_init_radius = 2.5;
};

std::unique_ptr<Environment> make_environment(const ScenarioSpec& spec,
                                              const EnvBuild& build);

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeConfig {
  int max_steps = 30;          // 30 xxz, 20 cat, 50 ising, 55 process
  double reward_scale = 10.0;  // C
  // Termination bound on |reward|; nonpositive selects the default
  // 0.05 * C / sqrt(d), i.e. raw representation distance <= 0.05.
  double terminate_eps = -1.0;
  // Append the target representation to the observation (required for
  // tasks whose target varies per episode).
  bool concat_target = false;
};

double effective_terminate_eps(const EpisodeConfig& cfg, int d);

enum class ActionMode { Greedy, Sample, Random };

// Row `step` describes the state after `step` actions; row 0 is the initial
// snapshot and carries no action.
struct StepRecord {
  int step = 0;
  std::vector<int> actions;
  double reward = 0.0;        // representation reward of this state
  double rep_distance = 0.0;  // raw ||rep - rep_target||
  double fidelity = 0.0;      // ground truth, diagnostics only
  VectorXd params;
};

struct Trajectory {
  std::vector<StepRecord> steps;  // steps.front() is the initial snapshot
  bool reached_target = false;
  int actions_taken() const { return int(steps.size()) - 1; }
  const StepRecord& final_step() const { return steps.back(); }
};

// One episode: at each round, measure, encode, reward; stop at the target
// (|reward| <= terminate_eps) or after max_steps actions, else act.
// Numeric failures abort with the step index in the message. `cache`, when
// given, memoizes encoder outputs across episodes of the same environment.
Trajectory run_episode(Environment& env, const ppo::PolicySpec& policy,
                       const rep::RepNet& net, const EpisodeConfig& cfg,
                       std::uint64_t seed, ActionMode mode = ActionMode::Greedy,
                       RepCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  EpisodeConfig episode;
  ppo::PpoHyper hyper;  // total_steps environment steps, k_step per update
  std::uint64_t seed = 1;
};

struct UpdateRecord {
  int update = 0;  // 1-based
  double lr = 0.0;
  double mean_reward = 0.0;          // over the rollout's transitions
  double mean_episode_return = 0.0;  // undiscounted, episodes ended here
  int episodes_finished = 0;
  ppo::UpdateDiagnostics diag;
};

struct TrainResult {
  ppo::PolicySpec policy;
  std::vector<UpdateRecord> log;
};

// Alternates k_step rollout collection (across episode boundaries, with
// value bootstrap on truncation) and PPO updates for floor(total_steps /
// k_step) updates under the annealed learning rate. Deterministic in seed.
TrainResult train_rgrl(Environment& env, const rep::RepNet& net,
                       const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation

struct ScenarioResult {
  std::string name;
  int n_experiments = 0;
  double mean_final_fidelity = 0.0;
  double ci_half_width = 0.0;  // 1.96 s / sqrt(n), normal approximation
  bool ci_degenerate = false;  // n == 1: interval width is meaningless
  double mean_initial_fidelity = 0.0;
  double mean_final_reward = 0.0;
  double reach_fraction = 0.0;  // episodes that hit the termination bound
  std::vector<Trajectory> trajectories;
};

struct EvalReport {
  std::vector<ScenarioResult> scenarios;
};

// Experiment e of scenario s runs with seed derive_seed(derive_seed(seed, s), e).
ScenarioResult evaluate_scenario(Environment& env,
                                 const ppo::PolicySpec& policy,
                                 const rep::RepNet& net,
                                 const EpisodeConfig& cfg, int n_experiments,
                                 std::uint64_t seed,
                                 ActionMode mode = ActionMode::Greedy);

EvalReport evaluate(const ppo::PolicySpec& policy, const rep::RepNet& net,
                    const std::vector<ScenarioSpec>& scenarios,
                    const EnvBuild& build, const EpisodeConfig& base_cfg,
                    int n_experiments, std::uint64_t seed,
                    ActionMode mode = ActionMode::Greedy);

}  // namespace qsteer::ctl
