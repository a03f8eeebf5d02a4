// End-to-end acceptance harness. Each test case checks one release criterion
// and prints a single [PASS]/[FAIL] line with the measured numbers; doctest
// assertions mirror the verdicts so ctest fails when a criterion fails.
//
// Heavy artifacts (datasets, representation networks, trained policies) are
// built through the public pipeline commands into --work-dir and reused when
// already present, so a re-run after an interrupted session is incremental.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qsteer/cli_io.hpp"
#include "qsteer/control.hpp"
#include "qsteer/cv_env.hpp"
#include "qsteer/neural.hpp"
#include "qsteer/ppo.hpp"
#include "qsteer/qcore.hpp"
#include "qsteer/repnet.hpp"
#include "qsteer/rng.hpp"
#include "qsteer/spin_env.hpp"

using namespace qsteer;
namespace fs = std::filesystem;

namespace {

std::string g_work = "acceptance_work";

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void note(const std::string& msg) {
  std::printf("        %s\n", msg.c_str());
  std::fflush(stdout);
}

void report(const std::string& criterion, bool ok, const std::string& details) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", criterion.c_str(),
              details.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, criterion << ": " << details);
}

std::string fmt(double x, int digits = 3) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

// ---------------------------------------------------------------------------
// Artifact pipeline (cached on disk under g_work)

io::RunConfig task_config(const std::string& task, const std::string& sub) {
  io::RunConfig cfg;
  cfg.task = task;
  cfg.out_dir = g_work + "/" + sub;
  // Training and evaluation share run-out-the-horizon episode semantics:
  // the default representation-reach bound can fire on states that merely
  // alias the target in representation space, which teaches policies to
  // rush-and-stop instead of parking on the target.
  cfg.terminate_eps = 1e-9;
  return cfg;
}

void build_if_missing(const std::string& path, const std::string& label,
                      const std::function<int()>& make) {
  if (fs::exists(path)) return;
  const double t0 = now_seconds();
  const int rc = make();
  REQUIRE_MESSAGE(rc == 0, label << " exited with status " << rc);
  note(label + " built in " + fmt(now_seconds() - t0, 1) + " s");
}

void copy_into(const std::string& src_dir, const std::string& dst_dir,
               const std::vector<std::string>& files) {
  fs::create_directories(dst_dir);
  for (const auto& f : files)
    if (!fs::exists(dst_dir + "/" + f))
      fs::copy_file(src_dir + "/" + f, dst_dir + "/" + f);
}

void ensure_dataset(const io::RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  build_if_missing(cfg.out_dir + "/dataset.json", cfg.task + " dataset",
                   [&] { return io::cmd_gen_data(cfg); });
}

void ensure_repnet(const io::RunConfig& cfg) {
  ensure_dataset(cfg);
  build_if_missing(cfg.out_dir + "/repnet.json",
                   cfg.task + " repnet (" + cfg.repnet_mode + ")",
                   [&] { return io::cmd_train_repnet(cfg); });
}

void ensure_policy(const io::RunConfig& cfg) {
  ensure_repnet(cfg);
  build_if_missing(cfg.out_dir + "/policy.json",
                   cfg.task + " policy (" + cfg.scenario + ")",
                   [&] { return io::cmd_train_agent(cfg); });
}

// ---------------------------------------------------------------------------
// In-process evaluation on catalog scenarios with full-horizon episodes.
// terminate_eps is pinned tiny so every criterion sees fidelity at the
// horizon rather than wherever the representation reach bound fires.

constexpr double kRunOutHorizon = 1e-9;

std::vector<ctl::ScenarioSpec> pick_scenarios(const std::vector<std::string>& names) {
  std::vector<ctl::ScenarioSpec> out;
  for (const auto& want : names) {
    bool found = false;
    for (const auto& s : ctl::scenario_catalog())
      if (s.name == want) {
        out.push_back(s);
        found = true;
      }
    REQUIRE_MESSAGE(found, "unknown scenario " << want);
  }
  return out;
}

ctl::EvalReport run_eval(const io::RunConfig& cfg,
                         const std::vector<std::string>& names, int n,
                         std::uint64_t seed, ctl::ActionMode mode) {
  const io::RepnetArtifact art = io::load_repnet(cfg.out_dir + "/repnet.json");
  const io::PolicyArtifact pol = io::load_policy(cfg.out_dir + "/policy.json");
  ctl::EpisodeConfig ecfg;
  ecfg.terminate_eps = kRunOutHorizon;
  ecfg.concat_target = pol.concat_target;
  return ctl::evaluate(pol.policy, art.net, pick_scenarios(names),
                       io::env_build(cfg), ecfg, n, seed, mode);
}

// Mean fidelity per step index across all experiments of one scenario.
// Requires every trajectory to span the full horizon.
std::vector<double> mean_fidelity_curve(const ctl::ScenarioResult& res) {
  REQUIRE(!res.trajectories.empty());
  const std::size_t len = res.trajectories.front().steps.size();
  std::vector<double> mean(len, 0.0);
  for (const auto& tr : res.trajectories) {
    REQUIRE(tr.steps.size() == len);
    for (std::size_t t = 0; t < len; ++t) mean[t] += tr.steps[t].fidelity;
  }
  for (double& m : mean) m /= double(res.trajectories.size());
  return mean;
}

// Shared measurements handed between criteria.
struct SharedResults {
  std::map<std::string, double> cat_noiseless;       // scenario -> mean fid
  std::map<std::string, double> xxz_generative_fid;  // scenario -> mean fid
};
SharedResults g_shared;

// ---------------------------------------------------------------------------
// Pipelines

// The cat dataset and encoder are shared by every cat agent; each control
// scenario gets its own policy trained from that scenario's fixed initial
// state. An even cat state equals its sign-flipped twin, so observations
// cannot distinguish +alpha from -alpha and randomized-initial training
// pits the two mirrored optimal actions against each other.
io::RunConfig cat_agent_pipeline(int scenario_index, bool noisy) {
  io::RunConfig base = task_config("cat", "cat");
  ensure_repnet(base);
  io::RunConfig cfg = base;
  cfg.out_dir = g_work + (noisy ? "/catn_s" : "/cat_s") +
                std::to_string(scenario_index);
  cfg.scenario = "cat_" + std::to_string(scenario_index);
  cfg.random_init = false;
  // The dataset holds exact statistics and the repnet is trained on them;
  // noise enters at control time only, so both artifacts carry over.
  if (noisy) cfg.noise_sigma2 = 0.1;
  copy_into(base.out_dir, cfg.out_dir, {"dataset.json", "repnet.json"});
  ensure_policy(cfg);
  return cfg;
}

io::RunConfig process_pipeline() {
  io::RunConfig cfg = task_config("process_output", "process");
  cfg.scenario = "process_random";
  cfg.ppo.total_steps = 200000;  // random-pair task: richer initial/target mix
  ensure_policy(cfg);
  return cfg;
}

io::RunConfig xxz_pipeline(const std::string& mode) {
  io::RunConfig cfg = task_config("xxz", mode == "generative" ? "xxz" : "xxz_prop");
  cfg.repnet_mode = mode;
  cfg.scenario = "xxz_tr_to_tp";  // target cell shared by both desk scenarios
  cfg.ppo.total_steps = 200000;   // randomized initial cells on the full grid
  if (mode != "generative") {
    const io::RunConfig gen = task_config("xxz", "xxz");
    ensure_dataset(gen);
    copy_into(gen.out_dir, cfg.out_dir, {"dataset.json"});
  }
  ensure_policy(cfg);
  return cfg;
}

io::RunConfig ising_pipeline(const std::string& scenario) {
  io::RunConfig cfg = task_config("ising", scenario == "ising_1" ? "ising1" : "ising2");
  cfg.scenario = scenario;
  // Each agent trains along its own corridor from the catalog's fixed
  // initial couplings; representation distance is only reliably aligned
  // with fidelity near that corridor.
  cfg.random_init = false;
  if (scenario != "ising_1") {
    io::RunConfig first = task_config("ising", "ising1");
    ensure_repnet(first);
    copy_into(first.out_dir, cfg.out_dir, {"dataset.json", "repnet.json"});
  }
  ensure_policy(cfg);
  return cfg;
}

}  // namespace

// ===========================================================================

TEST_CASE("criterion 1: cat-state control, noiseless") {
  bool ok = true;
  std::string details;
  for (int k = 1; k <= 4; ++k) {
    const io::RunConfig cfg = cat_agent_pipeline(k, false);
    const ctl::EvalReport rep =
        run_eval(cfg, {cfg.scenario}, 50, 501, ctl::ActionMode::Greedy);
    const auto& res = rep.scenarios.front();
    g_shared.cat_noiseless[res.name] = res.mean_final_fidelity;
    ok = ok && res.mean_final_fidelity >= 0.90;
    details += res.name + "=" + fmt(res.mean_final_fidelity) + " ";
  }
  report("cat noiseless (mean fidelity >= 0.90 per scenario, n=50, 20 steps)",
         ok, details);
}

TEST_CASE("criterion 2: cat-state control under measurement noise") {
  REQUIRE_MESSAGE(g_shared.cat_noiseless.size() == 4,
                  "noiseless fidelities unavailable");
  // Catalog order is increasing initial amplitude.
  std::vector<double> degradation;
  std::string details;
  for (int k = 1; k <= 4; ++k) {
    const io::RunConfig cfg = cat_agent_pipeline(k, true);
    const ctl::EvalReport rep =
        run_eval(cfg, {cfg.scenario}, 50, 502, ctl::ActionMode::Greedy);
    const auto& res = rep.scenarios.front();
    const double deg = g_shared.cat_noiseless.at(res.name) - res.mean_final_fidelity;
    degradation.push_back(deg);
    details += res.name + " deg=" + fmt(deg) + " ";
  }
  const bool small_ok = degradation[0] <= 0.15;
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < degradation.size(); ++i)
    if (degradation[i + 1] < degradation[i]) ++inversions;
  const bool trend_ok = inversions <= 1;
  details += "| smallest<=0.15: " + std::string(small_ok ? "yes" : "no") +
             ", inversions=" + std::to_string(inversions);
  report("cat noisy sigma2=0.1 (small-amplitude degradation <= 0.15, "
         "monotone trend up to one inversion)",
         small_ok && trend_ok, details);
}

TEST_CASE("criterion 3: process-output generation over random pairs") {
  const io::RunConfig cfg = process_pipeline();
  const ctl::EvalReport rep =
      run_eval(cfg, {"process_random"}, 50, 503, ctl::ActionMode::Greedy);
  const ctl::ScenarioResult& res = rep.scenarios.front();

  const std::vector<double> curve = mean_fidelity_curve(res);
  const double final_fid = curve.back();
  const bool fid_ok = final_fid >= 0.85;

  // Trailing 5-step moving average must never decrease.
  std::vector<double> ma;
  for (std::size_t t = 4; t < curve.size(); ++t)
    ma.push_back((curve[t] + curve[t - 1] + curve[t - 2] + curve[t - 3] +
                  curve[t - 4]) /
                 5.0);
  bool monotone = true;
  for (std::size_t t = 0; t + 1 < ma.size(); ++t)
    if (ma[t + 1] < ma[t] - 1e-9) monotone = false;

  report("process output (mean fidelity at step 55 >= 0.85 and nondecreasing "
         "5-step moving average, n=50 random pairs)",
         fid_ok && monotone,
         "final=" + fmt(final_fid) + ", initial=" + fmt(curve.front()) +
             ", monotone=" + (monotone ? std::string("yes") : std::string("no")));
}

TEST_CASE("criterion 4: spin-chain steering at desk scale") {
  const io::RunConfig cfg = xxz_pipeline("generative");
  const std::vector<std::string> names = {"xxz_tr_to_tp", "xxz_sb_to_tp"};
  const int n = 100;
  const ctl::EvalReport trained =
      run_eval(cfg, names, n, 504, ctl::ActionMode::Greedy);
  const ctl::EvalReport random_base =
      run_eval(cfg, names, n, 504, ctl::ActionMode::Random);

  // Target grid node and one-grid-step cell tolerance.
  const double jt = 0.45, dt = 1.0;
  const double ej = spin::kXxzStepJ + 1e-9, ed = spin::kXxzStepD + 1e-9;

  bool ok = true;
  std::string details;
  for (std::size_t i = 0; i < trained.scenarios.size(); ++i) {
    const auto& res = trained.scenarios[i];
    int reached = 0;
    for (const auto& tr : res.trajectories) {
      const bool hit = std::any_of(
          tr.steps.begin(), tr.steps.end(), [&](const ctl::StepRecord& s) {
            return std::abs(s.params[0] - jt) <= ej &&
                   std::abs(s.params[1] - dt) <= ed;
          });
      if (hit) ++reached;
    }
    const double frac = double(reached) / double(n);
    const double lift =
        res.mean_final_fidelity - random_base.scenarios[i].mean_final_fidelity;
    g_shared.xxz_generative_fid[res.name] = res.mean_final_fidelity;
    ok = ok && frac >= 0.70 && lift >= 0.2;
    details += res.name + " reach=" + fmt(frac, 2) + " fid=" +
               fmt(res.mean_final_fidelity) + " lift=" + fmt(lift) + " ";
  }
  report("spin-chain desk scale (target cell reached in >= 70% of 100 "
         "episodes; fidelity lift over random >= 0.2)",
         ok, details);
}

TEST_CASE("criterion 5: property-trained representation at least as good") {
  REQUIRE_MESSAGE(g_shared.xxz_generative_fid.size() == 2,
                  "generative fidelities unavailable");
  const io::RunConfig cfg = xxz_pipeline("property");
  const std::vector<std::string> names = {"xxz_tr_to_tp", "xxz_sb_to_tp"};
  const ctl::EvalReport rep =
      run_eval(cfg, names, 100, 504, ctl::ActionMode::Greedy);

  bool ok = true;
  std::string details;
  for (const auto& res : rep.scenarios) {
    const double gen = g_shared.xxz_generative_fid.at(res.name);
    ok = ok && res.mean_final_fidelity >= gen - 0.02;
    details += res.name + " property=" + fmt(res.mean_final_fidelity) +
               " generative=" + fmt(gen) + " ";
  }
  report("representation-quality ordering (property >= generative - 0.02 "
         "per scenario, identical training settings)",
         ok, details);
}

TEST_CASE("criterion 6: transverse-field chain control is better than chance") {
  bool ok = true;
  std::string details;
  for (const std::string scen : {"ising_1", "ising_2"}) {
    const io::RunConfig cfg = ising_pipeline(scen);
    const ctl::EvalReport trained =
        run_eval(cfg, {scen}, 50, 506, ctl::ActionMode::Greedy);
    const ctl::EvalReport random_base =
        run_eval(cfg, {scen}, 50, 506, ctl::ActionMode::Random);
    const auto& res = trained.scenarios.front();
    const double base = random_base.scenarios.front().mean_final_fidelity;
    ok = ok && res.mean_final_fidelity > res.mean_initial_fidelity &&
         res.mean_final_fidelity > base;
    details += scen + " final=" + fmt(res.mean_final_fidelity) + " initial=" +
               fmt(res.mean_initial_fidelity) + " random=" + fmt(base) + " ";
  }
  report("coupling-profile steering (mean fidelity at 50 steps exceeds the "
         "initial and the random baseline)",
         ok, details);
}

// ===========================================================================
// Criterion 7: properties that must hold with no trained models.

namespace {

double* mlp_param_at(nn::Mlp& net, long idx) {
  for (auto& l : net.layers) {
    if (idx < l.w.size()) return l.w.data() + idx;
    idx -= l.w.size();
    if (idx < l.b.size()) return l.b.data() + idx;
    idx -= l.b.size();
  }
  return nullptr;
}

double mlp_grad_at(const nn::Gradients& g, long idx) {
  for (const auto& l : g.layers) {
    if (idx < l.w.size()) return *(l.w.data() + idx);
    idx -= l.w.size();
    if (idx < l.b.size()) return *(l.b.data() + idx);
    idx -= l.b.size();
  }
  return 0.0;
}

double gradient_check(const std::vector<int>& widths, nn::OutputActivation act,
                      std::uint64_t seed) {
  nn::Mlp net = nn::init_mlp(widths, seed, act);
  Rng rng(seed + 9);
  const int batch = 3;
  MatrixXd x(batch, widths.front()), c(batch, widths.back());
  for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  for (long i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);

  nn::ForwardCache cache;
  nn::mlp_forward(net, x, &cache);
  nn::Gradients g = nn::zero_like(net);
  nn::mlp_backward(net, cache, c, g);

  long n_params = 0;
  for (const auto& l : net.layers) n_params += l.w.size() + l.b.size();

  double worst = 0.0;
  const double h = 1e-5;
  for (int k = 0; k < 25; ++k) {
    const long idx = long(rng.uniform_int(std::uint64_t(n_params)));
    double* p = mlp_param_at(net, idx);
    const double orig = *p;
    *p = orig + h;
    const double up = (nn::mlp_forward(net, x).array() * c.array()).sum();
    *p = orig - h;
    const double dn = (nn::mlp_forward(net, x).array() * c.array()).sum();
    *p = orig;
    const double fd = (up - dn) / (2.0 * h);
    const double an = mlp_grad_at(g, idx);
    worst = std::max(worst, std::abs(fd - an) /
                                std::max({std::abs(fd), std::abs(an), 1e-8}));
  }
  return worst;
}

double gaussian_bin_mass(double a, double b) {
  // Vacuum quadrature distribution: N(0, 1/4).
  return 0.5 * (std::erf(b * std::sqrt(2.0)) - std::erf(a * std::sqrt(2.0)));
}

}  // namespace

TEST_CASE("criterion 7: property suite with no trained models") {
  bool all_ok = true;
  std::string fails;
  auto sub = [&](const std::string& name, bool ok, const std::string& info) {
    note(std::string(ok ? "ok  " : "FAIL") + "  " + name +
         (info.empty() ? "" : " (" + info + ")"));
    if (!ok) fails += name + " ";
    all_ok = all_ok && ok;
  };

  {  // Iterative ground states match the dense solver on 50 random chains.
    Rng rng(7101);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      qc::SparseHermitian h = [&]() {
        if (i % 2 == 0) {
          spin::XxzParams p;
          p.n_qubits = 4 + 2 * int(rng.uniform_int(3));  // 4, 6, 8
          p.j_ratio = rng.uniform(0.0, 3.0);
          p.delta = rng.uniform(0.0, 4.0);
          return spin::build_xxz_hamiltonian(p);
        }
        spin::IsingParams p;
        p.n_qubits = 5 + int(rng.uniform_int(4));  // 5..8
        p.couplings.resize(std::size_t(p.n_qubits - 1));
        for (double& c : p.couplings) c = rng.uniform(-0.9, 0.9);
        return spin::build_ising_hamiltonian(p);
      }();
      const auto gs = qc::lanczos_ground_state(h, 1000 + std::uint64_t(i));
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h.dense());
      worst = std::max(worst, std::abs(gs.energy - es.eigenvalues()[0]));
    }
    sub("ground-state energies vs dense oracle <= 1e-8", worst <= 1e-8,
        "worst " + fmt(worst, 12));
  }

  {  // Homodyne statistics of the vacuum match the Gaussian closed form.
    const auto psi = cv::coherent_state(cxd(0.0, 0.0), 40);
    const cv::HomodyneSpec spec;
    const OutcomeDistribution d = cv::homodyne_distribution(psi, spec);
    double worst = 0.0;
    const double width = (spec.xmax - spec.xmin) / double(spec.bins);
    for (int b = 0; b < spec.bins; ++b) {
      const double a = spec.xmin + b * width;
      worst = std::max(worst, std::abs(d[b] - gaussian_bin_mass(a, a + width)));
    }
    sub("homodyne vacuum vs Gaussian <= 1e-6", worst <= 1e-6,
        "worst " + fmt(worst, 9));
  }

  {  // The cat state is an eigenstate of the Kerr Hamiltonian.
    const cxd alpha(0.5, -1.8);
    const auto cat = cv::cat_state(alpha, 64);
    const auto h = cv::kerr_hamiltonian(alpha, 64);
    const double ev = std::pow(std::abs(alpha), 4.0);
    const double resid = (h.apply(cat.amps()) - ev * cat.amps()).norm();
    sub("cat eigenstate residual <= 1e-6", resid <= 1e-6, "resid " + fmt(resid, 9));
  }

  {  // Kerr gate phases, exact on basis states.
    VectorXcd c = VectorXcd::Zero(8);
    c[3] = 1.0;
    const auto out = cv::kerr_gate(qc::QuantumState(c));
    const bool phase_ok = out.amps()[3] == std::exp(cxd(0.0, -6.0));
    VectorXcd low = VectorXcd::Zero(8);
    low[0] = std::sqrt(0.5);
    low[1] = std::sqrt(0.5);
    const bool low_ok = (cv::kerr_gate(qc::QuantumState(low)).amps() - low).norm() == 0.0;
    sub("Kerr-gate diagonal phases exact", phase_ok && low_ok, "");
  }

  {  // Backpropagation vs central differences on the four network shapes.
    const std::vector<std::pair<std::vector<int>, nn::OutputActivation>> archs = {
        {{23, 128, 128, 32}, nn::OutputActivation::Identity},
        {{47, 128, 128, 8}, nn::OutputActivation::Softmax},
        {{32, 64, 64, 8}, nn::OutputActivation::Identity},
        {{32, 64, 64, 1}, nn::OutputActivation::Identity}};
    double worst = 0.0;
    for (std::size_t a = 0; a < archs.size(); ++a)
      for (int s = 0; s < 5; ++s)
        worst = std::max(worst, gradient_check(archs[a].first, archs[a].second,
                                               500 * a + std::uint64_t(s)));
    sub("gradient checks <= 1e-5 on all four architectures", worst <= 1e-5,
        "worst " + fmt(worst, 8));
  }

  {  // Clipped-surrogate value table.
    const bool ok = std::abs(ppo::ppo_clip_objective(1.5, 1.0, 0.2) - 1.2) < 1e-12 &&
                    std::abs(ppo::ppo_clip_objective(0.5, -1.0, 0.2) + 0.8) < 1e-12 &&
                    std::abs(ppo::ppo_clip_objective(1.5, -1.0, 0.2) + 1.5) < 1e-12 &&
                    std::abs(ppo::ppo_clip_objective(1.05, 2.0, 0.2) - 2.1) < 1e-12 &&
                    std::abs(ppo::ppo_clip_objective(1.0, 0.0, 0.2)) < 1e-12;
    sub("clipped-surrogate table", ok, "");
  }

  {  // Learning-rate schedule endpoints.
    const bool ok = ppo::lr_schedule(1, 100, 4e-4) == 4e-4 &&
                    std::abs(ppo::lr_schedule(100, 100, 4e-4) - 4e-6) < 1e-18 &&
                    ppo::lr_schedule(1, 1, 7e-3) == 7e-3;
    sub("learning-rate schedule endpoints", ok, "");
  }

  {  // Reward formula: -C * ||r - r_t||_2 / sqrt(d).
    VectorXd a = VectorXd::Zero(4), b = VectorXd::Zero(4);
    b[0] = 2.0;
    const bool ok = ctl::reward(a, a, 10.0, 4) == 0.0 &&
                    std::abs(ctl::reward(a, b, 10.0, 4) + 10.0) < 1e-12;
    sub("reward formula", ok, "");
  }

  {  // Encoder output ignores the order of the measurement pairs.
    const rep::RepNet net = rep::make_repnet(rep::Mode::Generative, 6, 8, 32, 77);
    Rng rng(4004);
    std::vector<rep::MeasurementPair> pairs;
    for (int i = 0; i < 7; ++i) {
      VectorXd enc(6), dist(8);
      for (int k = 0; k < 6; ++k) enc[k] = rng.uniform(-1.0, 1.0);
      for (int k = 0; k < 8; ++k) dist[k] = rng.uniform(0.0, 1.0);
      dist /= dist.sum();
      pairs.emplace_back(enc, dist);
    }
    const VectorXd r1 = rep::encode(net, pairs);
    std::vector<std::size_t> order = {6, 2, 0, 5, 3, 1, 4};
    std::vector<rep::MeasurementPair> shuffled;
    for (std::size_t i : order) shuffled.push_back(pairs[i]);
    const VectorXd r2 = rep::encode(net, shuffled);
    const double diff = (r1 - r2).lpNorm<Eigen::Infinity>();
    sub("encoder permutation invariance <= 1e-12", diff <= 1e-12,
        "diff " + fmt(diff, 15));
  }

  {  // A PPO agent solves a 4-arm bandit.
    ppo::PolicySpec spec = ppo::make_policy(1, {4}, 99);
    nn::AdamState aa = nn::adam_init(spec.actor);
    nn::AdamState ca = nn::adam_init(spec.critic);
    ppo::PpoHyper hyper;
    hyper.k_step = 64;
    hyper.minibatch = 64;
    hyper.epochs = 4;
    Rng env_rng(7), update_rng(11);
    const VectorXd obs = VectorXd::Ones(1);
    for (int k = 1; k <= 250; ++k) {
      ppo::RolloutBuffer buf(hyper.k_step);
      for (int t = 0; t < hyper.k_step; ++t) {
        ppo::Transition tr;
        tr.obs = obs;
        const ppo::ActionSample s = ppo::sample_action(spec, obs, env_rng);
        tr.actions = s.actions;
        tr.log_prob = s.log_prob;
        tr.reward = (s.actions[0] == 2) ? 1.0 : 0.0;
        tr.value = ppo::state_value(spec, obs);
        tr.done = true;
        buf.add(tr);
      }
      ppo::ppo_update(spec, buf, hyper, aa, ca, 5e-3, update_rng);
    }
    const double p2 = ppo::actor_distribution(spec, obs)[0][2];
    sub("bandit convergence, rewarded-arm probability >= 0.9", p2 >= 0.9,
        "p " + fmt(p2));
  }

  {  // A sample of the frozen contract examples.
    // Maximally entangled two-qubit state carries 2 bits of order-2 mutual
    // information between its halves.
    VectorXcd bell = VectorXcd::Zero(4);
    bell[0] = bell[3] = std::sqrt(0.5);
    const double mi =
        qc::renyi2_mutual_info(qc::QuantumState(bell), {2, 2}, {0}, {1});
    bool ok = std::abs(mi - 2.0) < 1e-12;
    // Fidelity of a state with itself.
    const auto coh = cv::coherent_state(cxd(0.7, -0.2), 40);
    ok = ok && std::abs(qc::fidelity(coh, coh) - 1.0) < 1e-12;
    // Mean-of-one: encoding a single pair is the encoder output itself.
    const rep::RepNet net = rep::make_repnet(rep::Mode::Generative, 2, 4, 8, 3);
    VectorXd enc(2), dist(4);
    enc << 0.3, -0.4;
    dist << 0.1, 0.2, 0.3, 0.4;
    VectorXd joined(6);
    joined << enc, dist;
    const VectorXd single =
        rep::encode(net, {rep::MeasurementPair(enc, dist)});
    ok = ok && (single - nn::mlp_forward_one(net.encoder, joined)).norm() == 0.0;
    sub("frozen contract examples", ok, "");
  }

  report("property suite (no trained models)", all_ok,
         all_ok ? "all sub-checks passed" : "failed: " + fails);
}

// ===========================================================================

TEST_CASE("representation quality bars on held-out grid states") {
  // Module-level acceptance for the representation network, evaluated on the
  // spin-chain desk dataset with a 90/10 state split so every scored
  // (state, measurement) pair is unseen in training.
  const io::RunConfig cfg = task_config("xxz", "xxz");
  ensure_dataset(cfg);
  const io::Dataset ds = io::load_dataset(cfg.out_dir + "/dataset.json");
  const auto all_records = io::to_rep_records(ds);

  std::vector<std::size_t> order(all_records.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng split_rng(606);
  split_rng.shuffle(order);
  const std::size_t n_test = all_records.size() / 10;
  std::vector<rep::RepRecord> train, test;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_test ? test : train).push_back(all_records[order[i]]);
  note("split: " + std::to_string(train.size()) + " train / " +
       std::to_string(test.size()) + " held-out grid states");

  rep::RepTrainOptions opts;  // batch 32, lr 1e-3
  opts.epochs = 300;

  const double t0 = now_seconds();
  rep::RepNet gen = rep::make_repnet(rep::Mode::Generative, ds.enc_dim,
                                     ds.n_outcomes, 32, 1);
  rep::train_self_supervised(gen, train, opts);
  double tv_sum = 0.0;
  long tv_count = 0;
  for (const auto& rec : test) {
    const VectorXd r = rep::encode(gen, rec.context);
    for (const auto& q : rec.queries) {
      const OutcomeDistribution pred = rep::generate(gen, r, q.first);
      tv_sum += 0.5 * (pred - q.second).lpNorm<1>();
      ++tv_count;
    }
  }
  const double mean_tv = tv_sum / double(tv_count);
  note("generative trained in " + fmt(now_seconds() - t0, 1) + " s; mean TV " +
       fmt(mean_tv, 4) + " over " + std::to_string(tv_count) + " pairs");

  const double t1 = now_seconds();
  rep::RepNet prop = rep::make_repnet(rep::Mode::Property, ds.enc_dim,
                                      ds.n_outcomes, 32, 1);
  rep::train_supervised(prop, train, opts);
  double mae = 0.0;
  for (const auto& rec : test) {
    const VectorXd r = rep::encode(prop, rec.context);
    mae += std::abs(rep::predict_property(prop, r) - rec.label);
  }
  mae /= double(test.size());
  note("property trained in " + fmt(now_seconds() - t1, 1) + " s; MAE " +
       fmt(mae, 4) + " bits");

  report("representation quality (held-out TV <= 0.05 generative, "
         "MAE <= 0.1 bits property)",
         mean_tv <= 0.05 && mae <= 0.1,
         "TV=" + fmt(mean_tv, 4) + " MAE=" + fmt(mae, 4));
}

// ===========================================================================

TEST_CASE("criterion 8: determinism of artifacts across identical runs") {
  auto run_pipeline = [](const std::string& sub) {
    io::RunConfig cfg = task_config("xxz", sub);
    cfg.xxz_qubits = 4;
    cfg.xxz_windows = 10;
    cfg.d = 16;
    cfg.repnet_epochs = 4;
    cfg.scenario = "xxz_tr_to_tp";
    cfg.episode_max_steps = 6;
    cfg.terminate_eps = 1e-6;
    cfg.ppo.total_steps = 1024;
    cfg.ppo.k_step = 512;
    cfg.eval_experiments = 3;
    cfg.eval_mode = "sample";
    fs::remove_all(cfg.out_dir);
    REQUIRE(io::cmd_gen_data(cfg) == 0);
    REQUIRE(io::cmd_train_repnet(cfg) == 0);
    REQUIRE(io::cmd_train_agent(cfg) == 0);
    REQUIRE(io::cmd_eval(cfg) == 0);
    return cfg.out_dir;
  };
  const std::string a = run_pipeline("det_a");
  const std::string b = run_pipeline("det_b");

  bool ok = true;
  std::string details;
  for (const std::string f :
       {"dataset.json", "repnet.json", "repnet_loss.csv", "policy.json",
        "train_diagnostics.csv", "eval_summary.csv", "eval_trajectories.csv"}) {
    const bool same =
        io::read_text_file(a + "/" + f) == io::read_text_file(b + "/" + f);
    if (!same) details += f + " differs ";
    ok = ok && same;
  }
  if (ok) details = "all seven artifacts byte-identical";
  report("determinism (identical config + seed, two runs)", ok, details);
}

// ===========================================================================

int main(int argc, char** argv) {
  doctest::Context ctx;
  std::vector<const char*> forwarded;
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (arg.rfind("--work-dir=", 0) == 0) {
      g_work = arg.substr(11);
    } else {
      forwarded.push_back(argv[i]);
    }
  }
  fs::create_directories(g_work);
  std::printf("acceptance artifacts: %s\n", fs::absolute(g_work).string().c_str());
  ctx.applyCommandLine(int(forwarded.size()), forwarded.data());
  return ctx.run();
}
