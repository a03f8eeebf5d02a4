#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsteer/common.hpp"
#include "qsteer/control.hpp"
#include "qsteer/ppo.hpp"
#include "qsteer/repnet.hpp"

// Command-line surface: flat key=value run configuration, JSON artifacts
// (dataset -> representation network -> policy -> evaluation) chained by
// content digests so stale inputs are detected, and CSV exports of every
// run's underlying data.
//
// All artifacts live under one output directory with fixed names:
//   dataset.json, repnet.json, repnet_loss.csv, policy.json,
//   train_diagnostics.csv, eval_summary.csv, eval_trajectories.csv,
//   embedding.csv (and wigner_<scenario>.csv when enabled).

namespace qsteer::io {

// Every field maps 1:1 onto a dotted config key; unspecified keys keep
// these defaults and the file round-trips losslessly.
struct RunConfig {
  // task.*
  std::string task = "xxz";  // xxz | ising | cat | process_output
  std::string scenario;      // catalog entry name; empty = all of the task

  // repnet.*
  std::string repnet_mode = "generative";  // generative | property
  int d = 32;
  int repnet_epochs = 200;
  int repnet_batch_records = 32;
  double repnet_lr = 1e-3;
  double repnet_grad_clip = 5.0;
  std::uint64_t repnet_seed = 1;

  // measure.*
  std::uint64_t measurement_seed = 2024;
  int xxz_qubits = 8;
  int xxz_windows = 50;
  int ising_bases = 5;
  double ising_action_step = 0.1;
  int cv_thetas = 3;
  int cv_cutoff = 64;
  double cat_beta0 = 0.3;
  bool cat_constant_beta = false;
  bool cat_factored_actions = false;
  double cat_init_radius = 2.5;

  // noise.*
  double noise_sigma2 = 0.0;
  long noise_shots = 0;

  // episode.*
  int episode_max_steps = -1;  // -1: use the scenario's horizon
  double reward_scale = 10.0;
  double terminate_eps = -1.0;  // -1: 0.05 * scale / sqrt(d)
  bool concat_target = false;   // forced on when the target is episodic

  // ppo.*
  ppo::PpoHyper ppo;

  // train.* / data.* / eval.*
  std::uint64_t train_seed = 1;
  // true: draw a fresh initial configuration per training episode;
  // false: train against the scenario's fixed initial state.
  bool random_init = true;
  std::uint64_t data_seed = 2024;
  int eval_experiments = 100;
  std::uint64_t eval_seed = 7;
  std::string eval_mode = "greedy";  // greedy | sample | random
  bool export_wigner = false;

  // out.*
  std::string out_dir = "out";
};

// key = value lines; '#' comments and blank lines are ignored. Unknown
// keys, malformed lines and out-of-vocabulary enum values raise
// ValidationError.
RunConfig parse_config(const std::string& text);
std::string write_config(const RunConfig& cfg);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

// 64-bit FNV-1a over raw bytes; digests render as 16 hex digits.
std::uint64_t fnv1a64(const std::string& bytes);
std::string digest_hex(std::uint64_t h);
std::string file_digest(const std::string& path);  // IoError if unreadable

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// 17-significant-digit decimal; round-trips any finite double exactly.
std::string format_double(double x);
std::string csv_join(const std::vector<std::string>& cells);

// ---------------------------------------------------------------------------
// Artifacts

struct DatasetRecord {
  VectorXd params;
  // Per-record measurement encodings; empty when the dataset's shared
  // top-level sets apply (spin tasks). CV tasks draw fresh quadrature
  // angles per record, so each record carries its own encodings.
  std::vector<VectorXd> context_encodings;
  std::vector<VectorXd> query_encodings;
  std::vector<OutcomeDistribution> context_distributions;
  std::vector<OutcomeDistribution> query_distributions;
  double label = 0.0;  // Renyi-2 mutual information (bits); 0 for CV tasks
};

struct Dataset {
  std::string task;
  std::uint64_t data_seed = 0;
  std::uint64_t measurement_seed = 0;
  int enc_dim = 0;
  int n_outcomes = 0;
  // Shared measurement sets; empty for tasks with per-record encodings.
  std::vector<VectorXd> context_encodings;
  std::vector<VectorXd> query_encodings;
  std::vector<DatasetRecord> records;
};

Dataset load_dataset(const std::string& path);
std::vector<rep::RepRecord> to_rep_records(const Dataset& ds);

struct RepnetArtifact {
  rep::RepNet net;
  std::string task;
  std::string dataset_digest;
};

RepnetArtifact load_repnet(const std::string& path);

struct PolicyArtifact {
  ppo::PolicySpec policy;
  std::string task;
  std::string scenario;
  int d = 0;
  bool concat_target = false;
  std::string repnet_digest;
};

PolicyArtifact load_policy(const std::string& path);

// Environment-construction settings implied by a run configuration.
ctl::EnvBuild env_build(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Commands (exit status; 0 = success). Errors are thrown: ValidationError
// for bad configuration, IoError for missing/stale/unversioned artifacts.

// Sweeps the task's state family, storing exact measurement statistics for
// the control measurement set plus held-out query measurements, and
// Renyi-2 mutual-information labels for the spin tasks.
int cmd_gen_data(const RunConfig& cfg);

// Trains the representation network on dataset.json. Exit 2 flags a run
// whose final epoch loss exceeds the first (did not converge).
int cmd_train_repnet(const RunConfig& cfg);

// Trains the steering policy against the configured scenario's target with
// randomized initial conditions, recording per-update diagnostics.
int cmd_train_agent(const RunConfig& cfg);

// Greedy (or configured-mode) evaluation over the catalog scenarios of the
// task, emitting summary and per-step trajectory CSVs.
int cmd_eval(const RunConfig& cfg);

// Encodes every dataset record and exports the 2-component PCA projection.
int cmd_export_embedding(const RunConfig& cfg);

}  // namespace qsteer::io
