#include "qsteer/cli_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "qsteer/cv_env.hpp"
#include "qsteer/qcore.hpp"
#include "qsteer/rng.hpp"
#include "qsteer/spin_env.hpp"

namespace qsteer::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_ll(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not an integer: " + v);
  }
  if (pos != v.size())
    throw ValidationError("config key '" + key + "': trailing characters: " + v);
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not a seed value: " + v);
  }
  if (pos != v.size())
    throw ValidationError("config key '" + key + "': trailing characters: " + v);
  return out;
}

double parse_real(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': not a number: " + v);
  }
  if (pos != v.size())
    throw ValidationError("config key '" + key + "': trailing characters: " + v);
  return out;
}

bool parse_flag(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError("config key '" + key + "': expected true or false: " + v);
}

void check_choice(const std::string& v, const std::vector<std::string>& allowed,
                  const std::string& key) {
  if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
    throw ValidationError("config key '" + key + "': unsupported value: " + v);
}

struct KeyBinding {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt_i(long long x) { return std::to_string(x); }
std::string fmt_u(std::uint64_t x) { return std::to_string(x); }
std::string fmt_b(bool x) { return x ? "true" : "false"; }

const std::vector<KeyBinding>& key_bindings() {
  static const std::vector<KeyBinding> bindings = {
      {"task.name",
       [](RunConfig& c, const std::string& v) {
         check_choice(v, {"xxz", "ising", "cat", "process_output"}, "task.name");
         c.task = v;
       },
       [](const RunConfig& c) { return c.task; }},
      {"task.scenario", [](RunConfig& c, const std::string& v) { c.scenario = v; },
       [](const RunConfig& c) { return c.scenario; }},
      {"repnet.mode",
       [](RunConfig& c, const std::string& v) {
         check_choice(v, {"generative", "property"}, "repnet.mode");
         c.repnet_mode = v;
       },
       [](const RunConfig& c) { return c.repnet_mode; }},
      {"repnet.d",
       [](RunConfig& c, const std::string& v) { c.d = int(parse_ll(v, "repnet.d")); },
       [](const RunConfig& c) { return fmt_i(c.d); }},
      {"repnet.epochs",
       [](RunConfig& c, const std::string& v) {
         c.repnet_epochs = int(parse_ll(v, "repnet.epochs"));
       },
       [](const RunConfig& c) { return fmt_i(c.repnet_epochs); }},
      {"repnet.batch_records",
       [](RunConfig& c, const std::string& v) {
         c.repnet_batch_records = int(parse_ll(v, "repnet.batch_records"));
       },
       [](const RunConfig& c) { return fmt_i(c.repnet_batch_records); }},
      {"repnet.lr",
       [](RunConfig& c, const std::string& v) { c.repnet_lr = parse_real(v, "repnet.lr"); },
       [](const RunConfig& c) { return format_double(c.repnet_lr); }},
      {"repnet.grad_clip",
       [](RunConfig& c, const std::string& v) {
         c.repnet_grad_clip = parse_real(v, "repnet.grad_clip");
       },
       [](const RunConfig& c) { return format_double(c.repnet_grad_clip); }},
      {"repnet.seed",
       [](RunConfig& c, const std::string& v) { c.repnet_seed = parse_u64(v, "repnet.seed"); },
       [](const RunConfig& c) { return fmt_u(c.repnet_seed); }},
      {"measure.seed",
       [](RunConfig& c, const std::string& v) {
         c.measurement_seed = parse_u64(v, "measure.seed");
       },
       [](const RunConfig& c) { return fmt_u(c.measurement_seed); }},
      {"measure.xxz_qubits",
       [](RunConfig& c, const std::string& v) {
         c.xxz_qubits = int(parse_ll(v, "measure.xxz_qubits"));
       },
       [](const RunConfig& c) { return fmt_i(c.xxz_qubits); }},
      {"measure.xxz_windows",
       [](RunConfig& c, const std::string& v) {
         c.xxz_windows = int(parse_ll(v, "measure.xxz_windows"));
       },
       [](const RunConfig& c) { return fmt_i(c.xxz_windows); }},
      {"measure.ising_bases",
       [](RunConfig& c, const std::string& v) {
         c.ising_bases = int(parse_ll(v, "measure.ising_bases"));
       },
       [](const RunConfig& c) { return fmt_i(c.ising_bases); }},
      {"measure.ising_action_step",
       [](RunConfig& c, const std::string& v) {
         c.ising_action_step = parse_real(v, "measure.ising_action_step");
       },
       [](const RunConfig& c) { return format_double(c.ising_action_step); }},
      {"measure.cv_thetas",
       [](RunConfig& c, const std::string& v) {
         c.cv_thetas = int(parse_ll(v, "measure.cv_thetas"));
       },
       [](const RunConfig& c) { return fmt_i(c.cv_thetas); }},
      {"measure.cv_cutoff",
       [](RunConfig& c, const std::string& v) {
         c.cv_cutoff = int(parse_ll(v, "measure.cv_cutoff"));
       },
       [](const RunConfig& c) { return fmt_i(c.cv_cutoff); }},
      {"measure.cat_beta0",
       [](RunConfig& c, const std::string& v) { c.cat_beta0 = parse_real(v, "measure.cat_beta0"); },
       [](const RunConfig& c) { return format_double(c.cat_beta0); }},
      {"measure.cat_constant_beta",
       [](RunConfig& c, const std::string& v) {
         c.cat_constant_beta = parse_flag(v, "measure.cat_constant_beta");
       },
       [](const RunConfig& c) { return fmt_b(c.cat_constant_beta); }},
      {"measure.cat_factored_actions",
       [](RunConfig& c, const std::string& v) {
         c.cat_factored_actions = parse_flag(v, "measure.cat_factored_actions");
       },
       [](const RunConfig& c) { return fmt_b(c.cat_factored_actions); }},
      {"measure.cat_init_radius",
       [](RunConfig& c, const std::string& v) {
         c.cat_init_radius = parse_real(v, "measure.cat_init_radius");
       },
       [](const RunConfig& c) { return format_double(c.cat_init_radius); }},
      {"noise.sigma2",
       [](RunConfig& c, const std::string& v) { c.noise_sigma2 = parse_real(v, "noise.sigma2"); },
       [](const RunConfig& c) { return format_double(c.noise_sigma2); }},
      {"noise.shots",
       [](RunConfig& c, const std::string& v) { c.noise_shots = parse_ll(v, "noise.shots"); },
       [](const RunConfig& c) { return fmt_i(c.noise_shots); }},
      {"episode.max_steps",
       [](RunConfig& c, const std::string& v) {
         c.episode_max_steps = int(parse_ll(v, "episode.max_steps"));
       },
       [](const RunConfig& c) { return fmt_i(c.episode_max_steps); }},
      {"episode.reward_scale",
       [](RunConfig& c, const std::string& v) {
         c.reward_scale = parse_real(v, "episode.reward_scale");
       },
       [](const RunConfig& c) { return format_double(c.reward_scale); }},
      {"episode.terminate_eps",
       [](RunConfig& c, const std::string& v) {
         c.terminate_eps = parse_real(v, "episode.terminate_eps");
       },
       [](const RunConfig& c) { return format_double(c.terminate_eps); }},
      {"episode.concat_target",
       [](RunConfig& c, const std::string& v) {
         c.concat_target = parse_flag(v, "episode.concat_target");
       },
       [](const RunConfig& c) { return fmt_b(c.concat_target); }},
      {"ppo.total_steps",
       [](RunConfig& c, const std::string& v) { c.ppo.total_steps = parse_ll(v, "ppo.total_steps"); },
       [](const RunConfig& c) { return fmt_i(c.ppo.total_steps); }},
      {"ppo.k_step",
       [](RunConfig& c, const std::string& v) { c.ppo.k_step = int(parse_ll(v, "ppo.k_step")); },
       [](const RunConfig& c) { return fmt_i(c.ppo.k_step); }},
      {"ppo.minibatch",
       [](RunConfig& c, const std::string& v) { c.ppo.minibatch = int(parse_ll(v, "ppo.minibatch")); },
       [](const RunConfig& c) { return fmt_i(c.ppo.minibatch); }},
      {"ppo.epochs",
       [](RunConfig& c, const std::string& v) { c.ppo.epochs = int(parse_ll(v, "ppo.epochs")); },
       [](const RunConfig& c) { return fmt_i(c.ppo.epochs); }},
      {"ppo.gamma",
       [](RunConfig& c, const std::string& v) { c.ppo.gamma = parse_real(v, "ppo.gamma"); },
       [](const RunConfig& c) { return format_double(c.ppo.gamma); }},
      {"ppo.epsilon",
       [](RunConfig& c, const std::string& v) { c.ppo.epsilon = parse_real(v, "ppo.epsilon"); },
       [](const RunConfig& c) { return format_double(c.ppo.epsilon); }},
      {"ppo.c1",
       [](RunConfig& c, const std::string& v) { c.ppo.c1 = parse_real(v, "ppo.c1"); },
       [](const RunConfig& c) { return format_double(c.ppo.c1); }},
      {"ppo.c2",
       [](RunConfig& c, const std::string& v) { c.ppo.c2 = parse_real(v, "ppo.c2"); },
       [](const RunConfig& c) { return format_double(c.ppo.c2); }},
      {"ppo.g_max",
       [](RunConfig& c, const std::string& v) { c.ppo.g_max = parse_real(v, "ppo.g_max"); },
       [](const RunConfig& c) { return format_double(c.ppo.g_max); }},
      {"ppo.alpha0",
       [](RunConfig& c, const std::string& v) { c.ppo.alpha0 = parse_real(v, "ppo.alpha0"); },
       [](const RunConfig& c) { return format_double(c.ppo.alpha0); }},
      {"ppo.lambda_gae",
       [](RunConfig& c, const std::string& v) { c.ppo.lambda_gae = parse_real(v, "ppo.lambda_gae"); },
       [](const RunConfig& c) { return format_double(c.ppo.lambda_gae); }},
      {"ppo.normalize_advantages",
       [](RunConfig& c, const std::string& v) {
         c.ppo.normalize_advantages = parse_flag(v, "ppo.normalize_advantages");
       },
       [](const RunConfig& c) { return fmt_b(c.ppo.normalize_advantages); }},
      {"train.seed",
       [](RunConfig& c, const std::string& v) { c.train_seed = parse_u64(v, "train.seed"); },
       [](const RunConfig& c) { return fmt_u(c.train_seed); }},
      {"train.random_init",
       [](RunConfig& c, const std::string& v) {
         c.random_init = parse_flag(v, "train.random_init");
       },
       [](const RunConfig& c) { return fmt_b(c.random_init); }},
      {"data.seed",
       [](RunConfig& c, const std::string& v) { c.data_seed = parse_u64(v, "data.seed"); },
       [](const RunConfig& c) { return fmt_u(c.data_seed); }},
      {"eval.experiments",
       [](RunConfig& c, const std::string& v) {
         c.eval_experiments = int(parse_ll(v, "eval.experiments"));
       },
       [](const RunConfig& c) { return fmt_i(c.eval_experiments); }},
      {"eval.seed",
       [](RunConfig& c, const std::string& v) { c.eval_seed = parse_u64(v, "eval.seed"); },
       [](const RunConfig& c) { return fmt_u(c.eval_seed); }},
      {"eval.mode",
       [](RunConfig& c, const std::string& v) {
         check_choice(v, {"greedy", "sample", "random"}, "eval.mode");
         c.eval_mode = v;
       },
       [](const RunConfig& c) { return c.eval_mode; }},
      {"eval.export_wigner",
       [](RunConfig& c, const std::string& v) {
         c.export_wigner = parse_flag(v, "eval.export_wigner");
       },
       [](const RunConfig& c) { return fmt_b(c.export_wigner); }},
      {"out.dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
  };
  return bindings;
}

// ---------------------------------------------------------------------------
// JSON helpers

std::vector<double> to_std(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw IoError(where + ": expected a numeric array");
  VectorXd v(long(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw IoError(where + ": expected a numeric array");
    v[long(i)] = j[i].get<double>();
  }
  return v;
}

json mlp_to_json(const nn::Mlp& net) {
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json rows = json::array();
    for (long r = 0; r < layer.w.rows(); ++r) {
      json row = json::array();
      for (long c = 0; c < layer.w.cols(); ++c) row.push_back(layer.w(r, c));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"w", std::move(rows)}, {"b", to_std(layer.b)}});
  }
  return {{"layers", std::move(layers)},
          {"out_act", net.out_act == nn::OutputActivation::Softmax ? "softmax"
                                                                   : "identity"}};
}

nn::Mlp mlp_from_json(const json& j, const std::string& where) {
  nn::Mlp net;
  if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
    throw IoError(where + ": malformed network weights");
  for (const auto& lj : j["layers"]) {
    const json& rows = lj.at("w");
    if (!rows.is_array() || rows.empty())
      throw IoError(where + ": malformed network weights");
    nn::Layer layer;
    const long n_rows = long(rows.size());
    const long n_cols = long(rows[0].size());
    layer.w.resize(n_rows, n_cols);
    for (long r = 0; r < n_rows; ++r) {
      if (long(rows[std::size_t(r)].size()) != n_cols)
        throw IoError(where + ": ragged weight matrix");
      for (long c = 0; c < n_cols; ++c)
        layer.w(r, c) = rows[std::size_t(r)][std::size_t(c)].get<double>();
    }
    layer.b = vec_from_json(lj.at("b"), where);
    if (layer.b.size() != n_rows)
      throw IoError(where + ": bias length does not match weight rows");
    net.layers.push_back(std::move(layer));
  }
  const std::string act = j.value("out_act", "identity");
  if (act == "softmax")
    net.out_act = nn::OutputActivation::Softmax;
  else if (act == "identity")
    net.out_act = nn::OutputActivation::Identity;
  else
    throw IoError(where + ": unknown output activation '" + act + "'");
  return net;
}

json load_artifact(const std::string& path, const std::string& kind) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": invalid JSON: " + std::string(e.what()));
  }
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw IoError(path + ": missing format version");
  const int ver = j["format_version"].get<int>();
  if (ver != kFormatVersion)
    throw IoError(path + ": unsupported format version " + std::to_string(ver));
  if (j.value("kind", std::string()) != kind)
    throw IoError(path + ": expected a '" + kind + "' artifact");
  return j;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir +
                        "': " + ec.message());
}

std::string artifact_path(const RunConfig& cfg, const char* name) {
  return cfg.out_dir + "/" + name;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct MeasurementPlan {
  std::vector<VectorXd> context_encodings, query_encodings;
};

json records_header(const RunConfig& cfg, const MeasurementPlan& plan,
                    int enc_dim, int n_outcomes) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = "dataset";
  doc["task"] = cfg.task;
  doc["data_seed"] = cfg.data_seed;
  doc["measurement_seed"] = cfg.measurement_seed;
  doc["enc_dim"] = enc_dim;
  doc["n_outcomes"] = n_outcomes;
  json ce = json::array(), qe = json::array();
  for (const auto& e : plan.context_encodings) ce.push_back(to_std(e));
  for (const auto& e : plan.query_encodings) qe.push_back(to_std(e));
  doc["context_encodings"] = std::move(ce);
  doc["query_encodings"] = std::move(qe);
  return doc;
}

json record_json(const VectorXd& params,
                 const std::vector<OutcomeDistribution>& context,
                 const std::vector<OutcomeDistribution>& queries, double label) {
  json rec;
  rec["params"] = to_std(params);
  json cd = json::array(), qd = json::array();
  for (const auto& d : context) cd.push_back(to_std(d));
  for (const auto& d : queries) qd.push_back(to_std(d));
  rec["context_distributions"] = std::move(cd);
  rec["query_distributions"] = std::move(qd);
  rec["label"] = label;
  return rec;
}

json gen_xxz_dataset(const RunConfig& cfg) {
  const int n = cfg.xxz_qubits;
  const auto context =
      spin::sample_pauli_measurement_set(n, cfg.xxz_windows, cfg.measurement_seed);

  // Held-out query windows come from the complement of the control set.
  std::vector<spin::PauliWindow> pool;
  for (int pos = 0; pos + 2 < n; ++pos)
    for (int t = 0; t < 27; ++t) {
      spin::PauliWindow w;
      w.position = pos;
      w.paulis = {qc::Pauli(t / 9), qc::Pauli((t / 3) % 3), qc::Pauli(t % 3)};
      const bool used = std::any_of(
          context.begin(), context.end(), [&](const spin::PauliWindow& c) {
            return c.position == w.position && c.paulis == w.paulis;
          });
      if (!used) pool.push_back(w);
    }
  require(!pool.empty(), "gen-data: no held-out windows remain for queries");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng qrng(derive_seed(cfg.data_seed, 0x717279));
  qrng.shuffle(order);
  const std::size_t n_query =
      std::min(pool.size(), std::size_t(std::max(1, cfg.xxz_windows / 5)));
  std::vector<spin::PauliWindow> queries;
  for (std::size_t i = 0; i < n_query; ++i) queries.push_back(pool[order[i]]);

  MeasurementPlan plan;
  for (const auto& w : context)
    plan.context_encodings.push_back(rep::encode_pauli_window(n, w));
  for (const auto& w : queries)
    plan.query_encodings.push_back(rep::encode_pauli_window(n, w));

  std::vector<int> dims(std::size_t(n), 2), sub_a, sub_b;
  for (int q = 0; q < n / 2; ++q) sub_a.push_back(q);
  for (int q = n / 2; q < n; ++q) sub_b.push_back(q);

  json doc = records_header(cfg, plan, int(plan.context_encodings[0].size()), 8);
  json records = json::array();
  for (long kj = 0; kj <= spin::kXxzGridMax; ++kj)
    for (long kd = 0; kd <= spin::kXxzGridMax; ++kd) {
      spin::XxzParams p;
      p.n_qubits = n;
      p.j_ratio = double(kj) * spin::kXxzStepJ;
      p.delta = double(kd) * spin::kXxzStepD;
      auto gs = spin::ground_state_tiebroken(
          spin::build_xxz_hamiltonian(p), n,
          ctl::xxz_cell_seed(cfg.measurement_seed, kj, kd));
      std::vector<OutcomeDistribution> cd, qd;
      for (const auto& w : context)
        cd.push_back(spin::pauli_marginal_statistics(gs.state, n, w));
      for (const auto& w : queries)
        qd.push_back(spin::pauli_marginal_statistics(gs.state, n, w));
      VectorXd params(2);
      params << p.j_ratio, p.delta;
      const double label = qc::renyi2_mutual_info(gs.state, dims, sub_a, sub_b);
      records.push_back(record_json(params, cd, qd, label));
    }
  doc["records"] = std::move(records);
  return doc;
}

json gen_ising_dataset(const RunConfig& cfg) {
  const int n = 6;
  const int n_query = std::max(1, cfg.ising_bases / 5);
  // One stream yields the control bases as a prefix plus held-out queries.
  const auto all_bases =
      ctl::draw_ising_bases(n, cfg.ising_bases + n_query, cfg.measurement_seed);
  MeasurementPlan plan;
  for (int i = 0; i < cfg.ising_bases; ++i)
    plan.context_encodings.push_back(rep::encode_full_basis(all_bases[std::size_t(i)]));
  for (int i = cfg.ising_bases; i < cfg.ising_bases + n_query; ++i)
    plan.query_encodings.push_back(rep::encode_full_basis(all_bases[std::size_t(i)]));

  const double step = cfg.ising_action_step;
  const long half = std::lround(spin::ising_clamp_bound(step) / step);
  const long levels = 2 * half + 1;
  Rng rng(derive_seed(cfg.data_seed, 0x6c6174));

  std::vector<int> dims(std::size_t(n), 2), sub_a = {0, 1, 2}, sub_b = {3, 4, 5};
  json doc = records_header(cfg, plan, 3 * n, 1 << n);
  json records = json::array();
  for (int rec_i = 0; rec_i < 441; ++rec_i) {
    spin::IsingParams p;
    p.n_qubits = n;
    p.couplings.resize(std::size_t(n - 1));
    for (double& c : p.couplings)
      c = double(long(rng.uniform_int(std::uint64_t(levels))) - half) * step;
    auto gs = spin::ground_state_tiebroken(
        spin::build_ising_hamiltonian(p), n,
        ctl::ising_cell_seed(cfg.measurement_seed, p.couplings, step));
    std::vector<OutcomeDistribution> cd, qd;
    for (int i = 0; i < cfg.ising_bases; ++i)
      cd.push_back(spin::full_basis_statistics(gs.state, all_bases[std::size_t(i)]));
    for (int i = cfg.ising_bases; i < cfg.ising_bases + n_query; ++i)
      qd.push_back(spin::full_basis_statistics(gs.state, all_bases[std::size_t(i)]));
    const VectorXd params = Eigen::Map<const VectorXd>(p.couplings.data(), n - 1);
    const double label = qc::renyi2_mutual_info(gs.state, dims, sub_a, sub_b);
    records.push_back(record_json(params, cd, qd, label));
  }
  doc["records"] = std::move(records);
  return doc;
}

// The two continuous-variable tasks draw fresh quadrature angles per
// record: control-time environments measure at arbitrary angles in
// [0, pi), so the encoder must be trained across that whole range rather
// than on a fixed grid. Each record therefore carries its own
// measurement encodings (cv_thetas context angles + 5 held-out queries).
json gen_cv_dataset(const RunConfig& cfg) {
  require(cfg.cv_thetas >= 1, "gen-data: need at least one quadrature");
  const int n_query = 5;
  const cv::HomodyneSpec geom;
  const cv::HomodyneWorkspace ws(cfg.cv_cutoff, geom);
  Rng rng(derive_seed(cfg.data_seed, 0x746873));

  json doc = records_header(cfg, MeasurementPlan{}, 2, geom.bins);
  json records = json::array();
  auto push_record = [&](const VectorXd& params, const qc::QuantumState& psi) {
    std::vector<OutcomeDistribution> cd, qd;
    json ce = json::array(), qe = json::array();
    for (int i = 0; i < cfg.cv_thetas + n_query; ++i) {
      cv::HomodyneSpec spec = geom;
      spec.theta = rng.uniform(0.0, cv::kPi);
      auto dist = cv::homodyne_distribution(psi, spec, ws);
      auto enc = to_std(rep::encode_homodyne(spec.theta));
      if (i < cfg.cv_thetas) {
        cd.push_back(std::move(dist));
        ce.push_back(std::move(enc));
      } else {
        qd.push_back(std::move(dist));
        qe.push_back(std::move(enc));
      }
    }
    json rec = record_json(params, cd, qd, 0.0);
    rec["context_encodings"] = std::move(ce);
    rec["query_encodings"] = std::move(qe);
    records.push_back(std::move(rec));
  };

  if (cfg.task == "cat") {
    // Area grid over the control-time initial disk |alpha| <= init_radius.
    const int half = 20;
    const double step = cfg.cat_init_radius / double(half);
    for (int i = -half; i <= half; ++i)
      for (int j = -half; j <= half; ++j) {
        const cxd alpha(step * double(i), step * double(j));
        if (std::abs(alpha) > cfg.cat_init_radius + 1e-12) continue;
        VectorXd params(2);
        params << alpha.real(), alpha.imag();
        push_record(params, cv::cat_state(alpha, cfg.cv_cutoff));
      }
  } else {  // process_output
    for (int k = 0; k <= 30; ++k)
      for (int m = 0; m <= 30; ++m) {
        const double r = 3.0 * double(k) / 30.0;
        const double psi_arg = 2.0 * cv::kPi * double(m) / 31.0;
        VectorXd params(2);
        params << r, psi_arg;
        push_record(params,
                    cv::kerr_gate(cv::displaced_vacuum(r, psi_arg, cfg.cv_cutoff)));
      }
  }
  doc["records"] = std::move(records);
  return doc;
}

// ---------------------------------------------------------------------------
// Scenario selection shared by train/eval

std::vector<ctl::ScenarioSpec> scenarios_for(const RunConfig& cfg) {
  const auto catalog = ctl::scenario_catalog();
  std::vector<ctl::ScenarioSpec> out;
  for (const auto& s : catalog) {
    if (!cfg.scenario.empty()) {
      if (s.name == cfg.scenario) {
        require(s.task == cfg.task, "scenario '" + cfg.scenario +
                                        "' belongs to task '" + s.task + "'");
        out.push_back(s);
      }
    } else if (s.task == cfg.task) {
      out.push_back(s);
    }
  }
  if (!cfg.scenario.empty())
    require(!out.empty(), "unknown scenario '" + cfg.scenario + "'");
  require(!out.empty(), "no scenarios for task '" + cfg.task + "'");
  return out;
}

ctl::ActionMode mode_from(const std::string& name) {
  if (name == "greedy") return ctl::ActionMode::Greedy;
  if (name == "sample") return ctl::ActionMode::Sample;
  return ctl::ActionMode::Random;
}

std::string join_actions(const std::vector<int>& actions) {
  std::string out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(actions[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config round-trip

RunConfig parse_config(const std::string& text) {
  static const auto& bindings = key_bindings();
  std::map<std::string, const KeyBinding*> by_key;
  for (const auto& b : bindings) by_key[b.key] = &b;

  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end())
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": unknown key '" + key + "'");
    it->second->set(cfg, value);
  }
  return cfg;
}

std::string write_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& b : key_bindings())
    out += b.key + " = " + b.get(cfg) + "\n";
  return out;
}

RunConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path));
}

void save_config(const RunConfig& cfg, const std::string& path) {
  write_text_file(path, write_config(cfg));
}

// ---------------------------------------------------------------------------
// Bytes, digests, text

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string digest_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  return digest_hex(fnv1a64(read_text_file(path)));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) throw IoError("cannot write '" + path + "'");
  out << content;
  out.flush();
  if (!out.good()) throw IoError("write failed for '" + path + "'");
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string csv_join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Artifact loaders

Dataset load_dataset(const std::string& path) {
  const json j = load_artifact(path, "dataset");
  Dataset ds;
  try {
    ds.task = j.at("task").get<std::string>();
    ds.data_seed = j.at("data_seed").get<std::uint64_t>();
    ds.measurement_seed = j.at("measurement_seed").get<std::uint64_t>();
    ds.enc_dim = j.at("enc_dim").get<int>();
    ds.n_outcomes = j.at("n_outcomes").get<int>();
    for (const auto& e : j.at("context_encodings"))
      ds.context_encodings.push_back(vec_from_json(e, path));
    for (const auto& e : j.at("query_encodings"))
      ds.query_encodings.push_back(vec_from_json(e, path));
    const auto& records = j.at("records");
    if (j.at("n_records").get<std::size_t>() != records.size())
      throw IoError(path + ": record count does not match the manifest");
    for (const auto& rj : records) {
      DatasetRecord rec;
      rec.params = vec_from_json(rj.at("params"), path);
      for (const auto& d : rj.at("context_distributions"))
        rec.context_distributions.push_back(vec_from_json(d, path));
      for (const auto& d : rj.at("query_distributions"))
        rec.query_distributions.push_back(vec_from_json(d, path));
      if (rj.contains("context_encodings")) {
        for (const auto& e : rj.at("context_encodings"))
          rec.context_encodings.push_back(vec_from_json(e, path));
        for (const auto& e : rj.at("query_encodings"))
          rec.query_encodings.push_back(vec_from_json(e, path));
      }
      rec.label = rj.at("label").get<double>();
      const auto& ce = rec.context_encodings.empty() ? ds.context_encodings
                                                     : rec.context_encodings;
      const auto& qe = rec.query_encodings.empty() ? ds.query_encodings
                                                   : rec.query_encodings;
      if (rec.context_distributions.size() != ce.size() ||
          rec.query_distributions.size() != qe.size())
        throw IoError(path + ": record statistics do not match the measurement sets");
      ds.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": malformed dataset: " + std::string(e.what()));
  }
  return ds;
}

std::vector<rep::RepRecord> to_rep_records(const Dataset& ds) {
  std::vector<rep::RepRecord> out;
  out.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    const auto& ce = rec.context_encodings.empty() ? ds.context_encodings
                                                   : rec.context_encodings;
    const auto& qe = rec.query_encodings.empty() ? ds.query_encodings
                                                 : rec.query_encodings;
    rep::RepRecord r;
    for (std::size_t i = 0; i < ce.size(); ++i)
      r.context.emplace_back(ce[i], rec.context_distributions[i]);
    for (std::size_t i = 0; i < qe.size(); ++i)
      r.queries.emplace_back(qe[i], rec.query_distributions[i]);
    r.label = rec.label;
    out.push_back(std::move(r));
  }
  return out;
}

RepnetArtifact load_repnet(const std::string& path) {
  const json j = load_artifact(path, "repnet");
  try {
    const std::string mode = j.at("mode").get<std::string>();
    rep::RepNet net;
    net.mode = mode == "property" ? rep::Mode::Property : rep::Mode::Generative;
    if (mode != "property" && mode != "generative")
      throw IoError(path + ": unknown mode '" + mode + "'");
    net.enc_dim = j.at("enc_dim").get<int>();
    net.n_outcomes = j.at("n_outcomes").get<int>();
    net.d = j.at("d").get<int>();
    net.encoder = mlp_from_json(j.at("encoder"), path);
    net.head = mlp_from_json(j.at("head"), path);
    RepnetArtifact art{std::move(net), j.at("task").get<std::string>(),
                       j.at("dataset_digest").get<std::string>()};
    return art;
  } catch (const json::exception& e) {
    throw IoError(path + ": malformed network artifact: " + std::string(e.what()));
  }
}

PolicyArtifact load_policy(const std::string& path) {
  const json j = load_artifact(path, "policy");
  try {
    PolicyArtifact art;
    art.task = j.at("task").get<std::string>();
    art.scenario = j.at("scenario").get<std::string>();
    art.d = j.at("d").get<int>();
    art.concat_target = j.at("concat_target").get<bool>();
    art.repnet_digest = j.at("repnet_digest").get<std::string>();
    art.policy.factors = j.at("factors").get<std::vector<int>>();
    art.policy.actor = mlp_from_json(j.at("actor"), path);
    art.policy.critic = mlp_from_json(j.at("critic"), path);
    return art;
  } catch (const json::exception& e) {
    throw IoError(path + ": malformed policy artifact: " + std::string(e.what()));
  }
}

ctl::EnvBuild env_build(const RunConfig& cfg) {
  ctl::EnvBuild b;
  b.measurement_seed = cfg.measurement_seed;
  b.noise.sigma2 = cfg.noise_sigma2;
  b.noise.shots = cfg.noise_shots;
  b.xxz_qubits = cfg.xxz_qubits;
  b.xxz_measurements = cfg.xxz_windows;
  b.ising_bases = cfg.ising_bases;
  b.ising_action_step = cfg.ising_action_step;
  b.cv_cutoff = cfg.cv_cutoff;
  b.cv_thetas = cfg.cv_thetas;
  b.cat_beta0 = cfg.cat_beta0;
  b.cat_constant_beta = cfg.cat_constant_beta;
  b.cat_factored_actions = cfg.cat_factored_actions;
  b.cat_init_radius = cfg.cat_init_radius;
  return b;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_data(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  json doc;
  if (cfg.task == "xxz")
    doc = gen_xxz_dataset(cfg);
  else if (cfg.task == "ising")
    doc = gen_ising_dataset(cfg);
  else
    doc = gen_cv_dataset(cfg);
  doc["n_records"] = doc["records"].size();
  write_text_file(artifact_path(cfg, "dataset.json"), doc.dump());
  return 0;
}

int cmd_train_repnet(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string dpath = artifact_path(cfg, "dataset.json");
  if (!fs::exists(dpath)) throw IoError("dataset not found: " + dpath);
  const Dataset ds = load_dataset(dpath);
  require(ds.task == cfg.task, "config task '" + cfg.task +
                                   "' does not match dataset task '" + ds.task + "'");
  const auto records = to_rep_records(ds);

  const rep::Mode mode = cfg.repnet_mode == "property" ? rep::Mode::Property
                                                       : rep::Mode::Generative;
  rep::RepNet net =
      rep::make_repnet(mode, ds.enc_dim, ds.n_outcomes, cfg.d, cfg.repnet_seed);
  rep::RepTrainOptions opts;
  opts.epochs = cfg.repnet_epochs;
  opts.batch_records = cfg.repnet_batch_records;
  opts.lr = cfg.repnet_lr;
  opts.grad_clip = cfg.repnet_grad_clip;
  opts.seed = cfg.repnet_seed;
  const rep::TrainTrace trace = mode == rep::Mode::Generative
                                    ? rep::train_self_supervised(net, records, opts)
                                    : rep::train_supervised(net, records, opts);

  std::string csv = csv_join({"epoch", "loss"});
  for (std::size_t i = 0; i < trace.epoch_loss.size(); ++i)
    csv += csv_join({std::to_string(i + 1), format_double(trace.epoch_loss[i])});
  write_text_file(artifact_path(cfg, "repnet_loss.csv"), csv);

  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "repnet";
  j["task"] = cfg.task;
  j["mode"] = cfg.repnet_mode;
  j["d"] = cfg.d;
  j["enc_dim"] = ds.enc_dim;
  j["n_outcomes"] = ds.n_outcomes;
  j["seed"] = cfg.repnet_seed;
  j["epochs"] = cfg.repnet_epochs;
  j["final_loss"] = trace.epoch_loss.empty() ? 0.0 : trace.epoch_loss.back();
  j["dataset_digest"] = file_digest(dpath);
  j["encoder"] = mlp_to_json(net.encoder);
  j["head"] = mlp_to_json(net.head);
  write_text_file(artifact_path(cfg, "repnet.json"), j.dump());

  const bool improved = trace.epoch_loss.empty() ||
                        trace.epoch_loss.back() <= trace.epoch_loss.front();
  return improved ? 0 : 2;
}

int cmd_train_agent(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string rpath = artifact_path(cfg, "repnet.json");
  if (!fs::exists(rpath)) throw IoError("representation network not found: " + rpath);
  const RepnetArtifact art = load_repnet(rpath);
  require(art.net.d == cfg.d,
          "config d = " + std::to_string(cfg.d) +
              " does not match the trained network (d = " +
              std::to_string(art.net.d) + ")");
  require(art.task == cfg.task, "config task '" + cfg.task +
                                    "' does not match the network's task '" +
                                    art.task + "'");
  const std::string dpath = artifact_path(cfg, "dataset.json");
  if (fs::exists(dpath) && file_digest(dpath) != art.dataset_digest)
    throw IoError("stale representation network: dataset.json changed after it "
                  "was trained");

  const ctl::ScenarioSpec scenario = scenarios_for(cfg).front();
  ctl::ScenarioSpec train_spec = scenario;
  if (cfg.random_init) train_spec.initial = VectorXd();

  ctl::TrainConfig tc;
  tc.episode.max_steps =
      cfg.episode_max_steps > 0 ? cfg.episode_max_steps : scenario.max_steps;
  tc.episode.reward_scale = cfg.reward_scale;
  tc.episode.terminate_eps = cfg.terminate_eps;
  // Episodic targets (empty target spec) must be visible to the policy.
  tc.episode.concat_target = cfg.concat_target || train_spec.target.size() == 0;
  tc.hyper = cfg.ppo;
  tc.seed = cfg.train_seed;

  auto env = ctl::make_environment(train_spec, env_build(cfg));
  const ctl::TrainResult result = ctl::train_rgrl(*env, art.net, tc);

  std::string csv = csv_join({"update", "lr", "mean_reward", "mean_episode_return",
                              "episodes_finished", "mean_ratio", "clip_fraction",
                              "policy_loss", "value_loss", "entropy", "approx_kl"});
  for (const auto& rec : result.log)
    csv += csv_join({std::to_string(rec.update), format_double(rec.lr),
                     format_double(rec.mean_reward),
                     format_double(rec.mean_episode_return),
                     std::to_string(rec.episodes_finished),
                     format_double(rec.diag.mean_ratio),
                     format_double(rec.diag.clip_fraction),
                     format_double(rec.diag.policy_loss),
                     format_double(rec.diag.value_loss),
                     format_double(rec.diag.entropy),
                     format_double(rec.diag.approx_kl)});
  write_text_file(artifact_path(cfg, "train_diagnostics.csv"), csv);

  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "policy";
  j["task"] = cfg.task;
  j["scenario"] = scenario.name;
  j["d"] = cfg.d;
  j["concat_target"] = tc.episode.concat_target;
  j["factors"] = result.policy.factors;
  j["train_seed"] = cfg.train_seed;
  j["total_steps"] = cfg.ppo.total_steps;
  j["repnet_digest"] = file_digest(rpath);
  j["actor"] = mlp_to_json(result.policy.actor);
  j["critic"] = mlp_to_json(result.policy.critic);
  write_text_file(artifact_path(cfg, "policy.json"), j.dump());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string rpath = artifact_path(cfg, "repnet.json");
  const std::string ppath = artifact_path(cfg, "policy.json");
  if (!fs::exists(rpath)) throw IoError("representation network not found: " + rpath);
  if (!fs::exists(ppath)) throw IoError("policy not found: " + ppath);
  const RepnetArtifact art = load_repnet(rpath);
  const PolicyArtifact pol = load_policy(ppath);
  require(art.task == cfg.task && pol.task == cfg.task,
          "artifacts in '" + cfg.out_dir + "' were trained for task '" +
              pol.task + "'");
  if (pol.repnet_digest != file_digest(rpath))
    throw IoError("stale policy: repnet.json changed after the policy was trained");

  std::vector<ctl::ScenarioSpec> scenarios = scenarios_for(cfg);
  if (cfg.episode_max_steps > 0)
    for (auto& s : scenarios) s.max_steps = cfg.episode_max_steps;

  ctl::EpisodeConfig ecfg;
  ecfg.reward_scale = cfg.reward_scale;
  ecfg.terminate_eps = cfg.terminate_eps;
  ecfg.concat_target = pol.concat_target;

  const ctl::EvalReport report =
      ctl::evaluate(pol.policy, art.net, scenarios, env_build(cfg), ecfg,
                    cfg.eval_experiments, cfg.eval_seed, mode_from(cfg.eval_mode));

  std::string summary = csv_join(
      {"scenario", "n", "mean_final_fidelity", "ci_half_width", "ci_degenerate",
       "mean_initial_fidelity", "mean_final_reward", "reach_fraction"});
  for (const auto& res : report.scenarios)
    summary += csv_join({res.name, std::to_string(res.n_experiments),
                         format_double(res.mean_final_fidelity),
                         format_double(res.ci_half_width),
                         res.ci_degenerate ? "true" : "false",
                         format_double(res.mean_initial_fidelity),
                         format_double(res.mean_final_reward),
                         format_double(res.reach_fraction)});
  write_text_file(artifact_path(cfg, "eval_summary.csv"), summary);

  const long param_dim = report.scenarios.empty() ||
                                 report.scenarios[0].trajectories.empty()
                             ? 0
                             : report.scenarios[0].trajectories[0].steps[0].params.size();
  std::vector<std::string> header = {"scenario", "experiment", "step",
                                     "actions",  "reward",     "rep_distance",
                                     "fidelity"};
  for (long i = 0; i < param_dim; ++i)
    header.push_back("param_" + std::to_string(i));
  std::string traces = csv_join(header);
  for (const auto& res : report.scenarios)
    for (std::size_t e = 0; e < res.trajectories.size(); ++e)
      for (const auto& rec : res.trajectories[e].steps) {
        std::vector<std::string> row = {res.name, std::to_string(e),
                                        std::to_string(rec.step),
                                        join_actions(rec.actions),
                                        format_double(rec.reward),
                                        format_double(rec.rep_distance),
                                        format_double(rec.fidelity)};
        for (long i = 0; i < rec.params.size(); ++i)
          row.push_back(format_double(rec.params[i]));
        traces += csv_join(row);
      }
  write_text_file(artifact_path(cfg, "eval_trajectories.csv"), traces);

  if (cfg.export_wigner && (cfg.task == "cat" || cfg.task == "process_output")) {
    for (const auto& res : report.scenarios) {
      if (res.trajectories.empty()) continue;
      const VectorXd p = res.trajectories[0].final_step().params;
      const qc::QuantumState state =
          cfg.task == "cat"
              ? cv::cat_state(cxd(p[0], p[1]), cfg.cv_cutoff)
              : cv::kerr_gate(cv::displaced_vacuum(p[0], p[1], cfg.cv_cutoff));
      const cv::WignerGrid grid;
      const MatrixXd w = cv::wigner_function(state, grid);
      std::string wig = csv_join({"x", "p", "w"});
      for (int ix = 0; ix < grid.nx; ++ix)
        for (int ip = 0; ip < grid.np; ++ip) {
          const double x =
              grid.xmin + (grid.xmax - grid.xmin) * double(ix) / double(grid.nx - 1);
          const double pp =
              grid.pmin + (grid.pmax - grid.pmin) * double(ip) / double(grid.np - 1);
          wig += csv_join({format_double(x), format_double(pp),
                           format_double(w(ix, ip))});
        }
      write_text_file(artifact_path(cfg, ("wigner_" + res.name + ".csv").c_str()),
                      wig);
    }
  }
  return 0;
}

int cmd_export_embedding(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string rpath = artifact_path(cfg, "repnet.json");
  const std::string dpath = artifact_path(cfg, "dataset.json");
  if (!fs::exists(rpath)) throw IoError("representation network not found: " + rpath);
  if (!fs::exists(dpath)) throw IoError("dataset not found: " + dpath);
  const RepnetArtifact art = load_repnet(rpath);
  const Dataset ds = load_dataset(dpath);
  require(art.task == ds.task, "network and dataset belong to different tasks");
  if (file_digest(dpath) != art.dataset_digest)
    throw IoError("stale representation network: dataset.json changed after it "
                  "was trained");

  const auto records = to_rep_records(ds);
  std::vector<VectorXd> reps;
  reps.reserve(records.size());
  for (const auto& rec : records) {
    auto pairs = rec.context;
    pairs.insert(pairs.end(), rec.queries.begin(), rec.queries.end());
    reps.push_back(rep::encode(art.net, pairs));
  }
  const MatrixXd proj = rep::pca_project(reps);

  const long param_dim = ds.records.empty() ? 0 : ds.records[0].params.size();
  std::vector<std::string> header;
  for (long i = 0; i < param_dim; ++i)
    header.push_back("param_" + std::to_string(i));
  header.push_back("label");
  header.push_back("comp_1");
  header.push_back("comp_2");
  std::string csv = csv_join(header);
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    std::vector<std::string> row;
    for (long i = 0; i < param_dim; ++i)
      row.push_back(format_double(ds.records[r].params[i]));
    row.push_back(format_double(ds.records[r].label));
    row.push_back(format_double(proj(long(r), 0)));
    row.push_back(format_double(proj(long(r), 1)));
    csv += csv_join(row);
  }
  write_text_file(artifact_path(cfg, "embedding.csv"), csv);
  return 0;
}

}  // namespace qsteer::io
