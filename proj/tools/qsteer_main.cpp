// qsteer: steer unknown quantum states toward targets using a learned
// measurement-statistics representation and a PPO agent.
//
// Pipeline: gen-data -> train-repnet -> train-agent -> eval, with
// export-embedding available once a representation network exists.
#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include "qsteer/cli_io.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Key-value run configuration file");
  cmd->add_option("--out", flags.out_dir, "Output directory (overrides out.dir)");
  cmd->add_option("--preset", flags.preset, "Workload preset")
      ->check(CLI::IsMember({"smoke", "full"}));
  cmd->add_option("--seed", flags.seed, "Override every seed in the configuration")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
}

qsteer::io::RunConfig resolve(const CommonFlags& flags) {
  qsteer::io::RunConfig cfg;
  if (!flags.config_path.empty()) cfg = qsteer::io::load_config(flags.config_path);
  if (flags.preset == "smoke") {
    cfg.repnet_epochs = 50;
    cfg.ppo.total_steps = 2048;
    cfg.eval_experiments = 10;
  } else if (flags.preset == "full") {
    cfg.repnet_epochs = 200;
    cfg.ppo.total_steps = 50000;
    cfg.eval_experiments = 100;
  }
  if (flags.seed_set) {
    cfg.data_seed = flags.seed;
    cfg.repnet_seed = flags.seed;
    cfg.train_seed = flags.seed;
    cfg.eval_seed = flags.seed;
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representation-guided steering of quantum states"};
  app.require_subcommand(1);

  struct Verb {
    const char* name;
    const char* help;
    int (*run)(const qsteer::io::RunConfig&);
  };
  const Verb verbs[] = {
      {"gen-data", "Generate a measurement-statistics dataset",
       qsteer::io::cmd_gen_data},
      {"train-repnet", "Train the representation network on a dataset",
       qsteer::io::cmd_train_repnet},
      {"train-agent", "Train the steering agent against the simulator",
       qsteer::io::cmd_train_agent},
      {"eval", "Evaluate a trained agent over the scenario catalog",
       qsteer::io::cmd_eval},
      {"export-embedding", "Project dataset representations to two dimensions",
       qsteer::io::cmd_export_embedding},
  };

  CommonFlags flags;
  std::function<int()> selected;
  for (const Verb& verb : verbs) {
    CLI::App* cmd = app.add_subcommand(verb.name, verb.help);
    add_common(cmd, flags);
    cmd->callback([&selected, &flags, run = verb.run]() {
      selected = [&flags, run]() { return run(resolve(flags)); };
    });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return selected();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
