// passdoor: config-driven pipeline around the passcode-conditioned
// poisoning toolkit. Stages: data -> surrogate -> generator -> poison ->
// clean_victim/victim -> eval -> sweep -> defend -> report.

#include <CLI11.hpp>

#include <iostream>
#include <set>

#include "passdoor/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitThreshold = 4;

struct Options {
  std::string config;
  std::string out = "runs";
  std::string stage;
  bool force = false;
  long long seed = -1;
};

int run_stages(const Options& opt, const std::set<std::string>& only) {
  passdoor::SuiteConfig suite;
  try {
    suite = passdoor::SuiteConfig::from_file(opt.config);
  } catch (const passdoor::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  passdoor::Runner runner(opt.out, opt.force);
  for (auto& exp : suite.experiments) {
    if (opt.seed >= 0) {
      // Replication override: re-keys the attack/victim randomness.
      exp.poison.seed = static_cast<std::uint64_t>(opt.seed);
      exp.victim.seed = static_cast<std::uint64_t>(opt.seed);
    }
    try {
      auto stages = runner.run(exp, only);
      for (const auto& [name, res] : stages) {
        std::cout << exp.name << ": " << name << " -> " << res.dir.string()
                  << (res.cached ? " (cached)" : "") << "\n";
      }
    } catch (const passdoor::ConfigError& e) {
      std::cerr << "config error in '" << exp.name << "': " << e.what() << "\n";
      return kExitConfig;
    } catch (const passdoor::UnderfitError& e) {
      std::cerr << "threshold failure in '" << exp.name << "': " << e.what() << "\n";
      return kExitThreshold;
    } catch (const std::exception& e) {
      std::cerr << "stage failure in '" << exp.name << "': " << e.what() << "\n";
      return kExitStage;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"passcode-conditioned data poisoning experiment pipeline"};
  app.require_subcommand(0, 1);

  Options opt;
  app.add_option("--config", opt.config, "experiment config (JSON)");
  app.add_option("--out", opt.out, "output root directory");
  app.add_option("--stage", opt.stage, "run a single stage by name");
  app.add_option("--seed", opt.seed, "override poison/victim seeds");
  app.add_flag("--force", opt.force, "ignore cached stage outputs");

  // Subcommand -> stage set. `run` executes the full pipeline.
  const std::map<std::string, std::set<std::string>> commands = {
      {"gen-data", {"data"}},
      {"train-generator", {"data", "surrogate", "generator"}},
      {"make-poison", {"poison"}},
      {"train-victim", {"clean_victim", "victim"}},
      {"evaluate", {"eval"}},
      {"sweep", {"sweep"}},
      {"defend", {"defend"}},
      {"report", {"report"}},
      {"run", {}},
  };
  for (const auto& [name, _] : commands) {
    app.add_subcommand(name, name == "run" ? "run the full pipeline" : "run the " + name + " stage(s)");
  }

  CLI11_PARSE(app, argc, argv);

  if (opt.config.empty()) {
    std::cerr << "config error: --config is required\n";
    return kExitConfig;
  }

  std::set<std::string> only;
  if (!opt.stage.empty()) {
    only = {opt.stage};
  }
  for (const auto& [name, stages] : commands) {
    if (app.got_subcommand(name)) only = stages;
  }
  return run_stages(opt, only);
}
