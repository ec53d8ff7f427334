#include "socnn_cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <optional>

#include "socnn/errors.hpp"
#include "socnn/solayers.hpp"
#include "socnn_cli/gradcheck_suite.hpp"
#include "socnn_cli/run.hpp"

namespace socnn::cli {

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::string checkpoint;
  std::vector<std::string> overrides;
};

RunConfig resolve(const GlobalFlags& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  if (!g.out.empty()) cfg.set("out", g.out);
  if (g.threads) cfg.set("threads", std::to_string(*g.threads));
  if (!g.checkpoint.empty()) cfg.set("checkpoint", g.checkpoint);
  return cfg;
}

}  // namespace

int run_app(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Second-order pooling CNN training and verification tool", "socnn"};
  app.require_subcommand(1);
  {
    std::string keys = "\nConfiguration keys (--set key=value or --config file):\n";
    const RunConfig defaults;
    for (const auto& k : defaults.keys()) {
      std::string line = "  " + k.name;
      line.resize(std::max<std::size_t>(line.size() + 1, 26), ' ');
      keys += line + k.help + " [" + k.value + "]\n";
    }
    app.footer(keys);
  }

  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration file (key = value)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Root random seed");
  app.add_option("--out", g.out, "Output directory (train) or file prefix");
  app.add_option("--threads", g.threads, "Worker threads for minibatch sharding")
      ->check(CLI::PositiveNumber);
  app.add_option("--checkpoint", g.checkpoint, "Checkpoint to resume from or evaluate");
  app.add_option("--set", g.overrides, "Override a config key: --set optim.epochs=5");

  auto* train = app.add_subcommand("train", "Train a model and write metrics.csv + checkpoints");
  auto* eval = app.add_subcommand("eval", "Top-1 and per-class accuracy of a checkpoint");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer and model");
  GradcheckOptions gopt;
  std::string fault;
  grad->add_option("--seeds", gopt.seeds, "Random draws per layer")->check(CLI::PositiveNumber);
  bool layers_only = false, models_only = false;
  grad->add_flag("--layers-only", layers_only, "Skip the whole-model checks");
  grad->add_flag("--models-only", models_only, "Skip the per-layer checks");
  grad->add_option("--inject-fault", fault, "Corrupt one backward rule")->group("");
  grad->add_flag("--degenerate-robust", gopt.degenerate_robust,
                 "Feed the robust layer a rank-deficient input")
      ->group("");

  auto* count = app.add_subcommand("count-params", "Per-layer parameter table");
  std::vector<std::string> names;
  count->add_option("models", names, "Model names (default: the configured model)");

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic covariance-separable dataset");
  std::string synth_file;
  gen->add_option("file", synth_file, "Output file (default: <out>/synth.soc)");

  for (auto* sub : {train, eval, grad, count, gen}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(g);
    if (*train) return cmd_train(cfg, out);
    if (*eval) return cmd_eval(cfg, out);
    if (*count) return cmd_count_params(cfg, names, out);
    if (*gen) {
      const std::string file =
          synth_file.empty() ? (std::filesystem::path(cfg.text("out")) / "synth.soc").string()
                             : synth_file;
      return cmd_gen_synth(cfg, file, out);
    }
    if (*grad) {
      gopt.seed = cfg.u64("seed");
      gopt.layers = !models_only;
      gopt.models = !layers_only;
      debug::inject_backward_fault(fault);
      const auto checks = run_gradchecks(gopt);
      debug::inject_backward_fault("");
      return print_gradcheck_report(checks, out) ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace socnn::cli
