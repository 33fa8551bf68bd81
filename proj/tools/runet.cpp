// runet: synthetic data, CT preprocessing, training, prediction and FROC
// evaluation for the residual U-Net family.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "runet/cli/commands.hpp"

namespace {

using namespace runet;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

// Flags bound to a config key; applied after the config file and --set.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values.emplace_back(key, v); }, help);
  }
};

RunConfig resolve(const Globals& g, const Overrides& o) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw CommandError("io", "cannot open config " + g.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str(), cfg);
  }
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : o.values) set_config_value(cfg, k, v);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

std::string error_code(const std::exception& e) {
  if (auto* c = dynamic_cast<const CommandError*>(&e)) return c->code();
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const MhdError*>(&e)) return "mhd";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "runtime";
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual U-Net lung nodule segmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file");
  app.add_option("--seed", g.seed, "seed for every random stream");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");

  Overrides o;
  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic phantom dataset");
  o.bind(gen, "--count", "count", "number of slices");
  o.bind(gen, "--size", "input_size", "slice size in pixels (multiple of 16)");
  o.bind(gen, "--nodules", "nodules_per_image", "nodules per slice");

  auto* pre = app.add_subcommand("preprocess", "turn .mhd volumes and annotations into a dataset");
  o.bind(pre, "--mhd", "mhd", ".mhd file or directory of them");
  o.bind(pre, "--annotations", "annotations", "annotations CSV");
  o.bind(pre, "--size", "input_size", "output slice size");

  auto* train = app.add_subcommand("train", "train on a dataset");
  o.bind(train, "--data", "data_dir", "dataset directory");
  o.bind(train, "--arch", "arch", "run, unet or dual_path");
  o.bind(train, "--base", "base_channels", "channels of the first stage");
  o.bind(train, "--size", "input_size", "input size");
  o.bind(train, "--epochs", "epochs", "total epochs");
  o.bind(train, "--batch", "batch_size", "batch size (0 = by input size)");
  o.bind(train, "--fold", "fold", "held-out fold, -1 for none");
  o.bind(train, "--resume", "checkpoint", "checkpoint to resume from");

  auto* predict = app.add_subcommand("predict", "probability maps from a checkpoint");
  o.bind(predict, "--checkpoint", "checkpoint", "checkpoint file");
  o.bind(predict, "--data", "data_dir", "dataset directory");
  o.bind(predict, "--mhd", "mhd", "predict every slice of this .mhd volume instead");

  auto* eval = app.add_subcommand("eval-froc", "FROC curve with bootstrap confidence band");
  o.bind(eval, "--predictions", "predictions_dir", "predictions directory");
  o.bind(eval, "--data", "data_dir", "ground truth dataset directory");
  o.bind(eval, "--threshold", "threshold", "probability threshold");
  o.bind(eval, "--resamples", "bootstrap_resamples", "bootstrap resamples");

  auto* pc = app.add_subcommand("param-count", "per-layer parameter table");
  o.bind(pc, "--arch", "arch", "run, unet or dual_path");
  o.bind(pc, "--base", "base_channels", "channels of the first stage");
  o.bind(pc, "--size", "input_size", "input size");
  bool all = false;
  pc->add_flag("--all", all, "all three architectures");

  auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint's header");
  std::string ckpt_path;
  inspect->add_option("path", ckpt_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    const RunConfig cfg = resolve(g, o);
    if (*gen) {
      cmd_gen_synthetic(cfg, std::cout);
    } else if (*pre) {
      cmd_preprocess(cfg, std::cout);
    } else if (*train) {
      cmd_train(cfg, std::cout);
    } else if (*predict) {
      cmd_predict(cfg, std::cout);
    } else if (*eval) {
      cmd_eval_froc(cfg, std::cout);
    } else if (*pc) {
      cmd_param_count(cfg, all, std::cout);
    } else if (*inspect) {
      cmd_inspect_checkpoint(ckpt_path, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << error_code(e) << ": " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
