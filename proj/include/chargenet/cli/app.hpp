#pragma once

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chargenet/cli/commands.hpp"

namespace chargenet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline void add_model_flags(CLI::App* cmd, ModelOverrides& m) {
  cmd->add_option("--config", m.config_path, "JSON file of model settings; flags override it");
  cmd->add_option("--seed", m.seed, "random seed");
  cmd->add_option("--iterations", m.iterations, "memory iterations T");
  cmd->add_option("--threshold", m.threshold, "decision threshold on sigmoid outputs");
  cmd->add_option("--loss-variant", m.loss_variant, "bce or positive_only");
  cmd->add_option("--ablation", m.ablation, "full, no_fc, no_fs_fw, no_fw, no_fs or no_fs_gi");
  cmd->add_option("--epochs", m.epochs, "training epochs");
  cmd->add_option("--batch-size", m.batch_size, "minibatch size");
  cmd->add_option("--d-emb", m.d_emb, "embedding width (ignored with --embeddings)");
  cmd->add_option("--d-h", m.d_h, "hidden width");
  cmd->add_option("--min-count", m.min_count, "vocabulary frequency cutoff");
}

}  // namespace detail

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Charge prediction with definition-aware fact representations", "chargenet"};
  app.require_subcommand(1);

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, metrics log and config");
  train_cmd->add_option("--train", train_o.train_path, "training facts (JSONL)")->required();
  train_cmd->add_option("--defs", train_o.defs_path, "charge definitions (JSONL)")->required();
  train_cmd->add_option("--embeddings", train_o.embeddings_path, "word vectors, one 'word f1 ... fd' per line");
  train_cmd->add_option("--out", train_o.out_dir, "output directory")->required();
  detail::add_model_flags(train_cmd, train_o.model);

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on labelled facts");
  eval_cmd->add_option("--checkpoint", eval_o.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--test", eval_o.test_path, "labelled facts (JSONL)")->required();
  eval_cmd->add_option("--defs", eval_o.defs_path, "definitions file to check against the checkpoint's charges");
  eval_cmd->add_option("--out", eval_o.out_dir, "output directory")->required();
  eval_cmd->add_option("--threshold", eval_o.threshold, "decision threshold");
  eval_cmd->add_option("--support-threshold", eval_o.support_threshold,
                       "per-class CSV keeps classes with fewer training facts than this");
  eval_cmd->add_flag("--per-label-accuracy", eval_o.per_label_accuracy, "report per-label instead of exact-match Acc");
  eval_cmd->add_flag("--exclude-zero-support", eval_o.exclude_zero_support,
                     "leave classes absent from the test set out of the macro means");

  PredictOptions predict_o;
  auto* predict_cmd = app.add_subcommand("predict", "predict charges for unlabelled facts");
  predict_cmd->add_option("--checkpoint", predict_o.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--input", predict_o.input_path, "facts (JSONL with a 'fact' field)")->required();
  predict_cmd->add_option("--out", predict_o.out_dir, "output directory")->required();
  predict_cmd->add_option("--threshold", predict_o.threshold, "decision threshold");

  AblateOptions ablate_o;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate ablation variants");
  ablate_cmd->add_option("--train", ablate_o.train_path, "training facts (JSONL)")->required();
  ablate_cmd->add_option("--test", ablate_o.test_path, "test facts (JSONL)")->required();
  ablate_cmd->add_option("--defs", ablate_o.defs_path, "charge definitions (JSONL)")->required();
  ablate_cmd->add_option("--embeddings", ablate_o.embeddings_path, "word vectors");
  ablate_cmd->add_option("--out", ablate_o.out_dir, "output directory")->required();
  ablate_cmd->add_option("--variant", ablate_o.variants, "variant to run (repeatable; default all)");
  ablate_cmd->add_option("--support-threshold", ablate_o.support_threshold,
                         "classes with fewer training facts count as rare");
  detail::add_model_flags(ablate_cmd, ablate_o.model);

  InspectOptions inspect_o;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump sentence- and word-level attention for one fact");
  inspect_cmd->add_option("--checkpoint", inspect_o.checkpoint, "checkpoint file")->required();
  inspect_cmd->add_option("--fact", inspect_o.fact, "fact text (whitespace-segmented)");
  inspect_cmd->add_option("--input", inspect_o.input_path, "facts (JSONL); use with --index");
  inspect_cmd->add_option("--index", inspect_o.index, "line of --input to inspect (0-based)");
  inspect_cmd->add_option("--out", inspect_o.out_dir, "output directory")->required();

  GenSyntheticOptions gen_o;
  std::vector<std::size_t> rare;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic corpus");
  gen_cmd->add_option("--out", gen_o.out_dir, "output directory")->required();
  gen_cmd->add_option("--classes", gen_o.spec.num_classes, "number of charges");
  gen_cmd->add_option("--train-per-class", gen_o.spec.train_per_class, "training facts per class");
  gen_cmd->add_option("--test-per-class", gen_o.spec.test_per_class, "test facts per class");
  gen_cmd->add_option("--rare", rare, "rare class ids (comma separated)")->delimiter(',');
  gen_cmd->add_option("--rare-count", gen_o.spec.rare_train_count, "training facts per rare class (at most 10)");
  gen_cmd->add_option("--unseen-forms", gen_o.spec.rare_unseen_forms,
                      "surface forms per rare-class term kept out of training facts");
  gen_cmd->add_option("--embedding-dim", gen_o.spec.embedding_dim, "also write word vectors of this width");
  gen_cmd->add_option("--seed", gen_o.spec.seed, "random seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::ostringstream help;
      app.exit(e, help, help);
      out << help.str();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "run with " << app.get_subcommands().front()->get_name() << " --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) cmd_train(train_o, out);
    else if (*eval_cmd) cmd_eval(eval_o, out);
    else if (*predict_cmd) cmd_predict(predict_o, out);
    else if (*ablate_cmd) cmd_ablate(ablate_o, out);
    else if (*inspect_cmd) cmd_inspect(inspect_o, out);
    else if (*gen_cmd) {
      gen_o.spec.rare_classes = std::set<std::size_t>(rare.begin(), rare.end());
      cmd_gen_synthetic(gen_o, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IngestionError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace chargenet::cli
