#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "mmsldl/errors.hpp"

using mmsldl::cli::RunConfig;

namespace {

// Adds the options shared by the data-driven commands (train/eval/gridsearch).
void add_data_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--dataset", cfg.dataset.root,
                  "image dataset directory (root/<class>/*.png|jpg|pgm)");
  sub->add_option("--width", cfg.dataset.width, "resize width for dataset images");
  sub->add_option("--height", cfg.dataset.height, "resize height for dataset images");
  sub->add_flag("--synthetic", cfg.synthetic.enabled,
                "use the generated low-rank benchmark instead of --dataset");
  sub->add_option("--classes", cfg.synthetic.classes, "synthetic: number of classes");
  sub->add_option("--test-per-class", cfg.synthetic.test_per_class,
                  "synthetic: held-out samples per class");
  sub->add_option("--dim", cfg.synthetic.dim, "synthetic: sample dimension");
  sub->add_option("--rank", cfg.synthetic.rank, "synthetic: class subspace rank");
  sub->add_option("--corruption", cfg.synthetic.corruption,
                  "synthetic: fraction of entries replaced by +/-1 spikes");
  sub->add_flag("--corrupt-tests", cfg.synthetic.corrupt_tests,
                "synthetic: corrupt the test columns too");
  sub->add_option_function<mmsldl::Index>(
      "--train-per-class",
      [&cfg](const mmsldl::Index& v) {
        cfg.train_per_class = v;
        cfg.synthetic.train_per_class = static_cast<int>(v);
      },
      "training samples drawn per class");
  sub->add_option_function<double>(
      "--occlusion-fraction",
      [&cfg](const double& v) {
        cfg.occlusion.fraction = v;
        cfg.occlusion.enabled = true;
      },
      "occlude training images with a patch covering this area fraction");
  sub->add_option_function<std::string>(
      "--patch-dir",
      [&cfg](const std::string& v) {
        cfg.occlusion.patch_dir = v;
        cfg.occlusion.enabled = true;
      },
      "directory of occluder images (default: built-in textures)");
  sub->add_flag("--no-occlusion",
                [&cfg](std::int64_t) { cfg.occlusion.enabled = false; },
                "disable occlusion even if the config file enables it");
}

void add_hyper_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--alpha", cfg.hyperparams.alpha, "cross-modality coupling weight");
  sub->add_option("--beta", cfg.hyperparams.beta, "l1 weight on the codes");
  sub->add_option("--lambda", cfg.hyperparams.lambda, "l1 weight on the sparse error");
  sub->add_option("--gamma", cfg.hyperparams.gamma, "dictionary damping in [0, 1]");
  sub->add_option("--max-inner-iters", cfg.hyperparams.max_inner_iters,
                  "coding iteration cap");
  sub->add_option("--max-dict-iters", cfg.hyperparams.max_dict_iters,
                  "dictionary refinement cap per alternation");
  sub->add_option("--max-alternations", cfg.hyperparams.max_outer_alternations,
                  "outer alternation cap");
  sub->add_option("--ridge-lambda", cfg.options.ridge_lambda,
                  "regularizer of the label-projection fit");
  sub->add_option("--ksvd-rounds", cfg.options.ksvd_rounds,
                  "dictionary initialization rounds");
  sub->add_option("--ksvd-sparsity", cfg.options.ksvd_sparsity,
                  "initialization sparsity (<=0 = auto)");
}

void add_common_options(CLI::App* sub, RunConfig& cfg, std::string& config_path) {
  sub->add_option("--config", config_path,
                  "JSON config file; explicit flags override its values");
  sub->add_option("--out", cfg.out, "output directory");
  sub->add_option("--seed", cfg.seed, "base random seed");
}

// The config file must be parsed before CLI11 assigns flag values, so flags
// override the file. CLI11 reads it too (as a no-op) to keep --help honest.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  std::string config_path = find_config_arg(argc, argv);
  if (!config_path.empty()) {
    try {
      cfg = mmsldl::cli::load_config_file(config_path);
    } catch (const mmsldl::error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  CLI::App app{"multi-modal structured low-rank dictionary learning"};
  app.require_subcommand(1);
  std::string config_dummy;

  CLI::App* train = app.add_subcommand("train", "fit a model and archive it");
  add_common_options(train, cfg, config_dummy);
  add_data_options(train, cfg);
  add_hyper_options(train, cfg);

  CLI::App* eval = app.add_subcommand(
      "eval", "recognition-rate protocol (or score one archived model)");
  add_common_options(eval, cfg, config_dummy);
  add_data_options(eval, cfg);
  add_hyper_options(eval, cfg);
  eval->add_option("--repeats", cfg.repeats, "independent repeats (seed+r each)");
  eval->add_option("--model", cfg.model, "archived model to score instead of retraining");

  CLI::App* decompose = app.add_subcommand(
      "decompose", "write original/reconstruction/error images for training samples");
  add_common_options(decompose, cfg, config_dummy);
  decompose->add_option("--model", cfg.model, "archived model directory")->required();
  decompose->add_option("--samples", cfg.sample_ids, "training column ids")
      ->delimiter(',');

  CLI::App* transform = app.add_subcommand(
      "transform", "write both modality views of an image or dataset");
  add_common_options(transform, cfg, config_dummy);
  transform->add_option("--input", cfg.input, "single input image");
  transform->add_option("--dataset", cfg.dataset.root, "image dataset directory");
  transform->add_option("--width", cfg.dataset.width, "resize width");
  transform->add_option("--height", cfg.dataset.height, "resize height");

  CLI::App* synth = app.add_subcommand(
      "synth", "generate the synthetic benchmark with ground-truth blobs");
  add_common_options(synth, cfg, config_dummy);
  synth->add_option("--classes", cfg.synthetic.classes, "number of classes");
  synth->add_option("--train-per-class", cfg.synthetic.train_per_class,
                    "training samples per class");
  synth->add_option("--test-per-class", cfg.synthetic.test_per_class,
                    "held-out samples per class");
  synth->add_option("--dim", cfg.synthetic.dim, "sample dimension");
  synth->add_option("--rank", cfg.synthetic.rank, "class subspace rank");
  synth->add_option("--corruption", cfg.synthetic.corruption,
                    "fraction of entries replaced by +/-1 spikes");

  CLI::App* grid = app.add_subcommand(
      "gridsearch", "5-fold cross-validated hyperparameter search");
  add_common_options(grid, cfg, config_dummy);
  add_data_options(grid, cfg);
  add_hyper_options(grid, cfg);
  grid->add_option("--grid-alpha", cfg.grid_alpha, "alpha values to try")
      ->delimiter(',');
  grid->add_option("--grid-beta", cfg.grid_beta, "beta values to try")->delimiter(',');
  grid->add_option("--grid-lambda", cfg.grid_lambda, "lambda values to try")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) mmsldl::cli::run_train(cfg);
    if (*eval) mmsldl::cli::run_eval(cfg);
    if (*decompose) mmsldl::cli::run_decompose(cfg);
    if (*transform) mmsldl::cli::run_transform(cfg);
    if (*synth) mmsldl::cli::run_synth(cfg);
    if (*grid) mmsldl::cli::run_gridsearch(cfg);
  } catch (const mmsldl::invalid_configuration& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mmsldl::invalid_parameter& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mmsldl::invalid_dataset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mmsldl::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mmsldl::invalid_input& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mmsldl::numerical_failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const mmsldl::invalid_state& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
