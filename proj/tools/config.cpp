#include "config.hpp"

#include <filesystem>
#include <fstream>

#include "mmsldl/errors.hpp"

using nlohmann::json;

namespace mmsldl::cli {

namespace {

// Overwrite dst only when the key is present, so file values override
// defaults and absent keys leave them alone.
template <typename T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["dataset"] = {{"root", cfg.dataset.root},
                  {"width", cfg.dataset.width},
                  {"height", cfg.dataset.height}};
  j["synthetic"] = {{"enabled", cfg.synthetic.enabled},
                    {"classes", cfg.synthetic.classes},
                    {"train_per_class", cfg.synthetic.train_per_class},
                    {"test_per_class", cfg.synthetic.test_per_class},
                    {"dim", cfg.synthetic.dim},
                    {"rank", cfg.synthetic.rank},
                    {"corruption", cfg.synthetic.corruption},
                    {"corrupt_tests", cfg.synthetic.corrupt_tests}};
  j["hyperparams"] = {{"alpha", cfg.hyperparams.alpha},
                      {"beta", cfg.hyperparams.beta},
                      {"lambda", cfg.hyperparams.lambda},
                      {"gamma", cfg.hyperparams.gamma},
                      {"mu0", cfg.hyperparams.mu0},
                      {"rho", cfg.hyperparams.rho},
                      {"mu_max", cfg.hyperparams.mu_max},
                      {"eps_solver", cfg.hyperparams.eps_solver},
                      {"eps_dict", cfg.hyperparams.eps_dict},
                      {"max_inner_iters", cfg.hyperparams.max_inner_iters},
                      {"max_dict_iters", cfg.hyperparams.max_dict_iters},
                      {"max_outer_alternations", cfg.hyperparams.max_outer_alternations}};
  j["options"] = {{"ridge_lambda", cfg.options.ridge_lambda},
                  {"rpca_lambda", cfg.options.rpca.lambda},
                  {"rpca_tol", cfg.options.rpca.tol},
                  {"rpca_max_iters", cfg.options.rpca.max_iters},
                  {"ksvd_rounds", cfg.options.ksvd_rounds},
                  {"ksvd_sparsity", cfg.options.ksvd_sparsity}};
  j["split"] = {{"train_per_class", cfg.train_per_class},
                {"repeats", cfg.repeats},
                {"seed", cfg.seed}};
  j["occlusion"] = {{"enabled", cfg.occlusion.enabled},
                    {"fraction", cfg.occlusion.fraction},
                    {"patch_dir", cfg.occlusion.patch_dir}};
  j["out"] = cfg.out;
  j["model"] = cfg.model;
  j["sample_ids"] = cfg.sample_ids;
  j["input"] = cfg.input;
  j["grid"] = {{"alpha", cfg.grid_alpha},
               {"beta", cfg.grid_beta},
               {"lambda", cfg.grid_lambda}};
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  maybe(j, "command", cfg.command);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    maybe(d, "root", cfg.dataset.root);
    maybe(d, "width", cfg.dataset.width);
    maybe(d, "height", cfg.dataset.height);
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    maybe(s, "enabled", cfg.synthetic.enabled);
    maybe(s, "classes", cfg.synthetic.classes);
    maybe(s, "train_per_class", cfg.synthetic.train_per_class);
    maybe(s, "test_per_class", cfg.synthetic.test_per_class);
    maybe(s, "dim", cfg.synthetic.dim);
    maybe(s, "rank", cfg.synthetic.rank);
    maybe(s, "corruption", cfg.synthetic.corruption);
    maybe(s, "corrupt_tests", cfg.synthetic.corrupt_tests);
  }
  if (j.contains("hyperparams")) {
    const json& h = j.at("hyperparams");
    maybe(h, "alpha", cfg.hyperparams.alpha);
    maybe(h, "beta", cfg.hyperparams.beta);
    maybe(h, "lambda", cfg.hyperparams.lambda);
    maybe(h, "gamma", cfg.hyperparams.gamma);
    maybe(h, "mu0", cfg.hyperparams.mu0);
    maybe(h, "rho", cfg.hyperparams.rho);
    maybe(h, "mu_max", cfg.hyperparams.mu_max);
    maybe(h, "eps_solver", cfg.hyperparams.eps_solver);
    maybe(h, "eps_dict", cfg.hyperparams.eps_dict);
    maybe(h, "max_inner_iters", cfg.hyperparams.max_inner_iters);
    maybe(h, "max_dict_iters", cfg.hyperparams.max_dict_iters);
    maybe(h, "max_outer_alternations", cfg.hyperparams.max_outer_alternations);
  }
  if (j.contains("options")) {
    const json& o = j.at("options");
    maybe(o, "ridge_lambda", cfg.options.ridge_lambda);
    maybe(o, "rpca_lambda", cfg.options.rpca.lambda);
    maybe(o, "rpca_tol", cfg.options.rpca.tol);
    maybe(o, "rpca_max_iters", cfg.options.rpca.max_iters);
    maybe(o, "ksvd_rounds", cfg.options.ksvd_rounds);
    maybe(o, "ksvd_sparsity", cfg.options.ksvd_sparsity);
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    maybe(s, "train_per_class", cfg.train_per_class);
    maybe(s, "repeats", cfg.repeats);
    maybe(s, "seed", cfg.seed);
  }
  if (j.contains("occlusion")) {
    const json& o = j.at("occlusion");
    maybe(o, "enabled", cfg.occlusion.enabled);
    maybe(o, "fraction", cfg.occlusion.fraction);
    maybe(o, "patch_dir", cfg.occlusion.patch_dir);
  }
  maybe(j, "out", cfg.out);
  maybe(j, "model", cfg.model);
  maybe(j, "sample_ids", cfg.sample_ids);
  maybe(j, "input", cfg.input);
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    maybe(g, "alpha", cfg.grid_alpha);
    maybe(g, "beta", cfg.grid_beta);
    maybe(g, "lambda", cfg.grid_lambda);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_configuration("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw invalid_configuration("config file " + path + " is not valid JSON: " +
                                e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw invalid_configuration("config file " + path + " has a bad field: " +
                                e.what());
  }
}

void write_effective_config(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  const std::string path = (std::filesystem::path(cfg.out) / "config.json").string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write effective config: " + path);
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace mmsldl::cli
