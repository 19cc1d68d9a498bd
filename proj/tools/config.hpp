#ifndef MMSLDL_TOOLS_CONFIG_HPP
#define MMSLDL_TOOLS_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmsldl/slrdl.hpp"
#include "mmsldl/trainer.hpp"
#include "mmsldl/types.hpp"

namespace mmsldl::cli {

struct DatasetSpec {
  std::string root;  // empty means "not an image-directory run"
  int width = 32;
  int height = 32;
};

struct SyntheticSpec {
  bool enabled = false;
  int classes = 5;
  int train_per_class = 10;
  int test_per_class = 10;
  Index dim = 256;
  Index rank = 5;
  double corruption = 0.3;    // planted spikes, training columns only
  bool corrupt_tests = false;
};

struct OcclusionSpec {
  bool enabled = false;
  double fraction = 0.3;
  std::string patch_dir;  // empty selects the built-in textures
};

// Everything a run needs; serializes to/from JSON so the effective
// configuration can sit next to the outputs and reproduce them.
struct RunConfig {
  std::string command;
  DatasetSpec dataset;
  SyntheticSpec synthetic;
  Hyperparams hyperparams;
  TrainOptions options;
  Index train_per_class = 10;
  int repeats = 10;
  std::uint64_t seed = 0;
  OcclusionSpec occlusion;
  std::string out = "mmsldl_out";
  std::string model;
  std::vector<int> sample_ids{0};
  std::string input;
  std::vector<double> grid_alpha;
  std::vector<double> grid_beta;
  std::vector<double> grid_lambda;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

// Writes <out>/config.json; creates the directory when needed.
void write_effective_config(const RunConfig& cfg);

}  // namespace mmsldl::cli

#endif
