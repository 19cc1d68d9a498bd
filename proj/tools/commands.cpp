#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mmsldl/classifier.hpp"
#include "mmsldl/data_io.hpp"
#include "mmsldl/errors.hpp"
#include "mmsldl/modality.hpp"
#include "mmsldl/parallel.hpp"
#include "mmsldl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmsldl::cli {

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct MultiModalData {
  Matrix X1, X2;
  std::vector<int> labels;
  std::vector<Index> counts;
};

void require_one_source(const RunConfig& cfg) {
  const bool have_dir = !cfg.dataset.root.empty();
  if (have_dir == cfg.synthetic.enabled)
    throw invalid_configuration(
        "pick exactly one data source: --dataset <dir> or --synthetic");
}

// Synthetic benchmark pair: clean generation, deterministic first/rest split
// per class, spikes planted on the training columns (and optionally tests).
std::pair<MultiModalData, MultiModalData> build_synthetic(const SyntheticSpec& s,
                                                          std::uint64_t seed) {
  const int per_class = s.train_per_class + s.test_per_class;
  SynthDataset full = synth_multimodal(s.classes, per_class, s.dim, s.rank, 0.0, seed);

  MultiModalData train, test;
  const Index n_train = static_cast<Index>(s.classes) * s.train_per_class;
  const Index n_test = static_cast<Index>(s.classes) * s.test_per_class;
  train.X1.resize(s.dim, n_train);
  train.X2.resize(s.dim, n_train);
  test.X1.resize(s.dim, n_test);
  test.X2.resize(s.dim, n_test);

  for (int c = 0; c < s.classes; ++c) {
    const Index src = static_cast<Index>(c) * per_class;
    train.X1.middleCols(static_cast<Index>(c) * s.train_per_class, s.train_per_class) =
        full.X1.middleCols(src, s.train_per_class);
    train.X2.middleCols(static_cast<Index>(c) * s.train_per_class, s.train_per_class) =
        full.X2.middleCols(src, s.train_per_class);
    test.X1.middleCols(static_cast<Index>(c) * s.test_per_class, s.test_per_class) =
        full.X1.middleCols(src + s.train_per_class, s.test_per_class);
    test.X2.middleCols(static_cast<Index>(c) * s.test_per_class, s.test_per_class) =
        full.X2.middleCols(src + s.train_per_class, s.test_per_class);
    for (int i = 0; i < s.train_per_class; ++i) train.labels.push_back(c);
    for (int i = 0; i < s.test_per_class; ++i) test.labels.push_back(c);
  }
  train.counts.assign(static_cast<std::size_t>(s.classes), s.train_per_class);
  test.counts.assign(static_cast<std::size_t>(s.classes), s.test_per_class);

  if (s.corruption > 0.0) {
    plant_spikes(train.X1, s.corruption, seed ^ 0x7261776d6f640031ULL);
    plant_spikes(train.X2, s.corruption, seed ^ 0x7261776d6f640032ULL);
    if (s.corrupt_tests) {
      plant_spikes(test.X1, s.corruption, seed ^ 0x74736d6f64003100ULL);
      plant_spikes(test.X2, s.corruption, seed ^ 0x74736d6f64003200ULL);
    }
  }
  return {std::move(train), std::move(test)};
}

std::vector<ImagePlane> load_patches(const OcclusionSpec& spec) {
  if (spec.patch_dir.empty()) return builtin_patches();
  std::vector<std::string> files;
  if (!fs::is_directory(spec.patch_dir))
    throw invalid_dataset("occlusion patch directory does not exist: " + spec.patch_dir);
  for (const auto& entry : fs::directory_iterator(spec.patch_dir))
    if (entry.is_regular_file()) files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  std::vector<ImagePlane> patches;
  for (const auto& f : files) patches.push_back(read_image(f));
  if (patches.empty())
    throw invalid_dataset("occlusion patch directory is empty: " + spec.patch_dir);
  return patches;
}

struct ImageSource {
  DatasetManifest manifest;
  std::vector<std::vector<ImagePlane>> images;  // clean, resized
  LabeledDataset raw_all;        // modality 1 of every image
  LabeledDataset invariant_all;  // modality 2 of every image
};

ImageSource load_image_source(const RunConfig& cfg) {
  ImageSource src;
  src.manifest = scan_dataset(cfg.dataset.root, cfg.dataset.width, cfg.dataset.height);
  src.images = load_dataset(src.manifest);
  src.raw_all = make_labeled(src.images, raw_pixel_transform());
  src.invariant_all = make_labeled(src.images, illumination_invariant_transform());
  return src;
}

// One repeat's train/test matrices from an image dataset: seeded split,
// occlusion on the training images only, transforms after occlusion.
std::pair<MultiModalData, MultiModalData> build_from_images(const ImageSource& src,
                                                            const RunConfig& cfg,
                                                            std::uint64_t seed) {
  const SplitIndices idx =
      split_indices(src.raw_all.per_class_counts, cfg.train_per_class, seed);

  MultiModalData test;
  {
    LabeledDataset t1 = select_columns(src.raw_all, idx.test);
    LabeledDataset t2 = select_columns(src.invariant_all, idx.test);
    test.X1 = std::move(t1.X);
    test.X2 = std::move(t2.X);
    test.labels = std::move(t1.labels);
    test.counts = std::move(t1.per_class_counts);
  }

  MultiModalData train;
  if (!cfg.occlusion.enabled) {
    LabeledDataset t1 = select_columns(src.raw_all, idx.train);
    LabeledDataset t2 = select_columns(src.invariant_all, idx.train);
    train.X1 = std::move(t1.X);
    train.X2 = std::move(t2.X);
    train.labels = std::move(t1.labels);
    train.counts = std::move(t1.per_class_counts);
    return {std::move(train), std::move(test)};
  }

  const std::vector<ImagePlane> patches = load_patches(cfg.occlusion);
  std::mt19937_64 rng(seed ^ 0x0cc10cc10cc10cc1ULL);
  std::vector<std::vector<ImagePlane>> occluded(idx.train.size());
  for (std::size_t c = 0; c < idx.train.size(); ++c) {
    for (Index i : idx.train[c]) {
      const std::size_t pick =
          patches.size() == 1
              ? 0
              : static_cast<std::size_t>(rng() % patches.size());
      occluded[c].push_back(occlude(src.images[c][static_cast<std::size_t>(i)],
                                    cfg.occlusion.fraction, rng(), patches[pick]));
    }
  }
  LabeledDataset t1 = make_labeled(occluded, raw_pixel_transform());
  LabeledDataset t2 = make_labeled(occluded, illumination_invariant_transform());
  train.X1 = std::move(t1.X);
  train.X2 = std::move(t2.X);
  train.labels = std::move(t1.labels);
  train.counts = std::move(t1.per_class_counts);
  return {std::move(train), std::move(test)};
}

struct EvalOutcome {
  int correct = 0;
  int total = 0;
  int agreements = 0;
  std::vector<int> predictions;
  std::vector<std::vector<int>> confusion;  // [true][predicted]

  double accuracy() const { return total == 0 ? 0.0 : 100.0 * correct / total; }
  double agreement_rate() const {
    return total == 0 ? 0.0 : static_cast<double>(agreements) / total;
  }
};

EvalOutcome evaluate_model(const ModelBundle& model, const MultiModalData& test) {
  const Hyperparams& h = model.hyperparams;
  CodingResult c1 = code_samples(test.X1, model.dictionaries[0], h);
  CodingResult c2 = code_samples(test.X2, model.dictionaries[1], h);

  const int C = static_cast<int>(model.num_classes());
  EvalOutcome out;
  out.total = static_cast<int>(test.labels.size());
  out.confusion.assign(static_cast<std::size_t>(C), std::vector<int>(C, 0));
  out.predictions.resize(test.labels.size());

  for (Index i = 0; i < static_cast<Index>(test.labels.size()); ++i) {
    FusionDecision decision = fuse_and_classify(
        model, {Vector(c1.Z.col(i)), Vector(c2.Z.col(i))},
        {Vector(test.X1.col(i)), Vector(test.X2.col(i))});
    const int truth = test.labels[static_cast<std::size_t>(i)];
    out.predictions[static_cast<std::size_t>(i)] = decision.winner;
    if (!decision.residuals_evaluated) ++out.agreements;
    if (decision.winner == truth) ++out.correct;
    if (truth >= 0 && truth < C && decision.winner >= 0 && decision.winner < C)
      ++out.confusion[static_cast<std::size_t>(truth)]
                     [static_cast<std::size_t>(decision.winner)];
  }
  return out;
}

ModelBundle train_once(const MultiModalData& data, const RunConfig& cfg,
                       std::uint64_t seed, TrainReport* report) {
  ModelBundle model = train(data.X1, data.X2, data.labels, cfg.hyperparams,
                            cfg.options, report);
  model.seed = seed;
  return model;
}

json outcome_to_json(const EvalOutcome& o) {
  json row;
  row["recognition_rate"] = o.accuracy();
  row["agreement_rate"] = o.agreement_rate();
  row["correct"] = o.correct;
  row["total"] = o.total;
  row["confusion"] = o.confusion;
  json per_class = json::array();
  for (std::size_t c = 0; c < o.confusion.size(); ++c) {
    int row_total = 0;
    for (int v : o.confusion[c]) row_total += v;
    per_class.push_back(row_total == 0
                            ? 0.0
                            : 100.0 * o.confusion[c][c] / row_total);
  }
  row["per_class_accuracy"] = per_class;
  return row;
}

void write_metrics(const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
                   const std::vector<EvalOutcome>& outcomes) {
  fs::create_directories(out_dir);

  double acc_sum = 0.0, agree_sum = 0.0;
  for (const auto& o : outcomes) {
    acc_sum += o.accuracy();
    agree_sum += o.agreement_rate();
  }
  const double acc_mean = acc_sum / static_cast<double>(outcomes.size());
  const double agree_mean = agree_sum / static_cast<double>(outcomes.size());

  {
    std::ofstream txt(fs::path(out_dir) / "metrics.txt", std::ios::trunc);
    txt << "repeat\tseed\trecognition_rate\tagreement_rate\n";
    for (std::size_t r = 0; r < outcomes.size(); ++r)
      txt << r << "\t" << seeds[r] << "\t" << fixed2(outcomes[r].accuracy()) << "\t"
          << fixed2(outcomes[r].agreement_rate()) << "\n";
    txt << "mean\t-\t" << fixed2(acc_mean) << "\t" << fixed2(agree_mean) << "\n";
  }
  {
    std::ofstream jl(fs::path(out_dir) / "metrics.jsonl", std::ios::trunc);
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
      json row = outcome_to_json(outcomes[r]);
      row["repeat"] = r;
      row["seed"] = seeds[r];
      jl << row.dump() << "\n";
    }
    json mean_row;
    mean_row["repeat"] = "mean";
    mean_row["recognition_rate"] = acc_mean;
    mean_row["agreement_rate"] = agree_mean;
    jl << mean_row.dump() << "\n";
  }
  {
    // Aggregate confusion over repeats; rows are true classes.
    std::ofstream cf(fs::path(out_dir) / "confusion.txt", std::ios::trunc);
    if (!outcomes.empty()) {
      const std::size_t C = outcomes[0].confusion.size();
      for (std::size_t t = 0; t < C; ++t) {
        for (std::size_t p = 0; p < C; ++p) {
          long total = 0;
          for (const auto& o : outcomes) total += o.confusion[t][p];
          cf << total << (p + 1 < C ? '\t' : '\n');
        }
      }
    }
  }
}

// Clip to [0,1] and write as a grayscale image with the given geometry.
void write_plane_from_vector(const std::string& path, Vector v, int width, int height) {
  for (Index i = 0; i < v.size(); ++i) v(i) = std::clamp(v(i), 0.0, 1.0);
  write_image(path, unstack(v, width, height));
}

std::pair<int, int> decompose_geometry(const ModelBundle& model, std::size_t k) {
  int w = model.geometry[k].width;
  int h = model.geometry[k].height;
  if (w > 0 && h > 0) return {w, h};
  const Index d = model.dictionaries[k].dim();
  const Index side = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d)
    throw invalid_configuration(
        "decompose: model has no stored image geometry and sample dimension " +
        std::to_string(d) + " is not a perfect square");
  return {static_cast<int>(side), static_cast<int>(side)};
}

}  // namespace

void run_train(RunConfig cfg) {
  cfg.command = "train";
  require_one_source(cfg);
  cfg.hyperparams.validate();
  cfg.options.validate();
  write_effective_config(cfg);

  MultiModalData train_data;
  std::vector<std::string> label_names;
  std::array<PlaneGeometry, 2> geometry{};
  if (cfg.synthetic.enabled) {
    train_data = build_synthetic(cfg.synthetic, cfg.seed).first;
  } else {
    ImageSource src = load_image_source(cfg);
    train_data = build_from_images(src, cfg, cfg.seed).first;
    label_names = src.manifest.class_names;
    geometry[0] = {cfg.dataset.width, cfg.dataset.height};
    geometry[1] = {cfg.dataset.width, cfg.dataset.height};
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  ModelBundle model = train_once(train_data, cfg, cfg.seed, &report);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!label_names.empty()) model.label_names = label_names;
  model.geometry = geometry;

  const std::string model_dir = (fs::path(cfg.out) / "model").string();
  save_model(model, model_dir);

  {
    json rep;
    rep["alternations"] = report.alternations;
    rep["dictionaries_converged"] = report.dictionaries_converged;
    rep["coupling_residuals"] = report.coupling_residuals;
    rep["recode_converged"] =
        json::array({model.recode_converged[0], model.recode_converged[1]});
    rep["train_seconds"] = seconds;
    std::ofstream out(fs::path(cfg.out) / "training_report.json", std::ios::trunc);
    out << rep.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(cfg.out) / "residual_traces.jsonl", std::ios::trunc);
    for (const auto& t : report.traces) {
      json line;
      line["alternation"] = t.alternation;
      line["modality"] = t.modality + 1;
      line["iterations"] = t.coding.iterations;
      line["converged"] = t.coding.converged;
      line["dict_iterations"] = t.dict_iterations;
      line["dict_converged"] = t.dict_converged;
      line["feasibility_residuals"] = t.coding.feasibility_residuals;
      line["gap_residuals"] = t.coding.gap_residuals;
      out << line.dump() << "\n";
    }
  }
  std::cout << "trained model written to " << model_dir << " ("
            << report.alternations << " alternations, "
            << (report.dictionaries_converged ? "converged" : "hit alternation cap")
            << ", " << fixed2(seconds) << " s)\n";
}

void run_eval(RunConfig cfg) {
  cfg.command = "eval";
  require_one_source(cfg);
  cfg.hyperparams.validate();
  cfg.options.validate();

  std::vector<EvalOutcome> outcomes;
  std::vector<std::uint64_t> seeds;

  if (!cfg.model.empty()) {
    cfg.repeats = 1;  // one fixed model = one evaluation pass
    write_effective_config(cfg);
    ModelBundle model = load_model(cfg.model);
    MultiModalData test;
    if (cfg.synthetic.enabled) {
      test = build_synthetic(cfg.synthetic, cfg.seed).second;
    } else {
      ImageSource src = load_image_source(cfg);
      test = build_from_images(src, cfg, cfg.seed).second;
    }
    outcomes.push_back(evaluate_model(model, test));
    seeds.push_back(cfg.seed);
  } else {
    if (cfg.repeats < 1) throw invalid_configuration("eval: repeats must be >= 1");
    write_effective_config(cfg);
    outcomes.resize(static_cast<std::size_t>(cfg.repeats));
    seeds.resize(static_cast<std::size_t>(cfg.repeats));

    if (cfg.synthetic.enabled) {
      parallel_for(cfg.repeats, [&](Index r) {
        const std::uint64_t seed_r = cfg.seed + static_cast<std::uint64_t>(r);
        auto [train_data, test_data] = build_synthetic(cfg.synthetic, seed_r);
        ModelBundle model = train_once(train_data, cfg, seed_r, nullptr);
        outcomes[static_cast<std::size_t>(r)] = evaluate_model(model, test_data);
        seeds[static_cast<std::size_t>(r)] = seed_r;
      });
    } else {
      ImageSource src = load_image_source(cfg);
      parallel_for(cfg.repeats, [&](Index r) {
        const std::uint64_t seed_r = cfg.seed + static_cast<std::uint64_t>(r);
        auto [train_data, test_data] = build_from_images(src, cfg, seed_r);
        ModelBundle model = train_once(train_data, cfg, seed_r, nullptr);
        outcomes[static_cast<std::size_t>(r)] = evaluate_model(model, test_data);
        seeds[static_cast<std::size_t>(r)] = seed_r;
      });
    }
  }

  write_metrics(cfg.out, seeds, outcomes);
  double mean = 0.0;
  for (const auto& o : outcomes) mean += o.accuracy();
  mean /= static_cast<double>(outcomes.size());
  std::cout << "mean recognition rate " << fixed2(mean) << "% over "
            << outcomes.size() << " repeat(s); metrics written to " << cfg.out << "\n";
}

void run_decompose(RunConfig cfg) {
  cfg.command = "decompose";
  if (cfg.model.empty())
    throw invalid_configuration("decompose: --model <archive dir> is required");
  if (cfg.sample_ids.empty())
    throw invalid_configuration("decompose: no sample ids given");
  write_effective_config(cfg);

  ModelBundle model = load_model(cfg.model);
  const Index n = model.train_codes[0].cols();
  fs::create_directories(cfg.out);

  for (int id : cfg.sample_ids) {
    if (id < 0 || static_cast<Index>(id) >= n)
      throw invalid_input("decompose: sample id " + std::to_string(id) +
                          " outside [0, " + std::to_string(n) + ")");
    for (std::size_t k = 0; k < 2; ++k) {
      const auto [w, h] = decompose_geometry(model, k);
      const Vector recon =
          model.dictionaries[k].atoms() * model.train_codes[k].col(id);
      const Vector err = model.train_errors[k].col(id);
      const Vector original = recon + err;
      const std::string stem =
          (fs::path(cfg.out) / ("sample" + std::to_string(id) + "_modality" +
                                std::to_string(k + 1)))
              .string();
      write_plane_from_vector(stem + "_original.png", original, w, h);
      write_plane_from_vector(stem + "_reconstruction.png", recon, w, h);
      write_plane_from_vector(stem + "_error.png", err.cwiseAbs(), w, h);
    }
  }
  std::cout << "wrote " << cfg.sample_ids.size() * 6 << " images to " << cfg.out << "\n";
}

void run_transform(RunConfig cfg) {
  cfg.command = "transform";
  if (cfg.input.empty() && cfg.dataset.root.empty())
    throw invalid_configuration("transform: give --input <image> or --dataset <dir>");
  write_effective_config(cfg);
  fs::create_directories(cfg.out);

  auto emit = [&](const ImagePlane& img, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    write_image((dir / (stem + "_modality1.png")).string(), to_grayscale(img));
    write_image((dir / (stem + "_modality2.png")).string(), modality2_transform(img));
  };

  if (!cfg.input.empty()) {
    const ImagePlane img = read_image(cfg.input);
    emit(img, cfg.out, fs::path(cfg.input).stem().string());
    std::cout << "wrote 2 images to " << cfg.out << "\n";
    return;
  }

  const DatasetManifest manifest =
      scan_dataset(cfg.dataset.root, cfg.dataset.width, cfg.dataset.height);
  const auto images = load_dataset(manifest);
  std::size_t count = 0;
  for (std::size_t c = 0; c < images.size(); ++c)
    for (std::size_t i = 0; i < images[c].size(); ++i) {
      emit(images[c][i], fs::path(cfg.out) / manifest.class_names[c],
           fs::path(manifest.files[c][i]).stem().string());
      count += 2;
    }
  std::cout << "wrote " << count << " images to " << cfg.out << "\n";
}

void run_synth(RunConfig cfg) {
  cfg.command = "synth";
  cfg.synthetic.enabled = true;
  write_effective_config(cfg);

  const SyntheticSpec& s = cfg.synthetic;
  const int per_class = s.train_per_class + s.test_per_class;
  SynthDataset data =
      synth_multimodal(s.classes, per_class, s.dim, s.rank, s.corruption, cfg.seed);

  const fs::path gt = fs::path(cfg.out) / "ground_truth";
  fs::create_directories(gt);
  write_matrix_blob((gt / "X1.mat64").string(), data.X1);
  write_matrix_blob((gt / "X2.mat64").string(), data.X2);
  write_matrix_blob((gt / "clean1.mat64").string(), data.clean1);
  write_matrix_blob((gt / "clean2.mat64").string(), data.clean2);
  write_matrix_blob((gt / "mask1.mat64").string(), data.mask1);
  write_matrix_blob((gt / "mask2.mat64").string(), data.mask2);
  for (std::size_t c = 0; c < data.basis1.size(); ++c) {
    write_matrix_blob((gt / ("basis1_" + std::to_string(c) + ".mat64")).string(),
                      data.basis1[c]);
    write_matrix_blob((gt / ("basis2_" + std::to_string(c) + ".mat64")).string(),
                      data.basis2[c]);
  }
  {
    json meta;
    meta["classes"] = s.classes;
    meta["per_class"] = per_class;
    meta["dim"] = s.dim;
    meta["rank"] = s.rank;
    meta["corruption"] = s.corruption;
    meta["seed"] = cfg.seed;
    meta["labels"] = data.labels;
    std::ofstream out(gt / "ground_truth.json", std::ios::trunc);
    out << meta.dump(2) << "\n";
  }

  // PNG previews only when columns reshape to square images; each image is
  // min-max normalized for display (blobs carry the numeric truth).
  const Index side = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(s.dim))));
  std::size_t pngs = 0;
  if (side * side == s.dim) {
    for (int c = 0; c < s.classes; ++c) {
      const fs::path dir = fs::path(cfg.out) / ("class_" + std::to_string(c));
      fs::create_directories(dir);
      for (int i = 0; i < per_class; ++i) {
        Vector v = data.X1.col(static_cast<Index>(c) * per_class + i);
        const double lo = v.minCoeff(), hi = v.maxCoeff();
        if (hi > lo)
          v = (v.array() - lo) / (hi - lo);
        else
          v.setConstant(0.5);
        write_image((dir / ("sample_" + std::to_string(i) + ".png")).string(),
                    unstack(v, static_cast<int>(side), static_cast<int>(side)));
        ++pngs;
      }
    }
  }
  std::cout << "synthetic dataset written to " << cfg.out << " (" << pngs
            << " preview images, ground-truth blobs in ground_truth/)\n";
}

void run_gridsearch(RunConfig cfg) {
  cfg.command = "gridsearch";
  require_one_source(cfg);
  cfg.hyperparams.validate();
  cfg.options.validate();
  if (cfg.grid_alpha.empty()) cfg.grid_alpha = {cfg.hyperparams.alpha};
  if (cfg.grid_beta.empty()) cfg.grid_beta = {cfg.hyperparams.beta};
  if (cfg.grid_lambda.empty()) cfg.grid_lambda = {cfg.hyperparams.lambda};
  write_effective_config(cfg);

  MultiModalData data;
  if (cfg.synthetic.enabled) {
    data = build_synthetic(cfg.synthetic, cfg.seed).first;
  } else {
    ImageSource src = load_image_source(cfg);
    data = build_from_images(src, cfg, cfg.seed).first;
  }

  constexpr int kFolds = 5;
  for (std::size_t c = 0; c < data.counts.size(); ++c)
    if (data.counts[c] < kFolds)
      throw invalid_configuration("gridsearch: class " + std::to_string(c) + " has " +
                                  std::to_string(data.counts[c]) +
                                  " training samples; stratified 5-fold needs >= 5");

  // Stratified fold assignment: per class, seeded shuffle then round-robin.
  std::mt19937_64 rng(cfg.seed ^ 0xF01D5F01D5F01D5FULL);
  std::vector<std::vector<std::vector<Index>>> fold_members(
      kFolds, std::vector<std::vector<Index>>(data.counts.size()));
  for (std::size_t c = 0; c < data.counts.size(); ++c) {
    std::vector<Index> idx(static_cast<std::size_t>(data.counts[c]));
    for (Index i = 0; i < data.counts[c]; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[static_cast<std::size_t>(rng() % (i + 1))]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      fold_members[i % kFolds][c].push_back(idx[i]);
    for (int f = 0; f < kFolds; ++f)
      std::sort(fold_members[static_cast<std::size_t>(f)][c].begin(),
                fold_members[static_cast<std::size_t>(f)][c].end());
  }

  struct GridPoint {
    double alpha, beta, lambda;
  };
  std::vector<GridPoint> points;
  for (double a : cfg.grid_alpha)
    for (double b : cfg.grid_beta)
      for (double l : cfg.grid_lambda) points.push_back({a, b, l});

  struct CellResult {
    double accuracy = 0.0;
    bool failed = false;
    std::string reason;
  };
  std::vector<CellResult> cells(points.size() * kFolds);

  const LabeledDataset ds1{data.X1, data.labels, data.counts};
  const LabeledDataset ds2{data.X2, data.labels, data.counts};

  parallel_for(static_cast<Index>(cells.size()), [&](Index job) {
    const std::size_t p = static_cast<std::size_t>(job) / kFolds;
    const int f = static_cast<int>(static_cast<std::size_t>(job) % kFolds);

    std::vector<std::vector<Index>> val_idx = fold_members[static_cast<std::size_t>(f)];
    std::vector<std::vector<Index>> fit_idx(data.counts.size());
    for (int g = 0; g < kFolds; ++g) {
      if (g == f) continue;
      for (std::size_t c = 0; c < data.counts.size(); ++c)
        for (Index i : fold_members[static_cast<std::size_t>(g)][c])
          fit_idx[c].push_back(i);
    }
    for (auto& v : fit_idx) std::sort(v.begin(), v.end());

    try {
      LabeledDataset fit1 = select_columns(ds1, fit_idx);
      LabeledDataset fit2 = select_columns(ds2, fit_idx);
      LabeledDataset val1 = select_columns(ds1, val_idx);
      LabeledDataset val2 = select_columns(ds2, val_idx);

      Hyperparams h = cfg.hyperparams;
      h.alpha = points[p].alpha;
      h.beta = points[p].beta;
      h.lambda = points[p].lambda;

      ModelBundle model = train(fit1.X, fit2.X, fit1.labels, h, cfg.options);
      model.seed = cfg.seed;
      MultiModalData val{std::move(val1.X), std::move(val2.X), val1.labels,
                         val1.per_class_counts};
      cells[static_cast<std::size_t>(job)].accuracy =
          evaluate_model(model, val).accuracy();
    } catch (const error& e) {
      cells[static_cast<std::size_t>(job)].failed = true;
      cells[static_cast<std::size_t>(job)].reason = e.what();
    }
  });

  // Point scores; a point with any failed fold is recorded as failed.
  int best = -1;
  std::vector<double> means(points.size(), 0.0);
  std::vector<bool> failed(points.size(), false);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (int f = 0; f < kFolds; ++f) {
      const auto& cell = cells[p * kFolds + static_cast<std::size_t>(f)];
      means[p] += cell.accuracy;
      failed[p] = failed[p] || cell.failed;
    }
    means[p] /= kFolds;
    if (failed[p]) continue;
    if (best < 0) {
      best = static_cast<int>(p);
      continue;
    }
    const auto& cur = points[p];
    const auto& inc = points[static_cast<std::size_t>(best)];
    const bool better =
        means[p] > means[static_cast<std::size_t>(best)] ||
        (means[p] == means[static_cast<std::size_t>(best)] &&
         std::tie(cur.alpha, cur.beta, cur.lambda) <
             std::tie(inc.alpha, inc.beta, inc.lambda));
    if (better) best = static_cast<int>(p);
  }
  if (best < 0)
    throw numerical_failure("gridsearch: every grid point failed; see score table in " +
                            cfg.out);

  fs::create_directories(cfg.out);
  {
    std::ofstream jl(fs::path(cfg.out) / "score_table.jsonl", std::ios::trunc);
    std::ofstream txt(fs::path(cfg.out) / "score_table.txt", std::ios::trunc);
    txt << "alpha\tbeta\tlambda\tfold\taccuracy\tfailed\n";
    for (std::size_t p = 0; p < points.size(); ++p)
      for (int f = 0; f < kFolds; ++f) {
        const auto& cell = cells[p * kFolds + static_cast<std::size_t>(f)];
        json row;
        row["alpha"] = points[p].alpha;
        row["beta"] = points[p].beta;
        row["lambda"] = points[p].lambda;
        row["fold"] = f;
        row["accuracy"] = cell.accuracy;
        row["failed"] = cell.failed;
        if (cell.failed) row["reason"] = cell.reason;
        jl << row.dump() << "\n";
        txt << points[p].alpha << "\t" << points[p].beta << "\t" << points[p].lambda
            << "\t" << f << "\t" << fixed2(cell.accuracy) << "\t"
            << (cell.failed ? "yes" : "no") << "\n";
      }
  }
  {
    json bestj;
    bestj["alpha"] = points[static_cast<std::size_t>(best)].alpha;
    bestj["beta"] = points[static_cast<std::size_t>(best)].beta;
    bestj["lambda"] = points[static_cast<std::size_t>(best)].lambda;
    bestj["mean_accuracy"] = means[static_cast<std::size_t>(best)];
    std::ofstream out(fs::path(cfg.out) / "best.json", std::ios::trunc);
    out << bestj.dump(2) << "\n";
  }
  std::cout << "best grid point: alpha=" << points[static_cast<std::size_t>(best)].alpha
            << " beta=" << points[static_cast<std::size_t>(best)].beta
            << " lambda=" << points[static_cast<std::size_t>(best)].lambda
            << " (mean accuracy " << fixed2(means[static_cast<std::size_t>(best)])
            << "%)\n";
}

}  // namespace mmsldl::cli
