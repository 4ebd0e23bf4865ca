#include "recseg/cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "recseg/core/error.hpp"
#include "recseg/core/pnm.hpp"
#include "recseg/core/rng.hpp"
#include "recseg/data/dataset_io.hpp"
#include "recseg/data/synthetic.hpp"
#include "recseg/geometry/evolve.hpp"
#include "recseg/metrics/metrics.hpp"
#include "recseg/model/checkpoint.hpp"
#include "recseg/train/trainer.hpp"

namespace recseg {
namespace {

void apply_threads(KeyValueConfig& cfg) {
  int threads = cfg.get_int("threads", 0);
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  set_thread_count(std::max(1, threads));
}

double ratio_key(KeyValueConfig& cfg, const std::string& key, double fallback) {
  double r = cfg.get_double(key, fallback);
  if (!(r >= 0.0 && r <= 1.0))
    throw ConfigError("key '" + key + "' must lie in [0, 1]");
  return r;
}

SceneConfig scene_from(KeyValueConfig& cfg) {
  SceneConfig s;
  s.height = cfg.get_int("height", s.height);
  s.width = cfg.get_int("width", s.width);
  s.object_classes = cfg.get_int("object_classes", s.object_classes);
  s.min_objects = cfg.get_int("min_objects", s.min_objects);
  s.max_objects = cfg.get_int("max_objects", s.max_objects);
  s.radius_min = cfg.get_double("radius_min", s.radius_min);
  s.radius_max = cfg.get_double("radius_max", s.radius_max);
  s.blob_amplitude = cfg.get_double("blob_amplitude", s.blob_amplitude);
  s.touch_probability =
      ratio_key(cfg, "touch_probability", s.touch_probability);
  s.edge_softness = cfg.get_double("edge_softness", s.edge_softness);
  s.background_min = cfg.get_double("background_min", s.background_min);
  s.background_max = cfg.get_double("background_max", s.background_max);
  s.contrast_min = cfg.get_double("contrast_min", s.contrast_min);
  s.contrast_max = cfg.get_double("contrast_max", s.contrast_max);
  s.texture_amplitude =
      cfg.get_double("texture_amplitude", s.texture_amplitude);
  s.noise_std = cfg.get_double("noise_std", s.noise_std);
  s.shrink_min = cfg.get_double("shrink_min", s.shrink_min);
  s.shrink_max = cfg.get_double("shrink_max", s.shrink_max);
  s.perturb_max = cfg.get_double("perturb_max", s.perturb_max);
  s.min_inradius = cfg.get_double("min_inradius", s.min_inradius);
  return s;
}

NetworkConfig network_from(KeyValueConfig& cfg, const DatasetMeta& meta,
                           int in_channels) {
  NetworkConfig net;
  net.levels = cfg.get_int("levels", net.levels);
  net.base_channels = cfg.get_int("base_channels", net.base_channels);
  net.multitask_blocks = cfg.get_int("multitask_blocks", net.multitask_blocks);
  net.task_classes = meta.task_classes;
  net.task_count = static_cast<int>(meta.task_classes.size());
  net.in_channels = in_channels;
  std::string norm = cfg.get_string("normalization", "batch");
  if (norm == "batch")
    net.normalization = Normalization::Batch;
  else if (norm == "none")
    net.normalization = Normalization::None;
  else
    throw ConfigError("key 'normalization' expects batch or none, got '" +
                      norm + "'");
  return net;
}

TrainConfig train_from(KeyValueConfig& cfg, int task_count) {
  TrainConfig t;
  t.iterations = cfg.get_int("outer_iterations", t.iterations);
  t.steps_per_iteration = cfg.get_int("steps", t.steps_per_iteration);
  t.batch_size = cfg.get_int("batch_size", t.batch_size);
  t.augment.crop = cfg.get_int("crop", t.augment.crop);
  t.augment.p_flip = ratio_key(cfg, "p_flip", t.augment.p_flip);
  t.augment.p_rotate = ratio_key(cfg, "p_rotate", t.augment.p_rotate);
  t.augment.p_rescale = ratio_key(cfg, "p_rescale", t.augment.p_rescale);
  t.augment.scale_min = cfg.get_double("scale_min", t.augment.scale_min);
  t.augment.scale_max = cfg.get_double("scale_max", t.augment.scale_max);
  t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
  t.adam_beta1 = cfg.get_double("adam_beta1", t.adam_beta1);
  t.adam_beta2 = cfg.get_double("adam_beta2", t.adam_beta2);
  t.adam_eps = cfg.get_double("adam_eps", t.adam_eps);
  t.beta_train = cfg.get_double("beta_train", t.beta_train);
  t.beta_final = cfg.get_double("beta_final", t.beta_final);
  t.task_weights =
      cfg.get_doubles("task_weights", std::vector<double>(task_count, 1.0));
  t.seed = cfg.get_u64("seed", t.seed);
  t.multitask = cfg.get_bool("multitask", t.multitask);
  return t;
}

Connectivity connectivity_from(KeyValueConfig& cfg) {
  int c = cfg.get_int("connectivity", 8);
  if (c == 4) return Connectivity::Four;
  if (c == 8) return Connectivity::Eight;
  throw ConfigError("key 'connectivity' expects 4 or 8");
}

struct LoadedModel {
  ModelParams<float> params;
  Network<float> net;
};

LoadedModel load_model(const std::string& path) {
  ModelParams<float> params = load_checkpoint<float>(path);
  Network<float> net(params.config);
  return {std::move(params), std::move(net)};
}

}  // namespace

void cmd_gen_data(KeyValueConfig& cfg) {
  std::string out = cfg.require_string("out");
  std::string name = cfg.get_string("name", "synthetic");
  std::uint64_t seed = cfg.get_u64("seed", 1);
  int train_count = cfg.get_int("train_count", 40);
  int val_count = cfg.get_int("val_count", 10);
  int test_count = cfg.get_int("test_count", 20);
  SceneConfig scene = scene_from(cfg);
  std::vector<double> ratios = {ratio_key(cfg, "task1_ratio", 0.1),
                                ratio_key(cfg, "task2_ratio", 1.0),
                                ratio_key(cfg, "task3_ratio", 1.0)};
  cfg.finish();

  const char* splits[3] = {"train", "val", "test"};
  const int counts[3] = {train_count, val_count, test_count};
  Rng split_seeds(seed);
  for (int s = 0; s < 3; ++s) {
    if (counts[s] <= 0) continue;
    DatasetGenConfig gen;
    gen.scene = scene;
    gen.name = name;
    gen.split = splits[s];
    gen.count = counts[s];
    gen.seed = split_seeds.child(s).seed();
    gen.task_ratios = ratios;
    Dataset data = generate_dataset(gen);
    std::string dir =
        (std::filesystem::path(out) / splits[s]).string();
    save_dataset(data, dir);

    std::vector<int> labeled(data.meta.task_classes.size(), 0);
    for (const auto& item : data.items)
      for (std::size_t t = 0; t < labeled.size(); ++t)
        if (item.labels.has(static_cast<int>(t))) ++labeled[t];
    std::cout << splits[s] << ": " << data.items.size() << " items";
    for (std::size_t t = 0; t < labeled.size(); ++t)
      std::cout << ", task" << (t + 1) << " " << labeled[t] << "/"
                << data.items.size();
    std::cout << " -> " << dir << "\n";
  }
}

void cmd_train(KeyValueConfig& cfg) {
  std::string data_dir = cfg.require_string("data");
  std::string out = cfg.require_string("out");
  apply_threads(cfg);
  Dataset data = load_dataset(data_dir);
  if (data.items.empty()) throw DataError("dataset is empty");

  NetworkConfig net =
      network_from(cfg, data.meta, data.items[0].image.channels);
  TrainConfig train = train_from(cfg, net.task_count);
  cfg.finish();

  TrainResult result = run_recursive_training(data, net, train, out);
  const IterationStats& last = result.history.back();
  std::cout << "trained " << train.iterations << " iterations, final mean loss "
            << format_metric(last.mean_loss) << ", task-2 dice vs gt "
            << format_metric(last.mean_task2_dice_vs_gt) << ", "
            << format_metric(last.wall_seconds) << " s -> " << out << "\n";
}

void cmd_evolve(KeyValueConfig& cfg) {
  std::string seed_path = cfg.require_string("seed_mask");
  std::string pred_path = cfg.require_string("prediction");
  std::string out = cfg.require_string("out");
  double beta = cfg.get_double("beta", 1.0);
  int classes = cfg.get_int("classes", 3);
  Connectivity conn = connectivity_from(cfg);
  cfg.finish();
  if (beta < 0.0) throw ConfigError("key 'beta' must be >= 0");
  if (classes < 2) throw ConfigError("key 'classes' must be >= 2");

  ClassMask seeds = read_mask_pgm(seed_path, classes);
  ClassMask prediction = read_mask_pgm(pred_path, classes);
  UpdateResult res = update_labels(seeds, prediction, beta, conn);
  write_mask_pgm(out, res.labels);
  std::size_t after = extract_seeds(res.labels, conn).size();
  std::cout << "instances before=" << res.seed_count << " after=" << after
            << ", grown=" << res.grown_count
            << ", frozen=" << res.unpaired_seeds.size() << " -> " << out
            << "\n";
}

void cmd_eval(KeyValueConfig& cfg) {
  std::string ckpt_path = cfg.require_string("checkpoint");
  std::string data_dir = cfg.require_string("data");
  std::string out = cfg.require_string("out");
  double beta_final = cfg.get_double("beta_final", 100.0);
  std::string mode = cfg.get_string("mode", "final");
  apply_threads(cfg);
  cfg.finish();
  if (beta_final < 0.0) throw ConfigError("key 'beta_final' must be >= 0");
  if (mode != "final" && mode != "task1" && mode != "task2")
    throw ConfigError("key 'mode' expects final, task1 or task2, got '" +
                      mode + "'");

  LoadedModel model = load_model(ckpt_path);
  Dataset data = load_dataset(data_dir);
  std::vector<EvalRow> rows;
  rows.reserve(data.items.size());
  for (const auto& item : data.items) {
    if (!item.ground_truth)
      throw DataError("item " + item.id + " has no ground truth");
    ClassMask pred =
        mode == "final"
            ? final_inference(model.net, model.params, item.image, beta_final)
            : predict_class_mask(model.net, model.params, item.image,
                                 mode == "task1" ? 0 : 1);
    rows.push_back(evaluate_masks(item.id, pred, *item.ground_truth));
  }
  write_eval_csv(out, rows);
  std::cout << eval_summary(rows) << " -> " << out << "\n";
}

void cmd_infer(KeyValueConfig& cfg) {
  std::string ckpt_path = cfg.require_string("checkpoint");
  std::string image_path = cfg.require_string("image");
  std::string out = cfg.require_string("out");
  double beta_final = cfg.get_double("beta_final", 100.0);
  apply_threads(cfg);
  cfg.finish();
  if (beta_final < 0.0) throw ConfigError("key 'beta_final' must be >= 0");

  LoadedModel model = load_model(ckpt_path);
  Image image = read_image_pnm(image_path);
  ClassMask mask = final_inference(model.net, model.params, image, beta_final);
  write_mask_pgm(out, mask);
  std::size_t instances = extract_seeds(mask, Connectivity::Eight).size();
  std::cout << instances << " instances -> " << out << "\n";
}

}  // namespace recseg
