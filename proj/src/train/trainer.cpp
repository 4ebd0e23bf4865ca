#include "recseg/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include "recseg/core/error.hpp"
#include "recseg/core/pnm.hpp"
#include "recseg/geometry/evolve.hpp"
#include "recseg/metrics/metrics.hpp"
#include "recseg/model/checkpoint.hpp"

namespace recseg {
namespace {

namespace fs = std::filesystem;

constexpr int kApproxTask = 1;  // evolving weak labels
constexpr int kSegTask = 0;     // drives the growth

double labels_dice_vs_gt(
    const Dataset& data,
    const std::vector<std::vector<std::optional<ClassMask>>>& cur) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& task2 = cur[i][kApproxTask];
    if (!task2 || !data.items[i].ground_truth) continue;
    sum += foreground_dice(*task2, *data.items[i].ground_truth);
    ++n;
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / n;
}

void snapshot_labels(
    const std::string& out_dir, int k, const Dataset& data,
    const std::vector<std::vector<std::optional<ClassMask>>>& cur) {
  fs::path dir = fs::path(out_dir) / ("labels_k" + std::to_string(k));
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& task2 = cur[i][kApproxTask];
    if (!task2) continue;
    write_mask_pgm((dir / (data.items[i].id + ".pgm")).string(), *task2);
  }
}

}  // namespace

void TrainConfig::validate(const NetworkConfig& net) const {
  if (iterations < 1) throw ConfigError("outer_iterations must be >= 1");
  if (steps_per_iteration < 0)
    throw ConfigError("steps_per_iteration must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(beta_train >= 0.0))
    throw ConfigError("beta_train must be >= 0");
  if (!(beta_final >= beta_train))
    throw ConfigError("beta_final must be >= beta_train");
  if (static_cast<int>(task_weights.size()) != net.task_count)
    throw ConfigError("task_weights must list one weight per task");
  for (double w : task_weights)
    if (!(w >= 0.0)) throw ConfigError("task weights must be >= 0");
  if (augment.crop % net.size_multiple() != 0)
    throw ConfigError("crop must be a multiple of the network size multiple");
}

TrainResult run_recursive_training(const Dataset& train,
                                   const NetworkConfig& netcfg,
                                   const TrainConfig& cfg,
                                   const std::string& out_dir) {
  netcfg.validate();
  cfg.validate(netcfg);
  if (train.items.empty()) throw DataError("training dataset is empty");
  if (train.meta.task_classes != netcfg.task_classes)
    throw ConfigError("dataset task classes do not match the network");
  for (const auto& item : train.items) {
    if (static_cast<int>(item.labels.task_count()) != netcfg.task_count)
      throw DataError("item " + item.id + " has the wrong task count");
    if (item.image.channels != netcfg.in_channels)
      throw DataError("item " + item.id + " has the wrong channel count");
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  Rng root(cfg.seed);
  Rng init_rng = root.child(1);
  Rng batch_rng = root.child(2);

  Network<float> net(netcfg);
  ModelParams<float> params = net.init_params(init_rng);

  // Evolving labels, a private copy per item; only the approximation task
  // ever changes.
  std::vector<std::vector<std::optional<ClassMask>>> cur(train.items.size());
  for (std::size_t i = 0; i < train.items.size(); ++i)
    cur[i] = train.items[i].labels.tasks;

  bool any_seg = false;
  bool any_approx = false;
  for (const auto& labels : cur) {
    any_seg = any_seg || labels[kSegTask].has_value();
    any_approx = any_approx || labels[kApproxTask].has_value();
  }
  if (!any_seg) throw DataError("no training item carries a task-1 label");
  if (cfg.multitask && !any_approx)
    throw DataError("no training item carries a task-2 label");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.items.size(); ++i)
    if (cfg.multitask || cur[i][kSegTask]) pool.push_back(i);

  std::vector<double> weights = cfg.task_weights;
  if (!cfg.multitask)
    for (std::size_t t = 1; t < weights.size(); ++t) weights[t] = 0.0;

  fs::create_directories(fs::path(out_dir) / "checkpoints");
  auto ckpt_path = [&out_dir](int k) {
    return (fs::path(out_dir) / "checkpoints" /
            ("ckpt_k" + std::to_string(k) + ".ckpt"))
        .string();
  };
  save_checkpoint(ckpt_path(0), params);
  snapshot_labels(out_dir, 0, train, cur);

  std::vector<IterationStats> history;
  IterationStats start;
  start.k = 0;
  start.mean_loss = std::numeric_limits<double>::quiet_NaN();
  start.mean_task2_dice_vs_gt = labels_dice_vs_gt(train, cur);
  start.wall_seconds = elapsed();
  history.push_back(start);

  const int crop = cfg.augment.crop;
  WorkspaceHandle<float> ws;

  for (int k = 1; k <= cfg.iterations; ++k) {
    double loss_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_iteration; ++step) {
      FeatureMap<float> input =
          FeatureMap<float>::zeros(cfg.batch_size, netcfg.in_channels, crop,
                                   crop);
      BatchLabels batch;
      batch.labels.assign(netcfg.task_count, {});
      for (auto& l : batch.labels)
        l.assign(static_cast<std::size_t>(cfg.batch_size) * crop * crop, -1);

      for (int s = 0; s < cfg.batch_size; ++s) {
        std::size_t item = pool[batch_rng.below(pool.size())];
        CropSample sample = make_crop(train.items[item].image, cur[item],
                                      cfg.augment, batch_rng);
        for (int c = 0; c < netcfg.in_channels; ++c)
          for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
              input.m(c, input.col_index(s, y, x)) = sample.image.at(c, y, x);
        for (int t = 0; t < netcfg.task_count; ++t) {
          if (!cfg.multitask && t != kSegTask) continue;
          if (!sample.labels[t]) continue;
          const ClassMask& lab = *sample.labels[t];
          for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
              batch.labels[t][input.col_index(s, y, x)] = lab.at(y, x);
        }
      }

      params.zero_grads();
      TaskOutputs<float> out = net.forward(params, input, true, ws.get());
      double loss = net.backward(params, *ws.get(), out, batch, weights);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at iteration " +
                           std::to_string(k) + " step " +
                           std::to_string(step));
      loss_sum += loss;
      adam_step(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
    }

    if (cfg.multitask) {
      for (std::size_t i = 0; i < train.items.size(); ++i) {
        if (!cur[i][kApproxTask]) continue;
        ClassMask pred =
            predict_class_mask(net, params, train.items[i].image, kSegTask);
        UpdateResult res =
            update_labels(*cur[i][kApproxTask], pred, cfg.beta_train);
        cur[i][kApproxTask] = std::move(res.labels);
      }
    }

    save_checkpoint(ckpt_path(k), params);
    snapshot_labels(out_dir, k, train, cur);

    IterationStats row;
    row.k = k;
    row.mean_loss = cfg.steps_per_iteration > 0
                        ? loss_sum / cfg.steps_per_iteration
                        : std::numeric_limits<double>::quiet_NaN();
    row.mean_task2_dice_vs_gt = labels_dice_vs_gt(train, cur);
    row.wall_seconds = elapsed();
    history.push_back(row);
  }

  write_history_csv((fs::path(out_dir) / "history.csv").string(), history);
  std::vector<CurvePoint> curve;
  for (const auto& row : history)
    curve.push_back({row.k, row.mean_task2_dice_vs_gt});
  write_curve_csv((fs::path(out_dir) / "curve.csv").string(), curve);

  TrainResult result{std::move(params), std::move(history), {}};
  result.final_labels.reserve(cur.size());
  for (auto& labels : cur)
    result.final_labels.push_back(std::move(labels[kApproxTask]));
  return result;
}

namespace {

// Reflected index for out-of-range samples, period 2(n-1).
int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

TaskOutputs<float> predict_image(const Network<float>& net,
                                 ModelParams<float>& params,
                                 const Image& image) {
  const NetworkConfig& cfg = net.config();
  if (image.channels != cfg.in_channels)
    throw DataError("image channel count does not match the network");
  const int m = cfg.size_multiple();
  const int padded_h = (image.height + m - 1) / m * m;
  const int padded_w = (image.width + m - 1) / m * m;

  FeatureMap<float> input =
      FeatureMap<float>::zeros(1, cfg.in_channels, padded_h, padded_w);
  for (int c = 0; c < cfg.in_channels; ++c)
    for (int y = 0; y < padded_h; ++y)
      for (int x = 0; x < padded_w; ++x)
        input.m(c, input.col_index(0, y, x)) =
            image.at(c, mirror(y, image.height), mirror(x, image.width));

  TaskOutputs<float> out = net.forward(params, input, false);
  if (padded_h == image.height && padded_w == image.width) return out;

  TaskOutputs<float> cropped;
  cropped.probs.reserve(out.probs.size());
  for (const FeatureMap<float>& full : out.probs) {
    FeatureMap<float> part =
        FeatureMap<float>::zeros(1, full.c, image.height, image.width);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        part.m.col(part.col_index(0, y, x)) =
            full.m.col(full.col_index(0, y, x));
    cropped.probs.push_back(std::move(part));
  }
  return cropped;
}

ClassMask predict_class_mask(const Network<float>& net,
                             ModelParams<float>& params, const Image& image,
                             int task) {
  TaskOutputs<float> out = predict_image(net, params, image);
  return predict_mask(out, task);
}

ClassMask final_inference(const Network<float>& net, ModelParams<float>& params,
                          const Image& image, double beta) {
  TaskOutputs<float> out = predict_image(net, params, image);
  ClassMask grown = predict_mask(out, kApproxTask);
  ClassMask guide = predict_mask(out, kSegTask);
  if (foreground(grown).popcount() == 0) return grown;
  return update_labels(grown, guide, beta).labels;
}

void write_history_csv(const std::string& path,
                       const std::vector<IterationStats>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "k,mean_loss,mean_task2_dice_vs_gt,wall_seconds\n";
  for (const auto& row : history)
    f << row.k << ',' << format_metric(row.mean_loss) << ','
      << format_metric(row.mean_task2_dice_vs_gt) << ','
      << format_metric(row.wall_seconds) << '\n';
  if (!f.good()) throw DataError("cannot write " + path);
}

}  // namespace recseg
