#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recseg/core/types.hpp"
#include "recseg/model/network.hpp"
#include "recseg/train/augment.hpp"

namespace recseg {

struct TrainConfig {
  int iterations = 10;          // label update rounds
  int steps_per_iteration = 600;
  int batch_size = 8;
  AugmentConfig augment;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double beta_train = 1.0;   // growth strength between iterations
  double beta_final = 100.0; // growth strength at inference
  std::vector<double> task_weights = {1.0, 1.0, 1.0};
  std::uint64_t seed = 1;
  // false: supervise task 1 only on its labeled subset, keep labels frozen.
  bool multitask = true;

  void validate(const NetworkConfig& net) const;
};

struct IterationStats {
  int k = 0;
  double mean_loss = 0.0;             // NaN before any step
  double mean_task2_dice_vs_gt = 0.0; // NaN without labels or ground truth
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<IterationStats> history;
  // Final evolved task-2 labels, by item index.
  std::vector<std::optional<ClassMask>> final_labels;
};

// Alternates gradient training with label growth. Writes into out_dir:
//   history.csv                      k, mean_loss, mean_task2_dice_vs_gt,
//                                    wall_seconds (one row per iteration,
//                                    including the initial k=0 state)
//   curve.csv                        k, mean_dice
//   checkpoints/ckpt_k<k>.ckpt       parameters after iteration k
//   labels_k<k>/<id>.pgm             task-2 labels after iteration k
// Ground truth is read only to report the dice column.
TrainResult run_recursive_training(const Dataset& train,
                                   const NetworkConfig& netcfg,
                                   const TrainConfig& cfg,
                                   const std::string& out_dir);

// Inference at any size: the image is reflect-padded to the network's size
// multiple and the outputs are cropped back.
TaskOutputs<float> predict_image(const Network<float>& net,
                                 ModelParams<float>& params,
                                 const Image& image);

ClassMask predict_class_mask(const Network<float>& net,
                             ModelParams<float>& params, const Image& image,
                             int task);

// Final segmentation: the approximation-task mask grown toward the
// segmentation-task prediction.
ClassMask final_inference(const Network<float>& net, ModelParams<float>& params,
                          const Image& image, double beta);

void write_history_csv(const std::string& path,
                       const std::vector<IterationStats>& history);

}  // namespace recseg
