#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recseg/core/rng.hpp"
#include "recseg/core/types.hpp"
#include "recseg/model/feature_map.hpp"

namespace recseg {

enum class Normalization : std::uint8_t { None = 0, Batch = 1 };

struct NetworkConfig {
  int levels = 4;            // encoder depth; spatial size shrinks 2^(levels-1)
  int base_channels = 8;     // channels at full resolution, doubles per level
  int task_count = 3;
  std::vector<int> task_classes;  // classes per task, >= 2 each
  int multitask_blocks = 2;  // decoder blocks shared across task paths
  int in_channels = 1;
  Normalization normalization = Normalization::Batch;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int channels_at(int level) const { return base_channels << level; }
  // Inputs must be divisible by this in both dimensions.
  int size_multiple() const { return 1 << (levels - 1); }
  void validate() const;
};

// One named parameter or state tensor. Adam touches only trainable ones;
// running statistics ride along in the same container so a checkpoint is a
// single flat list.
template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  bool trainable = true;
  Eigen::Matrix<T, Eigen::Dynamic, 1> value;
  Eigen::Matrix<T, Eigen::Dynamic, 1> grad;
  Eigen::Matrix<T, Eigen::Dynamic, 1> adam_m;
  Eigen::Matrix<T, Eigen::Dynamic, 1> adam_v;

  Eigen::Index size() const { return value.size(); }
};

template <typename T>
struct ModelParams {
  NetworkConfig config;
  std::vector<ParamTensor<T>> tensors;
  std::int64_t adam_step_count = 0;

  ParamTensor<T>& at(const std::string& name);
  const ParamTensor<T>& at(const std::string& name) const;
  std::int64_t trainable_count() const;
  void zero_grads();
};

// Per-task class probabilities at input resolution.
template <typename T>
struct TaskOutputs {
  std::vector<FeatureMap<T>> probs;  // probs[t]: task_classes[t] rows
};

// Batch targets: labels[t] holds one class index per (sample, pixel) column,
// -1 where the pixel carries no supervision (task absent for that sample).
struct BatchLabels {
  std::vector<std::vector<std::int32_t>> labels;  // [task][n*h*w]
};

template <typename T>
struct Workspace;  // forward/backward caches, defined in network.cpp

template <typename T>
class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  // Fresh parameters: He-normal conv weights drawn from rng in registration
  // order, zero biases, unit scale / zero shift norms.
  ModelParams<T> init_params(Rng& rng) const;

  // Same registry with zeroed values; checkpoint loading fills it.
  ModelParams<T> empty_params() const;

  TaskOutputs<T> forward(ModelParams<T>& params, const FeatureMap<T>& input,
                         bool training, Workspace<T>* ws = nullptr) const;

  // Accumulates parameter gradients for the summed cross-entropy of the
  // cached forward pass; returns the loss. Requires the workspace of a
  // training-mode forward on the same batch.
  double backward(ModelParams<T>& params, Workspace<T>& ws,
                  const TaskOutputs<T>& outputs, const BatchLabels& labels,
                  const std::vector<double>& task_weights) const;

 private:
  NetworkConfig config_;
};

// Summed multi-task cross-entropy of given outputs, no network needed.
// Probabilities below the clamp floor contribute the clamped log value.
template <typename T>
double multitask_loss(const TaskOutputs<T>& outputs, const BatchLabels& labels,
                      const std::vector<double>& task_weights);

inline constexpr double kLogClamp = 1e-12;

// One Adam update over trainable tensors. Throws NumericError if any
// gradient entry is not finite.
template <typename T>
void adam_step(ModelParams<T>& params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Argmax over classes per pixel, ties to the lower class index.
template <typename T>
ClassMask predict_mask(const TaskOutputs<T>& outputs, int task);

// Single-image labels -> batch form for a 1-sample batch.
BatchLabels labels_from_field(const LabelField& field, int height, int width,
                              const std::vector<int>& task_classes);

// Workspace lifetime helper so callers can hold one without the definition.
template <typename T>
struct WorkspaceHandle {
  WorkspaceHandle();
  ~WorkspaceHandle();
  WorkspaceHandle(WorkspaceHandle&&) noexcept;
  WorkspaceHandle& operator=(WorkspaceHandle&&) noexcept;
  Workspace<T>* get() { return ws_; }

 private:
  Workspace<T>* ws_;
};

void set_thread_count(int n);
int thread_count();

}  // namespace recseg
