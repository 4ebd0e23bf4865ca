#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recseg/core/rng.hpp"
#include "recseg/core/types.hpp"

namespace recseg {

// Synthetic scenes: non-overlapping polar shapes (ellipses and harmonic
// blobs) on a textured background, soft anti-aliased edges, optional
// same-class touching pairs that produce a low-contrast interface.
struct SceneConfig {
  int height = 128;
  int width = 128;
  int object_classes = 2;
  int min_objects = 2;
  int max_objects = 4;
  double radius_min = 0.09;  // fraction of min(height, width)
  double radius_max = 0.16;
  double blob_amplitude = 0.18;  // total radial harmonic amplitude bound
  double touch_probability = 0.5;
  double edge_softness = 1.5;  // px over which shape alpha ramps
  // Appearance is drawn per scene: a background level, and for each class a
  // contrast magnitude and a polarity (objects lighter or darker), flipped
  // toward the side with room near the intensity poles. Few scenes cannot
  // cover the palette distribution; many can. Degenerate ranges (min == max)
  // pin the palette, and contrast 1 reaches the pole exactly.
  double background_min = 0.20;
  double background_max = 0.55;
  double contrast_min = 0.15;
  double contrast_max = 0.55;
  double texture_amplitude = 0.08;
  double noise_std = 0.02;
  // Weak label construction: erosion depth as a fraction of the instance
  // inradius, plus a smooth radial perturbation of the threshold.
  double shrink_min = 0.18;
  double shrink_max = 0.32;
  double perturb_max = 0.25;
  double min_inradius = 2.0;  // instances shallower than this are skipped

  void validate() const;
};

struct Scene {
  Image image;
  ClassMask ground_truth;
  std::vector<InstanceMask> instances;
  std::vector<int> instance_classes;
  // Same-class touching pairs, by instance index; these are the
  // low-contrast interfaces that receive separation scribbles.
  std::vector<std::pair<int, int>> flagged_pairs;
};

Scene generate_scene(const SceneConfig& cfg, Rng& rng);

struct WeakLabelResult {
  ClassMask mask;
  int skipped_instances = 0;  // too shallow to erode
};

// Eroded, radially perturbed versions of the instances: strictly inside
// the object, connected, nonempty for every non-skipped instance.
WeakLabelResult make_weak_label(const Scene& scene, const SceneConfig& cfg,
                                Rng& rng);

// Two-class mask (0 = separation stroke, 1 = background): pixels within
// 2 px of both members of a flagged pair.
ClassMask make_separation_scribbles(const Scene& scene);

// ceil(ratio * n) distinct indices, ascending.
std::vector<int> assign_availability(int n, double ratio, Rng& rng);

struct DatasetGenConfig {
  SceneConfig scene;
  std::string name = "synthetic";
  std::string split = "train";
  int count = 40;
  std::uint64_t seed = 1;
  // Per-task availability; task 1 labels are full ground-truth copies on
  // their subset, task 2 gets the weak approximations, task 3 scribbles.
  std::vector<double> task_ratios = {0.1, 1.0, 1.0};

  void validate() const;
};

Dataset generate_dataset(const DatasetGenConfig& cfg);

}  // namespace recseg
