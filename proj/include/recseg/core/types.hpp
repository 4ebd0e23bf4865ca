#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace recseg {

// Pixel grids are row-major with the origin at the top-left corner;
// index = y * width + x. All modules follow this convention.

// Real-valued raster in [0, 1]. Channels are stored planar:
// data[c * height * width + y * width + x].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }

  static Image zeros(int h, int w, int c = 1) {
    Image img;
    img.height = h;
    img.width = w;
    img.channels = c;
    img.data.assign(static_cast<size_t>(h) * w * c, 0.0f);
    return img;
  }
};

// Per-pixel class indices in [0, classes-1]. In binary layouts class 0 is
// the object and the final index is the background; multi-class layouts
// keep the background as the final index and document their palette in the
// dataset manifest.
struct ClassMask {
  int height = 0;
  int width = 0;
  int classes = 2;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int y, int x) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) {
    return labels[static_cast<size_t>(y) * width + x];
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
  int background_class() const { return classes - 1; }

  bool operator==(const ClassMask& o) const {
    return height == o.height && width == o.width && classes == o.classes &&
           labels == o.labels;
  }

  static ClassMask filled(int h, int w, int classes, std::uint8_t value) {
    ClassMask m;
    m.height = h;
    m.width = w;
    m.classes = classes;
    m.labels.assign(static_cast<size_t>(h) * w, value);
    return m;
  }
};

// Binary mask of a single object instance.
struct InstanceMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  bool at(int y, int x) const {
    return bits[static_cast<size_t>(y) * width + x] != 0;
  }
  void set(int y, int x, bool v) {
    bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0;
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
  size_t popcount() const {
    size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty() const { return popcount() == 0; }

  bool operator==(const InstanceMask& o) const {
    return height == o.height && width == o.width && bits == o.bits;
  }

  static InstanceMask zeros(int h, int w) {
    InstanceMask m;
    m.height = h;
    m.width = w;
    m.bits.assign(static_cast<size_t>(h) * w, 0);
    return m;
  }
};

// Per-task labels for one image. tasks[t] is the mask for task t+1;
// an absent entry means the image is not labeled for that task.
struct LabelField {
  std::vector<std::optional<ClassMask>> tasks;

  int task_count() const { return static_cast<int>(tasks.size()); }
  bool has(int task_index) const {
    return task_index < task_count() && tasks[task_index].has_value();
  }
};

struct DatasetItem {
  std::string id;
  Image image;
  LabelField labels;
  // Evaluation-only ground truth; training code never reads this.
  std::optional<ClassMask> ground_truth;
};

struct DatasetMeta {
  std::string name;
  std::string split;
  std::uint64_t seed = 0;
  std::vector<int> task_classes;  // classes per task, index 0 = task 1
  std::string palette;            // human-readable class layout note
};

struct Dataset {
  DatasetMeta meta;
  std::vector<DatasetItem> items;

  size_t size() const { return items.size(); }
};

// One-hot planes of a class mask: plane c is true exactly where labels == c.
std::vector<InstanceMask> one_hot(const ClassMask& mask);

// Inverse of one_hot for a partition of the grid.
ClassMask argmax_planes(const std::vector<InstanceMask>& planes);

// Binary foreground view: true where the label is any non-background class.
InstanceMask foreground(const ClassMask& mask);

}  // namespace recseg
