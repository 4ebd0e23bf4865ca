#include "recseg/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "recseg/core/error.hpp"
#include "recseg/core/pnm.hpp"
#include "recseg/geometry/components.hpp"
#include "recseg/geometry/distance.hpp"

namespace recseg {

void SceneConfig::validate() const {
  if (height < 16 || width < 16)
    throw ConfigError("scene sides must be at least 16");
  if (object_classes < 1) throw ConfigError("object_classes must be positive");
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("object count range is invalid");
  if (!(radius_min > 0.0 && radius_max >= radius_min && radius_max < 0.5))
    throw ConfigError("radius range is invalid");
  if (!(touch_probability >= 0.0 && touch_probability <= 1.0))
    throw ConfigError("touch_probability must be in [0, 1]");
  if (!(shrink_min > 0.0 && shrink_max >= shrink_min))
    throw ConfigError("shrink range is invalid");
  if (!(perturb_max >= 0.0) || shrink_max * (1.0 + perturb_max) >= 0.9)
    throw ConfigError("shrink and perturbation together erode too deep");
  if (min_inradius < 1.0) throw ConfigError("min_inradius must be >= 1");
  if (!(background_min >= 0.0 && background_max >= background_min &&
        background_max <= 1.0))
    throw ConfigError("background range is invalid");
  if (!(contrast_min > 0.0 && contrast_max >= contrast_min &&
        contrast_max <= 1.0))
    throw ConfigError("contrast range is invalid");
  if (!(texture_amplitude >= 0.0 && noise_std >= 0.0))
    throw ConfigError("texture and noise amplitudes must be nonnegative");
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// A shape is a star-convex region around its center: boundary radius as a
// function of direction. Ellipses and harmonic blobs both fit this form,
// and the signed depth radius(phi) - |p - c| gives the soft edge alpha.
struct Shape {
  double cx = 0.0, cy = 0.0;
  int cls = 0;
  double mean_shift = 0.0;
  bool ellipse = true;
  double a = 0.0, b = 0.0, rot = 0.0;       // ellipse
  double r = 0.0, amp[3] = {0, 0, 0}, ph[3] = {0, 0, 0};  // blob

  double radius(double phi) const {
    if (ellipse) {
      const double c = std::cos(phi - rot), s = std::sin(phi - rot);
      return a * b / std::sqrt(b * b * c * c + a * a * s * s);
    }
    double v = 1.0;
    for (int m = 0; m < 3; ++m) v += amp[m] * std::cos((m + 2) * phi + ph[m]);
    return r * v;
  }
  double max_radius() const {
    if (ellipse) return std::max(a, b);
    return r * (1.0 + amp[0] + amp[1] + amp[2]);
  }
  double depth(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d == 0.0) return radius(0.0);
    return radius(std::atan2(dy, dx)) - d;
  }
};

Shape sample_shape(const SceneConfig& cfg, Rng& rng, int cls) {
  Shape s;
  s.cls = cls;
  const double side = std::min(cfg.height, cfg.width);
  const double base = side * rng.uniform(cfg.radius_min, cfg.radius_max);
  s.ellipse = cls % 2 == 0;
  if (s.ellipse) {
    const double ratio = rng.uniform(0.75, 1.30);
    s.a = base * ratio;
    s.b = base / ratio;
    s.rot = rng.uniform(0.0, kTau);
  } else {
    s.r = base;
    double budget = cfg.blob_amplitude;
    for (int m = 0; m < 3; ++m) {
      s.amp[m] = rng.uniform(0.0, budget / (3 - m));
      budget -= s.amp[m];
      s.ph[m] = rng.uniform(0.0, kTau);
    }
  }
  return s;
}

bool place_free(Shape& s, const SceneConfig& cfg, Rng& rng,
                const std::vector<Shape>& placed) {
  const double margin = s.max_radius() + 3.0;
  if (2.0 * margin >= cfg.width - 1 || 2.0 * margin >= cfg.height - 1)
    return false;
  for (int attempt = 0; attempt < 200; ++attempt) {
    s.cx = rng.uniform(margin, cfg.width - 1 - margin);
    s.cy = rng.uniform(margin, cfg.height - 1 - margin);
    bool ok = true;
    for (const Shape& o : placed) {
      const double dx = s.cx - o.cx, dy = s.cy - o.cy;
      const double need = s.max_radius() + o.max_radius() + 3.0;
      if (dx * dx + dy * dy < need * need) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

// Place `s` against `anchor` with a sub-pixel boundary gap so the two
// shapes touch without overlapping.
bool place_touching(Shape& s, const Shape& anchor, const SceneConfig& cfg,
                    Rng& rng, const std::vector<Shape>& placed,
                    size_t anchor_index) {
  const double margin = s.max_radius() + 3.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double theta = rng.uniform(0.0, kTau);
    const double gap = rng.uniform(0.25, 0.9);
    const double dist =
        anchor.radius(theta) + s.radius(theta + std::numbers::pi) + gap;
    s.cx = anchor.cx + dist * std::cos(theta);
    s.cy = anchor.cy + dist * std::sin(theta);
    if (s.cx < margin || s.cx > cfg.width - 1 - margin || s.cy < margin ||
        s.cy > cfg.height - 1 - margin)
      continue;
    bool ok = true;
    for (size_t i = 0; i < placed.size(); ++i) {
      if (i == anchor_index) continue;
      const double dx = s.cx - placed[i].cx, dy = s.cy - placed[i].cy;
      const double need = s.max_radius() + placed[i].max_radius() + 3.0;
      if (dx * dx + dy * dy < need * need) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, Rng& rng) {
  cfg.validate();
  const int h = cfg.height, w = cfg.width;
  const int classes = cfg.object_classes;

  const int wanted =
      cfg.min_objects +
      static_cast<int>(rng.below(
          static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
  const bool want_pair = rng.uniform() < cfg.touch_probability && wanted >= 2;

  std::vector<Shape> shapes;
  std::vector<std::pair<int, int>> flagged;
  while (static_cast<int>(shapes.size()) < wanted) {
    const int remaining = wanted - static_cast<int>(shapes.size());
    if (want_pair && shapes.empty() && remaining >= 2) {
      const int cls = static_cast<int>(rng.below(classes));
      Shape a = sample_shape(cfg, rng, cls);
      Shape b = sample_shape(cfg, rng, cls);
      const double shift = rng.uniform(-0.04, 0.04);
      a.mean_shift = shift;
      b.mean_shift = shift;  // shared intensity: a low-contrast interface
      if (!place_free(a, cfg, rng, shapes)) break;
      shapes.push_back(a);
      if (place_touching(b, a, cfg, rng, shapes, shapes.size() - 1)) {
        shapes.push_back(b);
        flagged.emplace_back(static_cast<int>(shapes.size()) - 2,
                             static_cast<int>(shapes.size()) - 1);
      }
      continue;
    }
    const int cls = static_cast<int>(rng.below(classes));
    Shape s = sample_shape(cfg, rng, cls);
    s.mean_shift = rng.uniform(-0.04, 0.04);
    if (!place_free(s, cfg, rng, shapes)) break;
    shapes.push_back(s);
  }
  if (shapes.empty()) throw DataError("scene placement failed");

  // Ownership: deepest shape wins, ties to the lower index.
  Scene scene;
  scene.ground_truth = ClassMask::filled(h, w, classes + 1,
                                         static_cast<std::uint8_t>(classes));
  scene.instances.assign(shapes.size(), InstanceMask::zeros(h, w));
  std::vector<std::vector<float>> alphas(
      shapes.size(), std::vector<float>(static_cast<size_t>(h) * w, 0.0f));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      int owner = -1;
      double best = 0.0;
      for (size_t i = 0; i < shapes.size(); ++i) {
        const double d = shapes[i].depth(x, y);
        const double alpha =
            std::clamp(0.5 + d / (2.0 * cfg.edge_softness), 0.0, 1.0);
        alphas[i][p] = static_cast<float>(alpha);
        if (d > 0.0 && (owner < 0 || d > best)) {
          owner = static_cast<int>(i);
          best = d;
        }
      }
      if (owner >= 0) {
        scene.ground_truth.labels[p] =
            static_cast<std::uint8_t>(shapes[owner].cls);
        scene.instances[owner].bits[p] = 1;
      }
    }
  for (const Shape& s : shapes) scene.instance_classes.push_back(s.cls);

  // Drop shapes that rasterized to nothing (degenerate placements).
  for (size_t i = shapes.size(); i-- > 0;) {
    if (!scene.instances[i].empty()) continue;
    scene.instances.erase(scene.instances.begin() + i);
    scene.instance_classes.erase(scene.instance_classes.begin() + i);
    std::vector<std::pair<int, int>> kept;
    for (auto [a, b] : flagged)
      if (a != static_cast<int>(i) && b != static_cast<int>(i))
        kept.emplace_back(a > static_cast<int>(i) ? a - 1 : a,
                          b > static_cast<int>(i) ? b - 1 : b);
    flagged = std::move(kept);
    alphas.erase(alphas.begin() + i);
    shapes.erase(shapes.begin() + i);
  }
  scene.flagged_pairs = std::move(flagged);

  // Intensity: textured background plus per-scene object levels, blended by
  // shape alpha, then noise and display quantization. The palette is drawn
  // per scene: a background level, and for each class a contrast magnitude
  // and a polarity. The polarity flips toward the side with more room when
  // the drawn side cannot realize the magnitude, so contrast 1 from a
  // near-pole background reaches the opposite pole exactly.
  const double bg = rng.uniform(cfg.background_min, cfg.background_max);
  std::vector<double> level(static_cast<size_t>(classes));
  std::vector<double> slack(static_cast<size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    const double mag = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    const double room_down = bg - 0.04, room_up = 0.96 - bg;
    bool darker = rng.coin();
    if (darker && room_down < std::min(mag, room_up)) darker = false;
    if (!darker && room_up < std::min(mag, room_down)) darker = true;
    level[static_cast<size_t>(c)] =
        bg + (darker ? -std::min(mag, room_down) : std::min(mag, room_up));
    // Per-instance mean shifts shrink as contrast saturates; at contrast 1
    // the class mean sits exactly on the pole.
    slack[static_cast<size_t>(c)] = 1.0 - mag;
  }
  struct Wave {
    double fx, fy, phase, amp;
  };
  Wave waves[3];
  for (Wave& v : waves) {
    v.fx = rng.uniform(1.0 / 64.0, 1.0 / 16.0) * (rng.coin() ? 1.0 : -1.0);
    v.fy = rng.uniform(1.0 / 64.0, 1.0 / 16.0) * (rng.coin() ? 1.0 : -1.0);
    v.phase = rng.uniform(0.0, kTau);
    v.amp = cfg.texture_amplitude / 3.0 * rng.uniform(0.5, 1.0);
  }
  scene.image = Image::zeros(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      double v = bg;
      for (size_t i = 0; i < shapes.size(); ++i) {
        const auto c = static_cast<size_t>(shapes[i].cls);
        v += alphas[i][p] *
             (level[c] + shapes[i].mean_shift * slack[c] - bg);
      }
      for (const Wave& wave : waves)
        v += wave.amp * std::cos(kTau * (wave.fx * x + wave.fy * y) +
                                 wave.phase);
      v += cfg.noise_std * rng.normal();
      scene.image.data[p] = quantize255(std::clamp(v, 0.0, 1.0));
    }
  return scene;
}

WeakLabelResult make_weak_label(const Scene& scene, const SceneConfig& cfg,
                                Rng& rng) {
  const int h = scene.ground_truth.height, w = scene.ground_truth.width;
  WeakLabelResult out;
  out.mask = ClassMask::filled(
      h, w, scene.ground_truth.classes,
      static_cast<std::uint8_t>(scene.ground_truth.background_class()));

  for (size_t i = 0; i < scene.instances.size(); ++i) {
    const InstanceMask& inst = scene.instances[i];
    // Depth: distance to the nearest non-instance pixel.
    InstanceMask complement = InstanceMask::zeros(h, w);
    for (size_t p = 0; p < inst.bits.size(); ++p)
      complement.bits[p] = inst.bits[p] ? 0 : 1;
    const std::vector<std::int64_t> sq = squared_distance_transform(complement);

    size_t deepest = 0;
    std::int64_t deepest_sq = -1;
    double sum_x = 0.0, sum_y = 0.0;
    std::int64_t area = 0;
    for (size_t p = 0; p < inst.bits.size(); ++p) {
      if (!inst.bits[p]) continue;
      if (sq[p] > deepest_sq) {
        deepest_sq = sq[p];
        deepest = p;
      }
      sum_x += static_cast<double>(p % w);
      sum_y += static_cast<double>(p / w);
      ++area;
    }
    const double inradius = std::sqrt(static_cast<double>(deepest_sq));
    // Draws happen for every instance so skipping never shifts the stream.
    const double shrink = rng.uniform(cfg.shrink_min, cfg.shrink_max);
    const double pert = rng.uniform(0.0, cfg.perturb_max);
    const double phase = rng.uniform(0.0, kTau);
    if (inradius < cfg.min_inradius) {
      ++out.skipped_instances;
      continue;
    }
    const double cx = sum_x / area, cy = sum_y / area;

    InstanceMask kept = InstanceMask::zeros(h, w);
    for (size_t p = 0; p < inst.bits.size(); ++p) {
      if (!inst.bits[p]) continue;
      const double px = static_cast<double>(p % w);
      const double py = static_cast<double>(p / w);
      const double phi = std::atan2(py - cy, px - cx);
      const double tau =
          shrink * inradius * (1.0 + pert * std::cos(2.0 * phi + phase));
      if (std::sqrt(static_cast<double>(sq[p])) >= tau) kept.bits[p] = 1;
    }
    const ComponentLabeling comps =
        connected_components(kept, Connectivity::Eight);
    const int keep_id = comps.ids[deepest];
    for (size_t p = 0; p < kept.bits.size(); ++p)
      if (comps.ids[p] == keep_id && keep_id != 0)
        out.mask.labels[p] =
            static_cast<std::uint8_t>(scene.instance_classes[i]);
  }
  return out;
}

ClassMask make_separation_scribbles(const Scene& scene) {
  const int h = scene.ground_truth.height, w = scene.ground_truth.width;
  ClassMask mask = ClassMask::filled(h, w, 2, 1);
  if (scene.flagged_pairs.empty()) return mask;
  // 2 px reach on both sides of the interface; exact squared threshold.
  const std::int64_t reach_sq = 4;
  std::vector<std::vector<std::int64_t>> dist;
  dist.reserve(scene.instances.size());
  for (const InstanceMask& inst : scene.instances)
    dist.push_back(squared_distance_transform(inst));
  for (auto [a, b] : scene.flagged_pairs)
    for (size_t p = 0; p < mask.labels.size(); ++p)
      if (dist[a][p] <= reach_sq && dist[b][p] <= reach_sq)
        mask.labels[p] = 0;
  return mask;
}

std::vector<int> assign_availability(int n, double ratio, Rng& rng) {
  if (n < 0 || !(ratio >= 0.0 && ratio <= 1.0))
    throw ConfigError("availability ratio must be in [0, 1]");
  const int take = static_cast<int>(
      std::min<double>(n, std::ceil(ratio * static_cast<double>(n))));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < take; ++i) {
    const int j =
        i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void DatasetGenConfig::validate() const {
  scene.validate();
  if (count < 1) throw ConfigError("dataset count must be positive");
  if (task_ratios.size() != 3)
    throw ConfigError("task_ratios must have three entries");
  for (double r : task_ratios)
    if (!(r >= 0.0 && r <= 1.0))
      throw ConfigError("task ratios must be in [0, 1]");
  if (name.empty() || split.empty())
    throw ConfigError("dataset name and split must be set");
}

Dataset generate_dataset(const DatasetGenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.meta.name = cfg.name;
  ds.meta.split = cfg.split;
  ds.meta.seed = cfg.seed;
  const int object_classes = cfg.scene.object_classes;
  ds.meta.task_classes = {object_classes + 1, object_classes + 1, 2};
  ds.meta.palette = "classes 0.." + std::to_string(object_classes - 1) +
                    " objects, " + std::to_string(object_classes) +
                    " background";

  Rng master(cfg.seed);
  ds.items.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    Rng item_rng = master.child(static_cast<std::uint64_t>(i) + 1);
    DatasetItem item;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", i);
    item.id = buf;
    const Scene scene = generate_scene(cfg.scene, item_rng);
    const WeakLabelResult weak = make_weak_label(scene, cfg.scene, item_rng);
    item.image = scene.image;
    item.ground_truth = scene.ground_truth;
    item.labels.tasks.resize(3);
    item.labels.tasks[1] = weak.mask;
    item.labels.tasks[2] = make_separation_scribbles(scene);
    ds.items.push_back(std::move(item));
  }

  for (int t = 0; t < 3; ++t) {
    Rng avail_rng = master.child(1'000'000 + static_cast<std::uint64_t>(t));
    const std::vector<int> chosen =
        assign_availability(cfg.count, cfg.task_ratios[t], avail_rng);
    if (t == 0) {
      if (chosen.empty())
        throw ConfigError("task 1 availability selects no images");
      for (int i : chosen)
        ds.items[i].labels.tasks[0] = *ds.items[i].ground_truth;
    } else {
      std::vector<bool> keep(cfg.count, false);
      for (int i : chosen) keep[i] = true;
      for (int i = 0; i < cfg.count; ++i)
        if (!keep[i]) ds.items[i].labels.tasks[t].reset();
    }
  }
  return ds;
}

}  // namespace recseg
