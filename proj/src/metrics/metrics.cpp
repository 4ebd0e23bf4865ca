#include "recseg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "recseg/core/error.hpp"
#include "recseg/geometry/distance.hpp"

namespace recseg {

double dice(const InstanceMask& a, const InstanceMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw DataError("dice needs masks of equal size");
  size_t inter = 0, total = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool av = a.bits[i] != 0, bv = b.bits[i] != 0;
    inter += av && bv;
    total += av;
    total += bv;
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double foreground_dice(const ClassMask& a, const ClassMask& b) {
  return dice(foreground(a), foreground(b));
}

double class_dice(const ClassMask& a, const ClassMask& b, int cls) {
  if (a.height != b.height || a.width != b.width)
    throw DataError("dice needs masks of equal size");
  size_t inter = 0, total = 0;
  for (size_t i = 0; i < a.labels.size(); ++i) {
    const bool av = a.labels[i] == cls, bv = b.labels[i] == cls;
    inter += av && bv;
    total += av;
    total += bv;
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

namespace {

// Instance id per pixel, 0 = background. Ids are per-class components
// numbered by (class, first pixel) so matching ties resolve consistently.
struct InstanceGrid {
  std::vector<int> ids;  // 0 = background
  std::vector<std::int64_t> sizes;  // sizes[k-1] = pixels of instance k
  int count = 0;
};

InstanceGrid per_class_instances(const ClassMask& mask, Connectivity conn) {
  InstanceGrid g;
  g.ids.assign(mask.pixel_count(), 0);
  for (int cls = 0; cls < mask.background_class(); ++cls) {
    InstanceMask plane = InstanceMask::zeros(mask.height, mask.width);
    bool any = false;
    for (size_t i = 0; i < mask.labels.size(); ++i)
      if (mask.labels[i] == cls) {
        plane.bits[i] = 1;
        any = true;
      }
    if (!any) continue;
    const ComponentLabeling comps = connected_components(plane, conn);
    for (size_t i = 0; i < plane.bits.size(); ++i)
      if (comps.ids[i] != 0) g.ids[i] = g.count + comps.ids[i];
    for (int k = 1; k <= comps.count; ++k) {
      std::int64_t n = 0;
      for (int id : comps.ids) n += id == k;
      g.sizes.push_back(n);
    }
    g.count += comps.count;
  }
  return g;
}

// Weighted half of the object dice: every instance of `from` against its
// maximum-overlap instance in `to`.
double matched_half(const InstanceGrid& from, const InstanceGrid& to) {
  std::int64_t total = 0;
  for (std::int64_t s : from.sizes) total += s;
  if (total == 0) return 0.0;
  // overlap[i][j] = shared pixels of from-instance i+1 and to-instance j+1
  std::vector<std::map<int, std::int64_t>> overlap(from.count);
  for (size_t p = 0; p < from.ids.size(); ++p) {
    const int fi = from.ids[p];
    if (fi == 0) continue;
    const int tj = to.ids[p];
    if (tj != 0) overlap[fi - 1][tj] += 1;
  }
  double acc = 0.0;
  for (int i = 0; i < from.count; ++i) {
    std::int64_t best_overlap = 0;
    int best_j = 0;  // 0 = unmatched
    for (const auto& [j, ov] : overlap[i]) {
      if (ov > best_overlap) {
        best_overlap = ov;
        best_j = j;
      }
    }
    double d = 0.0;
    if (best_j != 0) {
      const double denom = static_cast<double>(from.sizes[i]) +
                           static_cast<double>(to.sizes[best_j - 1]);
      d = 2.0 * static_cast<double>(best_overlap) / denom;
    }
    acc += (static_cast<double>(from.sizes[i]) / static_cast<double>(total)) * d;
  }
  return acc;
}

}  // namespace

double object_dice(const ClassMask& prediction, const ClassMask& truth,
                   Connectivity connectivity) {
  if (prediction.height != truth.height || prediction.width != truth.width)
    throw DataError("object dice needs masks of equal size");
  const InstanceGrid p = per_class_instances(prediction, connectivity);
  const InstanceGrid g = per_class_instances(truth, connectivity);
  if (p.count == 0 && g.count == 0) return 1.0;
  if (p.count == 0 || g.count == 0) return 0.0;
  return 0.5 * (matched_half(g, p) + matched_half(p, g));
}

InstanceMask boundary_pixels(const InstanceMask& mask) {
  InstanceMask b = InstanceMask::zeros(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || y == mask.height - 1 || x == 0 ||
                        x == mask.width - 1 || !mask.at(y - 1, x) ||
                        !mask.at(y + 1, x) || !mask.at(y, x - 1) ||
                        !mask.at(y, x + 1);
      if (edge) b.set(y, x, true);
    }
  return b;
}

namespace {

// max over source-boundary pixels of the squared distance to the target
// boundary, in exact integer arithmetic.
std::int64_t directed_sq(const InstanceMask& src_boundary,
                         const std::vector<std::int64_t>& target_sq) {
  std::int64_t worst = 0;
  for (size_t i = 0; i < src_boundary.bits.size(); ++i)
    if (src_boundary.bits[i] != 0) worst = std::max(worst, target_sq[i]);
  return worst;
}

}  // namespace

double hausdorff(const InstanceMask& a, const InstanceMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw DataError("hausdorff needs masks of equal size");
  if (a.empty() || b.empty())
    throw DataError("hausdorff is undefined for empty masks");
  const InstanceMask ba = boundary_pixels(a);
  const InstanceMask bb = boundary_pixels(b);
  const std::vector<std::int64_t> da = squared_distance_transform(ba);
  const std::vector<std::int64_t> db = squared_distance_transform(bb);
  const std::int64_t worst =
      std::max(directed_sq(ba, db), directed_sq(bb, da));
  return std::sqrt(static_cast<double>(worst));
}

EvalRow evaluate_masks(const std::string& id, const ClassMask& prediction,
                       const ClassMask& truth) {
  EvalRow row;
  row.id = id;
  row.dice = foreground_dice(prediction, truth);
  row.object_dice = object_dice(prediction, truth);
  const InstanceMask fp = foreground(prediction);
  const InstanceMask ft = foreground(truth);
  if (fp.empty() || ft.empty())
    row.hausdorff = std::numeric_limits<double>::quiet_NaN();
  else
    row.hausdorff = hausdorff(fp, ft);
  return row;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

namespace {

struct Averages {
  double dice = 0.0, object_dice = 0.0, hausdorff = 0.0;
  bool any_hausdorff = false;
};

Averages compute_means(const std::vector<EvalRow>& rows) {
  Averages m;
  if (rows.empty()) return m;
  double hsum = 0.0;
  int hcount = 0;
  for (const auto& r : rows) {
    m.dice += r.dice;
    m.object_dice += r.object_dice;
    if (!std::isnan(r.hausdorff)) {
      hsum += r.hausdorff;
      ++hcount;
    }
  }
  m.dice /= static_cast<double>(rows.size());
  m.object_dice /= static_cast<double>(rows.size());
  m.any_hausdorff = hcount > 0;
  m.hausdorff = hcount > 0 ? hsum / hcount
                           : std::numeric_limits<double>::quiet_NaN();
  return m;
}

}  // namespace

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "id,dice,object_dice,hausdorff\n";
  for (const auto& r : rows)
    out << r.id << ',' << format_metric(r.dice) << ','
        << format_metric(r.object_dice) << ',' << format_metric(r.hausdorff)
        << '\n';
  const Averages m = compute_means(rows);
  out << "mean," << format_metric(m.dice) << ',' << format_metric(m.object_dice)
      << ',' << format_metric(m.hausdorff) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

std::string eval_summary(const std::vector<EvalRow>& rows) {
  const Averages m = compute_means(rows);
  std::string s;
  s += "images: " + std::to_string(rows.size()) + "\n";
  s += "mean dice: " + format_metric(m.dice) + "\n";
  s += "mean object dice: " + format_metric(m.object_dice) + "\n";
  s += "mean hausdorff: " + format_metric(m.hausdorff) + "\n";
  return s;
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "k,mean_dice\n";
  for (const auto& p : points)
    out << p.k << ',' << format_metric(p.mean_dice) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace recseg
