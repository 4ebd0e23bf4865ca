#pragma once

#include <string>
#include <vector>

#include "recseg/core/types.hpp"
#include "recseg/geometry/components.hpp"

namespace recseg {

// Overlap dice 2|A^B| / (|A|+|B|); two empty masks count as a perfect 1.
double dice(const InstanceMask& a, const InstanceMask& b);

// Dice of the foreground (any object class) of two class masks.
double foreground_dice(const ClassMask& a, const ClassMask& b);

// Dice restricted to one class.
double class_dice(const ClassMask& a, const ClassMask& b, int cls);

// Object-level dice: instances are per-class connected components. Each
// instance on one side is matched to the maximum-overlap instance on the
// other (ties to the lower id, no overlap scores 0), each side's matches
// are area-weighted, and the two sides average with weight 1/2 each.
// Both sides empty scores 1; exactly one side empty scores 0.
double object_dice(const ClassMask& prediction, const ClassMask& truth,
                   Connectivity connectivity = Connectivity::Eight);

// Symmetric Hausdorff distance between boundaries. A boundary pixel is an
// object pixel with a 4-neighbor outside the object; off-grid counts as
// outside. Throws DataError if either mask is empty.
double hausdorff(const InstanceMask& a, const InstanceMask& b);

// Object pixels with at least one 4-neighbor outside the object.
InstanceMask boundary_pixels(const InstanceMask& mask);

struct EvalRow {
  std::string id;
  double dice = 0.0;
  double object_dice = 0.0;
  double hausdorff = 0.0;  // NaN when a foreground is empty
};

EvalRow evaluate_masks(const std::string& id, const ClassMask& prediction,
                       const ClassMask& truth);

// Per-image rows plus a trailing mean row. NaN entries are excluded from
// means and render as "nan".
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

std::string eval_summary(const std::vector<EvalRow>& rows);

struct CurvePoint {
  int k = 0;
  double mean_dice = 0.0;
};

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& points);

// Fixed-width decimal used by every CSV writer, so identical runs produce
// byte-identical files.
std::string format_metric(double v);

}  // namespace recseg
