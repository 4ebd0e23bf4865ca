#include "recseg/geometry/distance.hpp"

#include <cmath>
#include <limits>

namespace recseg {

namespace {

// Vertical pass: for each column, the row distance to the nearest source
// pixel in that column (kUnreachable if the column has none).
std::vector<std::int64_t> column_distances(const InstanceMask& src) {
  const int h = src.height, w = src.width;
  const std::int64_t far = static_cast<std::int64_t>(h) + w + 1;
  std::vector<std::int64_t> g(static_cast<size_t>(h) * w, far);
  for (int x = 0; x < w; ++x) {
    // top-down
    for (int y = 0; y < h; ++y) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (src.bits[i])
        g[i] = 0;
      else if (y > 0)
        g[i] = std::min(far, g[i - w] + 1);
    }
    // bottom-up
    for (int y = h - 2; y >= 0; --y) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (g[i + w] + 1 < g[i]) g[i] = g[i + w] + 1;
    }
  }
  for (auto& v : g)
    if (v >= far) v = kUnreachable;
  return g;
}

}  // namespace

std::vector<std::int64_t> squared_distance_transform(const InstanceMask& src) {
  const int h = src.height, w = src.width;
  std::vector<std::int64_t> g = column_distances(src);
  std::vector<std::int64_t> out(static_cast<size_t>(h) * w, kUnreachable);

  // Horizontal pass per row: lower envelope of the parabolas
  // f_u(x) = (x-u)^2 + g(u)^2 over columns u with a reachable g.
  std::vector<int> s(w), t(w), cols(w);
  std::vector<std::int64_t> gsq(w);
  for (int y = 0; y < h; ++y) {
    const size_t row = static_cast<size_t>(y) * w;
    int m = 0;
    for (int x = 0; x < w; ++x) {
      const std::int64_t gv = g[row + x];
      if (gv != kUnreachable) {
        cols[m] = x;
        gsq[m] = gv * gv;
        ++m;
      }
    }
    if (m == 0) continue;  // empty source: whole row stays unreachable

    auto f = [&](std::int64_t x, int i) {
      const std::int64_t d = x - cols[i];
      return d * d + gsq[i];
    };
    // First column index (in cols/gsq) whose parabola beats parabola i
    // strictly after their crossover.
    auto sep = [&](int i, int u) {
      const std::int64_t xi = cols[i], xu = cols[u];
      return (xu * xu - xi * xi + gsq[u] - gsq[i]) / (2 * (xu - xi));
    };

    int q = 0;
    s[0] = 0;
    t[0] = 0;
    for (int u = 1; u < m; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
        t[0] = 0;
      } else {
        const std::int64_t wpos = 1 + sep(s[q], u);
        if (wpos < w) {
          ++q;
          s[q] = u;
          t[q] = static_cast<int>(wpos);
        }
      }
    }
    for (int x = w - 1; x >= 0; --x) {
      out[row + x] = f(x, s[q]);
      if (x == t[q]) --q;
    }
  }
  return out;
}

DistanceField distance_transform(const InstanceMask& src) {
  DistanceField field;
  field.height = src.height;
  field.width = src.width;
  field.values.resize(src.pixel_count());
  const auto sq = squared_distance_transform(src);
  for (size_t i = 0; i < sq.size(); ++i)
    field.values[i] = sq[i] == kUnreachable
                          ? std::numeric_limits<double>::infinity()
                          : std::sqrt(static_cast<double>(sq[i]));
  return field;
}

}  // namespace recseg
