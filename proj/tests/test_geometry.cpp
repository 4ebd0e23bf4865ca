#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "recseg/core/error.hpp"
#include "recseg/core/rng.hpp"
#include "recseg/geometry/components.hpp"
#include "recseg/geometry/distance.hpp"
#include "recseg/geometry/evolve.hpp"
#include "recseg/geometry/level_set.hpp"

using namespace recseg;

namespace {

InstanceMask from_rows(const std::vector<std::string>& rows) {
  InstanceMask m = InstanceMask::zeros(static_cast<int>(rows.size()),
                                       static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.set(y, x, rows[y][x] != '.');
  return m;
}

ClassMask mask_from_rows(const std::vector<std::string>& rows, int classes) {
  ClassMask m = ClassMask::filled(static_cast<int>(rows.size()),
                                  static_cast<int>(rows[0].size()), classes,
                                  static_cast<std::uint8_t>(classes - 1));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (rows[y][x] != '.')
        m.labels[static_cast<std::size_t>(y) * m.width + x] =
            static_cast<std::uint8_t>(rows[y][x] - '0');
  return m;
}

bool subset(const InstanceMask& inner, const InstanceMask& outer) {
  for (std::size_t i = 0; i < inner.bits.size(); ++i)
    if (inner.bits[i] && !outer.bits[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("squared distance transform equals the all-pairs oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(20));
    const int w = 1 + static_cast<int>(rng.below(20));
    const double density = rng.uniform();
    const InstanceMask m = oracle::random_mask(rng, h, w, density);
    CHECK(squared_distance_transform(m) == oracle::brute_squared_edt(m));
  }
}

TEST_CASE("distance transform edge cases") {
  const InstanceMask empty = InstanceMask::zeros(3, 4);
  const auto sq = squared_distance_transform(empty);
  for (auto v : sq) CHECK(v == kUnreachable);
  const DistanceField d = distance_transform(empty);
  for (auto v : d.values) CHECK(std::isinf(v));

  InstanceMask full = InstanceMask::zeros(2, 2);
  for (auto& b : full.bits) b = 1;
  for (auto v : squared_distance_transform(full)) CHECK(v == 0);

  InstanceMask one = InstanceMask::zeros(1, 5);
  one.set(0, 2, true);
  const auto line = squared_distance_transform(one);
  CHECK(line == std::vector<std::int64_t>{4, 1, 0, 1, 4});
}

TEST_CASE("distance field is the exact square root of the integer field") {
  Rng rng(102);
  const InstanceMask m = oracle::random_mask(rng, 15, 17, 0.1);
  const auto sq = squared_distance_transform(m);
  const DistanceField d = distance_transform(m);
  for (std::size_t i = 0; i < sq.size(); ++i) {
    if (sq[i] == kUnreachable)
      CHECK(std::isinf(d.values[i]));
    else
      CHECK(d.values[i] == std::sqrt(static_cast<double>(sq[i])));
  }
}

TEST_CASE("level set and growth match the brute-force oracle") {
  Rng rng(103);
  const double betas[] = {0.0, 0.5, 1.0, 5.0};
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(14));
    const int w = 2 + static_cast<int>(rng.below(14));
    InstanceMask seed = oracle::random_mask(rng, h, w, 0.1);
    if (seed.empty()) seed.set(static_cast<int>(rng.below(h)), 0, true);
    const InstanceMask pred = oracle::random_mask(rng, h, w, rng.uniform());
    for (double beta : betas) {
      const LevelSetField phi = level_set(seed, pred, beta);
      const std::vector<double> expected = oracle::brute_phi(seed, pred, beta);
      REQUIRE(phi.values.size() == expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(phi.values[i] == expected[i]);
      CHECK(grow_region(seed, pred, beta) ==
            oracle::brute_grow(seed, pred, beta));
    }
  }
}

TEST_CASE("level set rejects bad inputs") {
  InstanceMask seed = InstanceMask::zeros(3, 3);
  seed.set(1, 1, true);
  const InstanceMask pred = InstanceMask::zeros(3, 3);
  CHECK_THROWS_AS(level_set(seed, InstanceMask::zeros(2, 3), 1.0), DataError);
  CHECK_THROWS_AS(level_set(InstanceMask::zeros(3, 3), pred, 1.0), DataError);
  CHECK_THROWS_AS(level_set(seed, pred, -0.5), DataError);
}

TEST_CASE("beta limits: identity, saturation, nesting") {
  Rng rng(104);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(14));
    const int w = 2 + static_cast<int>(rng.below(14));
    InstanceMask seed = oracle::random_mask(rng, h, w, 0.15);
    if (seed.empty()) seed.set(0, 0, true);

    // beta = 0 freezes the seed.
    CHECK(grow_region(seed, oracle::random_mask(rng, h, w, 0.5), 0.0) == seed);

    // Large beta with seed inside prediction snaps to the prediction.
    InstanceMask pred = oracle::random_mask(rng, h, w, 0.3);
    for (std::size_t i = 0; i < pred.bits.size(); ++i)
      pred.bits[i] = pred.bits[i] | seed.bits[i];
    CHECK(grow_region(seed, pred, static_cast<double>(h + w)) == pred);

    // Growth is monotone in beta and always contains the seed.
    const InstanceMask any_pred = oracle::random_mask(rng, h, w, 0.5);
    const double b1 = rng.uniform(0.0, 2.0);
    const double b2 = b1 + rng.uniform(0.1, 3.0);
    const InstanceMask g1 = grow_region(seed, any_pred, b1);
    const InstanceMask g2 = grow_region(seed, any_pred, b2);
    CHECK(subset(seed, g1));
    CHECK(subset(g1, g2));
  }
}

TEST_CASE("connected components agree with flood fill") {
  Rng rng(105);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(18));
    const int w = 1 + static_cast<int>(rng.below(18));
    const InstanceMask m = oracle::random_mask(rng, h, w, rng.uniform());
    for (Connectivity conn : {Connectivity::Four, Connectivity::Eight}) {
      const ComponentLabeling lab = connected_components(m, conn);
      CHECK(lab.count ==
            oracle::flood_count(m, conn == Connectivity::Eight));
      // Background keeps id 0 and object pixels get 1..count.
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (m.at(y, x))
            CHECK((lab.at(y, x) >= 1 && lab.at(y, x) <= lab.count));
          else
            CHECK(lab.at(y, x) == 0);
        }
    }
  }
}

TEST_CASE("component ids follow raster order of first pixels") {
  const InstanceMask m = from_rows({
      ".X..Y",
      ".X...",
      "Z...Y",
  });
  const ComponentLabeling lab = connected_components(m, Connectivity::Four);
  CHECK(lab.count == 4);
  CHECK(lab.at(0, 1) == 1);
  CHECK(lab.at(1, 1) == 1);
  CHECK(lab.at(0, 4) == 2);
  CHECK(lab.at(2, 0) == 3);
  CHECK(lab.at(2, 4) == 4);

  const ComponentLabeling lab8 = connected_components(m, Connectivity::Eight);
  CHECK(lab8.count == 3);  // the diagonal pair joins under 8-connectivity
}

TEST_CASE("component masks and sizes are consistent") {
  Rng rng(106);
  const InstanceMask m = oracle::random_mask(rng, 12, 12, 0.4);
  const ComponentLabeling lab = connected_components(m, Connectivity::Eight);
  const std::vector<std::size_t> sizes = component_sizes(lab);
  REQUIRE(static_cast<int>(sizes.size()) == lab.count + 1);
  std::size_t total = 0;
  for (int id = 1; id <= lab.count; ++id) {
    const InstanceMask cm = component_mask(lab, id);
    CHECK(cm.popcount() == sizes[id]);
    CHECK(subset(cm, m));
    total += sizes[id];
  }
  CHECK(total == m.popcount());
}

TEST_CASE("split assigns pixels to the nearest seed and drops exact ties") {
  // One 1x7 bar overlapping two seeds at its ends; the middle pixel is
  // exactly equidistant and must disappear.
  const InstanceMask bar = from_rows({"XXXXXXX"});
  std::vector<InstanceMask> seeds = {from_rows({"X......"}),
                                     from_rows({"......X"})};
  const ComponentLabeling one = connected_components(bar, Connectivity::Eight);
  REQUIRE(one.count == 1);
  const ComponentLabeling split = split_components(one, seeds);
  CHECK(split.count == 2);
  CHECK(split.at(0, 3) == 0);
  for (int x = 0; x < 3; ++x) CHECK(split.at(0, x) == split.at(0, 0));
  for (int x = 4; x < 7; ++x) CHECK(split.at(0, x) == split.at(0, 6));
  CHECK(split.at(0, 0) != split.at(0, 6));
}

TEST_CASE("split leaves single-seed components untouched and stays connected") {
  Rng rng(107);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 6 + static_cast<int>(rng.below(10));
    const int w = 6 + static_cast<int>(rng.below(10));
    const InstanceMask m = oracle::random_blob(rng, h, w);
    const ComponentLabeling lab = connected_components(m, Connectivity::Eight);
    std::vector<InstanceMask> seeds;
    seeds.push_back(oracle::random_blob(rng, h, w));
    seeds.push_back(oracle::random_blob(rng, h, w));
    // Seeds come from a single class grid in real use, so they never overlap.
    bool disjoint_nonempty = true;
    for (std::size_t i = 0; i < seeds[1].bits.size(); ++i)
      if (seeds[0].bits[i]) seeds[1].bits[i] = 0;
    disjoint_nonempty = seeds[1].popcount() > 0;
    if (!disjoint_nonempty) continue;
    const ComponentLabeling split = split_components(lab, seeds);
    // Every output component overlaps at most one seed, and components are
    // genuinely connected.
    for (int id = 1; id <= split.count; ++id) {
      const InstanceMask cm = component_mask(split, id);
      CHECK(oracle::flood_count(cm, true) == 1);
      int overlapped = 0;
      for (const InstanceMask& s : seeds) {
        bool any = false;
        for (std::size_t i = 0; i < cm.bits.size(); ++i)
          any = any || (cm.bits[i] && s.bits[i]);
        overlapped += any ? 1 : 0;
      }
      CHECK(overlapped <= 1);
    }
  }
}

TEST_CASE("pairing needs half the seed, inclusive") {
  // Component covers exactly 2 of 4 seed pixels: boundary-inclusive pairing.
  const InstanceMask comp = from_rows({"XX..", "....", "....", "...."});
  std::vector<InstanceMask> seeds = {from_rows({"XXXX", "....", "....", "...."})};
  const ComponentLabeling lab = connected_components(comp, Connectivity::Eight);
  PairingResult res = pair_seeds(seeds, lab);
  REQUIRE(res.pairs.size() == 1);
  CHECK(res.pairs[0].first == 0);
  CHECK(res.unpaired_seeds.empty());

  // One pixel of four is below half: unpaired.
  const InstanceMask small = from_rows({"X...", "....", "....", "...."});
  const ComponentLabeling lab2 = connected_components(small, Connectivity::Eight);
  res = pair_seeds(seeds, lab2);
  CHECK(res.pairs.empty());
  REQUIRE(res.unpaired_seeds.size() == 1);
  CHECK(res.unpaired_seeds[0] == 0);
}

TEST_CASE("pairing prefers the larger overlap, ties to the lower id") {
  // Two components each covering half of the seed: equal overlap, the
  // lower component id must win.
  const InstanceMask comps = from_rows({"XX.YY"});
  std::vector<InstanceMask> seeds = {from_rows({"XX.XX"})};
  const ComponentLabeling lab = connected_components(comps, Connectivity::Four);
  REQUIRE(lab.count == 2);
  const PairingResult res = pair_seeds(seeds, lab);
  REQUIRE(res.pairs.size() == 1);
  CHECK(res.pairs[0].second == 1);

  // Unequal overlaps: the larger one wins even with a higher id.
  const InstanceMask comps2 = from_rows({"X.YYY"});
  std::vector<InstanceMask> seeds2 = {from_rows({"X.XXX"})};
  const ComponentLabeling lab2 = connected_components(comps2, Connectivity::Four);
  const PairingResult res2 = pair_seeds(seeds2, lab2);
  REQUIRE(res2.pairs.size() == 1);
  CHECK(res2.pairs[0].second == 2);
}

TEST_CASE("extract_seeds orders instances by first pixel in raster order") {
  const ClassMask label = mask_from_rows(
      {
          "00..11",
          "00..11",
          "......",
          "1..00.",
      },
      3);
  const auto seeds = extract_seeds(label, Connectivity::Eight);
  REQUIRE(seeds.size() == 4);
  CHECK(seeds[0].cls == 0);
  CHECK(seeds[0].mask.at(0, 0));
  CHECK(seeds[1].cls == 1);
  CHECK(seeds[1].mask.at(0, 4));
  CHECK(seeds[2].cls == 1);
  CHECK(seeds[2].mask.at(3, 0));
  CHECK(seeds[3].cls == 0);
  CHECK(seeds[3].mask.at(3, 3));
  for (const auto& s : seeds) CHECK(s.mask.popcount() > 0);
  // Seed ids are stable: first_pixel values strictly increase.
  for (std::size_t i = 1; i < seeds.size(); ++i)
    CHECK(seeds[i - 1].first_pixel < seeds[i].first_pixel);
}

TEST_CASE("update_labels grows paired seeds to their prediction blobs") {
  // Two seeds on separate prediction blobs; large beta snaps each seed to
  // its own blob and classes are preserved.
  const ClassMask seed_label = mask_from_rows(
      {
          "0.....",
          "......",
          "......",
          ".....1",
      },
      3);
  const ClassMask prediction = mask_from_rows(
      {
          "00....",
          "00....",
          "....11",
          "....11",
      },
      3);
  const UpdateResult res = update_labels(seed_label, prediction, 100.0);
  CHECK(res.seed_count == 2);
  CHECK(res.grown_count == 2);
  CHECK(res.unpaired_seeds.empty());
  const ClassMask expected = mask_from_rows(
      {
          "00....",
          "00....",
          "....11",
          "....11",
      },
      3);
  CHECK(res.labels == expected);
}

TEST_CASE("update_labels freezes seeds the prediction does not cover") {
  const ClassMask seed_label = mask_from_rows(
      {
          "00....",
          "......",
          "......",
      },
      2);
  const ClassMask prediction =
      ClassMask::filled(3, 6, 2, 1);  // all background
  const UpdateResult res = update_labels(seed_label, prediction, 1.0);
  CHECK(res.labels == seed_label);
  REQUIRE(res.unpaired_seeds.size() == 1);
  CHECK(res.unpaired_seeds[0] == 0);
}

TEST_CASE("update_labels beta 0 is the identity") {
  Rng rng(108);
  for (int trial = 0; trial < 20; ++trial) {
    ClassMask seed_label = ClassMask::filled(10, 10, 3, 2);
    for (int i = 0; i < 8; ++i) {
      const int y = static_cast<int>(rng.below(10));
      const int x = static_cast<int>(rng.below(10));
      seed_label.labels[static_cast<std::size_t>(y) * 10 + x] =
          static_cast<std::uint8_t>(rng.below(2));
    }
    ClassMask prediction = ClassMask::filled(10, 10, 3, 2);
    for (auto& v : prediction.labels)
      v = static_cast<std::uint8_t>(rng.below(3));
    const UpdateResult res = update_labels(seed_label, prediction, 0.0);
    CHECK(res.labels == seed_label);
  }
}

TEST_CASE("update_labels never merges and never shrinks") {
  Rng rng(109);
  for (int trial = 0; trial < 60; ++trial) {
    const int h = 8 + static_cast<int>(rng.below(12));
    const int w = 8 + static_cast<int>(rng.below(12));
    const int classes = 2 + static_cast<int>(rng.below(2));

    ClassMask seed_label =
        ClassMask::filled(h, w, classes + 1, static_cast<std::uint8_t>(classes));
    const int blobs = 1 + static_cast<int>(rng.below(4));
    for (int b = 0; b < blobs; ++b) {
      const InstanceMask blob = oracle::random_blob(rng, h, w);
      const std::uint8_t cls = static_cast<std::uint8_t>(rng.below(classes));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (blob.at(y, x))
            seed_label.labels[static_cast<std::size_t>(y) * w + x] = cls;
    }
    ClassMask prediction =
        ClassMask::filled(h, w, classes + 1, static_cast<std::uint8_t>(classes));
    for (int b = 0; b < 3; ++b) {
      const InstanceMask blob = oracle::random_blob(rng, h, w);
      const std::uint8_t cls = static_cast<std::uint8_t>(rng.below(classes));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (blob.at(y, x))
            prediction.labels[static_cast<std::size_t>(y) * w + x] = cls;
    }

    const auto seeds = extract_seeds(seed_label, Connectivity::Eight);
    const double beta = rng.uniform(0.0, 4.0);
    const UpdateResult res = update_labels(seed_label, prediction, beta);

    CHECK(res.seed_count == static_cast<int>(seeds.size()));
    const auto out_seeds = extract_seeds(res.labels, Connectivity::Eight);
    CHECK(out_seeds.size() == seeds.size());

    // Superset: every input object pixel keeps its class.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (seed_label.at(y, x) != seed_label.background_class())
          CHECK(res.labels.at(y, x) == seed_label.at(y, x));

    // Each output instance contains exactly one full input seed.
    for (const auto& out : out_seeds) {
      int contained = 0;
      for (const auto& in : seeds)
        if (subset(in.mask, out.mask)) ++contained;
      CHECK(contained == 1);
    }
  }
}
