// Acceptance gate for the recursive-approximation segmentation pipeline.
// Runs nine checks, prints exactly one PASS or FAIL line per criterion, and
// exits nonzero if any criterion fails. Time allowances are stated for a
// four-core CPU; on narrower machines they scale by 4 / hardware threads,
// and every timing line prints both the measured time and the allowance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "oracle_helpers.hpp"
#include "recseg/core/rng.hpp"
#include "recseg/core/types.hpp"
#include "recseg/data/synthetic.hpp"
#include "recseg/geometry/distance.hpp"
#include "recseg/geometry/evolve.hpp"
#include "recseg/geometry/level_set.hpp"
#include "recseg/metrics/metrics.hpp"
#include "recseg/model/feature_map.hpp"
#include "recseg/model/network.hpp"
#include "recseg/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace recseg;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

std::string strf(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

void info(const std::string& line) {
  std::printf("[info] %s\n", line.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Allowances reference a four-core CPU and never shrink on wider machines.
double budget_scale() {
  const unsigned hc = std::max(1u, std::thread::hardware_concurrency());
  return std::max(1.0, 4.0 / static_cast<double>(hc));
}

bool subset_of(const InstanceMask& inner, const InstanceMask& outer) {
  for (std::size_t i = 0; i < inner.bits.size(); ++i)
    if (inner.bits[i] && !outer.bits[i]) return false;
  return true;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the final comma-separated field of every line; used to compare
// training histories without their wall-clock column.
std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out += pos == std::string::npos ? line : line.substr(0, pos);
    out += '\n';
  }
  return out;
}

// -------------------------------------------------------------- criterion 1
// Exact distance transform against the all-pairs oracle.

void criterion1() {
  const double allowed = 10.0 * budget_scale();
  const auto t0 = Clock::now();
  Rng rng(0xD15701);
  const int trials = 200;
  int exact = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 1 + static_cast<int>(rng.below(32));
    const int w = 1 + static_cast<int>(rng.below(32));
    InstanceMask mask = oracle::random_mask(rng, h, w, rng.uniform());
    if (t % 50 == 0) mask.bits.assign(mask.bits.size(), 0);  // empty source
    if (t % 50 == 1) mask.bits.assign(mask.bits.size(), 1);  // full source
    const std::vector<std::int64_t> got = squared_distance_transform(mask);
    const std::vector<std::int64_t> want = oracle::brute_squared_edt(mask);
    bool ok = got == want;
    const DistanceField field = distance_transform(mask);
    for (std::size_t i = 0; ok && i < want.size(); ++i) {
      const double v = field.values[i];
      ok = want[i] < 0 ? std::isinf(v)
                       : v == std::sqrt(static_cast<double>(want[i]));
    }
    exact += ok;
  }
  const double secs = seconds_since(t0);
  report(1, exact == trials && secs < allowed,
         strf("distance transform exact on %d/%d random masks up to 32x32, "
              "%.2fs (allowed %.1fs)",
              exact, trials, secs, allowed));
}

// -------------------------------------------------------------- criterion 2
// Level-set field and thresholded region against the per-pixel oracle.

void criterion2() {
  const double allowed = 30.0 * budget_scale();
  const auto t0 = Clock::now();
  Rng rng(0xD15702);
  const double betas[4] = {0.0, 0.5, 1.0, 5.0};
  const int trials = 100;
  int exact = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 4 + static_cast<int>(rng.below(21));
    const int w = 4 + static_cast<int>(rng.below(21));
    const InstanceMask seed = oracle::random_blob(rng, h, w);
    InstanceMask pred =
        oracle::random_mask(rng, h, w, 0.2 + 0.6 * rng.uniform());
    if (t % 10 == 3) pred.bits.assign(pred.bits.size(), 1);  // full prediction
    if (t % 10 == 7)                                         // seed inside it
      for (std::size_t i = 0; i < pred.bits.size(); ++i)
        pred.bits[i] = pred.bits[i] || seed.bits[i];
    const double beta = betas[t % 4];
    const LevelSetField field = level_set(seed, pred, beta);
    const bool field_ok = field.values == oracle::brute_phi(seed, pred, beta);
    const bool grow_ok =
        grow_region(seed, pred, beta) == oracle::brute_grow(seed, pred, beta);
    exact += field_ok && grow_ok;
  }
  const double secs = seconds_since(t0);
  report(2, exact == trials && secs < allowed,
         strf("level-set field and grown region match the per-pixel oracle "
              "on %d/%d cases up to 24x24, beta in {0, 0.5, 1, 5}, "
              "%.2fs (allowed %.1fs)",
              exact, trials, secs, allowed));
}

// -------------------------------------------------------------- criterion 3
// Limit behaviors of the growth: identity at beta 0, saturation to the
// prediction at large beta, and nesting in beta.

void criterion3() {
  Rng rng(0xD15703);
  const int trials = 100;
  int zero_ok = 0, sat_ok = 0, nest_ok = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 4 + static_cast<int>(rng.below(29));
    const int w = 4 + static_cast<int>(rng.below(29));
    const InstanceMask seed = oracle::random_blob(rng, h, w);
    const InstanceMask noise =
        oracle::random_mask(rng, h, w, 0.2 + 0.6 * rng.uniform());

    zero_ok += grow_region(seed, noise, 0.0) == seed;

    // With the seed inside the prediction and beta at least the grid
    // diameter, every prediction pixel crosses zero and nothing else does.
    InstanceMask covering = noise;
    for (std::size_t i = 0; i < covering.bits.size(); ++i)
      covering.bits[i] = covering.bits[i] || seed.bits[i];
    sat_ok += grow_region(seed, covering, static_cast<double>(h + w)) ==
              covering;

    const double b1 = 3.0 * rng.uniform();
    const double b2 = b1 + 3.0 * rng.uniform();
    nest_ok += subset_of(grow_region(seed, noise, b1),
                         grow_region(seed, noise, b2));
  }
  report(3,
         zero_ok == trials && sat_ok == trials && nest_ok == trials,
         strf("zero-beta identity %d/%d, saturation to the prediction %d/%d, "
              "nested growth %d/%d",
              zero_ok, trials, sat_ok, trials, nest_ok, trials));
}

// -------------------------------------------------------------- criterion 4
// Label evolution never merges instances: seeds are planted in separated
// strips, the prediction is adversarial noise, and the output must keep one
// instance per seed with every seed fully inside its own instance.

void criterion4() {
  Rng rng(0xD15704);
  const int trials = 500;
  int ok_trials = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 20 + static_cast<int>(rng.below(21));
    const int w = 20 + static_cast<int>(rng.below(21));
    const int k = 1 + static_cast<int>(rng.below(4));
    ClassMask seeds = ClassMask::filled(h, w, 3, 2);
    const int strip = w / k;
    for (int j = 0; j < k; ++j) {
      const int cls = static_cast<int>(rng.below(2));
      const int bw = 1 + static_cast<int>(rng.below(3));
      const int bh = 1 + static_cast<int>(rng.below(3));
      const int xlo = j * strip + 1;
      const int xhi = (j + 1) * strip - 1 - bw;  // two empty columns between strips
      const int x0 =
          xlo + (xhi > xlo ? static_cast<int>(rng.below(xhi - xlo + 1)) : 0);
      const int y0 = 1 + static_cast<int>(rng.below(h - bh - 1));
      for (int y = y0; y < y0 + bh; ++y)
        for (int x = x0; x < x0 + bw; ++x)
          seeds.at(y, x) = static_cast<std::uint8_t>(cls);
    }
    ClassMask pred = ClassMask::filled(h, w, 3, 2);
    const double density = 0.25 + 0.5 * rng.uniform();
    for (auto& px : pred.labels)
      if (rng.uniform() < density) px = 0;
    const double beta = 0.5 + 4.0 * rng.uniform();

    const std::vector<SeedInstance> in_seeds =
        extract_seeds(seeds, Connectivity::Eight);
    const UpdateResult u = update_labels(seeds, pred, beta);
    const std::vector<SeedInstance> out_inst =
        extract_seeds(u.labels, Connectivity::Eight);

    bool good = static_cast<int>(in_seeds.size()) == k && u.seed_count == k &&
                u.grown_count == k && out_inst.size() == in_seeds.size();
    for (std::size_t i = 0; good && i < seeds.labels.size(); ++i)
      if (seeds.labels[i] != seeds.background_class())
        good = u.labels.labels[i] == seeds.labels[i];
    std::vector<int> seeds_inside(out_inst.size(), 0);
    for (const SeedInstance& s : in_seeds) {
      if (!good) break;
      int holders = 0;
      for (std::size_t o = 0; o < out_inst.size(); ++o)
        if (out_inst[o].cls == s.cls && subset_of(s.mask, out_inst[o].mask)) {
          ++holders;
          ++seeds_inside[o];
        }
      good = holders == 1;
    }
    for (int c : seeds_inside) good = good && c == 1;
    ok_trials += good;
  }
  report(4, ok_trials == trials,
         strf("no seeds merged across %d/%d fuzzed evolutions: instance "
              "count preserved and each instance holds exactly one seed",
              ok_trials, trials));
}

// -------------------------------------------------------------- criterion 5
// Analytic gradients against central finite differences in double precision.

double loss_at(const Network<double>& net, ModelParams<double> params,
               const FeatureMap<double>& input, const BatchLabels& labels,
               const std::vector<double>& weights) {
  const TaskOutputs<double> out = net.forward(params, input, true);
  return multitask_loss(out, labels, weights);
}

void criterion5() {
  NetworkConfig cfg;
  cfg.levels = 2;
  cfg.multitask_blocks = 1;  // at most levels - 1
  cfg.task_classes = {3, 3, 2};
  cfg.normalization = Normalization::None;
  const Network<double> net(cfg);
  Rng rng(0xD15705);
  ModelParams<double> params = net.init_params(rng);

  const int n = 2, h = 8, w = 8;
  FeatureMap<double> input = FeatureMap<double>::zeros(n, 1, h, w);
  for (Eigen::Index i = 0; i < input.m.size(); ++i)
    input.m.data()[i] = rng.uniform(-1.0, 1.0);
  BatchLabels labels;
  labels.labels.resize(cfg.task_count);
  for (int t = 0; t < cfg.task_count; ++t) {
    labels.labels[t].resize(static_cast<std::size_t>(n) * h * w);
    for (auto& v : labels.labels[t])
      v = rng.uniform() < 0.2
              ? -1
              : static_cast<std::int32_t>(rng.below(cfg.task_classes[t]));
  }
  const std::vector<double> weights = {1.0, 1.0, 1.0};

  WorkspaceHandle<double> ws;
  params.zero_grads();
  const TaskOutputs<double> out = net.forward(params, input, true, ws.get());
  net.backward(params, *ws.get(), out, labels, weights);

  const double step = 1e-5;
  const int probes = 50;
  double max_rel = 0.0;
  int checked = 0;
  std::set<std::pair<std::size_t, Eigen::Index>> seen;
  while (checked < probes) {
    const std::size_t ti = rng.below(params.tensors.size());
    const ParamTensor<double>& ten = params.tensors[ti];
    if (!ten.trainable || ten.size() == 0) continue;
    const Eigen::Index idx = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(ten.size())));
    if (!seen.insert({ti, idx}).second) continue;
    ModelParams<double> plus = params;
    plus.tensors[ti].value(idx) += step;
    ModelParams<double> minus = params;
    minus.tensors[ti].value(idx) -= step;
    const double fd = (loss_at(net, plus, input, labels, weights) -
                       loss_at(net, minus, input, labels, weights)) /
                      (2.0 * step);
    const double an = ten.grad(idx);
    max_rel = std::max(max_rel, std::abs(fd - an) /
                                    std::max({std::abs(fd), std::abs(an),
                                              1e-8}));
    ++checked;
  }
  report(5, max_rel < 1e-4,
         strf("max relative gradient error %.3e over %d random parameters "
              "(tolerance 1e-4, central differences, step 1e-5)",
              max_rel, probes));
}

// -------------------------------------------------------------- criterion 9
// Worked metric examples plus the boundary-distance oracle.

InstanceMask block(int h, int w, int y0, int x0, int bh, int bw) {
  InstanceMask m = InstanceMask::zeros(h, w);
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) m.set(y, x, true);
  return m;
}

ClassMask class_from_rows(const std::vector<std::string>& rows) {
  ClassMask m = ClassMask::filled(static_cast<int>(rows.size()),
                                  static_cast<int>(rows[0].size()), 2, 1);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (rows[y][x] != '.') m.at(y, x) = 0;
  return m;
}

void criterion9() {
  int bad_tables = 0;
  auto table = [&](bool ok) { bad_tables += !ok; };

  // Overlap dice of a 10x10 block and its left half: 2*50 / (100+50).
  table(std::abs(dice(block(10, 10, 0, 0, 10, 10), block(10, 10, 0, 0, 10, 5)) -
                 2.0 / 3.0) < 1e-12);
  table(dice(InstanceMask::zeros(4, 4), InstanceMask::zeros(4, 4)) == 1.0);
  table(dice(block(4, 4, 0, 0, 1, 1), InstanceMask::zeros(4, 4)) == 0.0);

  // One true instance split into two predicted halves: 2/3 on both sides.
  {
    ClassMask truth = ClassMask::filled(4, 4, 3, 2);
    ClassMask pred = ClassMask::filled(4, 4, 3, 2);
    for (int x = 0; x < 4; ++x) truth.at(0, x) = 0;
    pred.at(0, 0) = 0;
    pred.at(0, 1) = 0;
    pred.at(0, 2) = 1;
    pred.at(0, 3) = 1;
    table(std::abs(object_dice(pred, truth) - 2.0 / 3.0) < 1e-12);
  }

  // Area weighting: the grown block outweighs the missed bar.
  {
    const ClassMask truth = class_from_rows({
        "XX..X",
        "XX..X",
        ".....",
        ".....",
    });
    const ClassMask pred = class_from_rows({
        "XX...",
        "XX...",
        "X....",
        "....X",
    });
    const double expected =
        0.5 * ((5.0 / 6.0) * (8.0 / 9.0) + (4.0 / 6.0) * (8.0 / 9.0));
    table(std::abs(object_dice(pred, truth) - expected) < 1e-12);
  }

  // Boundary distance: a 3-4-5 triangle and a one-pixel diagonal ring gap.
  table(hausdorff(block(8, 8, 0, 0, 1, 1), block(8, 8, 3, 4, 1, 1)) == 5.0);
  table(std::abs(hausdorff(block(7, 7, 1, 1, 5, 5), block(7, 7, 2, 2, 3, 3)) -
                 std::sqrt(2.0)) < 1e-12);

  Rng rng(0xD15709);
  const int trials = 100;
  int exact = 0;
  for (int t = 0; t < trials; ++t) {
    const int h = 4 + static_cast<int>(rng.below(29));
    const int w = 4 + static_cast<int>(rng.below(29));
    const InstanceMask a = oracle::random_blob(rng, h, w);
    const InstanceMask b = oracle::random_blob(rng, h, w);
    const double got = hausdorff(a, b);
    exact += got == oracle::brute_hausdorff(a, b) && got == hausdorff(b, a);
  }
  report(9, bad_tables == 0 && exact == trials,
         strf("%d worked metric examples exact, boundary distance matches "
              "the all-pairs oracle on %d/%d blob pairs up to 32x32",
              7 - bad_tables, exact, trials));
}

// -------------------------------------------------------- criteria 6, 7, 8
// Full pipeline: synthetic corpus, recursive multitask training, single-task
// baseline, held-out evaluation, and a bit-repeatability rerun.

struct SuitePass {
  std::vector<IterationStats> history;
  double multi_wall = 0.0;
  double total_wall = 0.0;
  double multi_dice = 0.0;
  double base_dice = 0.0;
  fs::path dir;
};

Dataset make_split(const std::string& split, int count,
                   std::uint64_t split_seed) {
  DatasetGenConfig g;
  g.split = split;
  g.count = count;
  g.seed = split_seed;
  return generate_dataset(g);
}

SuitePass run_suite(const fs::path& dir) {
  fs::create_directories(dir);
  SuitePass pass;
  pass.dir = dir;
  const auto t0 = Clock::now();

  // Same streams as the command-line generator: per-split seeds are
  // children of the dataset seed, and skipping the validation split leaves
  // the test stream untouched.
  Rng data_rng(11);
  const Dataset train = make_split("train", 40, data_rng.child(0).seed());
  const Dataset test = make_split("test", 20, data_rng.child(2).seed());

  NetworkConfig netcfg;
  netcfg.task_classes = train.meta.task_classes;

  TrainConfig multi;
  multi.seed = 3;
  info(strf("multitask training into %s", (dir / "multitask").c_str()));
  auto tm = Clock::now();
  TrainResult mres =
      run_recursive_training(train, netcfg, multi, (dir / "multitask").string());
  pass.multi_wall = seconds_since(tm);
  pass.history = mres.history;
  info(strf("multitask training took %.0fs", pass.multi_wall));

  TrainConfig base = multi;
  base.multitask = false;
  info(strf("baseline training into %s", (dir / "baseline").c_str()));
  tm = Clock::now();
  TrainResult bres =
      run_recursive_training(train, netcfg, base, (dir / "baseline").string());
  info(strf("baseline training took %.0fs", seconds_since(tm)));

  const Network<float> net(netcfg);
  std::vector<EvalRow> multi_rows, base_rows;
  for (const DatasetItem& item : test.items) {
    const ClassMask mpred =
        final_inference(net, mres.params, item.image, multi.beta_final);
    const ClassMask bpred = predict_class_mask(net, bres.params, item.image, 0);
    multi_rows.push_back(evaluate_masks(item.id, mpred, *item.ground_truth));
    base_rows.push_back(evaluate_masks(item.id, bpred, *item.ground_truth));
  }
  write_eval_csv((dir / "eval_multitask.csv").string(), multi_rows);
  write_eval_csv((dir / "eval_baseline.csv").string(), base_rows);
  double msum = 0.0, bsum = 0.0;
  for (const EvalRow& r : multi_rows) msum += r.dice;
  for (const EvalRow& r : base_rows) bsum += r.dice;
  pass.multi_dice = msum / static_cast<double>(multi_rows.size());
  pass.base_dice = bsum / static_cast<double>(base_rows.size());
  pass.total_wall = seconds_since(t0);
  return pass;
}

void criteria_6_7_8(const fs::path& work) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SuitePass p1;
  try {
    p1 = run_suite(work / "pass1");
  } catch (const std::exception& e) {
    report(6, false, strf("pipeline run failed: %s", e.what()));
    report(7, false, "skipped: pipeline run failed");
    report(8, false, "skipped: pipeline run failed");
    return;
  }

  {
    const double allowed = 45.0 * 60.0 * budget_scale();
    double d0 = nan, dN = nan;
    bool ok = p1.history.size() == 11;
    if (ok) {
      d0 = p1.history.front().mean_task2_dice_vs_gt;
      dN = p1.history.back().mean_task2_dice_vs_gt;
      ok = d0 >= 0.70 && d0 <= 0.82 && dN >= 0.90 && dN - d0 >= 0.10 &&
           p1.multi_wall < allowed;
    }
    report(6, ok,
           strf("initial label dice %.4f in [0.70, 0.82], final %.4f >= "
                "0.90, gain %.4f >= 0.10, training %.0fs (allowed %.0fs)",
                d0, dN, dN - d0, p1.multi_wall, allowed));
  }

  {
    const double allowed = 60.0 * 60.0 * budget_scale();
    const double margin = p1.multi_dice - p1.base_dice;
    report(7, margin >= 0.05 && p1.total_wall < allowed,
           strf("held-out dice %.4f multitask vs %.4f single-task baseline, "
                "margin %.4f >= 0.05, total %.0fs (allowed %.0fs)",
                p1.multi_dice, p1.base_dice, margin, p1.total_wall, allowed));
  }

  SuitePass p2;
  try {
    p2 = run_suite(work / "pass2");
  } catch (const std::exception& e) {
    report(8, false, strf("rerun failed: %s", e.what()));
    return;
  }
  bool hist = true, curves = true, evals = true;
  for (const char* run : {"multitask", "baseline"}) {
    hist = hist && strip_last_column(slurp(p1.dir / run / "history.csv")) ==
                       strip_last_column(slurp(p2.dir / run / "history.csv"));
    curves = curves && !slurp(p1.dir / run / "curve.csv").empty() &&
             slurp(p1.dir / run / "curve.csv") ==
                 slurp(p2.dir / run / "curve.csv");
  }
  for (const char* name : {"eval_multitask.csv", "eval_baseline.csv"})
    evals = evals && !slurp(p1.dir / name).empty() &&
            slurp(p1.dir / name) == slurp(p2.dir / name);
  report(8, hist && curves && evals,
         strf("rerun with the same seeds: histories identical outside the "
              "wall-clock column (%s), growth curves identical (%s), "
              "evaluation tables identical (%s)",
              hist ? "yes" : "no", curves ? "yes" : "no",
              evals ? "yes" : "no"));
}

void run_guarded(int n, void (*fn)()) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(n, false, strf("unexpected exception: %s", e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments restrict the run to the named criteria (1..9).
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long n = std::strtol(argv[i], &end, 10);
    if (end == argv[i] || *end != '\0' || n < 1 || n > 9) {
      std::fprintf(stderr, "usage: acceptance [criterion number 1..9]...\n");
      return 2;
    }
    only.insert(static_cast<int>(n));
  }
  const auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  const unsigned hc = std::max(1u, std::thread::hardware_concurrency());
  set_thread_count(static_cast<int>(hc));
  const fs::path work = fs::temp_directory_path() / "recseg_acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);
  info(strf("%u hardware threads; time allowances stated for four cores, "
            "scaled here by %.2f",
            hc, budget_scale()));
  info(strf("work directory %s", work.c_str()));

  if (wanted(1)) run_guarded(1, criterion1);
  if (wanted(2)) run_guarded(2, criterion2);
  if (wanted(3)) run_guarded(3, criterion3);
  if (wanted(4)) run_guarded(4, criterion4);
  if (wanted(5)) run_guarded(5, criterion5);
  if (wanted(6) || wanted(7) || wanted(8)) criteria_6_7_8(work);
  if (wanted(9)) run_guarded(9, criterion9);

  if (g_failed == 0)
    std::printf("acceptance: all criteria passed\n");
  else
    std::printf("acceptance: %d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
