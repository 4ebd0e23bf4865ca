#include "recseg/model/network.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

#include "recseg/core/error.hpp"

namespace recseg {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) { g_threads.store(n < 1 ? 1 : n); }
int thread_count() { return g_threads.load(); }

namespace detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct BnCache {
  Vec<T> invstd;
  Mat<T> xhat;
};

template <typename T>
struct ConvNormCache {
  FeatureMap<T> in;      // conv input, kept for weight gradients
  BnCache<T> bn;         // batch mode only
  FeatureMap<T> preact;  // norm output, pre-activation
};

template <typename T>
struct DecCache {
  int level = 0;
  ConvNormCache<T> unit;
  FeatureMap<T> act;
};

template <typename T>
struct MtCache {
  int level = 0;
  ConvNormCache<T> xunit, yunit;  // shared conv weights, separate norms
  ConvNormCache<T> r1;            // r1.in is the seg path pre-residual value
  FeatureMap<T> r1act;
  ConvNormCache<T> r2;
  FeatureMap<T> sum_pre;  // pre-residual + residual, pre-activation
  FeatureMap<T> xact, yact;
};

template <typename T>
struct BranchCache {
  ConvNormCache<T> unit;
  FeatureMap<T> act;
};

}  // namespace detail

template <typename T>
struct Workspace {
  bool training = false;
  std::vector<FeatureMap<T>> enc_act;
  std::vector<detail::ConvNormCache<T>> enc_unit;
  std::vector<Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>>
      pool_src;
  std::vector<detail::DecCache<T>> dec;
  std::vector<detail::MtCache<T>> mtb;
  std::vector<detail::BranchCache<T>> branch;

  void clear() {
    enc_act.clear();
    enc_unit.clear();
    pool_src.clear();
    dec.clear();
    mtb.clear();
    branch.clear();
  }
};

void NetworkConfig::validate() const {
  if (levels < 2) throw ConfigError("network levels must be at least 2");
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (task_count < 2) throw ConfigError("task_count must be at least 2");
  if (static_cast<int>(task_classes.size()) != task_count)
    throw ConfigError("task_classes size must equal task_count");
  for (int c : task_classes)
    if (c < 2) throw ConfigError("every task needs at least 2 classes");
  if (multitask_blocks < 1 || multitask_blocks > levels - 1)
    throw ConfigError("multitask_blocks must be in [1, levels-1]");
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky_slope must be in [0, 1)");
}

template <typename T>
ParamTensor<T>& ModelParams<T>::at(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return t;
  throw DataError("unknown parameter tensor: " + name);
}

template <typename T>
const ParamTensor<T>& ModelParams<T>::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw DataError("unknown parameter tensor: " + name);
}

template <typename T>
std::int64_t ModelParams<T>::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors)
    if (t.trainable) n += t.size();
  return n;
}

template <typename T>
void ModelParams<T>::zero_grads() {
  for (auto& t : tensors) t.grad.setZero();
}

namespace {

using detail::BnCache;
using detail::BranchCache;
using detail::ConvNormCache;
using detail::DecCache;
using detail::Mat;
using detail::MtCache;
using detail::Vec;

template <typename T>
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Fixed block width: the partitioning is independent of the thread count,
// so results are bit-identical no matter how many threads run the blocks.
constexpr Eigen::Index kColBlock = 512;

template <typename F>
void parallel_blocks(Eigen::Index total, F&& body) {
  const Eigen::Index blocks = (total + kColBlock - 1) / kColBlock;
  const int threads = thread_count();
  if (threads <= 1 || blocks <= 1) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Eigen::Index start = b * kColBlock;
      body(start, std::min(kColBlock, total - start));
    }
    return;
  }
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index start = b * kColBlock;
    body(start, std::min(kColBlock, total - start));
  }
}

// dst = a * b, column partitioned.
template <typename T, typename A, typename B>
void gemm_set(Mat<T>& dst, const A& a, const B& b) {
  dst.resize(a.rows(), b.cols());
  parallel_blocks(b.cols(), [&](Eigen::Index s, Eigen::Index len) {
    dst.middleCols(s, len).noalias() = a * b.middleCols(s, len);
  });
}

template <typename T>
void add_tensor(std::vector<ParamTensor<T>>& ts, std::string name,
                std::vector<int> shape, bool trainable) {
  ParamTensor<T> t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.trainable = trainable;
  Eigen::Index n = 1;
  for (int d : t.shape) n *= d;
  t.value.setZero(n);
  t.grad.setZero(n);
  t.adam_m.setZero(n);
  t.adam_v.setZero(n);
  ts.push_back(std::move(t));
}

template <typename T>
void add_conv(std::vector<ParamTensor<T>>& ts, const std::string& base,
              int cin, int cout, int k) {
  if (k == 1)
    add_tensor(ts, base + "/w", {cout, cin}, true);
  else
    add_tensor(ts, base + "/w", {cout, k, k, cin}, true);
  add_tensor(ts, base + "/b", {cout}, true);
}

template <typename T>
void add_norm(std::vector<ParamTensor<T>>& ts, const std::string& base, int c,
              Normalization mode) {
  if (mode != Normalization::Batch) return;
  add_tensor(ts, base + "/gamma", {c}, true);
  add_tensor(ts, base + "/beta", {c}, true);
  add_tensor(ts, base + "/rmean", {c}, false);
  add_tensor(ts, base + "/rvar", {c}, false);
}

std::string enc_name(int l) { return "enc" + std::to_string(l); }
std::string dec_name(int l) { return "dec" + std::to_string(l); }
std::string mtb_name(int l) { return "mtb" + std::to_string(l); }
std::string task_name(int t) { return "task" + std::to_string(t); }

// Registration order is frozen: initialization draws follow it, and only
// conv weights consume draws, so the norm mode never shifts the stream.
template <typename T>
std::vector<ParamTensor<T>> build_registry(const NetworkConfig& cfg) {
  std::vector<ParamTensor<T>> ts;
  const int L = cfg.levels, M = cfg.multitask_blocks;
  int cin = cfg.in_channels;
  for (int l = 0; l < L; ++l) {
    const int cl = cfg.channels_at(l);
    add_conv(ts, enc_name(l), cin, cl, 3);
    add_norm(ts, enc_name(l), cl, cfg.normalization);
    cin = cl;
  }
  for (int l = L - 2; l >= M; --l) {
    const int cl = cfg.channels_at(l);
    add_conv(ts, dec_name(l), 3 * cl, cl, 3);
    add_norm(ts, dec_name(l), cl, cfg.normalization);
  }
  for (int l = M - 1; l >= 0; --l) {
    const int cl = cfg.channels_at(l);
    const std::string b = mtb_name(l);
    add_conv(ts, b + "/shared", 3 * cl, cl, 3);
    add_norm(ts, b + "/xnorm", cl, cfg.normalization);
    add_norm(ts, b + "/ynorm", cl, cfg.normalization);
    add_conv(ts, b + "/res1", cl, cl, 3);
    add_norm(ts, b + "/rnorm1", cl, cfg.normalization);
    add_conv(ts, b + "/res2", cl, cl, 3);
    add_norm(ts, b + "/rnorm2", cl, cfg.normalization);
  }
  const int c0 = cfg.channels_at(0);
  for (int t = 0; t < cfg.task_count; ++t) {
    const std::string b = task_name(t);
    if (t >= 2) {
      add_conv(ts, b + "/branch", c0, c0, 3);
      add_norm(ts, b + "/bnorm", c0, cfg.normalization);
    }
    add_conv(ts, b + "/head", c0, cfg.task_classes[t], 1);
  }
  return ts;
}

// ---- conv 3x3, zero padded, via im2col ----
// Patch matrix row k*Cin + c for kernel position k = ky*3+kx matches the
// [Cout,3,3,Cin] weight layout, so each position fills with one memcpy.

template <typename T>
void im2col3(const FeatureMap<T>& in, Mat<T>& col) {
  const int cch = in.c, h = in.h, w = in.w;
  col.resize(static_cast<Eigen::Index>(9) * cch, in.cols());
  const T* src = in.m.data();
  T* dst = col.data();
  const Eigen::Index crows = col.rows();
  parallel_blocks(in.cols(), [&](Eigen::Index s, Eigen::Index len) {
    for (Eigen::Index p = s; p < s + len; ++p) {
      const Eigen::Index sample = p / (static_cast<Eigen::Index>(h) * w);
      const Eigen::Index rem = p - sample * h * w;
      const int y = static_cast<int>(rem / w);
      const int x = static_cast<int>(rem % w);
      T* out = dst + p * crows;
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int xx = x + kx - 1;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
            std::memset(out, 0, sizeof(T) * cch);
          } else {
            const Eigen::Index q = (sample * h + yy) * w + xx;
            std::memcpy(out, src + q * cch, sizeof(T) * cch);
          }
          out += cch;
        }
      }
    }
  });
}

// Transpose of im2col: scatter-add patch gradients back onto the grid.
// Parallel over channels, which write disjoint rows.
template <typename T>
void col2im3(const Mat<T>& dcol, FeatureMap<T>& din) {
  const int cch = din.c, h = din.h, w = din.w;
  const int threads = thread_count();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (int c = 0; c < cch; ++c) {
    for (Eigen::Index p = 0; p < din.cols(); ++p) {
      const Eigen::Index sample = p / (static_cast<Eigen::Index>(h) * w);
      const Eigen::Index rem = p - sample * h * w;
      const int y = static_cast<int>(rem / w);
      const int x = static_cast<int>(rem % w);
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int xx = x + kx - 1;
          if (xx < 0 || xx >= w) continue;
          const Eigen::Index q = (sample * h + yy) * w + xx;
          din.m(c, q) += dcol((ky * 3 + kx) * cch + c, p);
        }
      }
    }
  }
}

template <typename T>
FeatureMap<T> conv3x3_fwd(const ModelParams<T>& params, const std::string& base,
                          const FeatureMap<T>& in) {
  const auto& wt = params.at(base + "/w");
  const auto& bt = params.at(base + "/b");
  const int cout = wt.shape[0];
  ConstRowMajorMap<T> w(wt.value.data(), cout,
                        static_cast<Eigen::Index>(9) * in.c);
  Mat<T> col;
  im2col3(in, col);
  FeatureMap<T> out;
  out.n = in.n;
  out.c = cout;
  out.h = in.h;
  out.w = in.w;
  gemm_set(out.m, w, col);
  out.m.colwise() += bt.value;
  return out;
}

template <typename T>
FeatureMap<T> conv3x3_bwd(ModelParams<T>& params, const std::string& base,
                          const FeatureMap<T>& in, const FeatureMap<T>& dout,
                          bool want_din) {
  auto& wt = params.at(base + "/w");
  auto& bt = params.at(base + "/b");
  const int cout = wt.shape[0];
  const Eigen::Index wcols = static_cast<Eigen::Index>(9) * in.c;
  ConstRowMajorMap<T> w(wt.value.data(), cout, wcols);
  RowMajorMap<T> dw(wt.grad.data(), cout, wcols);

  Mat<T> col;
  im2col3(in, col);
  parallel_blocks(wcols, [&](Eigen::Index s, Eigen::Index len) {
    dw.middleCols(s, len).noalias() +=
        dout.m * col.middleRows(s, len).transpose();
  });
  bt.grad += dout.m.rowwise().sum();

  FeatureMap<T> din;
  if (want_din) {
    Mat<T> dcol;
    gemm_set(dcol, w.transpose(), dout.m);
    din = FeatureMap<T>::zeros(in.n, in.c, in.h, in.w);
    col2im3(dcol, din);
  }
  return din;
}

template <typename T>
FeatureMap<T> conv1x1_fwd(const ModelParams<T>& params, const std::string& base,
                          const FeatureMap<T>& in) {
  const auto& wt = params.at(base + "/w");
  const auto& bt = params.at(base + "/b");
  const int cout = wt.shape[0];
  ConstRowMajorMap<T> w(wt.value.data(), cout, in.c);
  FeatureMap<T> out;
  out.n = in.n;
  out.c = cout;
  out.h = in.h;
  out.w = in.w;
  gemm_set(out.m, w, in.m);
  out.m.colwise() += bt.value;
  return out;
}

template <typename T>
FeatureMap<T> conv1x1_bwd(ModelParams<T>& params, const std::string& base,
                          const FeatureMap<T>& in, const FeatureMap<T>& dout) {
  auto& wt = params.at(base + "/w");
  auto& bt = params.at(base + "/b");
  const int cout = wt.shape[0];
  ConstRowMajorMap<T> w(wt.value.data(), cout, in.c);
  RowMajorMap<T> dw(wt.grad.data(), cout, in.c);
  parallel_blocks(in.c, [&](Eigen::Index s, Eigen::Index len) {
    dw.middleCols(s, len).noalias() +=
        dout.m * in.m.middleRows(s, len).transpose();
  });
  bt.grad += dout.m.rowwise().sum();
  FeatureMap<T> din;
  din.n = in.n;
  din.c = in.c;
  din.h = in.h;
  din.w = in.w;
  gemm_set(din.m, w.transpose(), dout.m);
  return din;
}

// ---- batch norm (biased batch variance, running stats for inference) ----

template <typename T>
FeatureMap<T> norm_fwd(ModelParams<T>& params, const std::string& base,
                       const FeatureMap<T>& in, bool training,
                       const NetworkConfig& cfg, BnCache<T>* cache) {
  if (cfg.normalization == Normalization::None) return in;
  auto& gamma = params.at(base + "/gamma");
  auto& beta = params.at(base + "/beta");
  auto& rmean = params.at(base + "/rmean");
  auto& rvar = params.at(base + "/rvar");
  const T eps = static_cast<T>(cfg.bn_eps);

  FeatureMap<T> out;
  out.n = in.n;
  out.c = in.c;
  out.h = in.h;
  out.w = in.w;
  if (training) {
    const Vec<T> mean = in.m.rowwise().mean();
    Mat<T> centered = in.m.colwise() - mean;
    const Vec<T> var = centered.array().square().rowwise().mean().matrix();
    Vec<T> invstd = (var.array() + eps).rsqrt().matrix();
    const T mom = static_cast<T>(cfg.bn_momentum);
    rmean.value = (T(1) - mom) * rmean.value + mom * mean;
    rvar.value = (T(1) - mom) * rvar.value + mom * var;
    Mat<T> xhat = centered.array().colwise() * invstd.array();
    out.m = (xhat.array().colwise() * gamma.value.array()).matrix();
    out.m.colwise() += beta.value;
    if (cache) {
      cache->invstd = std::move(invstd);
      cache->xhat = std::move(xhat);
    }
  } else {
    const Vec<T> rinvstd = (rvar.value.array() + eps).rsqrt().matrix();
    const Vec<T> scale = (gamma.value.array() * rinvstd.array()).matrix();
    const Vec<T> shift =
        (beta.value.array() - scale.array() * rmean.value.array()).matrix();
    out.m = (in.m.array().colwise() * scale.array()).matrix();
    out.m.colwise() += shift;
  }
  return out;
}

template <typename T>
FeatureMap<T> norm_bwd(ModelParams<T>& params, const std::string& base,
                       const FeatureMap<T>& dout, const BnCache<T>& cache,
                       const NetworkConfig& cfg) {
  if (cfg.normalization == Normalization::None) return dout;
  auto& gamma = params.at(base + "/gamma");
  auto& beta = params.at(base + "/beta");
  const T inv_pn = T(1) / static_cast<T>(dout.m.cols());

  beta.grad += dout.m.rowwise().sum();
  gamma.grad += (dout.m.array() * cache.xhat.array()).rowwise().sum().matrix();

  Mat<T> dxhat = dout.m.array().colwise() * gamma.value.array();
  const Vec<T> s1 = dxhat.rowwise().sum() * inv_pn;
  const Vec<T> s2 =
      (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() * inv_pn;
  FeatureMap<T> din;
  din.n = dout.n;
  din.c = dout.c;
  din.h = dout.h;
  din.w = dout.w;
  din.m = (((dxhat.colwise() - s1).array() -
            cache.xhat.array().colwise() * s2.array())
               .colwise() *
           cache.invstd.array())
              .matrix();
  return din;
}

template <typename T>
FeatureMap<T> lrelu_fwd(const FeatureMap<T>& pre, T slope) {
  FeatureMap<T> out = pre;
  out.m = (pre.m.array() > T(0)).select(pre.m, slope * pre.m);
  return out;
}

template <typename T>
FeatureMap<T> lrelu_bwd(const FeatureMap<T>& dout, const FeatureMap<T>& pre,
                        T slope) {
  FeatureMap<T> din = dout;
  din.m = (pre.m.array() > T(0)).select(dout.m, slope * dout.m);
  return din;
}

// Conv + norm + activation with caches for the backward pass.
template <typename T>
FeatureMap<T> unit_fwd(ModelParams<T>& params, const std::string& conv_base,
                       const std::string& norm_base, FeatureMap<T> in,
                       bool training, const NetworkConfig& cfg,
                       ConvNormCache<T>& cache) {
  FeatureMap<T> conv = conv3x3_fwd(params, conv_base, in);
  cache.in = std::move(in);
  cache.preact = norm_fwd(params, norm_base, conv, training, cfg, &cache.bn);
  return lrelu_fwd(cache.preact, static_cast<T>(cfg.leaky_slope));
}

template <typename T>
FeatureMap<T> unit_bwd(ModelParams<T>& params, const std::string& conv_base,
                       const std::string& norm_base, const FeatureMap<T>& dact,
                       const ConvNormCache<T>& cache, const NetworkConfig& cfg,
                       bool want_din) {
  FeatureMap<T> dpre =
      lrelu_bwd(dact, cache.preact, static_cast<T>(cfg.leaky_slope));
  FeatureMap<T> dconv = norm_bwd(params, norm_base, dpre, cache.bn, cfg);
  return conv3x3_bwd(params, conv_base, cache.in, dconv, want_din);
}

// ---- max pool 2x2 stride 2; ties keep the first window position ----

template <typename T>
FeatureMap<T> maxpool_fwd(
    const FeatureMap<T>& in,
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& src) {
  const int h2 = in.h / 2, w2 = in.w / 2;
  FeatureMap<T> out = FeatureMap<T>::zeros(in.n, in.c, h2, w2);
  src.resize(in.c, out.cols());
  for (int n = 0; n < in.n; ++n)
    for (int yo = 0; yo < h2; ++yo)
      for (int xo = 0; xo < w2; ++xo) {
        const Eigen::Index po = out.col_index(n, yo, xo);
        const Eigen::Index base = in.col_index(n, 2 * yo, 2 * xo);
        const Eigen::Index cand[4] = {base, base + 1, base + in.w,
                                      base + in.w + 1};
        for (int c = 0; c < in.c; ++c) {
          Eigen::Index best = cand[0];
          T bv = in.m(c, best);
          for (int k = 1; k < 4; ++k) {
            const T v = in.m(c, cand[k]);
            if (v > bv) {
              bv = v;
              best = cand[k];
            }
          }
          out.m(c, po) = bv;
          src(c, po) = best;
        }
      }
  return out;
}

template <typename T>
FeatureMap<T> maxpool_bwd(
    const FeatureMap<T>& dout,
    const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& src,
    int n, int c, int h, int w) {
  FeatureMap<T> din = FeatureMap<T>::zeros(n, c, h, w);
  for (Eigen::Index po = 0; po < dout.cols(); ++po)
    for (int ch = 0; ch < c; ++ch) din.m(ch, src(ch, po)) += dout.m(ch, po);
  return din;
}

// ---- bilinear x2 upsample, half-pixel centers, edge clamped ----

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

LerpAxis lerp_axis(int dst, int srcn) {
  LerpAxis a;
  a.i0.resize(dst);
  a.i1.resize(dst);
  a.w1.resize(dst);
  for (int d = 0; d < dst; ++d) {
    const double s = (d + 0.5) / 2.0 - 0.5;
    const double f = std::floor(s);
    int i0 = static_cast<int>(f);
    double w = s - f;
    if (i0 < 0) {
      i0 = 0;
      w = 0.0;
    }
    int i1 = i0 + 1;
    if (i1 >= srcn) i1 = srcn - 1;
    if (i0 >= srcn) i0 = srcn - 1;
    if (i0 == i1) w = 0.0;
    a.i0[d] = i0;
    a.i1[d] = i1;
    a.w1[d] = w;
  }
  return a;
}

template <typename T>
FeatureMap<T> upsample2_fwd(const FeatureMap<T>& in) {
  const int h2 = in.h * 2, w2 = in.w * 2;
  FeatureMap<T> out = FeatureMap<T>::zeros(in.n, in.c, h2, w2);
  const LerpAxis ay = lerp_axis(h2, in.h), ax = lerp_axis(w2, in.w);
  const int threads = thread_count();
#pragma omp parallel for schedule(static) num_threads(threads) \
    if (threads > 1 && in.n > 1)
  for (int n = 0; n < in.n; ++n)
    for (int y = 0; y < h2; ++y) {
      const T wy = static_cast<T>(ay.w1[y]);
      for (int x = 0; x < w2; ++x) {
        const T wx = static_cast<T>(ax.w1[x]);
        out.m.col(out.col_index(n, y, x)) =
            (T(1) - wy) * (T(1) - wx) *
                in.m.col(in.col_index(n, ay.i0[y], ax.i0[x])) +
            (T(1) - wy) * wx * in.m.col(in.col_index(n, ay.i0[y], ax.i1[x])) +
            wy * (T(1) - wx) * in.m.col(in.col_index(n, ay.i1[y], ax.i0[x])) +
            wy * wx * in.m.col(in.col_index(n, ay.i1[y], ax.i1[x]));
      }
    }
  return out;
}

template <typename T>
FeatureMap<T> upsample2_bwd(const FeatureMap<T>& dout, int src_h, int src_w) {
  FeatureMap<T> din = FeatureMap<T>::zeros(dout.n, dout.c, src_h, src_w);
  const LerpAxis ay = lerp_axis(dout.h, src_h), ax = lerp_axis(dout.w, src_w);
  const int threads = thread_count();
#pragma omp parallel for schedule(static) num_threads(threads) \
    if (threads > 1 && dout.n > 1)
  for (int n = 0; n < dout.n; ++n)
    for (int y = 0; y < dout.h; ++y) {
      const T wy = static_cast<T>(ay.w1[y]);
      for (int x = 0; x < dout.w; ++x) {
        const T wx = static_cast<T>(ax.w1[x]);
        const auto g = dout.m.col(dout.col_index(n, y, x));
        din.m.col(din.col_index(n, ay.i0[y], ax.i0[x])) +=
            (T(1) - wy) * (T(1) - wx) * g;
        din.m.col(din.col_index(n, ay.i0[y], ax.i1[x])) += (T(1) - wy) * wx * g;
        din.m.col(din.col_index(n, ay.i1[y], ax.i0[x])) += wy * (T(1) - wx) * g;
        din.m.col(din.col_index(n, ay.i1[y], ax.i1[x])) += wy * wx * g;
      }
    }
  return din;
}

template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& top,
                              const FeatureMap<T>& bottom) {
  FeatureMap<T> out;
  out.n = top.n;
  out.c = top.c + bottom.c;
  out.h = top.h;
  out.w = top.w;
  out.m.resize(out.c, top.cols());
  out.m.topRows(top.c) = top.m;
  out.m.bottomRows(bottom.c) = bottom.m;
  return out;
}

template <typename T>
FeatureMap<T> softmax_cols(const FeatureMap<T>& logits) {
  FeatureMap<T> p = logits;
  parallel_blocks(logits.cols(), [&](Eigen::Index s, Eigen::Index len) {
    for (Eigen::Index j = s; j < s + len; ++j) {
      auto col = p.m.col(j);
      const T mx = col.maxCoeff();
      col = (col.array() - mx).exp().matrix();
      col /= col.sum();
    }
  });
  return p;
}

// Per-task softmax cross-entropy over labeled pixels. Returns the summed
// loss; when dz is given, fills it with d(loss)/d(logits). Probabilities
// below the clamp floor contribute a constant, hence zero gradient.
template <typename T>
double head_loss(const FeatureMap<T>& probs,
                 const std::vector<std::int32_t>& labels, double alpha,
                 FeatureMap<T>* dz) {
  const T floor_v = static_cast<T>(kLogClamp);
  const T a = static_cast<T>(alpha);
  double loss = 0.0;
  if (dz) {
    *dz = probs;
    dz->m.setZero();
  }
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const std::int32_t cls = labels[static_cast<size_t>(j)];
    if (cls < 0) continue;
    const T p = probs.m(cls, j);
    if (p >= floor_v) {
      loss -= alpha * std::log(static_cast<double>(p));
      if (dz) {
        dz->m.col(j) = a * probs.m.col(j);
        dz->m(cls, j) -= a;
      }
    } else {
      loss -= alpha * std::log(kLogClamp);
    }
  }
  return loss;
}

}  // namespace

template <typename T>
Network<T>::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
}

template <typename T>
ModelParams<T> Network<T>::empty_params() const {
  ModelParams<T> p;
  p.config = config_;
  p.tensors = build_registry<T>(config_);
  return p;
}

template <typename T>
ModelParams<T> Network<T>::init_params(Rng& rng) const {
  ModelParams<T> p = empty_params();
  for (auto& t : p.tensors) {
    if (t.name.ends_with("/w")) {
      Eigen::Index fan_in = 1;
      for (size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.value[i] = static_cast<T>(stddev * rng.normal());
    } else if (t.name.ends_with("/gamma") || t.name.ends_with("/rvar")) {
      t.value.setOnes();
    }
  }
  return p;
}

template <typename T>
TaskOutputs<T> Network<T>::forward(ModelParams<T>& params,
                                   const FeatureMap<T>& input, bool training,
                                   Workspace<T>* wsopt) const {
  const NetworkConfig& cfg = config_;
  if (input.c != cfg.in_channels)
    throw DataError("input channel count does not match the network");
  const int mult = cfg.size_multiple();
  if (input.n < 1 || input.h <= 0 || input.w <= 0 || input.h % mult != 0 ||
      input.w % mult != 0)
    throw DataError("input sides must be positive multiples of " +
                    std::to_string(mult));

  Workspace<T> local;
  Workspace<T>& ws = wsopt ? *wsopt : local;
  ws.clear();
  ws.training = training;
  const int L = cfg.levels, M = cfg.multitask_blocks;
  ws.enc_act.reserve(L);
  ws.enc_unit.resize(L);
  ws.pool_src.resize(L - 1);
  ws.dec.reserve(L - 1 - M);
  ws.mtb.reserve(M);

  FeatureMap<T> cur = input;
  for (int l = 0; l < L; ++l) {
    FeatureMap<T> act = unit_fwd(params, enc_name(l), enc_name(l),
                                 std::move(cur), training, cfg, ws.enc_unit[l]);
    ws.enc_act.push_back(std::move(act));
    if (l < L - 1) cur = maxpool_fwd(ws.enc_act[l], ws.pool_src[l]);
  }

  const FeatureMap<T>* prev = &ws.enc_act[L - 1];
  for (int l = L - 2; l >= M; --l) {
    DecCache<T> st;
    st.level = l;
    FeatureMap<T> cat = concat_channels(upsample2_fwd(*prev), ws.enc_act[l]);
    st.act = unit_fwd(params, dec_name(l), dec_name(l), std::move(cat),
                      training, cfg, st.unit);
    ws.dec.push_back(std::move(st));
    prev = &ws.dec.back().act;
  }

  const FeatureMap<T>* xprev = prev;
  const FeatureMap<T>* yprev = prev;
  for (int l = M - 1; l >= 0; --l) {
    MtCache<T> st;
    st.level = l;
    const std::string b = mtb_name(l);
    FeatureMap<T> xmid;
    {
      FeatureMap<T> cat = concat_channels(upsample2_fwd(*xprev), ws.enc_act[l]);
      xmid = unit_fwd(params, b + "/shared", b + "/xnorm", std::move(cat),
                      training, cfg, st.xunit);
    }
    {
      FeatureMap<T> cat = concat_channels(upsample2_fwd(*yprev), ws.enc_act[l]);
      st.yact = unit_fwd(params, b + "/shared", b + "/ynorm", std::move(cat),
                         training, cfg, st.yunit);
    }
    // Residual unit on the segmentation path only; r1.in keeps the
    // pre-residual value for both the unit and the skip connection.
    st.r1act = unit_fwd(params, b + "/res1", b + "/rnorm1", std::move(xmid),
                        training, cfg, st.r1);
    FeatureMap<T> conv2 = conv3x3_fwd(params, b + "/res2", st.r1act);
    st.r2.in = st.r1act;
    FeatureMap<T> res =
        norm_fwd(params, b + "/rnorm2", conv2, training, cfg, &st.r2.bn);
    st.sum_pre = st.r1.in;
    st.sum_pre.m += res.m;
    st.xact = lrelu_fwd(st.sum_pre, static_cast<T>(cfg.leaky_slope));
    ws.mtb.push_back(std::move(st));
    xprev = &ws.mtb.back().xact;
    yprev = &ws.mtb.back().yact;
  }

  const FeatureMap<T>& xfinal = ws.mtb.back().xact;
  const FeatureMap<T>& yfinal = ws.mtb.back().yact;
  TaskOutputs<T> out;
  out.probs.reserve(cfg.task_count);
  ws.branch.resize(cfg.task_count - 2);
  for (int t = 0; t < cfg.task_count; ++t) {
    const FeatureMap<T>* src = nullptr;
    if (t == 0) {
      src = &xfinal;
    } else if (t == 1) {
      src = &yfinal;
    } else {
      BranchCache<T>& bc = ws.branch[t - 2];
      bc.act = unit_fwd(params, task_name(t) + "/branch",
                        task_name(t) + "/bnorm", xfinal, training, cfg,
                        bc.unit);
      src = &bc.act;
    }
    out.probs.push_back(
        softmax_cols(conv1x1_fwd(params, task_name(t) + "/head", *src)));
  }
  return out;
}

template <typename T>
double Network<T>::backward(ModelParams<T>& params, Workspace<T>& ws,
                            const TaskOutputs<T>& outputs,
                            const BatchLabels& labels,
                            const std::vector<double>& task_weights) const {
  const NetworkConfig& cfg = config_;
  if (!ws.training) throw DataError("backward needs a training-mode forward");
  if (static_cast<int>(labels.labels.size()) != cfg.task_count ||
      static_cast<int>(task_weights.size()) != cfg.task_count ||
      static_cast<int>(outputs.probs.size()) != cfg.task_count)
    throw DataError("labels and weights must cover every task");
  const int L = cfg.levels;
  const FeatureMap<T>& xfinal = ws.mtb.back().xact;
  const FeatureMap<T>& yfinal = ws.mtb.back().yact;
  for (int t = 0; t < cfg.task_count; ++t)
    if (labels.labels[t].size() != static_cast<size_t>(xfinal.cols()))
      throw DataError("label grid size mismatch");

  double loss = 0.0;
  FeatureMap<T> dx =
      FeatureMap<T>::zeros(xfinal.n, xfinal.c, xfinal.h, xfinal.w);
  FeatureMap<T> dy =
      FeatureMap<T>::zeros(yfinal.n, yfinal.c, yfinal.h, yfinal.w);
  for (int t = 0; t < cfg.task_count; ++t) {
    FeatureMap<T> dz;
    loss += head_loss(outputs.probs[t], labels.labels[t], task_weights[t], &dz);
    const FeatureMap<T>& src =
        t == 0 ? xfinal : (t == 1 ? yfinal : ws.branch[t - 2].act);
    FeatureMap<T> dsrc = conv1x1_bwd(params, task_name(t) + "/head", src, dz);
    if (t == 0) {
      dx.m += dsrc.m;
    } else if (t == 1) {
      dy.m += dsrc.m;
    } else {
      FeatureMap<T> d =
          unit_bwd(params, task_name(t) + "/branch", task_name(t) + "/bnorm",
                   dsrc, ws.branch[t - 2].unit, cfg, true);
      dx.m += d.m;
    }
  }

  std::vector<FeatureMap<T>> dskip(L);
  for (int l = 0; l < L - 1; ++l)
    dskip[l] = FeatureMap<T>::zeros(ws.enc_act[l].n, ws.enc_act[l].c,
                                    ws.enc_act[l].h, ws.enc_act[l].w);

  FeatureMap<T> dprev;  // gradient entering the deepest multi-task block
  for (int i = static_cast<int>(ws.mtb.size()) - 1; i >= 0; --i) {
    MtCache<T>& st = ws.mtb[i];
    const std::string b = mtb_name(st.level);
    const T slope = static_cast<T>(cfg.leaky_slope);

    FeatureMap<T> dsum = lrelu_bwd(dx, st.sum_pre, slope);
    FeatureMap<T> dconv2 = norm_bwd(params, b + "/rnorm2", dsum, st.r2.bn, cfg);
    FeatureMap<T> dr1act =
        conv3x3_bwd(params, b + "/res2", st.r2.in, dconv2, true);
    FeatureMap<T> dxmid =
        unit_bwd(params, b + "/res1", b + "/rnorm1", dr1act, st.r1, cfg, true);
    dxmid.m += dsum.m;

    FeatureMap<T> dxpre = lrelu_bwd(dxmid, st.xunit.preact, slope);
    FeatureMap<T> dconvx =
        norm_bwd(params, b + "/xnorm", dxpre, st.xunit.bn, cfg);
    FeatureMap<T> dypre = lrelu_bwd(dy, st.yunit.preact, slope);
    FeatureMap<T> dconvy =
        norm_bwd(params, b + "/ynorm", dypre, st.yunit.bn, cfg);

    FeatureMap<T> dxcat =
        conv3x3_bwd(params, b + "/shared", st.xunit.in, dconvx, true);
    FeatureMap<T> dycat =
        conv3x3_bwd(params, b + "/shared", st.yunit.in, dconvy, true);

    const int cup = cfg.channels_at(st.level + 1);
    const int cskip = cfg.channels_at(st.level);
    dskip[st.level].m += dxcat.m.bottomRows(cskip);
    dskip[st.level].m += dycat.m.bottomRows(cskip);

    FeatureMap<T> dup;
    dup.n = dxcat.n;
    dup.c = cup;
    dup.h = dxcat.h;
    dup.w = dxcat.w;
    dup.m = dxcat.m.topRows(cup);
    FeatureMap<T> dxprev = upsample2_bwd(dup, dxcat.h / 2, dxcat.w / 2);
    dup.m = dycat.m.topRows(cup);
    FeatureMap<T> dyprev = upsample2_bwd(dup, dycat.h / 2, dycat.w / 2);
    if (i > 0) {
      dx = std::move(dxprev);
      dy = std::move(dyprev);
    } else {
      dprev = std::move(dxprev);
      dprev.m += dyprev.m;
    }
  }

  for (int j = static_cast<int>(ws.dec.size()) - 1; j >= 0; --j) {
    DecCache<T>& st = ws.dec[j];
    FeatureMap<T> dcat = unit_bwd(params, dec_name(st.level),
                                  dec_name(st.level), dprev, st.unit, cfg, true);
    const int cup = cfg.channels_at(st.level + 1);
    const int cskip = cfg.channels_at(st.level);
    dskip[st.level].m += dcat.m.bottomRows(cskip);
    FeatureMap<T> dup;
    dup.n = dcat.n;
    dup.c = cup;
    dup.h = dcat.h;
    dup.w = dcat.w;
    dup.m = dcat.m.topRows(cup);
    dprev = upsample2_bwd(dup, dcat.h / 2, dcat.w / 2);
  }

  FeatureMap<T> dnext_convin;
  for (int l = L - 1; l >= 0; --l) {
    FeatureMap<T> dact;
    if (l == L - 1) {
      dact = std::move(dprev);
    } else {
      dact = std::move(dskip[l]);
      const FeatureMap<T>& below = ws.enc_act[l];
      FeatureMap<T> up = maxpool_bwd(dnext_convin, ws.pool_src[l], below.n,
                                     below.c, below.h, below.w);
      dact.m += up.m;
    }
    dnext_convin = unit_bwd(params, enc_name(l), enc_name(l), dact,
                            ws.enc_unit[l], cfg, l > 0);
  }
  return loss;
}

template <typename T>
double multitask_loss(const TaskOutputs<T>& outputs, const BatchLabels& labels,
                      const std::vector<double>& task_weights) {
  if (outputs.probs.size() != labels.labels.size() ||
      outputs.probs.size() != task_weights.size())
    throw DataError("outputs, labels and weights must cover every task");
  double loss = 0.0;
  for (size_t t = 0; t < outputs.probs.size(); ++t) {
    if (labels.labels[t].size() !=
        static_cast<size_t>(outputs.probs[t].cols()))
      throw DataError("label grid size mismatch");
    loss += head_loss<T>(outputs.probs[t], labels.labels[t], task_weights[t],
                         nullptr);
  }
  return loss;
}

template <typename T>
void adam_step(ModelParams<T>& params, double lr, double beta1, double beta2,
               double eps) {
  params.adam_step_count += 1;
  const double t = static_cast<double>(params.adam_step_count);
  const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(beta2, t)));
  for (auto& ten : params.tensors) {
    if (!ten.trainable) continue;
    if (!ten.grad.allFinite())
      throw NumericError("non-finite gradient in " + ten.name);
    ten.adam_m = b1 * ten.adam_m + (T(1) - b1) * ten.grad;
    ten.adam_v =
        (b2 * ten.adam_v.array() + (T(1) - b2) * ten.grad.array().square())
            .matrix();
    ten.value.array() -= static_cast<T>(lr) * (ten.adam_m.array() * c1) /
                         ((ten.adam_v.array() * c2).sqrt() +
                          static_cast<T>(eps));
  }
}

template <typename T>
ClassMask predict_mask(const TaskOutputs<T>& outputs, int task) {
  if (task < 0 || task >= static_cast<int>(outputs.probs.size()))
    throw DataError("task index out of range");
  const FeatureMap<T>& p = outputs.probs[task];
  if (p.n != 1) throw DataError("predict_mask expects a single-sample output");
  ClassMask mask = ClassMask::filled(p.h, p.w, p.c, 0);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    int best = 0;
    T bv = p.m(0, j);
    for (int c = 1; c < p.c; ++c)
      if (p.m(c, j) > bv) {
        bv = p.m(c, j);
        best = c;
      }
    mask.labels[static_cast<size_t>(j)] = static_cast<std::uint8_t>(best);
  }
  return mask;
}

BatchLabels labels_from_field(const LabelField& field, int height, int width,
                              const std::vector<int>& task_classes) {
  if (field.tasks.size() != task_classes.size())
    throw DataError("label field task count mismatch");
  BatchLabels out;
  out.labels.resize(field.tasks.size());
  const size_t n = static_cast<size_t>(height) * width;
  for (size_t t = 0; t < field.tasks.size(); ++t) {
    out.labels[t].assign(n, -1);
    if (!field.has(static_cast<int>(t))) continue;
    const ClassMask& m = *field.tasks[t];
    if (m.height != height || m.width != width)
      throw DataError("label mask size mismatch");
    if (m.classes != task_classes[t])
      throw DataError("label mask class count mismatch");
    for (size_t i = 0; i < n; ++i)
      out.labels[t][i] = static_cast<std::int32_t>(m.labels[i]);
  }
  return out;
}

template <typename T>
WorkspaceHandle<T>::WorkspaceHandle() : ws_(new Workspace<T>()) {}
template <typename T>
WorkspaceHandle<T>::~WorkspaceHandle() {
  delete ws_;
}
template <typename T>
WorkspaceHandle<T>::WorkspaceHandle(WorkspaceHandle&& o) noexcept : ws_(o.ws_) {
  o.ws_ = nullptr;
}
template <typename T>
WorkspaceHandle<T>& WorkspaceHandle<T>::operator=(
    WorkspaceHandle&& o) noexcept {
  std::swap(ws_, o.ws_);
  return *this;
}

template struct ParamTensor<float>;
template struct ParamTensor<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template class Network<float>;
template class Network<double>;
template struct WorkspaceHandle<float>;
template struct WorkspaceHandle<double>;
template double multitask_loss<float>(const TaskOutputs<float>&,
                                      const BatchLabels&,
                                      const std::vector<double>&);
template double multitask_loss<double>(const TaskOutputs<double>&,
                                       const BatchLabels&,
                                       const std::vector<double>&);
template void adam_step<float>(ModelParams<float>&, double, double, double,
                               double);
template void adam_step<double>(ModelParams<double>&, double, double, double,
                                double);
template ClassMask predict_mask<float>(const TaskOutputs<float>&, int);
template ClassMask predict_mask<double>(const TaskOutputs<double>&, int);

}  // namespace recseg
