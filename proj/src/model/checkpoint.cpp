#include "recseg/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "recseg/core/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace recseg {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'E', 'G', 'N', 'E', 'T', '1'};

template <typename P>
void write_pod(std::ofstream& out, const P& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(P));
}

template <typename P>
P read_pod(std::ifstream& in) {
  P v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(P));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > 4096) throw DataError("checkpoint name too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("truncated checkpoint");
  return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const NetworkConfig& cfg = params.config;
  write_pod<std::int32_t>(out, cfg.levels);
  write_pod<std::int32_t>(out, cfg.base_channels);
  write_pod<std::int32_t>(out, cfg.task_count);
  write_pod<std::int32_t>(out, cfg.multitask_blocks);
  write_pod<std::int32_t>(out, cfg.in_channels);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(cfg.normalization));
  write_pod<double>(out, cfg.leaky_slope);
  write_pod<double>(out, cfg.bn_momentum);
  write_pod<double>(out, cfg.bn_eps);
  for (int c : cfg.task_classes) write_pod<std::int32_t>(out, c);
  write_pod<std::int64_t>(out, params.adam_step_count);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    write_string(out, t.name);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::int32_t>(out, d);
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(t.value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path);

  NetworkConfig cfg;
  cfg.levels = read_pod<std::int32_t>(in);
  cfg.base_channels = read_pod<std::int32_t>(in);
  cfg.task_count = read_pod<std::int32_t>(in);
  cfg.multitask_blocks = read_pod<std::int32_t>(in);
  cfg.in_channels = read_pod<std::int32_t>(in);
  const auto norm = read_pod<std::int32_t>(in);
  if (norm != 0 && norm != 1) throw DataError("bad normalization mode");
  cfg.normalization = static_cast<Normalization>(norm);
  cfg.leaky_slope = read_pod<double>(in);
  cfg.bn_momentum = read_pod<double>(in);
  cfg.bn_eps = read_pod<double>(in);
  if (cfg.task_count < 0 || cfg.task_count > 64)
    throw DataError("bad task count in checkpoint");
  cfg.task_classes.resize(cfg.task_count);
  for (int& c : cfg.task_classes) c = read_pod<std::int32_t>(in);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid checkpoint configuration: ") +
                    e.what());
  }

  Network<T> net(cfg);
  ModelParams<T> params = net.empty_params();
  params.adam_step_count = read_pod<std::int64_t>(in);
  const auto count = read_pod<std::uint32_t>(in);
  if (count != params.tensors.size())
    throw DataError("checkpoint tensor count mismatch");
  std::vector<bool> seen(params.tensors.size(), false);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = read_string(in);
    const auto ndim = read_pod<std::uint32_t>(in);
    if (ndim > 8) throw DataError("bad tensor rank in checkpoint");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = read_pod<std::int32_t>(in);
    ParamTensor<T>& t = params.at(name);
    if (t.shape != shape)
      throw DataError("tensor shape mismatch for " + name);
    const size_t idx = static_cast<size_t>(&t - params.tensors.data());
    if (seen[idx]) throw DataError("duplicate tensor " + name);
    seen[idx] = true;
    std::vector<float> buf(static_cast<size_t>(t.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint");
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.value[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
  }
  return params;
}

template void save_checkpoint<float>(const std::string&,
                                     const ModelParams<float>&);
template void save_checkpoint<double>(const std::string&,
                                      const ModelParams<double>&);
template ModelParams<float> load_checkpoint<float>(const std::string&);
template ModelParams<double> load_checkpoint<double>(const std::string&);

}  // namespace recseg
