#include "recseg/data/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "recseg/core/error.hpp"
#include "recseg/core/pnm.hpp"

namespace fs = std::filesystem;

namespace recseg {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return fnv1a64(bytes.data(), bytes.size());
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw DataError("bad checksum field: " + s);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad checksum field: " + s);
  return v;
}

std::string image_path(const std::string& dir, const std::string& id) {
  return dir + "/images/" + id + ".pgm";
}
std::string gt_path(const std::string& dir, const std::string& id) {
  return dir + "/gt/" + id + ".pgm";
}
std::string label_path(const std::string& dir, int task,
                       const std::string& id) {
  return dir + "/labels/task" + std::to_string(task + 1) + "/" + id + ".pgm";
}

void check_file(const std::string& path, std::uint64_t expected) {
  const std::uint64_t got = file_checksum(path);
  if (got != expected)
    throw DataError("checksum mismatch for " + path);
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
  const int tasks = static_cast<int>(dataset.meta.task_classes.size());
  fs::create_directories(dir + "/images");
  fs::create_directories(dir + "/gt");
  for (int t = 0; t < tasks; ++t)
    fs::create_directories(dir + "/labels/task" + std::to_string(t + 1));

  std::ostringstream manifest;
  manifest << "recseg-dataset 1\n";
  manifest << "name=" << dataset.meta.name << "\n";
  manifest << "split=" << dataset.meta.split << "\n";
  manifest << "seed=" << dataset.meta.seed << "\n";
  manifest << "tasks=" << tasks << "\n";
  manifest << "task_classes=";
  for (int t = 0; t < tasks; ++t)
    manifest << (t ? "," : "") << dataset.meta.task_classes[t];
  manifest << "\n";
  manifest << "palette=" << dataset.meta.palette << "\n";
  manifest << "items=" << dataset.items.size() << "\n";

  for (const DatasetItem& item : dataset.items) {
    const std::string ipath = image_path(dir, item.id);
    write_image_pnm(ipath, item.image);
    manifest << "item id=" << item.id << " image=" << hex64(file_checksum(ipath));
    if (item.ground_truth) {
      const std::string gpath = gt_path(dir, item.id);
      write_mask_pgm(gpath, *item.ground_truth);
      manifest << " gt=" << hex64(file_checksum(gpath));
    }
    if (static_cast<int>(item.labels.tasks.size()) > tasks)
      throw DataError("item " + item.id + " has more tasks than the dataset");
    for (int t = 0; t < tasks; ++t) {
      if (!item.labels.has(t)) continue;
      const std::string lpath = label_path(dir, t, item.id);
      write_mask_pgm(lpath, *item.labels.tasks[t]);
      manifest << " task" << t + 1 << "=" << hex64(file_checksum(lpath));
    }
    manifest << "\n";
  }

  const std::string mpath = dir + "/manifest.txt";
  std::ofstream out(mpath, std::ios::binary);
  if (!out) throw DataError("cannot write " + mpath);
  out << manifest.str();
  if (!out) throw DataError("failed writing " + mpath);
}

namespace {

std::string expect_key(const std::string& line, const std::string& key) {
  if (line.size() < key.size() + 1 || line.compare(0, key.size(), key) != 0 ||
      line[key.size()] != '=')
    throw DataError("manifest: expected " + key + "=...");
  return line.substr(key.size() + 1);
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const std::string mpath = dir + "/manifest.txt";
  std::ifstream in(mpath);
  if (!in) throw DataError("cannot open " + mpath);
  std::string line;
  if (!std::getline(in, line) || line != "recseg-dataset 1")
    throw DataError("not a dataset manifest: " + mpath);

  Dataset ds;
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  ds.meta.name = expect_key(line, "name");
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  ds.meta.split = expect_key(line, "split");
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  ds.meta.seed = std::stoull(expect_key(line, "seed"));
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  const int tasks = std::stoi(expect_key(line, "tasks"));
  if (tasks < 1 || tasks > 16) throw DataError("manifest: bad task count");
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  {
    std::istringstream cs(expect_key(line, "task_classes"));
    std::string tok;
    while (std::getline(cs, tok, ','))
      ds.meta.task_classes.push_back(std::stoi(tok));
    if (static_cast<int>(ds.meta.task_classes.size()) != tasks)
      throw DataError("manifest: task_classes does not match tasks");
  }
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  ds.meta.palette = expect_key(line, "palette");
  if (!std::getline(in, line)) throw DataError("truncated manifest");
  const long item_count = std::stol(expect_key(line, "items"));
  if (item_count < 0) throw DataError("manifest: bad item count");

  for (long i = 0; i < item_count; ++i) {
    if (!std::getline(in, line)) throw DataError("truncated manifest");
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok != "item") throw DataError("manifest: expected item line");
    DatasetItem item;
    item.labels.tasks.resize(tasks);
    bool have_image = false;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw DataError("manifest: bad item field " + tok);
      const std::string key = tok.substr(0, eq);
      const std::string value = tok.substr(eq + 1);
      if (key == "id") {
        item.id = value;
      } else if (key == "image") {
        if (item.id.empty()) throw DataError("manifest: image before id");
        const std::string path = image_path(dir, item.id);
        check_file(path, parse_hex64(value));
        item.image = read_image_pnm(path);
        have_image = true;
      } else if (key == "gt") {
        const std::string path = gt_path(dir, item.id);
        check_file(path, parse_hex64(value));
        item.ground_truth =
            read_mask_pgm(path, ds.meta.task_classes[0]);
      } else if (key.size() > 4 && key.compare(0, 4, "task") == 0) {
        int t = 0;
        const auto res =
            std::from_chars(key.data() + 4, key.data() + key.size(), t);
        if (res.ec != std::errc() || res.ptr != key.data() + key.size() ||
            t < 1 || t > tasks)
          throw DataError("manifest: unknown task field " + key);
        const std::string path = label_path(dir, t - 1, item.id);
        check_file(path, parse_hex64(value));
        item.labels.tasks[t - 1] =
            read_mask_pgm(path, ds.meta.task_classes[t - 1]);
      } else {
        throw DataError("manifest: unknown item field " + key);
      }
    }
    if (item.id.empty() || !have_image)
      throw DataError("manifest: item missing id or image");
    const auto check_dims = [&](const ClassMask& m) {
      if (m.height != item.image.height || m.width != item.image.width)
        throw DataError("mask size mismatch for item " + item.id);
    };
    if (item.ground_truth) check_dims(*item.ground_truth);
    for (const auto& task : item.labels.tasks)
      if (task) check_dims(*task);
    ds.items.push_back(std::move(item));
  }

  // Reject task directories beyond the declared task count.
  const fs::path labels_dir = fs::path(dir) / "labels";
  if (fs::exists(labels_dir))
    for (const auto& entry : fs::directory_iterator(labels_dir)) {
      const std::string name = entry.path().filename().string();
      int t = 0;
      const auto res =
          name.size() > 4 && name.compare(0, 4, "task") == 0
              ? std::from_chars(name.data() + 4, name.data() + name.size(), t)
              : std::from_chars_result{nullptr, std::errc::invalid_argument};
      if (res.ec != std::errc() || t < 1 || t > tasks)
        throw DataError("unexpected entry in labels/: " + name);
    }
  return ds;
}

}  // namespace recseg
