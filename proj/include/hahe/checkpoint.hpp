#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/train.hpp"

namespace hahe {

inline constexpr char kCheckpointMagic[8] = {'H', 'A', 'H', 'E',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kEndianTag = 0x01020304;

namespace detail {

struct BinWriter {
  std::ofstream out;
  std::string path;
  explicit BinWriter(const std::string& p) : out(p, std::ios::binary), path(p) {
    if (!out) throw DataError("cannot write checkpoint '" + p + "'");
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) u64(t.dim(i));
    bytes(t.data().data(), t.numel() * sizeof(double));
  }
  void close() {
    out.flush();
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  }
};

struct BinReader {
  std::ifstream in;
  std::string path;
  explicit BinReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("cannot open checkpoint '" + p + "'");
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw DataError("truncated checkpoint '" + path + "'");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  // Guards length fields so corrupt files cannot trigger huge allocations.
  std::uint64_t count(std::uint64_t limit = (1ull << 32)) {
    std::uint64_t v = u64();
    if (v > limit)
      throw DataError("corrupt checkpoint '" + path + "': count out of range");
    return v;
  }
  std::string str() {
    std::uint64_t n = count(1ull << 20);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor tensor() {
    std::uint64_t rank = count(4);
    std::vector<std::size_t> shape;
    for (std::uint64_t i = 0; i < rank; ++i)
      shape.push_back(static_cast<std::size_t>(count()));
    Tensor t(shape);
    bytes(t.data().data(), t.numel() * sizeof(double));
    return t;
  }
};

}  // namespace detail

// Single binary container: versioned header with an endianness tag, the
// training config echo, names, labels, splits, shape-tagged parameter
// tensors in registry order, stored embeddings and attention weights, and
// the per-epoch log. Same-endian machines only.
inline void save_checkpoint(const TrainedModel& model, const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(kEndianTag);

  const TrainConfig& c = model.config;
  w.f64(c.learning_rate);
  w.u64(c.batch_size);
  w.u64(c.d);
  w.u64(c.k);
  w.u64(c.sample_size);
  w.u64(c.max_epochs);
  w.u64(c.patience);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(c.fusion));
  w.u32(static_cast<std::uint32_t>(c.task_mode));
  w.f64(c.train_frac);
  w.f64(c.val_frac);
  w.u64(c.feature_depth);
  w.u32(c.clip_gradients ? 1 : 0);
  w.f64(c.clip_norm);
  w.f64(c.threshold);

  w.u64(model.metapath_names.size());
  for (const auto& s : model.metapath_names) w.str(s);
  w.u64(model.target_ids.size());
  for (const auto& s : model.target_ids) w.str(s);
  w.u64(model.label_names.size());
  for (const auto& s : model.label_names) w.str(s);
  w.u64(model.labels.size());
  for (const auto& set : model.labels) {
    w.u64(set.size());
    for (int l : set) w.u64(static_cast<std::uint64_t>(l));
  }
  for (const auto* split :
       {&model.train_nodes, &model.val_nodes, &model.test_nodes}) {
    w.u64(split->size());
    for (std::size_t v : *split) w.u64(v);
  }

  auto reg = model.params.registry();
  w.u64(model.hp.feature_depth);
  w.u64(reg.size());
  for (auto& [name, t] : reg) {
    w.str(name);
    w.tensor(*t);
  }

  w.tensor(model.h);
  w.tensor(model.gamma);
  w.u64(model.h_per_path.size());
  for (const Tensor& t : model.h_per_path) w.tensor(t);

  w.u64(model.log.size());
  for (const auto& e : model.log) {
    w.u64(e.epoch);
    w.f64(e.train_loss);
    w.f64(e.val_micro_f1);
  }
  w.u64(model.best_epoch);
  w.f64(model.best_val_f1);
  w.close();
}

inline TrainedModel load_checkpoint(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("'" + path + "' is not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "' has unsupported version " +
                    std::to_string(version));
  const std::uint32_t endian = r.u32();
  if (endian != kEndianTag)
    throw DataError("checkpoint '" + path +
                    "' was written with a different byte order");

  TrainedModel m;
  TrainConfig& c = m.config;
  c.learning_rate = r.f64();
  c.batch_size = r.count();
  c.d = r.count();
  c.k = r.count();
  c.sample_size = r.count();
  c.max_epochs = r.count();
  c.patience = r.count();
  c.seed = r.u64();
  const std::uint32_t fusion = r.u32();
  const std::uint32_t task = r.u32();
  if (fusion > 2 || task > 1)
    throw DataError("corrupt checkpoint '" + path + "': bad mode field");
  c.fusion = static_cast<Fusion>(fusion);
  c.task_mode = static_cast<TaskMode>(task);
  c.train_frac = r.f64();
  c.val_frac = r.f64();
  c.feature_depth = r.count();
  c.clip_gradients = r.u32() != 0;
  c.clip_norm = r.f64();
  c.threshold = r.f64();
  m.hp = c.hyper();

  const std::uint64_t n_paths = r.count();
  for (std::uint64_t i = 0; i < n_paths; ++i) m.metapath_names.push_back(r.str());
  const std::uint64_t n_targets = r.count();
  for (std::uint64_t i = 0; i < n_targets; ++i) m.target_ids.push_back(r.str());
  const std::uint64_t n_labels = r.count();
  for (std::uint64_t i = 0; i < n_labels; ++i) m.label_names.push_back(r.str());
  const std::uint64_t n_label_rows = r.count();
  if (n_label_rows != n_targets)
    throw DataError("corrupt checkpoint '" + path + "': label rows mismatch");
  m.labels.resize(n_label_rows);
  for (auto& set : m.labels) {
    const std::uint64_t k = r.count();
    for (std::uint64_t j = 0; j < k; ++j)
      set.push_back(static_cast<int>(r.u64()));
  }
  for (auto* split : {&m.train_nodes, &m.val_nodes, &m.test_nodes}) {
    const std::uint64_t k = r.count();
    for (std::uint64_t j = 0; j < k; ++j)
      split->push_back(static_cast<std::size_t>(r.u64()));
  }

  const std::uint64_t depth = r.count();
  const std::uint64_t n_tensors = r.count();
  if (n_tensors != n_paths * (depth + 1) + 5)
    throw DataError("corrupt checkpoint '" + path + "': tensor count mismatch");
  m.params.w_f.resize(n_paths);
  auto named = [&](const std::string& expect) {
    std::string name = r.str();
    if (name != expect)
      throw DataError("corrupt checkpoint '" + path + "': expected tensor '" +
                      expect + "', found '" + name + "'");
    return r.tensor();
  };
  for (std::uint64_t p = 0; p < n_paths; ++p) {
    for (std::uint64_t l = 0; l < depth; ++l)
      m.params.w_f[p].push_back(
          named("w_f." + std::to_string(p) + "." + std::to_string(l)));
    m.params.w_c.push_back(named("w_c." + std::to_string(p)));
  }
  m.params.w_p = named("w_p");
  m.params.b_p = named("b_p");
  m.params.pref = named("pref");
  m.params.w_cls = named("w_cls");
  m.params.b_cls = named("b_cls");

  m.h = r.tensor();
  m.gamma = r.tensor();
  const std::uint64_t n_hp = r.count();
  if (n_hp != n_paths)
    throw DataError("corrupt checkpoint '" + path +
                    "': per-path embedding count mismatch");
  for (std::uint64_t i = 0; i < n_hp; ++i) m.h_per_path.push_back(r.tensor());

  const std::uint64_t n_log = r.count();
  for (std::uint64_t i = 0; i < n_log; ++i) {
    EpochLog e;
    e.epoch = static_cast<std::size_t>(r.u64());
    e.train_loss = r.f64();
    e.val_micro_f1 = r.f64();
    m.log.push_back(e);
  }
  m.best_epoch = static_cast<std::size_t>(r.u64());
  m.best_val_f1 = r.f64();

  if (m.h.rank() != 2 || m.h.rows() != n_targets || m.h.cols() != c.d ||
      m.gamma.rank() != 2 || m.gamma.rows() != n_targets ||
      m.gamma.cols() != n_paths)
    throw DataError("corrupt checkpoint '" + path + "': shape mismatch");
  return m;
}

}  // namespace hahe
