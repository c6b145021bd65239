#include "vertexgen/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vgen {

using nlohmann::ordered_json;

CheckpointTensor* Checkpoint::find(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::add(const std::string& name, const std::vector<int>& shape, const float* data) {
  if (find(name)) throw std::invalid_argument("checkpoint: duplicate tensor " + name);
  CheckpointTensor t;
  t.name = name;
  t.shape = shape;
  int64_t n = 1;
  for (int d : shape) n *= d;
  t.v.assign(data, data + n);
  tensors.push_back(std::move(t));
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ordered_json header;
  header["format"] = "vgen-checkpoint";
  header["version"] = 1;
  header["meta"] = ckpt.meta.is_null() ? ordered_json::object() : ckpt.meta;
  ordered_json dir = ordered_json::array();
  int64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    ordered_json e;
    e["name"] = t.name;
    e["shape"] = t.shape;
    e["offset"] = offset;
    dir.push_back(e);
    offset += int64_t(t.v.size());
  }
  header["tensors"] = dir;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  out << header.dump() << '\n';
  for (const auto& t : ckpt.tensors) {
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.v.data()),
              std::streamsize(t.v.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header: " + path);
  ordered_json header = ordered_json::parse(line);
  if (header.value("format", "") != "vgen-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized format in " + path);
  if (header.value("version", -1) != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", ordered_json::object());
  for (const auto& e : header.at("tensors")) {
    CheckpointTensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<std::vector<int>>();
    int64_t n = 1;
    for (int d : t.shape) n *= d;
    t.v.resize(size_t(n));
    ckpt.tensors.push_back(std::move(t));
  }
  for (auto& t : ckpt.tensors) {
    in.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
  }
  return ckpt;
}

Checkpoint pack_params(const ParamStore<float>& store) {
  Checkpoint ckpt;
  for (int k = 0; k < store.count(); ++k) {
    const Param<float>& p = store.by_index(k);
    ckpt.add(p.name, p.value.shape, p.value.v.data());
  }
  return ckpt;
}

void pack_optimizer(Checkpoint& ckpt, AdamW<float>& opt, const ParamStore<float>& store) {
  for (int k = 0; k < store.count(); ++k) {
    const Param<float>& p = store.by_index(k);
    auto& m = opt.moment1(p.name);
    auto& v = opt.moment2(p.name);
    if (m.v.empty()) m = TensorData<float>(p.value.shape);
    if (v.v.empty()) v = TensorData<float>(p.value.shape);
    ckpt.add("opt.m." + p.name, m.shape, m.v.data());
    ckpt.add("opt.v." + p.name, v.shape, v.v.data());
  }
  float step = float(opt.step_count());
  ckpt.add("opt.step", {1}, &step);
}

void unpack_params(const Checkpoint& ckpt, ParamStore<float>& store) {
  for (int k = 0; k < store.count(); ++k) {
    Param<float>& p = store.by_index(k);
    const CheckpointTensor* t = ckpt.find(p.name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + p.name);
    if (t->shape != p.value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.value.v = t->v;
  }
}

bool unpack_optimizer(const Checkpoint& ckpt, AdamW<float>& opt, const ParamStore<float>& store) {
  const CheckpointTensor* step = ckpt.find("opt.step");
  if (!step) return false;
  for (int k = 0; k < store.count(); ++k) {
    const Param<float>& p = store.by_index(k);
    const CheckpointTensor* m = ckpt.find("opt.m." + p.name);
    const CheckpointTensor* v = ckpt.find("opt.v." + p.name);
    if (!m || !v) throw std::runtime_error("checkpoint: incomplete optimizer state for " + p.name);
    TensorData<float>& tm = opt.moment1(p.name);
    TensorData<float>& tv = opt.moment2(p.name);
    tm.shape = m->shape;
    tm.v = m->v;
    tv.shape = v->shape;
    tv.v = v->v;
  }
  opt.set_step_count(int64_t(std::llround(double(step->v[0]))));
  return true;
}

}  // namespace vgen
