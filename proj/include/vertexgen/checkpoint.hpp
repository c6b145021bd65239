#pragma once

#include <string>
#include <vector>

#include "vertexgen/tensor.hpp"

#include <nlohmann/json.hpp>

namespace vgen {

// One named fp32 tensor inside a checkpoint file.
struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> v;
};

// Container format: one JSON header line (tensor directory + metadata),
// then the concatenated little-endian fp32 payloads in directory order.
struct Checkpoint {
  nlohmann::ordered_json meta;
  std::vector<CheckpointTensor> tensors;

  CheckpointTensor* find(const std::string& name);
  const CheckpointTensor* find(const std::string& name) const;
  void add(const std::string& name, const std::vector<int>& shape, const float* data);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Store <-> checkpoint helpers: parameter tensors keep their own names;
// optimizer moments go in as opt.m.<name> / opt.v.<name>, plus opt.step.
Checkpoint pack_params(const ParamStore<float>& store);
void pack_optimizer(Checkpoint& ckpt, AdamW<float>& opt, const ParamStore<float>& store);
void unpack_params(const Checkpoint& ckpt, ParamStore<float>& store);
// Returns false when the checkpoint carries no optimizer state.
bool unpack_optimizer(const Checkpoint& ckpt, AdamW<float>& opt, const ParamStore<float>& store);

}  // namespace vgen
