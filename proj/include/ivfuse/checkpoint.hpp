#pragma once

#include <map>
#include <string>
#include <vector>

#include "ivfuse/tensor.hpp"

namespace ivfuse {

// Per-optimizer Adam moments, keyed by parameter name.
struct AdamState {
  int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One training run frozen to disk: every learnable tensor, the channel
// shuffles, the config snapshot, the iteration counter and all optimizer
// moments. Reloading reproduces the run bitwise.
//
// On-disk container: magic "IVFCKPT1" | u64 manifest length | JSON manifest
// | raw little-endian f64 blob. The manifest lists {key, dtype, shape,
// offset, nbytes} per tensor plus the scalar fields.
struct Checkpoint {
  int64_t iteration = 0;
  std::map<std::string, std::string> config;  // flat key=value snapshot
  std::vector<int> perm_ir;
  std::vector<int> perm_vis;
  std::map<std::string, Tensor> tensors;      // learnable parameters
  std::map<std::string, AdamState> adam;      // optimizer name -> moments
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ivfuse
