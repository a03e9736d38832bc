#pragma once

#include <string>
#include <vector>

#include "atdt/tensor/tensor.hpp"

namespace atdt {

// One named record in a checkpoint: trainable parameters and persistent
// buffers (batch-norm running statistics) use the same record format.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Flat binary format, little-endian:
//   magic "ATDT" | version u32 | count u32
//   per record: name_len u32 | name bytes | rank u32 | extents u64[rank] | payload f64[]
void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace atdt
