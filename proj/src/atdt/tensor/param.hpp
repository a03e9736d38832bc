#pragma once

#include <string>

#include "atdt/tensor/tensor.hpp"

namespace atdt {

// A named trainable tensor. The name encodes the module path
// ("n1.enc.stage2.conv1.w") and is the key in checkpoints.
struct Parameter {
  Tensor value;
  std::string name;
};

}  // namespace atdt
