#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csa/tensor.hpp"

namespace csa {

// Binary named-tensor file: magic + format version + record count, then per
// tensor: u32 name length, UTF-8 name, u32 rank, u32 extents, row-major f64
// payload. All integers and floats little-endian. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ParamMap& params);

// Loads values into an existing parameter set; every file record must match a
// registered parameter in name and shape, and every parameter must be present.
void load_checkpoint(const std::string& path, ParamMap& params);

// Raw listing in file order, for inspection tools.
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

}  // namespace csa
