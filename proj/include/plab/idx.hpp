#pragma once

#include "plab/tensor.hpp"

#include <string>
#include <vector>

namespace plab {

// IDX container (big-endian magic + dims, then payload).
// Supported type codes: 0x08 unsigned byte (scaled to [0,1] on load),
// 0x0E double (loaded verbatim, used by patch stores for bit-exact values).

Tensor load_idx(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path); // 1-d ubyte file

void save_idx_ubyte(const std::string& path, const Tensor& t);   // values clamped to [0,1]
void save_idx_double(const std::string& path, const Tensor& t);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

} // namespace plab
