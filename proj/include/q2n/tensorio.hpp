#pragma once

#include <string>

#include "q2n/tensor.hpp"

namespace q2n {

// On-disk container: 8-byte magic "Q2NTENS1", one UTF-8 JSON header line
// terminated by '\n' with keys {"dtype","rows","cols"}, then raw
// little-endian scalars in row-major order.
inline constexpr char kTensorMagic[8] = {'Q', '2', 'N', 'T', 'E', 'N', 'S', '1'};
inline constexpr const char* kTensorExtension = ".q2nt";

void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

// Reads <name>.weight.q2nt and <name>.acts.q2nt from dir and checks the
// shape invariant.
LayerBundle load_layer_bundle(const std::string& dir, const std::string& name);

} // namespace q2n
