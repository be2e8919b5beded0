#pragma once

#include <filesystem>
#include <string>

#include "tristream/tensor.hpp"

namespace tristream {

// Tensor fixture format: magic "T3SR", u8 version=1, u8 rank, u32 LE extent
// per axis, f32 LE row-major payload.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace tristream
