#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse {

// MFT1 binary tensor format, used for every tensor on disk:
//   magic "MFT1" | u8 rank | rank x u32 little-endian dims |
//   row-major little-endian f32 payload. No padding.

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t);

// `origin` names the source in error messages (a path, usually).
Tensor tensor_from_bytes(const std::vector<std::uint8_t>& bytes, const std::string& origin);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace modfuse
