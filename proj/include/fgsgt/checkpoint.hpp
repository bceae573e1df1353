#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fgsgt/nn.hpp"

namespace fgsgt::checkpoint {

/// File layout, all integers little-endian:
///   "FGSGT1"
///   repeated until EOF:
///     u32 name_length, name bytes (UTF-8)
///     u32 rank, rank x u64 extents
///     product(extents) x IEEE-754 binary64
inline constexpr char kMagic[] = "FGSGT1";

std::string encode(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode(const std::string& bytes);

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load(const std::filesystem::path& path);

/// Copies every stored tensor into the like-named tensor of the store.
/// Missing names or mismatched shapes throw; entries whose names are not in
/// the store are returned to the caller (e.g. optimiser state).
std::vector<NamedTensor> restore(ParamStore& store, const std::vector<NamedTensor>& tensors);

}  // namespace fgsgt::checkpoint
