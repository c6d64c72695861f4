#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "medcore/error.hpp"
#include "medcore/param_store.hpp"

namespace medcore {

/// Binary tensor container ("MCKP"). Layout, all integers little-endian:
///   char[4] magic "MCKP" | u32 version | u64 entry count
///   per entry: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 payload
/// See docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public IoError {
 public:
  enum class Code { bad_magic, version_mismatch, truncated, dim_overflow, unreadable };
  CheckpointError(Code code, const std::string& what) : IoError(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

using TensorEntries = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode_entries(const TensorEntries& entries);
TensorEntries decode_entries(const std::vector<std::uint8_t>& bytes);

void save_entries(const std::filesystem::path& path, const TensorEntries& entries);
TensorEntries load_entries(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace medcore
