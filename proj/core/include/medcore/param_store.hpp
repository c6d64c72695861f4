#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medcore/tensor.hpp"

namespace medcore {

enum class ParamRole { encoder, decoder, prompt };

/// Role from the tensor name prefix: "enc.", "dec." or "prompt.".
ParamRole role_of(const std::string& name);
const char* role_name(ParamRole role);

/// Insertion-ordered map from tensor name to Tensor.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  void set(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }
  std::vector<std::string> names() const;

  std::int64_t parameter_count() const;
  std::int64_t parameter_count(ParamRole role) const;

  /// Same names in the same order with identical dims.
  bool aligned_with(const ParamStore& other) const;
  /// Throws ArgumentError describing the first misalignment.
  void require_aligned(const ParamStore& other, const std::string& context) const;

  /// Frozen tensors are never updated by training: every prompt tensor.
  static bool is_frozen(const std::string& name) { return role_of(name) == ParamRole::prompt; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace medcore
