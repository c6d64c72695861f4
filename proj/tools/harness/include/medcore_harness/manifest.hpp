#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace medcore::harness {

std::string sha256_hex(const std::string& bytes);
/// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

/// Records what a command read and wrote. Only `manifest.json` carries a
/// timestamp; every other output is a pure function of config and inputs.
class Manifest {
 public:
  /// Paths are listed relative to `root`.
  Manifest(std::string command, std::string run_id, std::string config_hash, std::filesystem::path root);

  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& path);

  const std::string& config_hash() const { return config_hash_; }
  const std::vector<std::filesystem::path>& outputs() const { return outputs_; }

  /// Serializes with content hashes of every listed file.
  std::string json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_, run_id_, config_hash_;
  std::filesystem::path root_;
  std::vector<std::filesystem::path> inputs_, outputs_;
};

struct ManifestInfo {
  std::string command;
  std::string run_id;
  std::string config_hash;
};

/// Reads the identifying fields of an existing manifest.
ManifestInfo read_manifest_info(const std::filesystem::path& path);

}  // namespace medcore::harness
