#include "medcore_harness/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "medcore/checkpoint.hpp"
#include "medcore/csv.hpp"
#include "medcore/error.hpp"
#include "medcore_harness/version.hpp"

namespace medcore::harness {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

Manifest::Manifest(std::string command, std::string run_id, std::string config_hash, std::filesystem::path root)
    : command_(std::move(command)),
      run_id_(std::move(run_id)),
      config_hash_(std::move(config_hash)),
      root_(std::move(root)) {}

void Manifest::input(const std::filesystem::path& path) { inputs_.push_back(path); }
void Manifest::output(const std::filesystem::path& path) { outputs_.push_back(path); }

std::string Manifest::json() const {
  using nlohmann::ordered_json;
  auto files = [this](const std::vector<std::filesystem::path>& paths) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : paths) {
      arr.push_back({{"path", p.lexically_relative(root_).generic_string()},
                     {"sha256", sha256_file(p)},
                     {"bytes", static_cast<std::uint64_t>(std::filesystem::file_size(p))}});
    }
    return arr;
  };
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  const ordered_json doc = {
      {"command", command_},
      {"run_id", run_id_},
      {"config_sha256", config_hash_},
      {"inputs", files(inputs_)},
      {"outputs", files(outputs_)},
      {"versions",
       {{"medcore", kVersion},
        {"checkpoint_format", kCheckpointVersion},
        {"compiler", kCompiler}}},
      {"created_utc", stamp},
  };
  return doc.dump(2) + "\n";
}

void Manifest::write(const std::filesystem::path& path) const { write_text_file(path, json()); }

ManifestInfo read_manifest_info(const std::filesystem::path& path) {
  try {
    const auto doc = nlohmann::json::parse(read_text_file(path));
    return {doc.at("command").get<std::string>(), doc.at("run_id").get<std::string>(),
            doc.at("config_sha256").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("unreadable manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace medcore::harness
