#pragma once

// Versioned JSON documents for fitted models and checkpoints. A sealed document
// carries its kind, the schema version and an FNV-1a checksum of the payload.

#include <filesystem>
#include <string_view>

#include <json.hpp>

namespace wwps {

constexpr int kSchemaVersion = 1;

nlohmann::json seal(nlohmann::json payload, std::string_view kind);
// Throws ChecksumError on tampering and SchemaMismatchError on a kind or version mismatch.
nlohmann::json unseal(const nlohmann::json& doc, std::string_view kind);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

inline void save_sealed(const std::filesystem::path& path, nlohmann::json payload, std::string_view kind) {
  write_json(path, seal(std::move(payload), kind));
}
inline nlohmann::json load_sealed(const std::filesystem::path& path, std::string_view kind) {
  return unseal(read_json(path), kind);
}

}  // namespace wwps
