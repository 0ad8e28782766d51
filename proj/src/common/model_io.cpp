#include "wwps/model_io.hpp"

#include <fstream>

#include "wwps/config.hpp"
#include "wwps/error.hpp"

namespace wwps {

nlohmann::json seal(nlohmann::json payload, std::string_view kind) {
  nlohmann::json doc = {{"kind", kind}, {"schema_version", kSchemaVersion}, {"payload", std::move(payload)}};
  doc["checksum"] = hex64(fnv1a(doc.dump()));
  return doc;
}

nlohmann::json unseal(const nlohmann::json& doc, std::string_view kind) {
  if (!doc.is_object() || !doc.contains("checksum") || !doc.contains("payload")) {
    throw SchemaMismatchError("not a sealed model document");
  }
  nlohmann::json body = doc;
  const std::string stored = body["checksum"].is_string() ? body["checksum"].get<std::string>() : "";
  body.erase("checksum");
  if (hex64(fnv1a(body.dump())) != stored) throw ChecksumError("checksum mismatch");
  if (body.value("schema_version", -1) != kSchemaVersion) throw SchemaMismatchError("unsupported schema version");
  if (body.value("kind", std::string{}) != kind) {
    throw SchemaMismatchError("expected a " + std::string(kind) + " document");
  }
  return body["payload"];
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ChecksumError(path.string() + ": unreadable document (" + e.what() + ")");
  }
}

}  // namespace wwps
