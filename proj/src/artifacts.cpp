#include "gscvol/artifacts.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <openssl/evp.h>

#include "gscvol/error.hpp"

namespace gscvol::cli {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw DataError("sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 0xf];
  }
  return out;
}

ArtifactWriter::ArtifactWriter(fs::path out_dir) : dir_(std::move(out_dir)) {
  fs::create_directories(dir_);
}

void ArtifactWriter::json(const std::string& name, const nlohmann::ordered_json& value) {
  text(name, value.dump(2) + "\n");
}

void ArtifactWriter::text(const std::string& name, const std::string& content) {
  write_atomic(dir_ / name, content);
  names_.push_back(name);
}

fs::path manifest_path(const fs::path& out_dir, const std::string& command) {
  return out_dir / (command + ".manifest.json");
}

nlohmann::ordered_json build_manifest(const RunConfig& config,
                                      const std::vector<std::string>& artifacts,
                                      const std::vector<fs::path>& inputs) {
  nlohmann::ordered_json m;
  m["tool"] = "gscvol";
  m["version"] = kVersion;
  m["command"] = config.command;
  m["seed"] = config.seed;
  nlohmann::ordered_json hashed = nlohmann::ordered_json::array();
  for (const auto& file : inputs)
    hashed.push_back({{"path", file.string()}, {"sha256", sha256_file(file)}});
  m["inputs"] = hashed;
  m["versions"] = {{"gscvol", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  m["artifacts"] = artifacts;
  nlohmann::ordered_json cfg;
  for (const auto& [key, value] : config.to_pairs()) cfg[key] = value;
  m["config"] = cfg;
  return m;
}

nlohmann::ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

RunConfig config_from_manifest(const fs::path& path) {
  const auto m = read_json(path);
  if (!m.contains("config") || !m["config"].is_object())
    throw ConfigError("manifest " + path.string() + " has no config section");
  RunConfig config;
  config.out_dir = default_out_dir();
  for (const auto& [key, value] : m["config"].items()) {
    if (!value.is_string()) throw ConfigError("manifest config value for '" + key + "' is not text");
    config.set(key, value.get<std::string>());
  }
  for (const auto& input : m.value("inputs", nlohmann::ordered_json::array())) {
    const std::string file = input.at("path").get<std::string>();
    const std::string recorded = input.at("sha256").get<std::string>();
    if (sha256_file(file) != recorded)
      throw DataError("input " + file + " no longer matches the manifest hash");
  }
  return config;
}

}  // namespace gscvol::cli
