#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gscvol/config.hpp"

namespace gscvol::cli {

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Collects artifacts of one run and writes them under the output directory.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path out_dir);

  void json(const std::string& name, const nlohmann::ordered_json& value);
  void text(const std::string& name, const std::string& content);

  const std::vector<std::string>& names() const { return names_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
};

/// `<command>.manifest.json` in the output directory.
std::filesystem::path manifest_path(const std::filesystem::path& out_dir,
                                    const std::string& command);

/// Records the command, seed, versions, artifact names, the full config and
/// the SHA-256 of every input file.
nlohmann::ordered_json build_manifest(const RunConfig& config,
                                      const std::vector<std::string>& artifacts,
                                      const std::vector<std::filesystem::path>& inputs);

/// Rebuilds the run configuration recorded in a manifest and checks that the
/// input files still have the recorded hashes.
RunConfig config_from_manifest(const std::filesystem::path& path);

nlohmann::ordered_json read_json(const std::filesystem::path& path);

}  // namespace gscvol::cli
