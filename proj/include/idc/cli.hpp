#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "idc/config.hpp"
#include "idc/extractor.hpp"
#include "idc/teacher.hpp"

namespace idc {

/// Where the frozen extractor comes from.
struct ExtractorSource {
  enum class Kind { random, weights } kind = Kind::random;
  std::uint64_t seed = 0;
  ArchSpec arch;
  std::filesystem::path path;

  Extractor load() const;
};

/// Contents of a condense --config file: CondenseConfig keys plus the run
/// plumbing below. Relative paths resolve against the config file's folder.
struct RunConfig {
  CondenseConfig condense;
  std::filesystem::path dataset;
  std::filesystem::path output;
  ExtractorSource extractor;
  UpsamplerBackend teacher;  // scale is taken from the dataset manifest
  std::size_t parallelism = 1;
  bool fail_fast = false;
  nlohmann::json extractor_json;
  nlohmann::json teacher_json;

  /// Hash of everything that determines the outputs.
  std::string output_hash() const;
};

/// Unknown keys and missing seeds throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

struct PrepareOptions {
  std::filesystem::path images;
  std::filesystem::path out;
  int scale = 4;
  std::size_t crop = 256;
  std::size_t stride = 128;
  bool strict = false;
};

int cmd_prepare(const PrepareOptions& opts, std::ostream& out, std::ostream& err);
int cmd_condense(const std::filesystem::path& config, std::optional<std::size_t> threads,
                 std::ostream& out, std::ostream& err);
int cmd_validate(const std::filesystem::path& dataset, std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::uint64_t seed, int precision, bool inject_sign_fault, std::ostream& out);
int cmd_stats(const std::filesystem::path& dataset, bool curves, std::ostream& out);

/// Parses argv, dispatches, and maps errors to exit codes (0 ok, 2 config,
/// 3 data/integrity, 4 numeric).
int run_cli(int argc, const char* const* argv);

}  // namespace idc
