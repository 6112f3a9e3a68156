#pragma once

#include <filesystem>
#include <string>

#include "idc/datapipe.hpp"

namespace idc {

enum class UpsamplerKind { bicubic, external_command, precomputed_dir };

/// How synthetic LR patches get their HR counterparts.
struct UpsamplerBackend {
  UpsamplerKind kind = UpsamplerKind::bicubic;
  int scale = 2;
  // external_command: template with {in_dir}, {out_dir} and {scale}.
  std::string command;
  // precomputed_dir: directory holding hr_<n>.png.
  std::filesystem::path directory;

  static UpsamplerBackend bicubic(int scale);
  static UpsamplerBackend external(std::string command_template, int scale);
  static UpsamplerBackend precomputed(std::filesystem::path dir, int scale);
};

/// "lr_<n>.png" / "hr_<n>.png"
std::string lr_name(std::size_t n);
std::string hr_name(std::size_t n);

/// Replaces every {in_dir}, {out_dir} and {scale} placeholder.
std::string expand_command(const std::string& tmpl, const std::filesystem::path& in_dir,
                           const std::filesystem::path& out_dir, int scale);

/// Synthetic-LR -> synthetic-HR, index-aligned. Backend failures throw
/// BackendError listing every offending file; nothing partial is returned.
PatchSet upsample(const PatchSet& lr, const UpsamplerBackend& backend);

}  // namespace idc
