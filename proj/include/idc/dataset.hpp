#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "idc/datapipe.hpp"

namespace idc {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kKernelId = "bicubic-a-0.5-antialias";

struct InstanceEntry {
  std::string source_id;
  std::string dir;  // relative to the dataset root
  std::string source_image;
  std::size_t image_height = 0;  // 0 for synthetic instances
  std::size_t image_width = 0;
  std::size_t count = 0;
  std::vector<PatchCoord> coords;  // real datasets only
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::string kind = "real";  // "real" or "synthetic"
  int scale = 4;
  std::size_t crop = 256;
  std::size_t stride = 128;
  std::size_t lr_size = 64;
  std::string kernel = kKernelId;
  std::string config_hash;
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<InstanceEntry> instances;

  std::size_t total_pairs() const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
/// Unknown keys, wrong types and unsupported versions throw FormatError.
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct DatasetInstance {
  PatchSet lr;
  PatchSet hr;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetInstance> instances;  // same order as manifest.instances
};

/// "inst_<source id>" with characters outside [A-Za-z0-9._-] replaced by '_'.
std::string instance_dir_name(const std::string& source_id);

/// Writes root/{manifest.json, inst_<id>/lr_<n>.png, inst_<id>/hr_<n>.png}.
/// When root already holds a manifest with a different config hash, throws
/// IntegrityError and leaves it untouched; with the same hash, instances are
/// merged by source id.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& root);

/// Loads every instance. Missing or mismatched files throw IntegrityError
/// naming each gap.
Dataset read_dataset(const std::filesystem::path& root);

struct ValidationReport {
  std::vector<std::string> problems;
  std::size_t instances = 0;
  std::size_t pairs = 0;

  bool ok() const { return problems.empty(); }
};

/// Manifest/file integrity, LR/HR size ratios and count invariants. Never
/// throws for dataset defects; they are collected in the report.
ValidationReport validate_dataset(const std::filesystem::path& root);

}  // namespace idc
