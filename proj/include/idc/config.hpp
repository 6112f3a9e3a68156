#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "idc/optim.hpp"

namespace idc {

enum class InitMode { real_subset, gaussian_noise };
enum class Precision { f32, f64 };

struct Seeds {
  std::uint64_t filter = 1;
  std::uint64_t kmeans = 2;
  std::uint64_t init = 3;
  std::uint64_t freqs = 4;
};

/// Loss-stack switches; the named presets mirror the ablation variants.
struct Ablation {
  bool use_local_filter = true;
  bool use_unfold = true;
  bool use_instance = true;
  bool use_group = true;
  bool use_pair = true;

  static Ablation variant(const std::string& name);  // "v1".."v7", "full"
};

/// Every knob of the condensation loop.
struct CondenseConfig {
  double r = 0.1;
  std::size_t iters = 2000;
  std::size_t warmup_end = 200;
  std::size_t assign_end = 1200;
  double w_ins = 1.0;
  double w_group = 1.0;
  double w_pair = 0.1;
  double alpha = 0.5;
  std::size_t groups = 8;  // M
  std::size_t num_freqs = 64;  // T
  double sigma_t = 1.0;
  std::size_t k = 3;
  std::size_t c_out = 0;  // 0: min(2 * c * k^2, 128)
  std::size_t p = 4;
  double lr = 0.1;
  OptimizerKind optimizer = OptimizerKind::adam;
  InitMode init_mode = InitMode::real_subset;
  Seeds seeds;
  Ablation ablation;
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  Precision precision = Precision::f32;

  /// Sets iters and the default schedule (warm-up 10%, ramp to 60%).
  CondenseConfig& with_iters(std::size_t n);
  std::size_t resolved_c_out(std::size_t feature_channels) const;
  void validate() const;
};

/// 20k-iteration schedule used for full-size runs.
CondenseConfig full_scale_preset();

void to_json(nlohmann::json& j, const CondenseConfig& cfg);
/// Unknown keys are rejected with ConfigError. When "iters" is given without
/// schedule bounds, the default 10%/60% split is derived from it.
void from_json(const nlohmann::json& j, CondenseConfig& cfg);

/// Stable 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const CondenseConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace idc
