#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idc/autograd.hpp"

namespace idc {

/// Layer widths and kernel sizes of a plain conv stack. `widths` includes the
/// input channel count, so {3, 32, 32, 32} is three conv layers.
struct ArchSpec {
  std::vector<std::size_t> widths{3, 32, 32, 32};
  std::vector<std::size_t> kernels{3, 3, 3};
  float leaky_slope = 0.2f;
};

struct ExtractorLayer {
  Tensor<float> filter;  // [C_out, C_in, k, k]
  bool activation = false;  // leaky-ReLU after this layer
};

/// Frozen feature extractor f: same-padded stride-1 convs with leaky-ReLU
/// between layers. Weights are stored in 32-bit and converted on use.
class Extractor {
 public:
  enum class Origin { random_init, loaded };

  Extractor(std::vector<ExtractorLayer> layers, float leaky_slope, Origin origin,
            std::uint64_t seed = 0);

  static Extractor random_init(const ArchSpec& arch, std::uint64_t seed);
  /// Reads the IDCW weight format. Leaky-ReLU (slope 0.2) is placed after
  /// every layer but the last.
  static Extractor load_weights(const std::filesystem::path& path);
  void save_weights(const std::filesystem::path& path) const;

  std::size_t in_channels() const { return layers_.front().filter.dim(1); }
  std::size_t out_channels() const { return layers_.back().filter.dim(0); }
  /// Side length of the stack's receptive field.
  std::size_t receptive_field() const;
  const std::vector<ExtractorLayer>& layers() const noexcept { return layers_; }
  float leaky_slope() const noexcept { return leaky_slope_; }
  Origin origin() const noexcept { return origin_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// patches [N, in_channels, H, W] -> [N, out_channels, H, W]. Gradients flow
  /// to `patches` only.
  template <class T>
  Var<T> extract(Var<T> patches) const;

  /// Forward pass without gradient bookkeeping.
  template <class T>
  Tensor<T> extract(const Tensor<T>& patches) const;

  /// Sign pattern of every pre-activation (true = positive). Used by the
  /// gradient checker to skip finite-difference probes that cross a kink.
  template <class T>
  std::vector<bool> activation_pattern(const Tensor<T>& patches) const;

 private:
  std::vector<ExtractorLayer> layers_;
  float leaky_slope_;
  Origin origin_;
  std::uint64_t seed_;
};

}  // namespace idc
