#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idc/tensor.hpp"

namespace idc {

enum class PatchKind { real_lr, real_hr, synthetic_lr, synthetic_hr };

const char* to_string(PatchKind kind) noexcept;

struct PatchCoord {
  std::size_t top = 0;
  std::size_t left = 0;

  friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

/// A batch of same-shaped RGB patches in [0,1]. Synthetic kinds carry no
/// coordinates.
struct PatchSet {
  Tensor<float> pixels;  // [N, 3, H, W]
  std::string source_id;
  std::vector<PatchCoord> coords;
  PatchKind kind = PatchKind::real_hr;

  std::size_t size() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
  std::size_t height() const { return pixels.dim(2); }
  std::size_t width() const { return pixels.dim(3); }
  /// Copy of patch i as [3, H, W].
  Tensor<float> patch(std::size_t i) const;
};

/// Top-left offsets along one axis: 0, stride, ... while offset + size fits,
/// plus a flush-to-edge offset when the extent is not covered exactly.
std::vector<std::size_t> crop_offsets(std::size_t extent, std::size_t size, std::size_t stride);

/// Overlapped crops of an image [3, H, W]. Throws DataError when the crop
/// does not fit the image.
PatchSet crop_patches(const Tensor<float>& image, std::size_t size, std::size_t stride,
                      std::string source_id = {});

/// Bicubic resampling (a = -0.5, edge-clamped taps) of [N, C, H, W] or
/// [C, H, W]. Downscaling widens the kernel by the scale factor
/// (antialiasing). Values are not clamped.
Tensor<float> resize_bicubic(const Tensor<float>& images, std::size_t out_h, std::size_t out_w);

/// HR patch set -> LR patch set at 1/scale, clamped to [0,1].
PatchSet downsample_bicubic(const PatchSet& hr, int scale);

/// LR -> HR by bicubic interpolation at `scale`, clamped to [0,1].
Tensor<float> upsample_bicubic(const Tensor<float>& lr, int scale);

/// 8-bit RGB PNG <-> [3, H, W] floats in [0,1]. Grey/alpha inputs are
/// converted to RGB on read.
Tensor<float> read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

/// Nearest 8-bit level, as written by write_png.
std::uint8_t quantize_u8(float v) noexcept;

}  // namespace idc
