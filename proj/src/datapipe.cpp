#include "idc/datapipe.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace idc {

const char* to_string(PatchKind kind) noexcept {
  switch (kind) {
    case PatchKind::real_lr: return "real-LR";
    case PatchKind::real_hr: return "real-HR";
    case PatchKind::synthetic_lr: return "synthetic-LR";
    case PatchKind::synthetic_hr: return "synthetic-HR";
  }
  return "?";
}

Tensor<float> PatchSet::patch(std::size_t i) const {
  const std::size_t c = pixels.dim(1), h = pixels.dim(2), w = pixels.dim(3);
  Tensor<float> out({c, h, w});
  std::copy_n(pixels.data() + i * c * h * w, c * h * w, out.data());
  return out;
}

std::vector<std::size_t> crop_offsets(std::size_t extent, std::size_t size, std::size_t stride) {
  if (stride == 0) throw ConfigError("crop: stride must be >= 1");
  if (size == 0 || size > extent) return {};
  std::vector<std::size_t> out;
  for (std::size_t pos = 0; pos + size <= extent; pos += stride) out.push_back(pos);
  if (out.back() + size < extent) out.push_back(extent - size);
  return out;
}

PatchSet crop_patches(const Tensor<float>& image, std::size_t size, std::size_t stride,
                      std::string source_id) {
  require_rank(image, 3, "crop_patches");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (size == 0 || size > h || size > w)
    throw DataError("crop size " + std::to_string(size) + " exceeds image " + std::to_string(h) +
                    "x" + std::to_string(w));
  const auto ys = crop_offsets(h, size, stride), xs = crop_offsets(w, size, stride);
  PatchSet ps;
  ps.kind = PatchKind::real_hr;
  ps.source_id = std::move(source_id);
  ps.pixels = Tensor<float>({ys.size() * xs.size(), c, size, size});
  std::size_t n = 0;
  for (auto top : ys)
    for (auto left : xs) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < size; ++y)
          std::copy_n(image.data() + (ch * h + top + y) * w + left, size,
                      &ps.pixels.at4(n, ch, y, 0));
      ps.coords.push_back({top, left});
      ++n;
    }
  return ps;
}

namespace {

double cubic(double x) {
  const double a = -0.5, ax = std::abs(x), ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1) return (a + 2) * ax3 - (a + 3) * ax2 + 1;
  if (ax < 2) return a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a;
  return 0;
}

struct Taps {
  std::vector<std::size_t> index;  // [out * width]
  std::vector<double> weight;
  std::vector<std::size_t> anchor;  // tap with the largest weight, per output
  std::size_t width = 0;
};

// Resampling weights for one axis, same convention as MATLAB's imresize but
// with edge-clamped indices.
Taps make_taps(std::size_t in_len, std::size_t out_len) {
  const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
  const bool antialias = scale < 1.0;
  const double kernel_width = antialias ? 4.0 / scale : 4.0;
  Taps taps;
  taps.width = static_cast<std::size_t>(std::ceil(kernel_width)) + 2;
  taps.index.resize(out_len * taps.width);
  taps.weight.resize(out_len * taps.width);
  taps.anchor.resize(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    const double u = (static_cast<double>(o) + 1.0) / scale + 0.5 * (1.0 - 1.0 / scale);
    const double left = std::floor(u - kernel_width / 2.0);
    double total = 0;
    for (std::size_t t = 0; t < taps.width; ++t) {
      const double j = left + static_cast<double>(t);  // 1-based source index
      const double d = u - j;
      const double wgt = antialias ? scale * cubic(scale * d) : cubic(d);
      const auto src = static_cast<std::ptrdiff_t>(j) - 1;
      taps.index[o * taps.width + t] = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(src, 0, static_cast<std::ptrdiff_t>(in_len) - 1));
      taps.weight[o * taps.width + t] = wgt;
      total += wgt;
    }
    std::size_t best = 0;
    for (std::size_t t = 0; t < taps.width; ++t) {
      taps.weight[o * taps.width + t] /= total;
      if (taps.weight[o * taps.width + t] > taps.weight[o * taps.width + best]) best = t;
    }
    taps.anchor[o] = taps.index[o * taps.width + best];
  }
  return taps;
}

// out = x[anchor] + sum w (x - x[anchor]); constant input maps to itself exactly
void resample_line(const float* in, std::size_t in_stride, float* out, std::size_t out_stride,
                   const Taps& taps, std::size_t out_len) {
  for (std::size_t o = 0; o < out_len; ++o) {
    const double ref = in[taps.anchor[o] * in_stride];
    double acc = 0;
    for (std::size_t t = 0; t < taps.width; ++t)
      acc += taps.weight[o * taps.width + t] * (in[taps.index[o * taps.width + t] * in_stride] - ref);
    out[o * out_stride] = static_cast<float>(ref + acc);
  }
}

void clamp01(Tensor<float>& t) {
  for (auto& v : t.values()) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Tensor<float> resize_bicubic(const Tensor<float>& images, std::size_t out_h, std::size_t out_w) {
  if (images.rank() == 3) {
    auto batched = images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)});
    auto r = resize_bicubic(batched, out_h, out_w);
    return r.reshaped({r.dim(1), out_h, out_w});
  }
  require_rank(images, 4, "resize_bicubic");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (out_h == 0 || out_w == 0) throw ConfigError("resize_bicubic: empty output");
  const Taps th = make_taps(h, out_h), tw = make_taps(w, out_w);
  Tensor<float> mid({n, c, h, out_w});
  Tensor<float> out({n, c, out_h, out_w});
  for (std::size_t i = 0; i < n * c; ++i) {
    const float* src = images.data() + i * h * w;
    float* m = mid.data() + i * h * out_w;
    for (std::size_t y = 0; y < h; ++y) resample_line(src + y * w, 1, m + y * out_w, 1, tw, out_w);
    float* dst = out.data() + i * out_h * out_w;
    for (std::size_t x = 0; x < out_w; ++x) resample_line(m + x, out_w, dst + x, out_w, th, out_h);
  }
  return out;
}

PatchSet downsample_bicubic(const PatchSet& hr, int scale) {
  if (scale < 1) throw ConfigError("downsample: scale must be >= 1");
  const auto s = static_cast<std::size_t>(scale);
  if (hr.height() % s != 0 || hr.width() % s != 0)
    throw ConfigError("downsample: patch size " + std::to_string(hr.height()) +
                      " is not divisible by scale " + std::to_string(scale));
  PatchSet lr;
  lr.source_id = hr.source_id;
  lr.coords = hr.coords;
  lr.kind = hr.kind == PatchKind::synthetic_hr ? PatchKind::synthetic_lr : PatchKind::real_lr;
  lr.pixels = s == 1 ? hr.pixels : resize_bicubic(hr.pixels, hr.height() / s, hr.width() / s);
  clamp01(lr.pixels);
  return lr;
}

Tensor<float> upsample_bicubic(const Tensor<float>& lr, int scale) {
  if (scale < 1) throw ConfigError("upsample: scale must be >= 1");
  const auto s = static_cast<std::size_t>(scale);
  if (s == 1) return lr;
  const std::size_t h = lr.dim(lr.rank() - 2), w = lr.dim(lr.rank() - 1);
  Tensor<float> out = resize_bicubic(lr, h * s, w * s);
  clamp01(out);
  return out;
}

std::uint8_t quantize_u8(float v) noexcept {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Tensor<float> read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const std::size_t h = img.height, w = img.width;
  Tensor<float> out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[(c * h + y) * w + x] = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& image) {
  require_rank(image, 3, "write_png");
  if (image.dim(0) != 3) throw ConfigError("write_png: expected 3 channels");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> buf(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        buf[(y * w + x) * 3 + c] = quantize_u8(image[(c * h + y) * w + x]);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path.string() + ": " + img.message);
}

}  // namespace idc
