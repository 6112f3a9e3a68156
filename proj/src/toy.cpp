#include "idc/toy.hpp"

#include <cmath>
#include <numbers>

#include "idc/random.hpp"

namespace idc {

namespace {

struct Grating {
  double fx, fy, phase;
  double tint[3];
};

Grating draw_grating(Rng& rng, std::size_t family, std::size_t families, std::size_t size) {
  const double pi = std::numbers::pi;
  const double angle = pi * (static_cast<double>(family) + 0.2 * rng.uniform()) /
                       static_cast<double>(families);
  const double cycles = 1.0 + 3.0 * static_cast<double>(family % 3) + rng.uniform();
  const double f = cycles / static_cast<double>(size);
  Grating g{f * std::cos(angle), f * std::sin(angle), 2 * pi * rng.uniform(), {}};
  for (double& t : g.tint) t = 0.6 + 0.4 * rng.uniform();
  return g;
}

void paint(float* out, std::size_t h, std::size_t w, const Grating& g) {
  const double pi = std::numbers::pi;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double s = std::sin(2 * pi * (g.fx * x + g.fy * y) + g.phase);
        out[(c * h + y) * w + x] = static_cast<float>(0.5 + 0.4 * g.tint[c] * s);
      }
}

}  // namespace

PatchSet sinusoid_textures(std::size_t count, std::size_t size, std::uint64_t seed,
                           const std::string& source_id, std::size_t families) {
  if (count == 0 || size == 0 || families == 0)
    throw ConfigError("sinusoid_textures: count, size and families must be positive");
  Rng rng(seed);
  PatchSet ps;
  ps.kind = PatchKind::real_lr;
  ps.source_id = source_id;
  ps.pixels = Tensor<float>({count, 3, size, size});
  for (std::size_t i = 0; i < count; ++i) {
    const Grating g = draw_grating(rng, rng.below(families), families, size);
    paint(ps.pixels.data() + i * 3 * size * size, size, size, g);
    ps.coords.push_back({0, 0});
  }
  return ps;
}

Tensor<float> sinusoid_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> img({3, height, width});
  paint(img.data(), height, width, draw_grating(rng, rng.below(4), 4, std::min(height, width) / 8));
  return img;
}

}  // namespace idc
