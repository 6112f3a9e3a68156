#pragma once

#include <cstdint>
#include <string>

#include "idc/datapipe.hpp"

namespace idc {

/// Synthetic test instance: `count` RGB patches of size x size, each a
/// sinusoid grating 0.5 + 0.4*sin(...) drawn from one of `families`
/// orientation/frequency families with a per-channel tint and random phase.
PatchSet sinusoid_textures(std::size_t count, std::size_t size, std::uint64_t seed,
                           const std::string& source_id = "toy", std::size_t families = 4);

/// Full RGB image of the same texture family, for pipeline tests.
Tensor<float> sinusoid_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace idc
