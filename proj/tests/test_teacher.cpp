#include "doctest.h"
#include "helpers.hpp"
#include "idc/datapipe.hpp"
#include "idc/error.hpp"
#include "idc/teacher.hpp"
#include "idc/toy.hpp"

using namespace idc;
using idc::test::ScratchDir;

namespace {

PatchSet synthetic_lr(std::size_t n, std::size_t size, std::uint64_t seed) {
  auto ps = sinusoid_textures(n, size, seed);
  ps.kind = PatchKind::synthetic_lr;
  // values exactly representable in 8 bits so the external round trip is lossless
  for (auto& v : ps.pixels.values()) v = quantize_u8(v) / 255.0f;
  return ps;
}

std::string nn_command(const std::string& extra = "") {
  return std::string(IDC_NN_UPSAMPLE) + " {in_dir} {out_dir} {scale}" + extra;
}

}  // namespace

TEST_CASE("bicubic backend") {
  const auto lr = synthetic_lr(3, 8, 1);
  const auto hr = upsample(lr, UpsamplerBackend::bicubic(2));
  CHECK(hr.pixels.shape() == Shape{3, 3, 16, 16});
  CHECK(hr.kind == PatchKind::synthetic_hr);
  CHECK(upsample(lr, UpsamplerBackend::bicubic(1)).pixels == lr.pixels);
  PatchSet flat;
  flat.pixels = Tensor<float>({1, 3, 4, 4}, 0.6f);
  const auto up = upsample(flat, UpsamplerBackend::bicubic(3));
  for (float v : up.pixels.values()) CHECK(v == 0.6f);
}

TEST_CASE("external backend") {
  const auto lr = synthetic_lr(4, 6, 2);
  CHECK(expand_command("x {in_dir} {out_dir} {scale} {scale}", "/a", "/b", 3) == "x /a /b 3 3");

  SUBCASE("nearest neighbour helper") {
    const auto hr = upsample(lr, UpsamplerBackend::external(nn_command(), 2));
    REQUIRE(hr.pixels.shape() == Shape{4, 3, 12, 12});
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 12; ++y)
          for (std::size_t x = 0; x < 12; ++x)
            REQUIRE(hr.pixels.at4(n, c, y, x) == lr.pixels.at4(n, c, y / 2, x / 2));
  }
  SUBCASE("failing command") {
    CHECK_THROWS_AS(upsample(lr, UpsamplerBackend::external("exit 7", 2)), BackendError);
  }
  SUBCASE("missing output is named") {
    try {
      upsample(lr, UpsamplerBackend::external(nn_command(" 2"), 2));
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(std::string(e.what()).find("hr_2.png") != std::string::npos);
    }
  }
  SUBCASE("wrong output size") {
    CHECK_THROWS_AS(upsample(lr, UpsamplerBackend::external(
                                     std::string(IDC_NN_UPSAMPLE) + " {in_dir} {out_dir} 3", 2)),
                    BackendError);
  }
}

TEST_CASE("precomputed backend") {
  ScratchDir dir("precomp");
  const auto lr = synthetic_lr(2, 4, 3);
  for (std::size_t n = 0; n < 2; ++n) write_png(dir.path() / hr_name(n), upsample_bicubic(lr.patch(n), 2));
  const auto hr = upsample(lr, UpsamplerBackend::precomputed(dir.path(), 2));
  CHECK(hr.pixels.shape() == Shape{2, 3, 8, 8});
  std::filesystem::remove(dir.path() / hr_name(1));
  CHECK_THROWS_AS(upsample(lr, UpsamplerBackend::precomputed(dir.path(), 2)), BackendError);
}
