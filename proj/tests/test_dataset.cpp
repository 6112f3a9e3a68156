#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "idc/dataset.hpp"
#include "idc/error.hpp"
#include "idc/toy.hpp"

using namespace idc;
using idc::test::ScratchDir;

namespace {

Dataset real_dataset(const std::string& hash) {
  Dataset ds;
  ds.manifest.scale = 2;
  ds.manifest.crop = 16;
  ds.manifest.stride = 8;
  ds.manifest.lr_size = 8;
  ds.manifest.config_hash = hash;
  for (const char* id : {"img a", "img_b"}) {
    const auto img = sinusoid_image(24, 32, id[4]);
    DatasetInstance inst;
    inst.hr = crop_patches(img, 16, 8, id);
    inst.lr = downsample_bicubic(inst.hr, 2);
    InstanceEntry e{id, instance_dir_name(id), std::string(id) + ".png", 24, 32, inst.hr.size(),
                    inst.hr.coords};
    ds.manifest.instances.push_back(e);
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace

TEST_CASE("dataset round trip") {
  ScratchDir dir("ds");
  const auto ds = real_dataset("h1");
  CHECK(instance_dir_name("img a") == "inst_img_a");
  CHECK(ds.manifest.total_pairs() == 12);
  write_dataset(ds, dir.path());
  const auto back = read_dataset(dir.path());
  CHECK(back.manifest.total_pairs() == 12);
  REQUIRE(back.instances.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = ds.instances[i].hr.pixels;
    const auto& b = back.instances[i].hr.pixels;
    REQUIRE(a.shape() == b.shape());
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(std::abs(a[k] - b[k]) <= 0.5f / 255 + 1e-6f);
    CHECK(back.instances[i].hr.coords == ds.instances[i].hr.coords);
  }
  const auto report = validate_dataset(dir.path());
  CHECK_MESSAGE(report.ok(), report.problems.size());
  CHECK(report.pairs == 12);

  SUBCASE("a missing file is named") {
    std::filesystem::remove(dir.path() / "inst_img_b" / "lr_3.png");
    try {
      read_dataset(dir.path());
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("lr_3.png") != std::string::npos);
    }
    const auto r = validate_dataset(dir.path());
    REQUIRE_FALSE(r.ok());
    CHECK(r.problems.front().find("lr_3.png") != std::string::npos);
  }
  SUBCASE("a resized HR patch is caught") {
    write_png(dir.path() / "inst_img_a" / "hr_1.png", Tensor<float>({3, 15, 16}, 0.1f));
    CHECK_FALSE(validate_dataset(dir.path()).ok());
  }
  SUBCASE("out of range LR size is caught") {
    write_png(dir.path() / "inst_img_a" / "lr_0.png", Tensor<float>({3, 9, 9}, 0.1f));
    CHECK_FALSE(validate_dataset(dir.path()).ok());
  }
  SUBCASE("a different config hash is refused and nothing changes") {
    const auto before = read_manifest(dir.path());
    CHECK_THROWS_AS(write_dataset(real_dataset("h2"), dir.path()), IntegrityError);
    CHECK(read_manifest(dir.path()).config_hash == before.config_hash);
  }
  SUBCASE("same hash merges by source id") {
    auto more = real_dataset("h1");
    more.manifest.instances.erase(more.manifest.instances.begin());
    more.instances.erase(more.instances.begin());
    write_dataset(more, dir.path());
    CHECK(read_manifest(dir.path()).instances.size() == 2);
  }
  SUBCASE("unknown manifest key") {
    auto j = nlohmann::json::parse(std::ifstream(dir.path() / "manifest.json"));
    j["surprise"] = 1;
    std::ofstream(dir.path() / "manifest.json") << j.dump();
    CHECK_THROWS_AS(read_manifest(dir.path()), FormatError);
  }
}

TEST_CASE("manifest json") {
  auto m = real_dataset("abc").manifest;
  m.seeds = {{"init", 1}};
  const nlohmann::json j = m;
  const auto back = j.get<DatasetManifest>();
  CHECK(nlohmann::json(back) == j);
  auto bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(bad.get<DatasetManifest>(), FormatError);
  bad = j;
  bad["instances"][0]["dir"] = "../escape";
  CHECK_THROWS_AS(bad.get<DatasetManifest>(), FormatError);
}
