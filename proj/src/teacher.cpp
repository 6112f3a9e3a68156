#include "idc/teacher.hpp"

#include <cstdlib>
#include <random>

#include "idc/error.hpp"

namespace idc {

namespace fs = std::filesystem;

UpsamplerBackend UpsamplerBackend::bicubic(int scale) {
  return {UpsamplerKind::bicubic, scale, {}, {}};
}

UpsamplerBackend UpsamplerBackend::external(std::string command_template, int scale) {
  return {UpsamplerKind::external_command, scale, std::move(command_template), {}};
}

UpsamplerBackend UpsamplerBackend::precomputed(fs::path dir, int scale) {
  return {UpsamplerKind::precomputed_dir, scale, {}, std::move(dir)};
}

std::string lr_name(std::size_t n) { return "lr_" + std::to_string(n) + ".png"; }
std::string hr_name(std::size_t n) { return "hr_" + std::to_string(n) + ".png"; }

std::string expand_command(const std::string& tmpl, const fs::path& in_dir, const fs::path& out_dir,
                           int scale) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    auto try_sub = [&](const char* key, const std::string& value) {
      const std::size_t n = std::char_traits<char>::length(key);
      if (tmpl.compare(i, n, key) != 0) return false;
      out += value;
      i += n;
      return true;
    };
    if (try_sub("{in_dir}", in_dir.string()) || try_sub("{out_dir}", out_dir.string()) ||
        try_sub("{scale}", std::to_string(scale)))
      continue;
    out += tmpl[i++];
  }
  return out;
}

namespace {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "idc-teacher-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw BackendError("cannot create temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

PatchSet read_hr_dir(const fs::path& dir, const PatchSet& lr, int scale) {
  const std::size_t n = lr.size(), h = lr.height() * scale, w = lr.width() * scale;
  Tensor<float> pixels({n, 3, h, w});
  std::string problems;
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path file = dir / hr_name(i);
    if (!fs::exists(file)) {
      problems += "\n  " + hr_name(i) + ": missing";
      continue;
    }
    try {
      const Tensor<float> img = read_png(file);
      if (img.dim(1) != h || img.dim(2) != w) {
        problems += "\n  " + hr_name(i) + ": size " + std::to_string(img.dim(2)) + "x" +
                    std::to_string(img.dim(1)) + ", expected " + std::to_string(w) + "x" +
                    std::to_string(h);
        continue;
      }
      std::copy(img.values().begin(), img.values().end(), pixels.data() + i * 3 * h * w);
    } catch (const Error& e) {
      problems += "\n  " + hr_name(i) + ": " + e.what();
    }
  }
  if (!problems.empty()) throw BackendError("teacher outputs rejected:" + problems);
  PatchSet hr;
  hr.pixels = std::move(pixels);
  hr.source_id = lr.source_id;
  hr.kind = PatchKind::synthetic_hr;
  return hr;
}

}  // namespace

PatchSet upsample(const PatchSet& lr, const UpsamplerBackend& backend) {
  if (backend.scale < 1) throw ConfigError("teacher scale must be >= 1");
  if (lr.size() == 0) throw DataError("teacher: empty patch set");
  switch (backend.kind) {
    case UpsamplerKind::bicubic: {
      PatchSet hr;
      hr.pixels = upsample_bicubic(lr.pixels, backend.scale);
      hr.source_id = lr.source_id;
      hr.kind = PatchKind::synthetic_hr;
      return hr;
    }
    case UpsamplerKind::precomputed_dir:
      if (!fs::is_directory(backend.directory))
        throw BackendError("precomputed HR directory not found: " + backend.directory.string());
      return read_hr_dir(backend.directory, lr, backend.scale);
    case UpsamplerKind::external_command: {
      if (backend.command.empty()) throw ConfigError("external teacher: empty command template");
      TempDir tmp;
      const fs::path in_dir = tmp.path() / "in", out_dir = tmp.path() / "out";
      fs::create_directories(in_dir);
      fs::create_directories(out_dir);
      for (std::size_t i = 0; i < lr.size(); ++i) write_png(in_dir / lr_name(i), lr.patch(i));
      const std::string cmd = expand_command(backend.command, in_dir, out_dir, backend.scale);
      const int status = std::system(cmd.c_str());
      if (status != 0)
        throw BackendError("external teacher exited with status " + std::to_string(status) +
                           ": " + cmd);
      return read_hr_dir(out_dir, lr, backend.scale);
    }
  }
  throw ConfigError("unknown teacher backend");
}

}  // namespace idc
