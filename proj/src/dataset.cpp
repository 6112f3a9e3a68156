#include "idc/dataset.hpp"

#include <fstream>
#include <map>
#include <set>

#include "idc/error.hpp"
#include "idc/teacher.hpp"

namespace idc {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t DatasetManifest::total_pairs() const {
  std::size_t n = 0;
  for (const auto& e : instances) n += e.count;
  return n;
}

void to_json(json& j, const DatasetManifest& m) {
  json inst = json::array();
  for (const auto& e : m.instances) {
    json coords = json::array();
    for (const auto& c : e.coords) coords.push_back({c.top, c.left});
    inst.push_back({{"source_id", e.source_id},
                    {"dir", e.dir},
                    {"source_image", e.source_image},
                    {"image_height", e.image_height},
                    {"image_width", e.image_width},
                    {"count", e.count},
                    {"coords", std::move(coords)}});
  }
  j = json{{"version", m.version}, {"kind", m.kind},       {"scale", m.scale},
           {"crop", m.crop},       {"stride", m.stride},   {"lr_size", m.lr_size},
           {"kernel", m.kernel},   {"config_hash", m.config_hash},
           {"seeds", m.seeds},     {"instances", std::move(inst)}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw FormatError(std::string(where) + ": expected an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw FormatError(std::string(where) + ": unknown key '" + k + "'");
}

template <class V>
void get_to(const json& j, const char* key, V& out, const char* where) {
  if (!j.contains(key)) throw FormatError(std::string(where) + ": missing key '" + key + "'");
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw FormatError(std::string(where) + ": bad value for '" + key + "': " + e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void from_json(const json& j, DatasetManifest& m) {
  reject_unknown(j,
                 {"version", "kind", "scale", "crop", "stride", "lr_size", "kernel", "config_hash",
                  "seeds", "instances"},
                 "manifest");
  get_to(j, "version", m.version, "manifest");
  if (m.version != kManifestVersion)
    throw FormatError("manifest: unsupported version " + std::to_string(m.version));
  get_to(j, "kind", m.kind, "manifest");
  if (m.kind != "real" && m.kind != "synthetic")
    throw FormatError("manifest: kind must be 'real' or 'synthetic'");
  get_to(j, "scale", m.scale, "manifest");
  get_to(j, "crop", m.crop, "manifest");
  get_to(j, "stride", m.stride, "manifest");
  get_to(j, "lr_size", m.lr_size, "manifest");
  get_to(j, "kernel", m.kernel, "manifest");
  get_to(j, "config_hash", m.config_hash, "manifest");
  if (j.contains("seeds")) m.seeds = j.at("seeds");
  if (!j.contains("instances") || !j.at("instances").is_array())
    throw FormatError("manifest: 'instances' must be an array");
  m.instances.clear();
  for (const auto& ji : j.at("instances")) {
    reject_unknown(ji,
                   {"source_id", "dir", "source_image", "image_height", "image_width", "count",
                    "coords"},
                   "manifest instance");
    InstanceEntry e;
    get_to(ji, "source_id", e.source_id, "manifest instance");
    get_to(ji, "dir", e.dir, "manifest instance");
    get_to(ji, "count", e.count, "manifest instance");
    if (ji.contains("source_image")) get_to(ji, "source_image", e.source_image, "manifest instance");
    if (ji.contains("image_height")) get_to(ji, "image_height", e.image_height, "manifest instance");
    if (ji.contains("image_width")) get_to(ji, "image_width", e.image_width, "manifest instance");
    if (ji.contains("coords")) {
      std::vector<std::array<std::size_t, 2>> raw;
      get_to(ji, "coords", raw, "manifest instance");
      for (const auto& c : raw) e.coords.push_back({c[0], c[1]});
    }
    if (e.dir.empty() || fs::path(e.dir).is_absolute() || e.dir.find("..") != std::string::npos)
      throw FormatError("manifest instance '" + e.source_id + "': dir must be a plain relative name");
    m.instances.push_back(std::move(e));
  }
}

std::string instance_dir_name(const std::string& source_id) {
  std::string out = "inst_";
  for (const char ch : source_id) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                    (ch >= '0' && ch <= '9') || ch == '-' || ch == '_' || ch == '.';
    out += ok ? ch : '_';
  }
  return out;
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.json";
  if (!fs::exists(p)) throw IntegrityError("no manifest.json in " + root.string());
  json j;
  try {
    j = json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  return j.get<DatasetManifest>();
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  if (ds.instances.size() != ds.manifest.instances.size())
    throw ContractError("write_dataset: manifest and instance lists differ in length");
  DatasetManifest merged = ds.manifest;
  if (fs::exists(root / "manifest.json")) {
    const DatasetManifest old = read_manifest(root);
    if (old.config_hash != ds.manifest.config_hash)
      throw IntegrityError("refusing to append to " + root.string() + ": config hash " +
                           old.config_hash + " differs from " + ds.manifest.config_hash);
    std::set<std::string> fresh;
    for (const auto& e : ds.manifest.instances) fresh.insert(e.source_id);
    merged.instances.clear();
    for (const auto& e : old.instances)
      if (!fresh.count(e.source_id)) merged.instances.push_back(e);
    for (const auto& e : ds.manifest.instances) merged.instances.push_back(e);
  }
  fs::create_directories(root);
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const auto& entry = ds.manifest.instances[i];
    const auto& inst = ds.instances[i];
    if (inst.lr.size() != entry.count || inst.hr.size() != entry.count)
      throw ContractError("write_dataset: instance '" + entry.source_id + "' count mismatch");
    const fs::path dir = root / entry.dir;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (std::size_t n = 0; n < entry.count; ++n) {
      write_png(dir / lr_name(n), inst.lr.patch(n));
      write_png(dir / hr_name(n), inst.hr.patch(n));
    }
  }
  const fs::path tmp = root / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << json(merged).dump(2) << '\n';
  }
  fs::rename(tmp, root / "manifest.json");
}

namespace {

PatchSet load_set(const fs::path& dir, std::size_t count, bool hr, std::string& gaps) {
  PatchSet ps;
  std::vector<Tensor<float>> imgs;
  for (std::size_t n = 0; n < count; ++n) {
    const std::string name = hr ? hr_name(n) : lr_name(n);
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
      gaps += "\n  missing " + (dir.filename() / name).string();
      continue;
    }
    try {
      imgs.push_back(read_png(p));
    } catch (const Error& e) {
      gaps += "\n  unreadable " + (dir.filename() / name).string() + ": " + e.what();
    }
  }
  if (imgs.size() != count) return ps;
  const std::size_t h = imgs.front().dim(1), w = imgs.front().dim(2);
  ps.pixels = Tensor<float>({count, 3, h, w});
  for (std::size_t n = 0; n < count; ++n) {
    if (imgs[n].dim(1) != h || imgs[n].dim(2) != w) {
      gaps += "\n  " + (dir.filename() / (hr ? hr_name(n) : lr_name(n))).string() +
              ": size differs from the first patch";
      continue;
    }
    std::copy(imgs[n].values().begin(), imgs[n].values().end(), ps.pixels.data() + n * 3 * h * w);
  }
  return ps;
}

}  // namespace

Dataset read_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  const bool synthetic = ds.manifest.kind == "synthetic";
  std::string gaps;
  for (const auto& e : ds.manifest.instances) {
    const fs::path dir = root / e.dir;
    DatasetInstance inst;
    inst.lr = load_set(dir, e.count, false, gaps);
    inst.hr = load_set(dir, e.count, true, gaps);
    inst.lr.source_id = inst.hr.source_id = e.source_id;
    inst.lr.kind = synthetic ? PatchKind::synthetic_lr : PatchKind::real_lr;
    inst.hr.kind = synthetic ? PatchKind::synthetic_hr : PatchKind::real_hr;
    if (!synthetic) inst.lr.coords = inst.hr.coords = e.coords;
    ds.instances.push_back(std::move(inst));
  }
  if (!gaps.empty()) throw IntegrityError("dataset " + root.string() + " is incomplete:" + gaps);
  return ds;
}

ValidationReport validate_dataset(const fs::path& root) {
  ValidationReport rep;
  DatasetManifest m;
  try {
    m = read_manifest(root);
  } catch (const Error& e) {
    rep.problems.push_back(e.what());
    return rep;
  }
  rep.instances = m.instances.size();
  rep.pairs = m.total_pairs();
  if (m.scale < 1) rep.problems.push_back("manifest: scale must be >= 1");
  std::set<std::string> seen;
  for (const auto& e : m.instances) {
    const std::string tag = "instance '" + e.source_id + "'";
    if (!seen.insert(e.source_id).second) rep.problems.push_back(tag + ": duplicate source id");
    if (e.count == 0) rep.problems.push_back(tag + ": no patches");
    if (m.kind == "real") {
      if (e.coords.size() != e.count)
        rep.problems.push_back(tag + ": " + std::to_string(e.coords.size()) +
                               " coords for count " + std::to_string(e.count));
      if (e.image_height && e.image_width && m.crop && m.stride) {
        const std::size_t expect = crop_offsets(e.image_height, m.crop, m.stride).size() *
                                   crop_offsets(e.image_width, m.crop, m.stride).size();
        if (expect != e.count)
          rep.problems.push_back(tag + ": count " + std::to_string(e.count) +
                                 " differs from crop arithmetic " + std::to_string(expect));
      }
      for (const auto& c : e.coords)
        if (e.image_height && (c.top + m.crop > e.image_height || c.left + m.crop > e.image_width))
          rep.problems.push_back(tag + ": crop at (" + std::to_string(c.top) + "," +
                                 std::to_string(c.left) + ") exceeds the source image");
    }
    const fs::path dir = root / e.dir;
    if (!fs::is_directory(dir)) {
      rep.problems.push_back(tag + ": directory " + e.dir + " missing");
      continue;
    }
    for (std::size_t n = 0; n < e.count; ++n) {
      const fs::path lp = dir / lr_name(n), hp = dir / hr_name(n);
      const std::string ln = e.dir + "/" + lr_name(n), hn = e.dir + "/" + hr_name(n);
      bool present = true;
      if (!fs::exists(lp)) rep.problems.push_back("missing " + ln), present = false;
      if (!fs::exists(hp)) rep.problems.push_back("missing " + hn), present = false;
      if (!present) continue;
      try {
        const Tensor<float> lr = read_png(lp), hr = read_png(hp);
        if (m.lr_size && (lr.dim(1) != m.lr_size || lr.dim(2) != m.lr_size))
          rep.problems.push_back(ln + ": size " + std::to_string(lr.dim(2)) + "x" +
                                 std::to_string(lr.dim(1)) + ", manifest says " +
                                 std::to_string(m.lr_size));
        if (hr.dim(1) != lr.dim(1) * m.scale || hr.dim(2) != lr.dim(2) * m.scale)
          rep.problems.push_back(hn + ": size ratio to " + ln + " is not " +
                                 std::to_string(m.scale) + " (HR " + std::to_string(hr.dim(2)) +
                                 "x" + std::to_string(hr.dim(1)) + ", LR " +
                                 std::to_string(lr.dim(2)) + "x" + std::to_string(lr.dim(1)) + ")");
        for (const float v : hr.values())
          if (!(v >= 0.f && v <= 1.f)) {
            rep.problems.push_back(hn + ": pixel outside [0,1]");
            break;
          }
      } catch (const Error& ex) {
        rep.problems.push_back(std::string("unreadable: ") + ex.what());
      }
    }
    // stray numbered files beyond the declared count
    if (fs::exists(dir / lr_name(e.count)) || fs::exists(dir / hr_name(e.count)))
      rep.problems.push_back(tag + ": files beyond declared count " + std::to_string(e.count));
  }
  return rep;
}

}  // namespace idc
