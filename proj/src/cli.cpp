#include "idc/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>

#include "CLI11.hpp"
#include "idc/autograd.hpp"
#include "idc/condenser.hpp"
#include "idc/dataset.hpp"
#include "idc/error.hpp"
#include "idc/gradcheck.hpp"

namespace idc {

namespace fs = std::filesystem;
using nlohmann::json;

Extractor ExtractorSource::load() const {
  return kind == Kind::random ? Extractor::random_init(arch, seed) : Extractor::load_weights(path);
}

std::string RunConfig::output_hash() const {
  json j = condense;
  const std::string blob = j.dump() + extractor_json.dump() + teacher_json.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(blob)));
  return buf;
}

namespace {

const std::set<std::string> kRunKeys = {"dataset",     "output",   "extractor",
                                        "teacher",     "parallelism", "fail_fast"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class V>
V required(const json& j, const char* key, const char* where) {
  if (!j.contains(key))
    throw ConfigError(std::string(where) + ": missing key '" + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + ": bad value for '" + key + "': " + e.what());
  }
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
}

int exit_code_of(const std::exception& e) {
  if (const auto* ie = dynamic_cast<const Error*>(&e)) return ie->exit_code();
  return 1;
}

std::string fmt(double v, int prec = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config: expected a JSON object");
  RunConfig rc;
  json cond = json::object();
  for (const auto& [k, v] : j.items())
    if (!kRunKeys.count(k)) cond[k] = v;
  if (!cond.contains("seeds")) throw ConfigError("run config: 'seeds' must be given explicitly");
  for (const char* s : {"filter", "kmeans", "init", "freqs"})
    if (!cond.at("seeds").contains(s))
      throw ConfigError(std::string("run config: seed '") + s + "' must be given explicitly");
  rc.condense = cond.get<CondenseConfig>();

  rc.dataset = resolve(base_dir, required<std::string>(j, "dataset", "run config"));
  rc.output = resolve(base_dir, required<std::string>(j, "output", "run config"));
  if (j.contains("parallelism")) rc.parallelism = required<std::size_t>(j, "parallelism", "run config");
  if (j.contains("fail_fast")) rc.fail_fast = required<bool>(j, "fail_fast", "run config");
  if (rc.parallelism == 0) throw ConfigError("run config: parallelism must be >= 1");

  rc.extractor_json = required<json>(j, "extractor", "run config");
  const json& ej = rc.extractor_json;
  const auto ekind = required<std::string>(ej, "kind", "extractor");
  if (ekind == "random") {
    only_keys(ej, {"kind", "seed", "widths", "kernels", "leaky_slope"}, "extractor");
    rc.extractor.kind = ExtractorSource::Kind::random;
    rc.extractor.seed = required<std::uint64_t>(ej, "seed", "extractor");
    if (ej.contains("widths")) rc.extractor.arch.widths = required<std::vector<std::size_t>>(ej, "widths", "extractor");
    if (ej.contains("kernels")) rc.extractor.arch.kernels = required<std::vector<std::size_t>>(ej, "kernels", "extractor");
    if (ej.contains("leaky_slope")) rc.extractor.arch.leaky_slope = required<float>(ej, "leaky_slope", "extractor");
  } else if (ekind == "weights") {
    only_keys(ej, {"kind", "path"}, "extractor");
    rc.extractor.kind = ExtractorSource::Kind::weights;
    rc.extractor.path = resolve(base_dir, required<std::string>(ej, "path", "extractor"));
  } else {
    throw ConfigError("extractor: kind must be 'random' or 'weights'");
  }

  rc.teacher_json = j.contains("teacher") ? j.at("teacher") : json{{"kind", "bicubic"}};
  const json& tj = rc.teacher_json;
  const auto tkind = required<std::string>(tj, "kind", "teacher");
  if (tkind == "bicubic") {
    only_keys(tj, {"kind"}, "teacher");
    rc.teacher = UpsamplerBackend::bicubic(1);
  } else if (tkind == "external") {
    only_keys(tj, {"kind", "command"}, "teacher");
    rc.teacher = UpsamplerBackend::external(required<std::string>(tj, "command", "teacher"), 1);
  } else if (tkind == "precomputed") {
    only_keys(tj, {"kind", "dir"}, "teacher");
    rc.teacher = UpsamplerBackend::precomputed(resolve(base_dir, required<std::string>(tj, "dir", "teacher")), 1);
  } else {
    throw ConfigError("teacher: kind must be 'bicubic', 'external' or 'precomputed'");
  }
  return rc;
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + ": " + e.what());
  }
  return parse_run_config(j, fs::absolute(file).parent_path());
}

// ---------------------------------------------------------------------------

int cmd_prepare(const PrepareOptions& o, std::ostream& out, std::ostream& err) {
  if (o.scale < 1) throw ConfigError("--scale must be >= 1");
  if (o.crop == 0 || o.stride == 0) throw ConfigError("--crop and --stride must be >= 1");
  if (o.crop % static_cast<std::size_t>(o.scale) != 0)
    throw ConfigError("crop " + std::to_string(o.crop) + " is not divisible by scale " +
                      std::to_string(o.scale));
  if (!fs::is_directory(o.images)) throw DataError("image directory not found: " + o.images.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.images))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  Dataset ds;
  ds.manifest.kind = "real";
  ds.manifest.scale = o.scale;
  ds.manifest.crop = o.crop;
  ds.manifest.stride = o.stride;
  ds.manifest.lr_size = o.crop / o.scale;
  std::vector<std::string> bad;
  for (const auto& f : files) {
    Tensor<float> img;
    try {
      img = read_png(f);
    } catch (const Error& e) {
      bad.push_back(f.filename().string() + ": " + e.what());
      continue;
    }
    const std::size_t h = img.dim(1), w = img.dim(2);
    if (h < o.crop || w < o.crop) {
      err << "warning: skipping " << f.filename().string() << " (" << w << "x" << h
          << " is smaller than crop " << o.crop << ")\n";
      continue;
    }
    const std::string id = f.stem().string();
    DatasetInstance inst;
    inst.hr = crop_patches(img, o.crop, o.stride, id);
    inst.lr = downsample_bicubic(inst.hr, o.scale);
    InstanceEntry entry{id,
                        instance_dir_name(id),
                        f.filename().string(),
                        h,
                        w,
                        inst.hr.size(),
                        inst.hr.coords};
    ds.manifest.instances.push_back(std::move(entry));
    ds.instances.push_back(std::move(inst));
  }
  if (!bad.empty()) {
    std::string msg = std::to_string(bad.size()) + " undecodable image(s):";
    for (const auto& b : bad) msg += "\n  " + b;
    if (o.strict) throw DataError(msg);
    err << "warning: " << msg << "\n";
  }
  if (ds.instances.empty()) throw DataError("no instances found in " + o.images.string());
  write_dataset(ds, o.out);
  out << "prepared " << ds.instances.size() << " instance(s), " << ds.manifest.total_pairs()
      << " patch pair(s) (HR " << o.crop << ", LR " << ds.manifest.lr_size << ", scale "
      << o.scale << ") -> " << o.out.string() << "\n";
  for (const auto& e : ds.manifest.instances)
    out << "  " << e.source_id << ": " << e.count << " patches\n";
  return 0;
}

int cmd_condense(const fs::path& config, std::optional<std::size_t> threads, std::ostream& out,
                 std::ostream& err) {
  RunConfig rc = load_run_config(config);
  if (threads) rc.parallelism = std::max<std::size_t>(1, *threads);
  const auto started = std::chrono::steady_clock::now();

  if (fs::exists(rc.output / "manifest.json")) {
    const DatasetManifest prev = read_manifest(rc.output);
    if (prev.config_hash != rc.output_hash())
      throw IntegrityError("refusing to append to " + rc.output.string() + ": config hash " +
                           prev.config_hash + " differs from " + rc.output_hash());
  }
  const Dataset real = read_dataset(rc.dataset);
  const Extractor extractor = rc.extractor.load();
  rc.teacher.scale = real.manifest.scale;

  std::vector<PatchSet> lr_sets;
  for (const auto& inst : real.instances) lr_sets.push_back(inst.lr);

  std::mutex console;
  CondenseHooks hooks;
  hooks.on_warning = [&](const std::string& msg) {
    std::lock_guard lock(console);
    err << "warning: " << msg << "\n";
  };
  auto outcomes = condense_dataset(lr_sets, extractor, rc.condense, rc.parallelism, rc.fail_fast, hooks);

  Dataset syn;
  syn.manifest.kind = "synthetic";
  syn.manifest.scale = real.manifest.scale;
  syn.manifest.stride = 0;
  syn.manifest.config_hash = rc.output_hash();
  syn.manifest.seeds = json(rc.condense).at("seeds");
  syn.manifest.seeds["extractor"] = rc.extractor.seed;

  int code = 0;
  std::size_t failed = 0;
  double sum_ins = 0, sum_group = 0, sum_pair = 0;
  fs::create_directories(rc.output / "logs");
  for (auto& oc : outcomes) {
    if (oc.result) {
      try {
        DatasetInstance inst;
        inst.lr = oc.result->synthetic;
        inst.hr = upsample(inst.lr, rc.teacher);
        const std::string dir = instance_dir_name(oc.source_id);
        std::ofstream log(rc.output / "logs" / (dir + ".jsonl"), std::ios::trunc);
        for (const auto& r : oc.result->log)
          log << json{{"iter", r.iteration}, {"l_ins", r.l_ins},     {"l_group", r.l_group},
                      {"l_pair", r.l_pair},  {"total", r.total},     {"grad_norm", r.grad_norm},
                      {"fraction", r.fraction}}
                     .dump()
              << "\n";
        if (!oc.result->log.empty()) {
          sum_ins += oc.result->log.back().l_ins;
          sum_group += oc.result->log.back().l_group;
          sum_pair += oc.result->log.back().l_pair;
        }
        syn.manifest.lr_size = inst.lr.height();
        syn.manifest.crop = inst.hr.height();
        syn.manifest.instances.push_back({oc.source_id, dir, {}, 0, 0, inst.lr.size(), {}});
        syn.instances.push_back(std::move(inst));
        continue;
      } catch (const Error& e) {
        oc.error = std::string("teacher: ") + e.what();
        oc.error_code = e.exit_code();
      }
    }
    ++failed;
    err << "instance '" << oc.source_id << "' failed: " << oc.error << "\n";
    if (code == 0) code = oc.error_code ? oc.error_code : 1;
  }
  if (!syn.instances.empty()) write_dataset(syn, rc.output);

  const std::size_t ok = syn.instances.size();
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const json summary{{"instances", outcomes.size()},
                     {"succeeded", ok},
                     {"failed", failed},
                     {"total_pairs", syn.manifest.total_pairs()},
                     {"mean_final_l_ins", ok ? sum_ins / ok : 0.0},
                     {"mean_final_l_group", ok ? sum_group / ok : 0.0},
                     {"mean_final_l_pair", ok ? sum_pair / ok : 0.0},
                     {"wall_seconds", wall},
                     {"config_hash", syn.manifest.config_hash}};
  std::ofstream(rc.output / "summary.json", std::ios::trunc) << summary.dump(2) << "\n";
  out << "condensed " << ok << "/" << outcomes.size() << " instance(s) into "
      << syn.manifest.total_pairs() << " LR/HR pair(s) in " << fmt(wall, 3) << " s -> "
      << rc.output.string() << "\n";
  if (ok)
    out << "mean final losses: l_ins=" << fmt(sum_ins / ok) << " l_group=" << fmt(sum_group / ok)
        << " l_pair=" << fmt(sum_pair / ok) << "\n";
  return code;
}

int cmd_validate(const fs::path& dataset, std::ostream& out, std::ostream& err) {
  const ValidationReport rep = validate_dataset(dataset);
  if (rep.ok()) {
    out << "ok: " << rep.instances << " instance(s), " << rep.pairs << " pair(s)\n";
    return 0;
  }
  err << rep.problems.size() << " problem(s) in " << dataset.string() << ":\n";
  for (const auto& p : rep.problems) err << "  " << p << "\n";
  return IntegrityError("").exit_code();
}

int cmd_gradcheck(std::uint64_t seed, int precision, bool inject_sign_fault, std::ostream& out) {
  if (precision != 32 && precision != 64) throw ConfigError("--precision must be 32 or 64");
  GradcheckOptions o;
  o.seed = seed;
  o.precision = precision == 64 ? Precision::f64 : Precision::f32;
  set_conv_backward_sign_fault(inject_sign_fault);
  GradcheckReport rep;
  try {
    rep = run_gradcheck(o);
  } catch (...) {
    set_conv_backward_sign_fault(false);
    throw;
  }
  set_conv_backward_sign_fault(false);
  for (const auto& r : rep.ops) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s max_rel_err=%.3e probes=%zu skipped=%zu %s\n",
                  r.op.c_str(), r.max_rel_error, r.probes, r.skipped, r.passed ? "PASS" : "FAIL");
    out << line;
  }
  out << (rep.passed() ? "PASS" : "FAIL") << ": threshold " << fmt(rep.threshold, 3) << ", step "
      << fmt(rep.step, 3) << ", " << precision << "-bit, " << fmt(rep.seconds, 3) << " s\n";
  return rep.passed() ? 0 : NumericError("").exit_code();
}

int cmd_stats(const fs::path& dataset, bool curves, std::ostream& out) {
  const Dataset ds = read_dataset(dataset);
  const auto& m = ds.manifest;
  out << "kind: " << m.kind << "\ninstances: " << m.instances.size()
      << "\npairs: " << m.total_pairs() << "\nscale: " << m.scale << "\nLR size: " << m.lr_size
      << "\nHR size: " << m.crop << "\nconfig hash: " << (m.config_hash.empty() ? "-" : m.config_hash)
      << "\n";
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const auto& lr = ds.instances[i].lr;
    double a = 0, a2 = 0;
    for (const float v : lr.pixels.values()) a += v, a2 += static_cast<double>(v) * v;
    const double cnt = static_cast<double>(lr.pixels.size());
    out << "  " << m.instances[i].source_id << ": " << m.instances[i].count
        << " pairs, LR mean " << fmt(a / cnt, 4) << " std "
        << fmt(std::sqrt(std::max(0.0, a2 / cnt - (a / cnt) * (a / cnt))), 4) << "\n";
    s += a, s2 += a2, n += lr.pixels.size();
  }
  if (n) {
    const double mean = s / n;
    out << "LR pixel mean " << fmt(mean, 4) << " std "
        << fmt(std::sqrt(std::max(0.0, s2 / n - mean * mean)), 4) << "\n";
  }
  if (curves) {
    out << "instance,iter,l_ins,l_group,l_pair,total,grad_norm,fraction\n";
    for (const auto& e : m.instances) {
      std::ifstream log(dataset / "logs" / (e.dir + ".jsonl"));
      if (!log) throw IntegrityError("no loss log for instance '" + e.source_id + "'");
      std::string line;
      while (std::getline(log, line)) {
        const json r = json::parse(line);
        out << e.source_id << "," << r.at("iter") << "," << r.at("l_ins") << ","
            << r.at("l_group") << "," << r.at("l_pair") << "," << r.at("total") << ","
            << r.at("grad_norm") << "," << r.at("fraction") << "\n";
      }
    }
  }
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Instance data condensation for super-resolution training sets", "idc"};
  app.require_subcommand(1);

  PrepareOptions prep;
  auto* p = app.add_subcommand("prepare", "Crop and downsample HR images into a real dataset");
  p->add_option("--images", prep.images, "Directory of PNG images")->required();
  p->add_option("--out", prep.out, "Output dataset root")->required();
  p->add_option("--scale", prep.scale, "Downsampling factor")->capture_default_str();
  p->add_option("--crop", prep.crop, "HR crop size")->capture_default_str();
  p->add_option("--stride", prep.stride, "Crop stride")->capture_default_str();
  p->add_flag("--strict", prep.strict, "Fail on undecodable images instead of skipping them");

  fs::path config;
  std::optional<std::size_t> threads;
  auto* c = app.add_subcommand("condense", "Condense every instance of a real dataset");
  c->add_option("--config", config, "Run config JSON")->required();

  fs::path vroot;
  auto* v = app.add_subcommand("validate", "Check a dataset for integrity problems");
  v->add_option("--dataset", vroot, "Dataset root")->required();

  std::uint64_t gseed = 0;
  int gprec = 64;
  bool fault = false;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient check of every op");
  g->add_option("--seed", gseed, "Seed for the randomized configurations")->capture_default_str();
  g->add_option("--precision", gprec, "32 or 64")->capture_default_str();
  g->add_flag("--inject-sign-fault", fault, "Negate the conv backward pass (self-test)");

  fs::path sroot;
  bool curves = false;
  auto* s = app.add_subcommand("stats", "Print dataset summaries");
  s->add_option("--dataset", sroot, "Dataset root")->required();
  s->add_flag("--curves", curves, "Also print loss curves as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ConfigError("").exit_code();
  }

  if (const char* env = std::getenv("IDC_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (*end != '\0' || n == 0) {
      std::cerr << "error: IDC_THREADS must be a positive integer\n";
      return ConfigError("").exit_code();
    }
    threads = n;
  }

  try {
    if (*p) return cmd_prepare(prep, std::cout, std::cerr);
    if (*c) return cmd_condense(config, threads, std::cout, std::cerr);
    if (*v) return cmd_validate(vroot, std::cout, std::cerr);
    if (*g) return cmd_gradcheck(gseed, gprec, fault, std::cout);
    if (*s) return cmd_stats(sroot, curves, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_of(e);
  }
  return 1;
}

}  // namespace idc
