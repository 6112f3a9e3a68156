#include "idc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "idc/error.hpp"

namespace idc {

using nlohmann::json;

Ablation Ablation::variant(const std::string& name) {
  // columns: local filter, unfold, instance, group, pair
  if (name == "full") return {true, true, true, true, true};
  if (name == "v1") return {false, false, true, false, false};
  if (name == "v2") return {true, false, true, false, false};
  if (name == "v3") return {true, true, true, false, false};
  if (name == "v4") return {true, true, true, true, false};
  if (name == "v5") return {false, true, true, true, true};
  if (name == "v6") return {true, false, true, true, true};
  if (name == "v7") return {true, true, false, true, true};
  throw ConfigError("unknown ablation variant '" + name + "'");
}

CondenseConfig& CondenseConfig::with_iters(std::size_t n) {
  iters = n;
  warmup_end = std::max<std::size_t>(1, n / 10);
  assign_end = std::max(warmup_end, n * 6 / 10);
  return *this;
}

std::size_t CondenseConfig::resolved_c_out(std::size_t feature_channels) const {
  const std::size_t full = 2 * feature_channels * k * k;
  return c_out == 0 ? std::min<std::size_t>(full, 128) : c_out;
}

void CondenseConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (!(r > 0.0 && r <= 1.0)) fail("r must be in (0, 1]");
  if (iters == 0) fail("iters must be >= 1");
  if (!(warmup_end > 0 && warmup_end <= assign_end && assign_end <= iters))
    fail("need 0 < warmup_end <= assign_end <= iters");
  if (w_ins < 0 || w_group < 0 || w_pair < 0) fail("loss weights must be >= 0");
  if (!(alpha >= 0 && alpha <= 1)) fail("alpha must be in [0, 1]");
  if (groups == 0) fail("M must be >= 1");
  if (num_freqs == 0) fail("T must be >= 1");
  if (sigma_t < 0) fail("sigma_t must be >= 0");
  if (k % 2 == 0) fail("k must be odd");
  if (p == 0) fail("p must be >= 1");
  if (!(lr >= 0)) fail("lr must be >= 0");
  if (!(clamp_lo < clamp_hi)) fail("clamp bounds must satisfy lo < hi");
}

CondenseConfig full_scale_preset() {
  CondenseConfig cfg;
  cfg.with_iters(20000);
  cfg.r = 0.1;
  return cfg;
}

namespace {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
const char* to_string(InitMode m) {
  return m == InitMode::real_subset ? "real-subset" : "gaussian-noise";
}
const char* to_string(Precision p) { return p == Precision::f32 ? "32" : "64"; }

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
}

template <class V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const CondenseConfig& c) {
  j = json{{"r", c.r},
           {"iters", c.iters},
           {"warmup_end", c.warmup_end},
           {"assign_end", c.assign_end},
           {"w_ins", c.w_ins},
           {"w_group", c.w_group},
           {"w_pair", c.w_pair},
           {"alpha", c.alpha},
           {"M", c.groups},
           {"T", c.num_freqs},
           {"sigma_t", c.sigma_t},
           {"k", c.k},
           {"C_out", c.c_out},
           {"p", c.p},
           {"lr", c.lr},
           {"optimizer", to_string(c.optimizer)},
           {"init_mode", to_string(c.init_mode)},
           {"seeds",
            {{"filter", c.seeds.filter},
             {"kmeans", c.seeds.kmeans},
             {"init", c.seeds.init},
             {"freqs", c.seeds.freqs}}},
           {"ablation",
            {{"use_local_filter", c.ablation.use_local_filter},
             {"use_unfold", c.ablation.use_unfold},
             {"use_instance", c.ablation.use_instance},
             {"use_group", c.ablation.use_group},
             {"use_pair", c.ablation.use_pair}}},
           {"clamp", {c.clamp_lo, c.clamp_hi}},
           {"precision", to_string(c.precision)}};
}

void from_json(const json& j, CondenseConfig& c) {
  reject_unknown(j,
                 {"r", "iters", "warmup_end", "assign_end", "w_ins", "w_group", "w_pair", "alpha",
                  "M", "T", "sigma_t", "k", "C_out", "p", "lr", "optimizer", "init_mode", "seeds",
                  "ablation", "clamp", "precision", "variant"},
                 "condense config");
  if (j.contains("iters") && !j.contains("warmup_end") && !j.contains("assign_end"))
    c.with_iters(j.at("iters").get<std::size_t>());
  read(j, "r", c.r);
  read(j, "iters", c.iters);
  read(j, "warmup_end", c.warmup_end);
  read(j, "assign_end", c.assign_end);
  read(j, "w_ins", c.w_ins);
  read(j, "w_group", c.w_group);
  read(j, "w_pair", c.w_pair);
  read(j, "alpha", c.alpha);
  read(j, "M", c.groups);
  read(j, "T", c.num_freqs);
  read(j, "sigma_t", c.sigma_t);
  read(j, "k", c.k);
  read(j, "C_out", c.c_out);
  read(j, "p", c.p);
  read(j, "lr", c.lr);
  if (j.contains("optimizer")) {
    const auto s = j.at("optimizer").get<std::string>();
    if (s == "adam") c.optimizer = OptimizerKind::adam;
    else if (s == "sgd") c.optimizer = OptimizerKind::sgd;
    else throw ConfigError("config: optimizer must be adam or sgd");
  }
  if (j.contains("init_mode")) {
    const auto s = j.at("init_mode").get<std::string>();
    if (s == "real-subset") c.init_mode = InitMode::real_subset;
    else if (s == "gaussian-noise") c.init_mode = InitMode::gaussian_noise;
    else throw ConfigError("config: init_mode must be real-subset or gaussian-noise");
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    reject_unknown(s, {"filter", "kmeans", "init", "freqs"}, "seeds");
    read(s, "filter", c.seeds.filter);
    read(s, "kmeans", c.seeds.kmeans);
    read(s, "init", c.seeds.init);
    read(s, "freqs", c.seeds.freqs);
  }
  if (j.contains("variant")) c.ablation = Ablation::variant(j.at("variant").get<std::string>());
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    reject_unknown(a, {"use_local_filter", "use_unfold", "use_instance", "use_group", "use_pair"},
                   "ablation");
    read(a, "use_local_filter", c.ablation.use_local_filter);
    read(a, "use_unfold", c.ablation.use_unfold);
    read(a, "use_instance", c.ablation.use_instance);
    read(a, "use_group", c.ablation.use_group);
    read(a, "use_pair", c.ablation.use_pair);
  }
  if (j.contains("clamp")) {
    const auto& cl = j.at("clamp");
    if (!cl.is_array() || cl.size() != 2) throw ConfigError("config: clamp must be [lo, hi]");
    c.clamp_lo = cl[0].get<double>();
    c.clamp_hi = cl[1].get<double>();
  }
  if (j.contains("precision")) {
    const auto& pj = j.at("precision");
    const std::string s = pj.is_string() ? pj.get<std::string>() : std::to_string(pj.get<int>());
    if (s == "32") c.precision = Precision::f32;
    else if (s == "64") c.precision = Precision::f64;
    else throw ConfigError("config: precision must be 32 or 64");
  }
  c.validate();
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const CondenseConfig& cfg) {
  const std::string dump = json(cfg).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(dump)));
  return buf;
}

}  // namespace idc
