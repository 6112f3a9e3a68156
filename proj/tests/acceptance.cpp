// Acceptance checks, one PASS/FAIL line per criterion.
// usage: acceptance [--only N]...
#include <chrono>
#include <complex>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "idc/cli.hpp"
#include "idc/condenser.hpp"
#include "idc/dataset.hpp"
#include "idc/gradcheck.hpp"
#include "idc/matching.hpp"
#include "idc/rlff.hpp"
#include "idc/teacher.hpp"
#include "idc/toy.hpp"

using namespace idc;
using idc::test::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ------------------------------------------------------------------------
Verdict gradient_oracle() {
  GradcheckOptions opts;
  opts.precision = Precision::f64;
  opts.seed = 2024;
  opts.configs = 20;
  const auto rep = run_gradcheck(opts);
  double worst = 0;
  std::string worst_op;
  bool composed = false;
  for (const auto& op : rep.ops) {
    if (op.max_rel_error >= worst) {
      worst = op.max_rel_error;
      worst_op = op.op;
    }
    composed |= op.op == "total_loss";
  }
  const bool ok = rep.passed() && composed && worst < 1e-4 && rep.seconds < 120;
  return {ok, std::to_string(rep.ops.size()) + " ops x 20 configs, worst " + fmt(worst) + " (" + worst_op +
                  "), " + fmt(rep.seconds) + " s"};
}

// 2 ------------------------------------------------------------------------
Verdict rlff_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  double worst = 0;
  int cases = 0;
  while (cases < 50) {
    const std::size_t c = 1 + rng.below(4), k = 1 + 2 * rng.below(3);
    if (c * k * k > 32) continue;
    ++cases;
    const std::size_t n = 1 + rng.below(2), h = 3 + rng.below(4), w = 3 + rng.below(4);
    const auto f = random_tensor(rng, {n, c, h, w}, -2, 2);
    const std::size_t cp = c * k * k;
    const auto flt = fourier_filter(build_identity_filter<double>(c, k), rng.next_u64(), 2 * cp);
    Tape<double> tape;
    const auto out = apply_rlff(tape.constant(f), flt, channel_stats(f)).value();

    // independent normalization and DFT
    std::vector<double> mean(c, 0), inv(c, 0);
    const double cnt = static_cast<double>(n * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, ss = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) s += f.at4(i, ch, y, x);
      mean[ch] = s / cnt;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) ss += std::pow(f.at4(i, ch, y, x) - mean[ch], 2);
      inv[ch] = 1 / std::sqrt(ss / cnt + ops::kBatchNormEps);
    }
    const long r = static_cast<long>(k / 2);
    for (std::size_t i = 0; i < n; ++i)
      for (long y = 0; y < static_cast<long>(h); ++y)
        for (long x = 0; x < static_cast<long>(w); ++x) {
          std::vector<double> v;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (long dy = -r; dy <= r; ++dy)
              for (long dx = -r; dx <= r; ++dx) {
                const long yy = y + dy, xx = x + dx;
                const bool in = yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w);
                v.push_back(in ? (f.at4(i, ch, yy, xx) - mean[ch]) * inv[ch] : 0.0);
              }
          for (std::size_t u = 0; u < cp; ++u) {
            std::complex<double> acc;
            for (std::size_t j = 0; j < cp; ++j)
              acc += v[j] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>((u * j) % cp) / cp);
            worst = std::max(worst, std::abs(out.at4(i, u, y, x) - acc.real()));
            worst = std::max(worst, std::abs(out.at4(i, cp + u, y, x) + acc.imag()));
          }
        }
  }
  const double sec = seconds_since(t0);
  return {worst <= 1e-8 && sec < 30, "50 inputs, max abs error " + fmt(worst) + ", " + fmt(sec) + " s"};
}

// 3 ------------------------------------------------------------------------
Verdict chf_properties() {
  Rng rng(5);
  bool phi0 = true;
  double max_amp = 0, max_self = 0, max_closed = 0;
  for (int d = 0; d < 10000; ++d) {
    const std::size_t rows = 1 + rng.below(20), dim = 1 + rng.below(8);
    const auto x = random_tensor(rng, {rows, dim}, -3, 3);
    const auto t = random_tensor(rng, {1, dim}, -10, 10);
    const auto p = char_fn(x, t);
    max_amp = std::max(max_amp, static_cast<double>(p.amplitude(0)));
    if (d < 200) {
      const auto z = char_fn(x, Tensor<double>({1, dim}, 0.0));
      phi0 &= z.re[0] == 1.0 && z.im[0] == 0.0;
      const auto tt = sample_frequencies<double>({16, dim, rng.uniform(0.1, 3), rng.next_u64()});
      max_self = std::max(max_self, chf_discrepancy_value(x, x, tt, rng.uniform()));
    }
  }
  for (int d = 0; d < 50; ++d) {
    const double delta = rng.uniform(0.05, 3);
    const auto t = sample_frequencies<double>({64, 1, 1.0, rng.next_u64()});
    double expect = 0;
    for (double tv : t.values()) expect += std::sqrt(1 - std::cos(tv * delta));
    expect /= 64;
    const double got = chf_discrepancy_value(Tensor<double>({1, 1}, 0.0), Tensor<double>({1, 1}, delta), t, 0.5);
    max_closed = std::max(max_closed, std::abs(got - expect));
  }
  const bool ok = phi0 && max_amp <= 1 + 1e-12 && max_self <= 1e-6 && max_closed <= 1e-10;
  return {ok, std::string("phi(0)=1 ") + (phi0 ? "exact" : "VIOLATED") + ", max|phi| " + fmt(max_amp) +
                  ", max self-discrepancy " + fmt(max_self) + ", closed-form error " + fmt(max_closed)};
}

// 4 ------------------------------------------------------------------------
// Exhaustive minimum of sum (q - share)^2 over allocations with q >= floors.
double brute_apportion(const std::vector<std::size_t>& sizes, std::size_t seats,
                       const std::vector<std::size_t>& floors) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  const std::size_t m = sizes.size();
  std::vector<std::size_t> q(m);
  double best = 1e300;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t k, std::size_t left) {
    if (k + 1 == m) {
      if (left < floors[k]) return;
      q[k] = left;
      double dev = 0;
      for (std::size_t i = 0; i < m; ++i) dev += std::pow(q[i] - seats * sizes[i] / total, 2);
      best = std::min(best, dev);
      return;
    }
    for (std::size_t v = floors[k]; v <= left; ++v) {
      q[k] = v;
      rec(k + 1, left - v);
    }
  };
  rec(0, seats);
  return best;
}

Verdict assignment_invariants() {
  Rng rng(11);
  int bad = 0, steps = 0;
  std::string first;
  auto fail = [&](const std::string& why) {
    if (bad++ == 0) first = why;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t p_real = 4 + rng.below(40), m = 1 + rng.below(4), p_syn = 1 + rng.below(12);
    const auto real = random_tensor(rng, {p_real, 2});
    const auto syn = random_tensor(rng, {p_syn, 2});
    auto ga = kmeans_group(real, m, rng.next_u64());
    std::vector<double> fr{0, rng.uniform(), rng.uniform(), rng.uniform(), 1};
    std::sort(fr.begin(), fr.end());
    std::vector<std::optional<std::size_t>> prev(p_syn);
    for (double f : fr) {
      ++steps;
      std::vector<std::size_t> floors(m, 0);
      for (const auto& g : prev)
        if (g) ++floors[*g];
      assign_synthetic(ga, real, syn, f);
      const auto seats = static_cast<std::size_t>(std::llround(f * p_syn));
      const auto sum = std::accumulate(ga.quotas.begin(), ga.quotas.end(), std::size_t{0});
      if (sum != seats || ga.assigned_count() != seats) fail("quota total");
      const double total = static_cast<double>(p_real);
      double dev = 0;
      for (std::size_t k = 0; k < m; ++k) {
        const double share = seats * ga.group_sizes[k] / total;
        if (std::abs(static_cast<double>(ga.quotas[k]) - std::round(share)) > 1) fail("proportionality");
        dev += std::pow(ga.quotas[k] - share, 2);
      }
      if (dev > brute_apportion(ga.group_sizes, seats, floors) + 1e-9) fail("oracle mismatch");
      std::vector<std::size_t> filled(m, 0);
      for (std::size_t i = 0; i < p_syn; ++i) {
        if (prev[i] && ga.syn_group_of_patch[i] != prev[i]) fail("sticky");
        if (ga.syn_group_of_patch[i]) ++filled[*ga.syn_group_of_patch[i]];
      }
      if (filled != ga.quotas) fail("quota fill");
      if (ga.pairs.size() != seats) fail("pair count");
      for (const auto& [s, r] : ga.pairs)
        if (!ga.syn_group_of_patch[s] || *ga.syn_group_of_patch[s] != ga.real_group_of_patch[r])
          fail("cross-group pair");
      prev = ga.syn_group_of_patch;
    }
  }
  return {bad == 0, "200 cases, " + std::to_string(steps) + " schedule steps, " + std::to_string(bad) +
                        " violations" + (bad ? " (first: " + first + ")" : "")};
}

// 5 ------------------------------------------------------------------------
Verdict kmeans_optimality() {
  Rng rng(21);
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(7), m = 1 + rng.below(std::min<std::size_t>(3, n));
    const auto pts = random_tensor(rng, {n, 2});
    const auto ga = kmeans_group(pts, m, rng.next_u64());
    const double got = within_cluster_cost(pts, ga.real_group_of_patch, m);
    std::vector<std::size_t> lab(n, 0);
    double best = 1e300;
    while (true) {
      std::vector<bool> used(m, false);
      for (auto l : lab) used[l] = true;
      if (std::all_of(used.begin(), used.end(), [](bool b) { return b; }))
        best = std::min(best, within_cluster_cost(pts, lab, m));
      std::size_t i = 0;
      while (i < n && ++lab[i] == m) lab[i++] = 0;
      if (i == n) break;
    }
    hits += got - best <= 1e-9;
  }
  return {hits >= 95, std::to_string(hits) + "/100 optimal"};
}

// 6 and 9 --------------------------------------------------------------------
const Extractor& toy_extractor() {
  static const Extractor ex = Extractor::random_init(ArchSpec{}, 11);
  return ex;
}

CondenseConfig toy_config(std::uint64_t seed, const std::string& variant = "full") {
  CondenseConfig cfg;
  cfg.with_iters(500);
  cfg.r = 0.25;
  cfg.ablation = Ablation::variant(variant);
  cfg.seeds = {seed, seed + 1, seed + 2, seed + 3};
  return cfg;
}

constexpr std::uint64_t kEvalSeed = 99;

Verdict toy_descent() {
  const auto real = sinusoid_textures(64, 16, 7);
  const auto cfg = toy_config(7);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = condense_instance(real, toy_extractor(), cfg);
  const double sec = seconds_since(t0);
  const std::size_t win = 50;
  double tail = 0;
  for (std::size_t i = res.log.size() - win; i < res.log.size(); ++i) tail += res.log[i].l_ins;
  tail /= win;
  const double init = res.log.front().l_ins, ratio = tail / init;
  const auto noise = init_synthetic(real, cfg.r, InitMode::gaussian_noise, derive_seed(cfg.seeds.init, 1, 1));
  const double d_final = instance_discrepancy(real, res.synthetic.pixels, toy_extractor(), cfg, kEvalSeed);
  const double d_noise = instance_discrepancy(real, noise.pixels, toy_extractor(), cfg, kEvalSeed);
  const bool a = ratio <= 0.5, b = d_final <= 0.5 * d_noise;
  return {a && b && sec < 300,
          std::string("(a) smoothed L_ins ") + fmt(init) + " -> " + fmt(tail) + " = " + fmt(100 * ratio) + "% " +
              (a ? "ok" : "NOT <= 50%") + "; (b) discrepancy " + fmt(d_final) + " vs noise init " + fmt(d_noise) +
              " = " + fmt(100 * d_final / d_noise) + "% " + (b ? "ok" : "NOT <= 50%") + "; " + fmt(sec) + " s"};
}

Verdict ablation_order() {
  int ordered = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto real = sinusoid_textures(64, 16, 100 + seed, "toy" + std::to_string(seed));
    double d[3];
    int i = 0;
    for (const char* v : {"v3", "v4", "full"}) {
      const auto cfg = toy_config(seed, v);
      const auto res = condense_instance(real, toy_extractor(), cfg);
      d[i++] = instance_discrepancy(real, res.synthetic.pixels, toy_extractor(), cfg, kEvalSeed);
    }
    const bool ok = d[0] >= d[1] && d[1] >= d[2];
    ordered += ok;
    rows += (rows.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " v3/v4/full " + fmt(d[0]) +
            "/" + fmt(d[1]) + "/" + fmt(d[2]) + (ok ? "" : " x");
  }
  return {ordered >= 4, std::to_string(ordered) + "/5 seeds ordered (" + rows + ")"};
}

// 7 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every file below `a` except the timing summary, compared byte for byte with `b`.
std::size_t compare_trees(const fs::path& a, const fs::path& b, std::string& diff) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "summary.json") continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) diff += " " + rel.string();
  }
  return files;
}

Verdict determinism() {
  idc::test::ScratchDir dir("accept-det");
  const auto root = dir.path();
  fs::create_directories(root / "imgs");
  for (int i = 0; i < 3; ++i) write_png(root / "imgs" / ("img" + std::to_string(i) + ".png"), sinusoid_image(48, 48, 40 + i));
  std::ostringstream sink;
  PrepareOptions prep{root / "imgs", root / "real", 2, 16, 8, true};
  if (cmd_prepare(prep, sink, sink) != 0) return {false, "prepare failed: " + sink.str()};
  auto write = [&](const std::string& out) {
    nlohmann::json j = {{"dataset", "real"},
                        {"output", out},
                        {"extractor", {{"kind", "random"}, {"seed", 5}}},
                        {"iters", 40},
                        {"r", 0.25},
                        {"M", 3},
                        {"seeds", {{"filter", 1}, {"kmeans", 2}, {"init", 3}, {"freqs", 4}}}};
    std::ofstream(root / (out + ".json")) << j.dump(1);
    return root / (out + ".json");
  };
  if (cmd_condense(write("a"), 1, sink, sink) != 0 || cmd_condense(write("b"), 1, sink, sink) != 0 ||
      cmd_condense(write("c"), 4, sink, sink) != 0)
    return {false, "condense failed: " + sink.str()};
  std::string diff_ab, diff_ac;
  const auto files = compare_trees(root / "a", root / "b", diff_ab);
  compare_trees(root / "a", root / "c", diff_ac);
  const bool ok = files > 0 && diff_ab.empty() && diff_ac.empty();
  return {ok, std::to_string(files) + " files (PNGs, logs, manifest) identical across reruns and 1 vs 4 threads" +
                  (ok ? "" : "; differs:" + diff_ab + diff_ac)};
}

// 8 ------------------------------------------------------------------------
Verdict bookkeeping() {
  const auto hr = crop_patches(sinusoid_image(512, 512, 1), 256, 128, "img");
  const auto lr = downsample_bicubic(hr, 4);
  bool ok = hr.size() == 9 && lr.height() == 64 && lr.width() == 64 && hr.height() == 256;
  bool ratios = true;
  for (std::size_t n = 1; n <= 2000; ++n)
    ratios &= synthetic_count(n, 0.1) == std::max<std::size_t>(1, static_cast<std::size_t>(std::nearbyint(0.1 * n)));
  const auto full = synthetic_count(120765, 0.1);
  ok &= ratios && full == 12076;
  return {ok, std::to_string(hr.size()) + " patches of " + std::to_string(lr.height()) + "x" +
                  std::to_string(lr.width()) + " LR from 512x512; 120765 -> " + std::to_string(full) +
                  (ratios ? "; round(0.1 N) for N <= 2000" : "; ratio mismatch")};
}

// 10 -----------------------------------------------------------------------
Verdict teacher_contract() {
  auto lr = sinusoid_textures(16, 16, 3);
  lr.kind = PatchKind::synthetic_lr;
  for (auto& v : lr.pixels.values()) v = quantize_u8(v) / 255.0f;
  const auto hr = upsample(lr, UpsamplerBackend::bicubic(2));
  bool ok = hr.size() == lr.size() && hr.height() == 32 && hr.width() == 32;
  // pairing: each HR patch, downsampled again, is closest to its own LR patch
  const auto back = downsample_bicubic(hr, 2);
  std::size_t paired = 0;
  for (std::size_t i = 0; i < lr.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < lr.size(); ++j) {
      double d = 0;
      const auto a = back.patch(i), b = lr.patch(j);
      for (std::size_t k = 0; k < a.size(); ++k) d += std::pow(a[k] - b[k], 2);
      if (d < best_d) best_d = d, best = j;
    }
    paired += best == i;
  }
  ok &= paired == lr.size();
  const auto nn = upsample(lr, UpsamplerBackend::external(std::string(IDC_NN_UPSAMPLE) + " {in_dir} {out_dir} {scale}", 2));
  std::size_t blocks = 0, exact = 0;
  for (std::size_t i = 0; i < lr.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          ++blocks;
          const float v = lr.pixels.at4(i, c, y, x);
          exact += nn.pixels.at4(i, c, 2 * y, 2 * x) == v && nn.pixels.at4(i, c, 2 * y + 1, 2 * x) == v &&
                   nn.pixels.at4(i, c, 2 * y, 2 * x + 1) == v && nn.pixels.at4(i, c, 2 * y + 1, 2 * x + 1) == v;
        }
  ok &= nn.size() == lr.size() && exact == blocks;
  return {ok, "bicubic x2: " + std::to_string(hr.size()) + " pairs, " + std::to_string(paired) +
                  " index-paired; external nearest-neighbour: " + std::to_string(exact) + "/" +
                  std::to_string(blocks) + " 2x2 blocks exact"};
}

struct Criterion {
  int id;
  const char* name;
  Verdict (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient oracle", gradient_oracle},
    {2, "RLFF equals per-location DFT", rlff_oracle},
    {3, "characteristic-function properties", chf_properties},
    {4, "assignment invariants", assignment_invariants},
    {5, "k-means small-instance optimality", kmeans_optimality},
    {6, "toy end-to-end descent", toy_descent},
    {7, "determinism", determinism},
    {8, "patch and ratio bookkeeping", bookkeeping},
    {9, "ablation ordering v3 >= v4 >= full", ablation_order},
    {10, "teacher stage contract", teacher_contract},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--only N]...\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
