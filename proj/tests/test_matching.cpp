#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "idc/error.hpp"
#include "idc/matching.hpp"

using namespace idc;
using idc::test::random_tensor;

namespace {

double brute_kmeans_cost(const Tensor<double>& pts, std::size_t m) {
  const std::size_t n = pts.dim(0);
  std::vector<std::size_t> labels(n, 0);
  double best = 1e300;
  while (true) {
    std::vector<bool> used(m, false);
    for (auto l : labels) used[l] = true;
    if (std::all_of(used.begin(), used.end(), [](bool b) { return b; }))
      best = std::min(best, within_cluster_cost(pts, labels, m));
    std::size_t i = 0;
    while (i < n && ++labels[i] == m) labels[i++] = 0;
    if (i == n) break;
  }
  return best;
}

// Smallest sum of squared deviations from the exact shares over every
// allocation with q >= floors summing to seats (exhaustive).
double best_apportion_dev(const std::vector<std::size_t>& sizes, std::size_t seats,
                          const std::vector<std::size_t>& floors = {}) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  const std::size_t m = sizes.size();
  std::vector<std::size_t> q(m, 0);
  double best = 1e300;
  const auto rec = [&](auto&& self, std::size_t k, std::size_t left) -> void {
    if (k + 1 == m) {
      q[k] = left;
      if (!floors.empty() && q[k] < floors[k]) return;
      double dev = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double share = seats * sizes[i] / total;
        dev += (q[i] - share) * (q[i] - share);
      }
      best = std::min(best, dev);
      return;
    }
    for (std::size_t v = floors.empty() ? 0 : floors[k]; v <= left; ++v) {
      q[k] = v;
      self(self, k + 1, left - v);
    }
  };
  rec(rec, 0, seats);
  return best;
}

double apportion_dev(const std::vector<std::size_t>& sizes, std::size_t seats,
                     const std::vector<std::size_t>& q) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  double dev = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double share = seats * sizes[k] / total;
    dev += (q[k] - share) * (q[k] - share);
  }
  return dev;
}

LocalFeatureRows<double> rows_of(Tape<double>& tape, const Tensor<double>& t, std::size_t patches,
                                 bool leaf = true) {
  RowLayout layout{patches, 1, 1, 1, false};
  return {leaf ? tape.leaf(t, true) : tape.constant(t), layout};
}

}  // namespace

TEST_CASE("characteristic function basics") {
  Rng rng(1);
  const auto x = random_tensor(rng, {50, 6});
  const auto t = sample_frequencies<double>({16, 6, 1.0, 3});
  CHECK(t.shape() == Shape{16, 6});
  const auto phi = char_fn(x, sample_frequencies<double>({1, 6, 0.0, 3}));
  CHECK(phi.re[0] == 1.0);
  CHECK(phi.im[0] == 0.0);
  const auto p = char_fn(x, t);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.amplitude(i) <= 1.0 + 1e-12);
  CHECK(chf_discrepancy_value(x, x, t, 0.5) <= 1e-6);
  CHECK(sample_frequencies<double>({16, 6, 1.0, 3}) == t);
}

TEST_CASE("frequency sampler variance") {
  const auto t = sample_frequencies<double>({4000, 5, 2.0, 11});
  double s = 0, ss = 0;
  for (double v : t.values()) {
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(t.size()), mean = s / n, var = ss / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(4.0).epsilon(0.03));
}

TEST_CASE("one-dimensional closed form") {
  // single points a and b: |Phi_a - Phi_b|^2 = 2 - 2cos(t d), amplitudes equal
  const double d = 0.7;
  const Tensor<double> a({1, 1}, 0.2), b({1, 1}, 0.2 + d);
  const auto t = sample_frequencies<double>({32, 1, 1.5, 5});
  for (double alpha : {0.0, 0.5, 1.0}) {
    double expect = 0;
    for (double tv : t.values()) {
      const double dist = 2 - 2 * std::cos(tv * d);
      // amplitude difference is zero, so alpha only scales the phase term
      expect += std::sqrt((1 - alpha) * dist + kChfEps) - std::sqrt(kChfEps);
    }
    expect = expect / 32 + std::sqrt(kChfEps);
    CHECK(chf_discrepancy_value(a, b, t, alpha) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("discrepancy properties") {
  Rng rng(2);
  const auto real = random_tensor(rng, {40, 4});
  const auto syn = random_tensor(rng, {12, 4});
  const auto t = sample_frequencies<double>({32, 4, 1.0, 8});
  const double v = chf_discrepancy_value(real, syn, t, 0.5);
  CHECK(v > 0.01);

  SUBCASE("row permutation invariance") {
    Tensor<double> perm(syn.shape());
    for (std::size_t i = 0; i < 12; ++i) std::copy_n(syn.data() + (11 - i) * 4, 4, perm.data() + i * 4);
    CHECK(chf_discrepancy_value(real, perm, t, 0.5) == doctest::Approx(v).epsilon(1e-12));
  }
  SUBCASE("gradient reaches the synthetic rows") {
    Tape<double> tape;
    const auto s = tape.leaf(syn, true);
    tape.backward(chf_discrepancy(real, s, t, 0.5));
    const auto* g = tape.grad(s);
    REQUIRE(g != nullptr);
    double norm = 0;
    for (double x : g->values()) norm += x * x;
    CHECK(norm > 0);
  }
  SUBCASE("moving synthetic rows toward real reduces the discrepancy") {
    Tensor<double> closer(syn.shape());
    for (std::size_t i = 0; i < 12 * 4; ++i) closer[i] = 0.9 * real[i] + 0.1 * syn[i];
    CHECK(chf_discrepancy_value(real, closer, t, 0.5) < v);
  }
}

TEST_CASE("apportion") {
  const std::vector<std::size_t> s{50, 30, 20};
  CHECK(apportion(s, 10) == std::vector<std::size_t>{5, 3, 2});
  CHECK(apportion(s, 0) == std::vector<std::size_t>{0, 0, 0});
  const std::vector<std::size_t> floors{0, 3, 0};
  const auto q = apportion(std::vector<std::size_t>{10, 1, 10}, 5, floors);
  CHECK(q[1] == 3);
  CHECK(std::accumulate(q.begin(), q.end(), std::size_t{0}) == 5);

  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng.below(4);
    std::vector<std::size_t> sizes(m);
    for (auto& v : sizes) v = 1 + rng.below(40);
    const std::size_t seats = rng.below(14);
    const auto got = apportion(sizes, seats);
    CHECK(std::accumulate(got.begin(), got.end(), std::size_t{0}) == seats);
    const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
    for (std::size_t k = 0; k < m; ++k) CHECK(std::abs(got[k] - seats * sizes[k] / total) < 1.0);
    CHECK(apportion_dev(sizes, seats, got) <= best_apportion_dev(sizes, seats) + 1e-9);
  }
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng.below(4), seats = rng.below(14);
    std::vector<std::size_t> sizes(m), fl(m, 0);
    for (auto& v : sizes) v = 1 + rng.below(40);
    for (std::size_t left = seats; left > 0 && rng.uniform() < 0.7; --left) ++fl[rng.below(m)];
    const auto got = apportion(sizes, seats, fl);
    CHECK(std::accumulate(got.begin(), got.end(), std::size_t{0}) == seats);
    for (std::size_t k = 0; k < m; ++k) CHECK(got[k] >= fl[k]);
    CHECK(apportion_dev(sizes, seats, got) <= best_apportion_dev(sizes, seats, fl) + 1e-9);
  }
  CHECK_THROWS_AS(apportion(std::vector<std::size_t>{}, 3), ConfigError);
  CHECK_THROWS_AS(apportion(s, 2, floors), ContractError);
}

TEST_CASE("k-means against exhaustive search") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 7, m = 2 + trial % 2;
    const auto pts = random_tensor(rng, {n, 2});
    const auto ga = kmeans_group(pts, m, 100 + trial);
    CHECK(ga.groups() == m);
    CHECK(std::accumulate(ga.group_sizes.begin(), ga.group_sizes.end(), std::size_t{0}) == n);
    for (auto sz : ga.group_sizes) CHECK(sz > 0);
    const double cost = within_cluster_cost(pts, ga.real_group_of_patch, m);
    CHECK(cost <= brute_kmeans_cost(pts, m) * (1 + 1e-9) + 1e-12);
    const auto again = kmeans_group(pts, m, 100 + trial);
    CHECK(again.real_group_of_patch == ga.real_group_of_patch);
  }
  CHECK_THROWS_AS(kmeans_group(random_tensor(rng, {3, 2}), 4, 1), ConfigError);
}

TEST_CASE("progressive assignment") {
  Rng rng(5);
  const std::size_t nreal = 30, nsyn = 10;
  const auto real = random_tensor(rng, {nreal, 3});
  const auto syn = random_tensor(rng, {nsyn, 3});
  auto ga = kmeans_group(real, 3, 9);
  std::vector<std::optional<std::size_t>> prev(nsyn);
  std::size_t prev_count = 0;
  for (double f : {0.0, 0.15, 0.4, 0.4, 0.75, 1.0}) {
    assign_synthetic(ga, real, syn, f);
    const auto count = ga.assigned_count();
    CHECK(count == static_cast<std::size_t>(std::llround(f * nsyn)));
    CHECK(count >= prev_count);
    for (std::size_t i = 0; i < nsyn; ++i)
      if (prev[i]) CHECK(ga.syn_group_of_patch[i] == prev[i]);
    for (const auto& [s, r] : ga.pairs) {
      REQUIRE(ga.syn_group_of_patch[s]);
      CHECK(*ga.syn_group_of_patch[s] == ga.real_group_of_patch[r]);
    }
    prev = ga.syn_group_of_patch;
    prev_count = count;
  }
  CHECK_THROWS_AS(assign_synthetic(ga, real, syn, 0.5), ContractError);
  CHECK_THROWS_AS(assign_synthetic(ga, real, syn, 1.5), ContractError);
}

TEST_CASE("single group at full fraction is the instance discrepancy") {
  Rng rng(7);
  const auto real = random_tensor(rng, {10, 3});
  const auto syn = random_tensor(rng, {4, 3});
  const auto t = sample_frequencies<double>({16, 3, 1.0, 4});
  auto ga = kmeans_group(real, 1, 1);
  assign_synthetic(ga, real, syn, 1.0);
  Tape<double> tape;
  const auto rows = rows_of(tape, syn, 4);
  const double g = group_loss(ga, real, rows, RowLayout{10, 1, 1, 1, false}, t, 0.5).value()[0];
  CHECK(g == doctest::Approx(chf_discrepancy_value(real, syn, t, 0.5)).epsilon(1e-12));
}

TEST_CASE("group and pair losses") {
  Rng rng(6);
  const std::size_t nreal = 12, nsyn = 6;
  const auto real = random_tensor(rng, {nreal, 4});
  const auto t = sample_frequencies<double>({16, 4, 1.0, 2});
  auto ga = kmeans_group(real, 2, 1);

  SUBCASE("zero when synthetic rows copy their paired real rows") {
    Tensor<double> syn({nsyn, 4});
    for (std::size_t i = 0; i < nsyn; ++i) std::copy_n(real.data() + i * 4, 4, syn.data() + i * 4);
    assign_synthetic(ga, real, syn, 1.0);
    for (const auto& [s, r] : ga.pairs) std::copy_n(real.data() + r * 4, 4, syn.data() + s * 4);
    Tape<double> tape;
    const auto rows = rows_of(tape, syn, nsyn);
    const RowLayout rl{nreal, 1, 1, 1, false};
    CHECK(pair_loss(ga, real, rows, rl).value()[0] == doctest::Approx(0.0));
  }
  SUBCASE("gradient flows and nothing is active at fraction zero") {
    const auto syn = random_tensor(rng, {nsyn, 4});
    const RowLayout rl{nreal, 1, 1, 1, false};
    assign_synthetic(ga, real, syn, 0.0);
    {
      Tape<double> tape;
      const auto rows = rows_of(tape, syn, nsyn);
      CHECK(group_loss(ga, real, rows, rl, t, 0.5).value()[0] == 0.0);
      CHECK(pair_loss(ga, real, rows, rl).value()[0] == 0.0);
    }
    assign_synthetic(ga, real, syn, 1.0);
    Tape<double> tape;
    const auto rows = rows_of(tape, syn, nsyn);
    const auto g = group_loss(ga, real, rows, rl, t, 0.5);
    const auto p = pair_loss(ga, real, rows, rl);
    CHECK(g.value()[0] > 0);
    CHECK(p.value()[0] > 0);
    tape.backward(ops::add(g, p));
    REQUIRE(tape.grad(rows.rows) != nullptr);
  }
}
