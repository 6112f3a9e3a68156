#include <complex>
#include <numbers>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "idc/error.hpp"
#include "idc/rlff.hpp"

using namespace idc;
using idc::test::random_tensor;

namespace {

// Zero-padded k x k neighborhood of (y, x), flattened in (channel, dy, dx) order.
std::vector<double> neighborhood(const Tensor<double>& f, std::size_t n, long y, long x, std::size_t k) {
  const long r = static_cast<long>(k / 2);
  std::vector<double> v;
  for (std::size_t c = 0; c < f.dim(1); ++c)
    for (long dy = -r; dy <= r; ++dy)
      for (long dx = -r; dx <= r; ++dx) {
        const long yy = y + dy, xx = x + dx;
        const bool in = yy >= 0 && xx >= 0 && yy < static_cast<long>(f.dim(2)) && xx < static_cast<long>(f.dim(3));
        v.push_back(in ? f.at4(n, c, yy, xx) : 0.0);
      }
  return v;
}

std::vector<std::complex<double>> dft(const std::vector<double>& v) {
  const std::size_t m = v.size();
  std::vector<std::complex<double>> out(m);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t j = 0; j < m; ++j)
      out[u] += v[j] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(u * j) / static_cast<double>(m));
  return out;
}

ChannelStats<double> unit_stats(std::size_t c) {
  // mean 0, var 1 - eps so batch norm is the identity
  return {std::vector<double>(c, 0.0), std::vector<double>(c, 1.0 - ops::kBatchNormEps)};
}

}  // namespace

TEST_CASE("identity filter extracts neighborhoods") {
  CHECK(build_identity_filter<double>(1, 1).shape() == Shape{1, 1, 1, 1});
  CHECK(build_identity_filter<double>(1, 1)[0] == 1.0);
  CHECK(build_identity_filter<double>(2, 3).dim(0) == 18);
  CHECK_THROWS_AS(build_identity_filter<double>(1, 2), ConfigError);
  CHECK_THROWS_AS(build_identity_filter<double>(0, 3), ConfigError);

  Rng rng(1);
  for (std::size_t c : {1, 2}) {
    const auto f = random_tensor(rng, {1, c, 5, 4});
    const auto e = build_identity_filter<double>(c, 3);
    Tape<double> tape;
    const auto out = ops::conv2d(tape.constant(f), e).value();
    for (long y = 0; y < 5; ++y)
      for (long x = 0; x < 4; ++x) {
        const auto nb = neighborhood(f, 0, y, x, 3);
        for (std::size_t j = 0; j < nb.size(); ++j) CHECK(out.at4(0, j, y, x) == nb[j]);
      }
  }
}

TEST_CASE("fourier filter") {
  SUBCASE("length-1 DFT") {
    const auto full = fourier_filter(build_identity_filter<double>(1, 1), 0, 2);
    REQUIRE(full.filter.dim(0) == 2);
    CHECK(full.filter[0] == 1.0);
    CHECK(full.filter[1] == 0.0);
    CHECK(full.c_prime == 1);
  }
  SUBCASE("channel sampling") {
    const auto id = build_identity_filter<double>(2, 3);
    const auto a = fourier_filter(id, 17, 10), b = fourier_filter(id, 17, 10);
    CHECK(a.selected == b.selected);
    CHECK(a.filter == b.filter);
    CHECK(std::is_sorted(a.selected.begin(), a.selected.end()));
    CHECK(std::set<std::size_t>(a.selected.begin(), a.selected.end()).size() == 10);
    CHECK_THROWS_AS(fourier_filter(id, 1, 37), ConfigError);
    CHECK_NOTHROW(fourier_filter(id, 1, 36));
    const auto full = fourier_filter(id, 1, 36);
    for (std::size_t i = 0; i < a.selected.size(); ++i) {
      const std::size_t per = 2 * 9;
      CHECK(std::equal(a.filter.data() + i * per, a.filter.data() + (i + 1) * per,
                       full.filter.data() + a.selected[i] * per));
    }
  }
  SUBCASE("sampling is unbiased") {
    const std::size_t full = 18, c_out = 5, draws = 10000;
    std::vector<double> hits(full, 0);
    for (std::size_t d = 0; d < draws; ++d)
      for (auto i : sample_fourier_channels(full, c_out, d)) hits[i] += 1;
    const double p = static_cast<double>(c_out) / full;
    const double se = std::sqrt(p * (1 - p) / draws);
    for (double h : hits) CHECK(std::abs(h / draws - p) <= 3 * se);
  }
}

TEST_CASE("apply_rlff equals the per-location DFT of the neighborhood") {
  Rng rng(3);
  struct Case {
    std::size_t c, k;
  };
  for (const Case cs : {Case{4, 1}, Case{1, 3}, Case{3, 3}, Case{2, 1}}) {
    const auto f = random_tensor(rng, {2, cs.c, 4, 5});
    const auto flt = fourier_filter(build_identity_filter<double>(cs.c, cs.k), 0, 2 * cs.c * cs.k * cs.k);
    Tape<double> tape;
    const auto out = apply_rlff(tape.constant(f), flt, unit_stats(cs.c)).value();
    const std::size_t cp = flt.c_prime;
    double err = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (long y = 0; y < 4; ++y)
        for (long x = 0; x < 5; ++x) {
          const auto bins = dft(neighborhood(f, n, y, x, cs.k));
          for (std::size_t u = 0; u < cp; ++u) {
            err = std::max(err, std::abs(out.at4(n, u, y, x) - bins[u].real()));
            err = std::max(err, std::abs(out.at4(n, cp + u, y, x) + bins[u].imag()));
          }
        }
    CHECK(err < 1e-8);
  }
}

TEST_CASE("apply_rlff contracts") {
  Rng rng(4);
  SUBCASE("constant input is constant per channel in the interior") {
    const Tensor<double> f({1, 2, 6, 6}, 0.3);
    const auto flt = fourier_filter(build_identity_filter<double>(2, 3), 5, 20);
    Tape<double> tape;
    const auto out = apply_rlff(tape.constant(f), flt, unit_stats(2)).value();
    for (std::size_t ch = 0; ch < 20; ++ch)
      for (std::size_t y = 1; y < 5; ++y)
        for (std::size_t x = 1; x < 5; ++x) CHECK(out.at4(0, ch, y, x) == doctest::Approx(out.at4(0, ch, 1, 1)));
  }
  SUBCASE("shape") {
    const auto flt = fourier_filter(build_identity_filter<double>(32, 3), 1, 64);
    Tape<double> tape;
    const auto out = apply_rlff(tape.constant(Tensor<double>({8, 32, 32, 32})), flt, unit_stats(32));
    CHECK(out.shape() == Shape{8, 64, 32, 32});
  }
  SUBCASE("shared filter is enforced") {
    const auto id = build_identity_filter<double>(2, 3);
    const auto fa = fourier_filter(id, 1, 8), fb = fourier_filter(id, 2, 8);
    Tape<double> tape;
    const auto real = tape.constant(random_tensor(rng, {1, 2, 4, 4}));
    const auto syn = tape.leaf(random_tensor(rng, {1, 2, 4, 4}), true);
    CHECK_NOTHROW(apply_rlff_shared(real, syn, fa, fa, unit_stats(2)));
    CHECK_THROWS_AS(apply_rlff_shared(real, syn, fa, fb, unit_stats(2)), ContractError);
  }
  SUBCASE("channel mismatch") {
    const auto flt = fourier_filter(build_identity_filter<double>(2, 3), 1, 8);
    Tape<double> tape;
    CHECK_THROWS_AS(apply_rlff(tape.constant(Tensor<double>({1, 3, 4, 4})), flt, unit_stats(3)), ConfigError);
  }
}

TEST_CASE("partition and fold") {
  Rng rng(6);
  Tape<double> tape;
  SUBCASE("row arithmetic") {
    const auto r = partition_unfold(tape.constant(Tensor<double>({4, 3, 32, 32})), 8);
    CHECK(r.layout.patches() == 64);
    CHECK(r.rows.value().dim(0) == 4096);
    CHECK(r.width() == 3);
  }
  SUBCASE("p at least the map size") {
    const auto r = partition_unfold(tape.constant(Tensor<double>({2, 1, 3, 3}, 1.0)), 4);
    CHECK(r.layout.patches() == 2);
    CHECK(r.rows.value().dim(0) == 32);
    CHECK(r.rows.value()[3] == 0.0);  // padded column of the first tile row
  }
  SUBCASE("fold inverts unfold on the valid region") {
    for (std::size_t p : {1, 2, 3, 4}) {
      const auto f = random_tensor(rng, {2, 3, 5, 7});
      const auto r = partition_unfold(tape.constant(f), p);
      CHECK(fold_rows(r.rows.value(), r.layout, 5, 7) == f);
      for (std::size_t patch = 0; patch < r.layout.patches(); ++patch)
        for (auto row : r.layout.rows_of_patch(patch)) CHECK(r.layout.patch_of_row(row) == patch);
    }
  }
  SUBCASE("tiles mode gives one row per patch") {
    const auto r = partition_tiles(tape.constant(random_tensor(rng, {1, 2, 4, 4})), 2);
    CHECK(r.layout.rows() == 4);
    CHECK(r.width() == 8);
    CHECK(r.layout.rows_of_patch(3) == std::vector<std::size_t>{3});
  }
}
