#include "idc/rlff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "idc/random.hpp"

namespace idc {

std::vector<std::size_t> RowLayout::rows_of_patch(std::size_t patch) const {
  std::vector<std::size_t> out(rows_per_patch());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = patch * rows_per_patch() + i;
  return out;
}

template <class T>
Tensor<T> build_identity_filter(std::size_t c, std::size_t k) {
  if (c == 0) throw ConfigError("identity filter: c must be >= 1");
  if (k % 2 == 0) throw ConfigError("identity filter: k must be odd, got " + std::to_string(k));
  const std::size_t cp = c * k * k;
  Tensor<T> e({cp, c, k, k});
  for (std::size_t j = 0; j < cp; ++j) e[j * cp + j] = T{1};
  return e;
}

std::vector<std::size_t> sample_fourier_channels(std::size_t full_channels, std::size_t c_out,
                                                 std::uint64_t seed) {
  if (c_out == 0) throw ConfigError("fourier filter: C_out must be >= 1");
  if (c_out > full_channels)
    throw ConfigError("fourier filter: C_out " + std::to_string(c_out) + " exceeds 2*C' = " +
                      std::to_string(full_channels));
  Rng rng(seed);
  auto picked = rng.sample_without_replacement(full_channels, c_out);
  std::sort(picked.begin(), picked.end());
  return picked;
}

template <class T>
FourierLocalFilter<T> fourier_filter(const Tensor<T>& identity, std::uint64_t seed,
                                     std::size_t c_out) {
  require_rank(identity, 4, "fourier_filter");
  const std::size_t cp = identity.dim(0), c = identity.dim(1), k = identity.dim(2);
  const std::size_t width = c * k * k;

  FourierLocalFilter<T> out;
  out.k = k;
  out.c = c;
  out.c_prime = cp;
  out.seed = seed;
  out.selected = sample_fourier_channels(2 * cp, c_out, seed);
  out.filter = Tensor<T>({c_out, c, k, k});

  // F[u, d] = sum_j E[j, d] * exp(-2*pi*i*u*j / C'); only nonzeros of E matter.
  const double step = 2.0 * std::numbers::pi / static_cast<double>(cp);
  for (std::size_t j = 0; j < cp; ++j)
    for (std::size_t d = 0; d < width; ++d) {
      const T e = identity[j * width + d];
      if (e == T{0}) continue;
      for (std::size_t s = 0; s < c_out; ++s) {
        const std::size_t ch = out.selected[s];
        const bool imag = ch >= cp;
        const std::size_t u = imag ? ch - cp : ch;
        const double angle = step * static_cast<double>((u * j) % cp);
        const double w = imag ? std::sin(angle) : std::cos(angle);
        out.filter[s * width + d] += e * static_cast<T>(w);
      }
    }
  return out;
}

template <class T>
Var<T> apply_rlff(Var<T> features, const FourierLocalFilter<T>& flt,
                  const ChannelStats<T>& stats) {
  if (features.value().rank() == 4 && features.value().dim(1) != flt.c)
    throw ConfigError("apply_rlff: filter built for " + std::to_string(flt.c) +
                      " channels, features have " + std::to_string(features.value().dim(1)));
  return ops::conv2d(ops::batch_norm(features, stats), flt.filter);
}

template <class T>
std::pair<Var<T>, Var<T>> apply_rlff_shared(Var<T> real, Var<T> syn,
                                            const FourierLocalFilter<T>& real_flt,
                                            const FourierLocalFilter<T>& syn_flt,
                                            const ChannelStats<T>& stats) {
  if (real_flt.seed != syn_flt.seed || real_flt.selected != syn_flt.selected ||
      !(real_flt.filter == syn_flt.filter))
    throw ContractError("real and synthetic branches must share one Fourier filter per iteration");
  return {apply_rlff(real, real_flt, stats), apply_rlff(syn, real_flt, stats)};
}

template <class T>
LocalFeatureRows<T> partition_unfold(Var<T> fprime, std::size_t p) {
  const auto& x = fprime.value();
  require_rank(x, 4, "partition_unfold");
  if (p == 0) throw ConfigError("partition_unfold: p must be >= 1");
  RowLayout layout{x.dim(0), (x.dim(2) + p - 1) / p, (x.dim(3) + p - 1) / p, p, true};
  return {ops::partition_unfold(fprime, p), layout};
}

template <class T>
LocalFeatureRows<T> partition_tiles(Var<T> fprime, std::size_t p) {
  const auto& x = fprime.value();
  require_rank(x, 4, "partition_tiles");
  if (p == 0) throw ConfigError("partition_tiles: p must be >= 1");
  RowLayout layout{x.dim(0), (x.dim(2) + p - 1) / p, (x.dim(3) + p - 1) / p, p, false};
  return {ops::partition_flatten(fprime, p), layout};
}

template <class T>
Tensor<T> fold_rows(const Tensor<T>& rows, const RowLayout& layout, std::size_t h,
                    std::size_t w) {
  require_rank(rows, 2, "fold_rows");
  if (!layout.unfolded) throw ConfigError("fold_rows: layout is not unfolded");
  if (rows.dim(0) != layout.rows()) throw ConfigError("fold_rows: row count mismatch");
  const std::size_t c = rows.dim(1), p = layout.p;
  Tensor<T> out({layout.n, c, h, w});
  for (std::size_t n = 0; n < layout.n; ++n)
    for (std::size_t ty = 0; ty < layout.grid_h; ++ty)
      for (std::size_t tx = 0; tx < layout.grid_w; ++tx)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px) {
            const std::size_t y = ty * p + py, x = tx * p + px;
            if (y >= h || x >= w) continue;
            const std::size_t row =
                ((n * layout.grid_h + ty) * layout.grid_w + tx) * p * p + py * p + px;
            for (std::size_t ch = 0; ch < c; ++ch) out.at4(n, ch, y, x) = rows[row * c + ch];
          }
  return out;
}

#define IDC_INSTANTIATE(T)                                                                    \
  template Tensor<T> build_identity_filter<T>(std::size_t, std::size_t);                     \
  template FourierLocalFilter<T> fourier_filter(const Tensor<T>&, std::uint64_t, std::size_t); \
  template Var<T> apply_rlff(Var<T>, const FourierLocalFilter<T>&, const ChannelStats<T>&);   \
  template std::pair<Var<T>, Var<T>> apply_rlff_shared(                                       \
      Var<T>, Var<T>, const FourierLocalFilter<T>&, const FourierLocalFilter<T>&,             \
      const ChannelStats<T>&);                                                                \
  template LocalFeatureRows<T> partition_unfold(Var<T>, std::size_t);                        \
  template LocalFeatureRows<T> partition_tiles(Var<T>, std::size_t);                         \
  template Tensor<T> fold_rows(const Tensor<T>&, const RowLayout&, std::size_t, std::size_t);

IDC_INSTANTIATE(float)
IDC_INSTANTIATE(double)

#undef IDC_INSTANTIATE

}  // namespace idc
