#pragma once

#include <cstdint>
#include <vector>

#include "idc/autograd.hpp"

namespace idc {

/// Fourier convolution filter built from the identity local-extraction filter:
/// channel u < C' holds Re(DFT(E))[u], channel C' + u holds -Im(DFT(E))[u],
/// and only the `selected` channels (sorted) are materialized.
template <class T>
struct FourierLocalFilter {
  Tensor<T> filter;  // [C_out, c, k, k]
  std::size_t k = 0;
  std::size_t c = 0;
  std::size_t c_prime = 0;  // c * k * k
  std::vector<std::size_t> selected;
  std::uint64_t seed = 0;

  std::size_t c_out() const noexcept { return selected.size(); }
};

/// Provenance of local feature rows. When `unfolded`, each p-by-p tile
/// contributes p*p consecutive rows; otherwise one flattened row per tile.
struct RowLayout {
  std::size_t n = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t p = 1;
  bool unfolded = true;

  std::size_t patches() const noexcept { return n * grid_h * grid_w; }
  std::size_t rows_per_patch() const noexcept { return unfolded ? p * p : 1; }
  std::size_t rows() const noexcept { return patches() * rows_per_patch(); }
  std::size_t patch_of_row(std::size_t row) const noexcept { return row / rows_per_patch(); }
  /// Row indices of one local patch.
  std::vector<std::size_t> rows_of_patch(std::size_t patch) const;
};

template <class T>
struct LocalFeatureRows {
  Var<T> rows;  // [layout.rows(), C]
  RowLayout layout;

  std::size_t width() const { return rows.value().dim(1); }
};

/// [C', c, k, k] with C' = c*k*k; output channel j picks the j-th element of
/// the flattened (channel, dy, dx) neighborhood.
template <class T>
Tensor<T> build_identity_filter(std::size_t c, std::size_t k);

/// DFT of `identity` along its output-channel axis, split into
/// [real parts, negated imaginary parts], then `c_out` of those 2*C' channels
/// chosen uniformly without replacement with `seed`.
template <class T>
FourierLocalFilter<T> fourier_filter(const Tensor<T>& identity, std::uint64_t seed,
                                     std::size_t c_out);

/// Channel indices fourier_filter would select for (2*C', c_out, seed).
std::vector<std::size_t> sample_fourier_channels(std::size_t full_channels, std::size_t c_out,
                                                 std::uint64_t seed);

/// batch_norm(features, stats) then conv2d with the Fourier filter.
template <class T>
Var<T> apply_rlff(Var<T> features, const FourierLocalFilter<T>& flt, const ChannelStats<T>& stats);

/// Applies one filter to both branches. Refuses (ContractError) when the two
/// filters differ in seed, selection or bytes.
template <class T>
std::pair<Var<T>, Var<T>> apply_rlff_shared(Var<T> real, Var<T> syn,
                                            const FourierLocalFilter<T>& real_flt,
                                            const FourierLocalFilter<T>& syn_flt,
                                            const ChannelStats<T>& stats);

template <class T>
LocalFeatureRows<T> partition_unfold(Var<T> fprime, std::size_t p);

/// Tile-level rows without unfolding (one row of C*p*p per tile).
template <class T>
LocalFeatureRows<T> partition_tiles(Var<T> fprime, std::size_t p);

/// Inverse of partition_unfold on the valid region: rows -> [N, C, h, w].
template <class T>
Tensor<T> fold_rows(const Tensor<T>& rows, const RowLayout& layout, std::size_t h, std::size_t w);

}  // namespace idc
