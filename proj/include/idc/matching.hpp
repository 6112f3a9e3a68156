#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "idc/autograd.hpp"
#include "idc/rlff.hpp"

namespace idc {

/// Fixed Gaussian distribution over characteristic-function frequencies.
struct FrequencySampler {
  std::size_t num_freqs = 64;
  std::size_t dim = 0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// [num_freqs, dim] of i.i.d. N(0, sigma^2).
template <class T>
Tensor<T> sample_frequencies(const FrequencySampler& fs);

/// Empirical characteristic function at each frequency: mean of
/// exp(j <t, row>) as (re, im) pairs.
template <class T>
struct ComplexStats {
  std::vector<T> re;
  std::vector<T> im;

  std::size_t size() const noexcept { return re.size(); }
  T amplitude(std::size_t i) const { return std::hypot(re[i], im[i]); }
  T phase(std::size_t i) const { return std::atan2(im[i], re[i]); }
};

template <class T>
ComplexStats<T> char_fn(const Tensor<T>& rows, const Tensor<T>& t);

inline constexpr double kChfEps = 1e-12;

/// mean_t sqrt(Chf(t) + 1e-12) with
///   Chf = alpha (|Pr| - |Ps|)^2 + (1 - alpha) 2 |Pr||Ps| (1 - cos(a_r - a_s)).
/// The real side enters as precomputed statistics; gradients flow to `syn`.
template <class T>
Var<T> chf_discrepancy(const ComplexStats<T>& real, Var<T> syn, const Tensor<T>& t, T alpha);

template <class T>
Var<T> chf_discrepancy(const Tensor<T>& real_rows, Var<T> syn, const Tensor<T>& t, T alpha);

/// Value-only convenience.
template <class T>
T chf_discrepancy_value(const Tensor<T>& real_rows, const Tensor<T>& syn_rows, const Tensor<T>& t,
                        T alpha);

/// Draws t from `fs` and evaluates the discrepancy over every row.
template <class T>
Var<T> instance_loss(const Tensor<T>& real_rows, Var<T> syn_rows, const FrequencySampler& fs,
                     T alpha);

/// Mean of each local patch's rows: [layout.patches(), C].
template <class T>
Tensor<T> patch_means(const Tensor<T>& rows, const RowLayout& layout);

template <class T>
struct GroupAssignment {
  Tensor<T> centroids;  // [M, C]
  std::vector<std::size_t> real_group_of_patch;
  std::vector<std::size_t> group_sizes;
  std::vector<std::optional<std::size_t>> syn_group_of_patch;
  std::vector<std::size_t> quotas;
  double active_fraction = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (synthetic patch, real patch)

  std::size_t groups() const noexcept { return group_sizes.size(); }
  std::size_t assigned_count() const;
};

struct KMeansOptions {
  std::size_t restarts = 8;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

/// k-means++ seeded Lloyd iterations over patch means; best of
/// `opts.restarts` runs by within-cluster cost.
template <class T>
GroupAssignment<T> kmeans_group(const Tensor<T>& real_patch_means, std::size_t m,
                                std::uint64_t seed, const KMeansOptions& opts = {});

/// Within-cluster sum of squared distances to member means.
template <class T>
double within_cluster_cost(const Tensor<T>& points, std::span<const std::size_t> labels,
                           std::size_t m);

/// Largest-remainder apportionment of `seats` proportional to `sizes`,
/// remainder ties to the lowest index. `floors` are per-group lower bounds
/// (previously filled seats) that are honored first.
std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t seats,
                                   std::span<const std::size_t> floors = {});

/// Replaces centroids with member means of the given real patch features.
template <class T>
void refresh_centroids(GroupAssignment<T>& ga, const Tensor<T>& real_patch_means);

/// Progressive assignment of synthetic patches to groups for a ramp value
/// `fraction` (non-decreasing across calls), then nearest-real pairing.
template <class T>
void assign_synthetic(GroupAssignment<T>& ga, const Tensor<T>& real_patch_means,
                      const Tensor<T>& syn_patch_means, double fraction);

/// Sum over groups holding both real and assigned synthetic patches of the
/// discrepancy between their rows (no further feature map).
template <class T>
Var<T> group_loss(const GroupAssignment<T>& ga, const Tensor<T>& real_rows,
                  const LocalFeatureRows<T>& syn, const RowLayout& real_layout,
                  const Tensor<T>& t, T alpha);

/// Sum over groups of the mean per-pair L1 (elementwise mean) between the
/// paired patches' rows.
template <class T>
Var<T> pair_loss(const GroupAssignment<T>& ga, const Tensor<T>& real_rows,
                 const LocalFeatureRows<T>& syn, const RowLayout& real_layout);

}  // namespace idc
