#include "idc/matching.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "idc/random.hpp"

namespace idc {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// rows [R, C] x t [F, C]^T -> [R, F]
template <class T>
RowMat<T> project(const Tensor<T>& rows, const Tensor<T>& t) {
  require_rank(rows, 2, "char_fn rows");
  require_rank(t, 2, "char_fn frequencies");
  if (rows.dim(1) != t.dim(1))
    throw ConfigError("char_fn: rows have width " + std::to_string(rows.dim(1)) +
                      ", frequencies have " + std::to_string(t.dim(1)));
  Eigen::Map<const RowMat<T>> r(rows.data(), rows.dim(0), rows.dim(1));
  Eigen::Map<const RowMat<T>> f(t.data(), t.dim(0), t.dim(1));
  return r * f.transpose();
}

// cos and sin of a projection matrix
template <class T>
struct Spectrum {
  RowMat<T> c, s;

  explicit Spectrum(const RowMat<T>& proj) : c(proj.array().cos()), s(proj.array().sin()) {}

  ComplexStats<T> mean() const {
    const auto nr = static_cast<T>(c.rows());
    ComplexStats<T> cf{std::vector<T>(c.cols()), std::vector<T>(c.cols())};
    const Eigen::Matrix<T, 1, Eigen::Dynamic> re = c.colwise().sum(), im = s.colwise().sum();
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      cf.re[j] = re(j) / nr;
      cf.im[j] = im(j) / nr;
    }
    return cf;
  }
};

template <class T>
T sq_dist(const T* a, const T* b, std::size_t n) {
  T s{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

template <class T>
Tensor<T> gather(const Tensor<T>& rows, std::span<const std::size_t> idx) {
  const std::size_t width = rows.dim(1);
  Tensor<T> out({idx.size(), width});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(rows.data() + idx[i] * width, width, out.data() + i * width);
  return out;
}

template <class T>
Var<T> zero_scalar(Tape<T>& tape) {
  return tape.constant(Tensor<T>({}, std::vector<T>{T{0}}));
}

}  // namespace

template <class T>
Tensor<T> sample_frequencies(const FrequencySampler& fs) {
  if (fs.num_freqs == 0) throw ConfigError("frequency sampler: T must be >= 1");
  if (fs.dim == 0) throw ConfigError("frequency sampler: dim must be >= 1");
  if (fs.sigma < 0) throw ConfigError("frequency sampler: sigma must be >= 0");
  Rng rng(fs.seed);
  Tensor<T> t({fs.num_freqs, fs.dim});
  for (auto& v : t.values()) v = static_cast<T>(fs.sigma * rng.normal());
  return t;
}

template <class T>
ComplexStats<T> char_fn(const Tensor<T>& rows, const Tensor<T>& t) {
  if (rows.rank() != 2 || rows.dim(0) == 0) throw ContractError("char_fn: no rows");
  const Spectrum<T> sp(project(rows, t));
  return sp.mean();
}

template <class T>
Var<T> chf_discrepancy(const ComplexStats<T>& real, Var<T> syn, const Tensor<T>& t, T alpha) {
  if (!(alpha >= T{0} && alpha <= T{1})) throw ConfigError("chf_discrepancy: alpha must be in [0,1]");
  const Tensor<T>& s = syn.value();
  if (s.rank() != 2 || s.dim(0) == 0) throw ContractError("chf_discrepancy: no synthetic rows");
  if (real.size() != t.dim(0)) throw ConfigError("chf_discrepancy: real stats/frequency mismatch");

  const std::size_t nr = s.dim(0), nf = t.dim(0);
  const Spectrum<T> sp(project(s, t));
  const ComplexStats<T> sc = sp.mean();

  const T eps = static_cast<T>(kChfEps);
  const T root_eps = std::sqrt(eps);
  std::vector<T> gc(nf), gs(nf);
  T acc{0};
  for (std::size_t j = 0; j < nf; ++j) {
    const T cr = real.re[j], sr = real.im[j], cs = sc.re[j], ss = sc.im[j];
    const T ar = std::hypot(cr, sr), as = std::hypot(cs, ss);
    const T damp = ar - as;
    // 2|Pr||Ps|(1 - cos da) == |Pr - Ps|^2 - (|Pr| - |Ps|)^2, exactly 0 for equal inputs
    const T diff2 = (cr - cs) * (cr - cs) + (sr - ss) * (sr - ss);
    T chf = alpha * damp * damp + (T{1} - alpha) * (diff2 - damp * damp);
    const bool clamped = chf < T{0};
    if (clamped) chf = T{0};
    const T d = std::sqrt(chf + eps);
    acc += d - root_eps;
    if (clamped) {
      gc[j] = gs[j] = T{0};
      continue;
    }
    const T dl_dchf = T{1} / (T{2} * static_cast<T>(nf) * d);
    // Chf = (2a - 1) damp^2 + (1 - a) diff2
    const T k_amp = (T{2} * alpha - T{1}) * T{2} * damp;
    const T dcs_amp = as > T{0} ? -cs / as : T{0};
    const T dss_amp = as > T{0} ? -ss / as : T{0};
    gc[j] = dl_dchf * (k_amp * dcs_amp - T{2} * (T{1} - alpha) * (cr - cs));
    gs[j] = dl_dchf * (k_amp * dss_amp - T{2} * (T{1} - alpha) * (sr - ss));
  }
  const T loss = root_eps + acc / static_cast<T>(nf);

  // dL/dS = G t, G_ij = (-sin(p_ij) gc_j + cos(p_ij) gs_j) / R
  const T inv_r = T{1} / static_cast<T>(nr);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> gcv(gc.data(), nf), gsv(gs.data(), nf);
  RowMat<T> proj = (sp.c.array().rowwise() * gsv.array() - sp.s.array().rowwise() * gcv.array()) * inv_r;
  const Var<T> inputs[] = {syn};
  return syn.tape->record(
      "chf_discrepancy", Tensor<T>({}, std::vector<T>{loss}), inputs,
      [g = std::move(proj), t, in_id = syn.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        Eigen::Map<const RowMat<T>> f(t.data(), t.dim(0), t.dim(1));
        Eigen::Map<RowMat<T>> out(gin->data(), gin->dim(0), gin->dim(1));
        out.noalias() += gout[0] * (g * f);
      });
}

template <class T>
Var<T> chf_discrepancy(const Tensor<T>& real_rows, Var<T> syn, const Tensor<T>& t, T alpha) {
  return chf_discrepancy(char_fn(real_rows, t), syn, t, alpha);
}

template <class T>
T chf_discrepancy_value(const Tensor<T>& real_rows, const Tensor<T>& syn_rows, const Tensor<T>& t,
                        T alpha) {
  Tape<T> tape;
  return chf_discrepancy(real_rows, tape.constant(syn_rows), t, alpha).value()[0];
}

template <class T>
Var<T> instance_loss(const Tensor<T>& real_rows, Var<T> syn_rows, const FrequencySampler& fs,
                     T alpha) {
  return chf_discrepancy(real_rows, syn_rows, sample_frequencies<T>(fs), alpha);
}

template <class T>
Tensor<T> patch_means(const Tensor<T>& rows, const RowLayout& layout) {
  require_rank(rows, 2, "patch_means");
  if (rows.dim(0) != layout.rows()) throw ConfigError("patch_means: row count does not match layout");
  const std::size_t width = rows.dim(1), per = layout.rows_per_patch();
  Tensor<T> out({layout.patches(), width});
  const T inv = T{1} / static_cast<T>(per);
  for (std::size_t pi = 0; pi < layout.patches(); ++pi)
    for (std::size_t r = 0; r < per; ++r) {
      const T* row = rows.data() + (pi * per + r) * width;
      for (std::size_t c = 0; c < width; ++c) out[pi * width + c] += row[c] * inv;
    }
  return out;
}

template <class T>
std::size_t GroupAssignment<T>::assigned_count() const {
  return static_cast<std::size_t>(std::count_if(syn_group_of_patch.begin(), syn_group_of_patch.end(),
                                                [](const auto& g) { return g.has_value(); }));
}

// ---------------------------------------------------------------------------
// k-means

namespace {

template <class T>
std::size_t nearest(const T* x, const Tensor<T>& centroids, T* best_dist = nullptr) {
  const std::size_t m = centroids.dim(0), width = centroids.dim(1);
  std::size_t best = 0;
  T bd = std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < m; ++k) {
    const T d = sq_dist(x, centroids.data() + k * width, width);
    if (d < bd) {  // strict: ties keep the lowest index
      bd = d;
      best = k;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

template <class T>
Tensor<T> member_means(const Tensor<T>& pts, std::span<const std::size_t> labels, std::size_t m,
                       const Tensor<T>* fallback) {
  const std::size_t width = pts.dim(1);
  Tensor<T> c({m, width});
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++count[labels[i]];
    for (std::size_t d = 0; d < width; ++d) c[labels[i] * width + d] += pts[i * width + d];
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (count[k] == 0) {
      if (fallback) std::copy_n(fallback->data() + k * width, width, c.data() + k * width);
      continue;
    }
    for (std::size_t d = 0; d < width; ++d) c[k * width + d] /= static_cast<T>(count[k]);
  }
  return c;
}

template <class T>
Tensor<T> kmeanspp_init(const Tensor<T>& pts, std::size_t m, Rng& rng) {
  const std::size_t n = pts.dim(0), width = pts.dim(1);
  Tensor<T> c({m, width});
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy_n(pts.data() + first * width, width, c.data());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts.data() + i * width, c.data(), width);
  for (std::size_t k = 1; k < m; ++k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0) {
      const double u = rng.uniform() * total;
      double run = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += d2[i];
        if (u < run && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::copy_n(pts.data() + pick * width, width, c.data() + k * width);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min<double>(d2[i], sq_dist(pts.data() + i * width, c.data() + k * width, width));
  }
  return c;
}

template <class T>
std::vector<std::size_t> assign_all(const Tensor<T>& pts, const Tensor<T>& c) {
  std::vector<std::size_t> labels(pts.dim(0));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = nearest(pts.data() + i * pts.dim(1), c);
  return labels;
}

// Moves the point farthest from its centroid within the largest cluster into
// each empty cluster.
template <class T>
bool repair_empty(const Tensor<T>& pts, std::vector<std::size_t>& labels, Tensor<T>& c,
                  std::size_t m) {
  const std::size_t width = pts.dim(1);
  bool changed = false;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<std::size_t> count(m, 0);
    for (auto l : labels) ++count[l];
    if (count[k] != 0) continue;
    const std::size_t largest = static_cast<std::size_t>(
        std::max_element(count.begin(), count.end()) - count.begin());
    if (count[largest] < 2) break;
    std::size_t far = 0;
    T fd = -1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != largest) continue;
      const T d = sq_dist(pts.data() + i * width, c.data() + largest * width, width);
      if (d > fd) {
        fd = d;
        far = i;
      }
    }
    labels[far] = k;
    std::copy_n(pts.data() + far * width, width, c.data() + k * width);
    changed = true;
  }
  return changed;
}

}  // namespace

template <class T>
double within_cluster_cost(const Tensor<T>& points, std::span<const std::size_t> labels,
                           std::size_t m) {
  const Tensor<T> c = member_means(points, labels, m, static_cast<const Tensor<T>*>(nullptr));
  double cost = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    cost += sq_dist(points.data() + i * points.dim(1), c.data() + labels[i] * points.dim(1),
                    points.dim(1));
  return cost;
}

template <class T>
GroupAssignment<T> kmeans_group(const Tensor<T>& pts, std::size_t m, std::uint64_t seed,
                                const KMeansOptions& opts) {
  require_rank(pts, 2, "kmeans_group");
  const std::size_t n = pts.dim(0);
  if (m == 0) throw ConfigError("kmeans: M must be >= 1");
  if (m > n)
    throw ConfigError("kmeans: M = " + std::to_string(m) + " exceeds " + std::to_string(n) +
                      " real patches");
  const std::size_t width = pts.dim(1);

  std::vector<std::size_t> best_labels;
  Tensor<T> best_c;
  double best_cost = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  for (std::size_t run = 0; run < restarts; ++run) {
    Rng rng(derive_seed(seed, 0x6b6d65616e73ULL, run));
    Tensor<T> c = kmeanspp_init(pts, m, rng);
    std::vector<std::size_t> labels = assign_all(pts, c);
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
      repair_empty(pts, labels, c, m);
      Tensor<T> next = member_means(pts, labels, m, &c);
      double move = 0;
      for (std::size_t k = 0; k < m; ++k)
        move = std::max<double>(move, std::sqrt(sq_dist(next.data() + k * width,
                                                         c.data() + k * width, width)));
      c = std::move(next);
      labels = assign_all(pts, c);
      if (move < opts.tol) break;
    }
    repair_empty(pts, labels, c, m);
    c = member_means(pts, labels, m, &c);
    const double cost = within_cluster_cost(pts, labels, m);
    if (cost < best_cost) {
      best_cost = cost;
      best_labels = std::move(labels);
      best_c = std::move(c);
    }
  }

  GroupAssignment<T> ga;
  ga.centroids = std::move(best_c);
  ga.real_group_of_patch = std::move(best_labels);
  ga.group_sizes.assign(m, 0);
  for (auto l : ga.real_group_of_patch) ++ga.group_sizes[l];
  ga.quotas.assign(m, 0);
  return ga;
}

// ---------------------------------------------------------------------------
// assignment

std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t seats,
                                   std::span<const std::size_t> floors) {
  const std::size_t m = sizes.size();
  if (m == 0) throw ConfigError("apportion: no groups");
  if (!floors.empty() && floors.size() != m) throw ConfigError("apportion: floors size mismatch");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total == 0) throw ConfigError("apportion: all groups empty");

  std::size_t floor_total = 0;
  for (auto f : floors) floor_total += f;
  if (floor_total > seats) throw ContractError("apportion: floors exceed the seat count");

  // Seats go one at a time to the group furthest below its exact share
  // (ties: lowest index). From zero this is largest remainder; with floors it
  // minimizes sum (q - share)^2 subject to q >= floor.
  std::vector<std::size_t> q(m, 0);
  if (!floors.empty()) std::copy(floors.begin(), floors.end(), q.begin());
  const auto deficit = [&](std::size_t k) {
    return static_cast<long double>(seats) * sizes[k] - static_cast<long double>(q[k]) * total;
  };
  for (std::size_t left = seats - floor_total; left > 0; --left) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < m; ++k)
      if (deficit(k) > deficit(best)) best = k;
    ++q[best];
  }
  return q;
}

template <class T>
void refresh_centroids(GroupAssignment<T>& ga, const Tensor<T>& real_patch_means) {
  if (real_patch_means.dim(0) != ga.real_group_of_patch.size())
    throw ConfigError("refresh_centroids: real patch count changed");
  const Tensor<T>* fallback =
      ga.centroids.rank() == 2 && ga.centroids.dim(1) == real_patch_means.dim(1) ? &ga.centroids
                                                                                 : nullptr;
  ga.centroids = member_means(real_patch_means, ga.real_group_of_patch, ga.groups(), fallback);
}

template <class T>
void assign_synthetic(GroupAssignment<T>& ga, const Tensor<T>& real_patch_means,
                      const Tensor<T>& syn_patch_means, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ContractError("assign_synthetic: fraction must be in [0,1]");
  if (fraction < ga.active_fraction)
    throw ContractError("assign_synthetic: fraction decreased from " +
                        std::to_string(ga.active_fraction) + " to " + std::to_string(fraction));
  require_rank(syn_patch_means, 2, "assign_synthetic");
  const std::size_t nsyn = syn_patch_means.dim(0), width = syn_patch_means.dim(1);
  const std::size_t m = ga.groups();
  if (ga.centroids.dim(1) != width || real_patch_means.dim(1) != width)
    throw ConfigError("assign_synthetic: feature width mismatch");
  if (ga.syn_group_of_patch.empty()) ga.syn_group_of_patch.assign(nsyn, std::nullopt);
  if (ga.syn_group_of_patch.size() != nsyn)
    throw ContractError("assign_synthetic: synthetic patch count changed between calls");

  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(nsyn)));
  std::vector<std::size_t> filled(m, 0);
  for (const auto& g : ga.syn_group_of_patch)
    if (g) ++filled[*g];
  ga.quotas = apportion(ga.group_sizes, target, filled);
  ga.active_fraction = fraction;

  std::vector<std::size_t> room(m);
  std::size_t free_total = 0;
  for (std::size_t k = 0; k < m; ++k) {
    room[k] = ga.quotas[k] - filled[k];
    free_total += room[k];
  }

  if (free_total > 0) {
    struct Candidate {
      std::size_t patch;
      std::vector<std::pair<T, std::size_t>> by_dist;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < nsyn; ++i) {
      if (ga.syn_group_of_patch[i]) continue;
      Candidate cand{i, {}};
      for (std::size_t k = 0; k < m; ++k)
        cand.by_dist.emplace_back(
            sq_dist(syn_patch_means.data() + i * width, ga.centroids.data() + k * width, width), k);
      std::sort(cand.by_dist.begin(), cand.by_dist.end());
      cands.push_back(std::move(cand));
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.by_dist.front().first < b.by_dist.front().first;
    });
    for (const auto& cand : cands) {
      if (free_total == 0) break;
      for (const auto& [d, k] : cand.by_dist) {
        if (room[k] == 0) continue;
        ga.syn_group_of_patch[cand.patch] = k;
        --room[k];
        --free_total;
        break;
      }
    }
  }

  ga.pairs.clear();
  for (std::size_t i = 0; i < nsyn; ++i) {
    const auto& g = ga.syn_group_of_patch[i];
    if (!g) continue;
    std::size_t best = 0;
    T bd = std::numeric_limits<T>::infinity();
    bool found = false;
    for (std::size_t r = 0; r < ga.real_group_of_patch.size(); ++r) {
      if (ga.real_group_of_patch[r] != *g) continue;
      const T d = sq_dist(syn_patch_means.data() + i * width, real_patch_means.data() + r * width,
                          width);
      if (!found || d < bd) {
        bd = d;
        best = r;
        found = true;
      }
    }
    if (found) ga.pairs.emplace_back(i, best);
  }
}

template <class T>
Var<T> group_loss(const GroupAssignment<T>& ga, const Tensor<T>& real_rows,
                  const LocalFeatureRows<T>& syn, const RowLayout& real_layout,
                  const Tensor<T>& t, T alpha) {
  Tape<T>& tape = *syn.rows.tape;
  Var<T> total = zero_scalar(tape);
  for (std::size_t g = 0; g < ga.groups(); ++g) {
    std::vector<std::size_t> syn_idx, real_idx;
    for (std::size_t i = 0; i < ga.syn_group_of_patch.size(); ++i)
      if (ga.syn_group_of_patch[i] == g)
        for (auto r : syn.layout.rows_of_patch(i)) syn_idx.push_back(r);
    if (syn_idx.empty()) continue;
    for (std::size_t i = 0; i < ga.real_group_of_patch.size(); ++i)
      if (ga.real_group_of_patch[i] == g)
        for (auto r : real_layout.rows_of_patch(i)) real_idx.push_back(r);
    if (real_idx.empty()) continue;
    const auto real_cf = char_fn(gather(real_rows, real_idx), t);
    total = ops::add(total, chf_discrepancy(real_cf, ops::gather_rows(syn.rows, std::span<const std::size_t>(syn_idx)), t, alpha));
  }
  return total;
}

template <class T>
Var<T> pair_loss(const GroupAssignment<T>& ga, const Tensor<T>& real_rows,
                 const LocalFeatureRows<T>& syn, const RowLayout& real_layout) {
  Tape<T>& tape = *syn.rows.tape;
  Var<T> total = zero_scalar(tape);
  if (syn.rows.value().dim(1) != real_rows.dim(1))
    throw ConfigError("pair_loss: feature width mismatch");
  for (std::size_t g = 0; g < ga.groups(); ++g) {
    std::vector<std::size_t> syn_idx, real_idx;
    for (const auto& [s, r] : ga.pairs) {
      if (ga.syn_group_of_patch.at(s) != g) continue;
      if (ga.real_group_of_patch.at(r) != g)
        throw ContractError("pair_loss: pair crosses groups");
      for (auto row : syn.layout.rows_of_patch(s)) syn_idx.push_back(row);
      for (auto row : real_layout.rows_of_patch(r)) real_idx.push_back(row);
    }
    if (syn_idx.empty()) continue;
    total = ops::add(total, ops::l1_mean(ops::gather_rows(syn.rows, std::span<const std::size_t>(syn_idx)),
                                         gather(real_rows, real_idx)));
  }
  return total;
}

#define IDC_INSTANTIATE(T)                                                                      \
  template Tensor<T> sample_frequencies<T>(const FrequencySampler&);                           \
  template ComplexStats<T> char_fn(const Tensor<T>&, const Tensor<T>&);                        \
  template Var<T> chf_discrepancy(const ComplexStats<T>&, Var<T>, const Tensor<T>&, T);        \
  template Var<T> chf_discrepancy(const Tensor<T>&, Var<T>, const Tensor<T>&, T);              \
  template T chf_discrepancy_value(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Var<T> instance_loss(const Tensor<T>&, Var<T>, const FrequencySampler&, T);         \
  template Tensor<T> patch_means(const Tensor<T>&, const RowLayout&);                          \
  template struct GroupAssignment<T>;                                                          \
  template GroupAssignment<T> kmeans_group(const Tensor<T>&, std::size_t, std::uint64_t,       \
                                           const KMeansOptions&);                              \
  template double within_cluster_cost(const Tensor<T>&, std::span<const std::size_t>,          \
                                      std::size_t);                                            \
  template void refresh_centroids(GroupAssignment<T>&, const Tensor<T>&);                      \
  template void assign_synthetic(GroupAssignment<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                 double);                                                      \
  template Var<T> group_loss(const GroupAssignment<T>&, const Tensor<T>&,                      \
                             const LocalFeatureRows<T>&, const RowLayout&, const Tensor<T>&, T); \
  template Var<T> pair_loss(const GroupAssignment<T>&, const Tensor<T>&,                       \
                            const LocalFeatureRows<T>&, const RowLayout&);

IDC_INSTANTIATE(float)
IDC_INSTANTIATE(double)

#undef IDC_INSTANTIATE

}  // namespace idc
