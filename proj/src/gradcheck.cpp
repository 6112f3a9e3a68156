#include "idc/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "idc/condenser.hpp"
#include "idc/matching.hpp"
#include "idc/random.hpp"
#include "idc/rlff.hpp"

namespace idc {

bool GradcheckReport::passed() const {
  return !ops.empty() &&
         std::all_of(ops.begin(), ops.end(), [](const OpReport& r) { return r.passed; });
}

namespace {

using Pattern = std::vector<bool>;

template <class T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// sum_i w_i x_i with constant weights, so every output element matters.
template <class T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& w) {
  const Tensor<T>& xv = x.value();
  T total{0};
  for (std::size_t i = 0; i < xv.size(); ++i) total += w[i] * xv[i];
  const Var<T> inputs[] = {x};
  return x.tape->record("weighted_sum", Tensor<T>({}, std::vector<T>{total}), inputs,
                        [w, id = x.id](const Tensor<T>& gout, Tape<T>& tape) {
                          Tensor<T>* g = tape.grad_buffer(id);
                          if (!g) return;
                          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += gout[0] * w[i];
                        });
}

template <class T>
Pattern sign_pattern(const Tensor<T>& v) {
  Pattern p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i] > T{0};
  return p;
}

template <class U>
Tensor<U> as(const Tensor<double>& t) {
  return t.cast<U>();
}

// Analytic gradient at precision T against a 64-bit central difference of
// the same function. `f` and `pattern` are generic over the scalar type.
template <class T, class F, class P>
void check_case(OpReport& rep, Rng& rng, const Tensor<double>& x0, const F& f, const P& pattern,
                std::size_t probes, double h) {
  Tape<T> tape;
  const Var<T> x = tape.leaf(as<T>(x0), true);
  tape.backward(f(x));
  const Tensor<T>* gp = tape.grad(x);
  const Tensor<T> g = gp ? *gp : Tensor<T>(x0.shape());

  auto eval = [&](const Tensor<double>& v) {
    Tape<double> tp;
    return f(tp.leaf(v, false)).value()[0];
  };
  std::vector<std::size_t> idx;
  if (x0.size() <= probes) {
    idx.resize(x0.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  } else {
    idx = rng.sample_without_replacement(x0.size(), probes);
  }
  std::vector<std::pair<double, double>> pairs;
  double scale = 0;
  for (const std::size_t i : idx) {
    Tensor<double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    if (pattern(xp) != pattern(xm)) {
      ++rep.skipped;
      continue;
    }
    const double n = (eval(xp) - eval(xm)) / (2 * h);
    pairs.emplace_back(static_cast<double>(g[i]), n);
    scale = std::max(scale, std::abs(n));
  }
  for (const auto& [a, n] : pairs) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-3 * scale, 1e-30});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(a - n) / denom);
    ++rep.probes;
  }
}

const auto no_kinks = [](const Tensor<double>&) { return Pattern{}; };

template <class T>
std::vector<OpReport> run_suite(const GradcheckOptions& o, double h, double thr) {
  std::vector<OpReport> reps;
  auto report = [&](const std::string& name) -> OpReport& {
    for (auto& r : reps)
      if (r.op == name) return r;
    reps.push_back({name});
    return reps.back();
  };
  using D = Tensor<double>;

  for (std::size_t cfg = 0; cfg < o.configs; ++cfg) {
    Rng rng(derive_seed(o.seed, 0x6763, cfg));
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3);
    const std::size_t hh = 3 + rng.below(4), ww = 3 + rng.below(4);
    const std::size_t k = rng.below(2) ? 3 : 1;
    const D x4 = random_tensor<double>(rng, {n, c, hh, ww}, -1, 1);
    const D w4 = random_tensor<double>(rng, {n, c, hh, ww}, -1, 1);

    {
      const std::size_t co = 1 + rng.below(3);
      const D filt = random_tensor<double>(rng, {co, c, k, k}, -1, 1);
      const D w = random_tensor<double>(rng, {n, co, hh, ww}, -1, 1);
      check_case<T>(report("conv2d"), rng, x4,
                    [&]<class U>(Var<U> v) { return weighted_sum(ops::conv2d(v, as<U>(filt)), as<U>(w)); },
                    no_kinks, o.probes, h);
    }
    check_case<T>(report("leaky_relu"), rng, x4,
                  [&]<class U>(Var<U> v) {
                    return weighted_sum(ops::leaky_relu(v, static_cast<U>(0.2)), as<U>(w4));
                  },
                  sign_pattern<double>, o.probes, h);
    {
      std::vector<double> mean(c), var(c);
      for (std::size_t i = 0; i < c; ++i) {
        mean[i] = rng.uniform(-0.5, 0.5);
        var[i] = rng.uniform(0.1, 2.0);
      }
      check_case<T>(report("batch_norm"), rng, x4,
                    [&]<class U>(Var<U> v) {
                      const ChannelStats<U> st{{mean.begin(), mean.end()}, {var.begin(), var.end()}};
                      return weighted_sum(ops::batch_norm(v, st), as<U>(w4));
                    },
                    no_kinks, o.probes, h);
    }
    {
      const std::size_t p = 1 + rng.below(3);
      const std::size_t rows = n * ((hh + p - 1) / p) * ((ww + p - 1) / p) * p * p;
      const D wu = random_tensor<double>(rng, {rows, c}, -1, 1);
      const D wf = random_tensor<double>(rng, {rows / (p * p), c * p * p}, -1, 1);
      check_case<T>(report("partition_unfold"), rng, x4,
                    [&]<class U>(Var<U> v) { return weighted_sum(ops::partition_unfold(v, p), as<U>(wu)); },
                    no_kinks, o.probes, h);
      check_case<T>(report("partition_flatten"), rng, x4,
                    [&]<class U>(Var<U> v) { return weighted_sum(ops::partition_flatten(v, p), as<U>(wf)); },
                    no_kinks, o.probes, h);
    }
    const std::size_t r = 3 + rng.below(6), d = 1 + rng.below(4);
    const D x2 = random_tensor<double>(rng, {r, d}, -1, 1);
    {
      std::vector<std::size_t> sel;
      for (std::size_t i = 0; i < r; ++i)
        if (rng.below(2)) sel.push_back(i);
      sel.push_back(rng.below(r));  // duplicate rows accumulate
      const D w = random_tensor<double>(rng, {sel.size(), d}, -1, 1);
      check_case<T>(report("gather_rows"), rng, x2,
                    [&]<class U>(Var<U> v) {
                      return weighted_sum(ops::gather_rows(v, std::span<const std::size_t>(sel)), as<U>(w));
                    },
                    no_kinks, o.probes, h);
    }
    {
      const double f = rng.uniform(-2, 2);
      const D w2 = random_tensor<double>(rng, {r, d}, -1, 1);
      check_case<T>(report("sum"), rng, x2,
                    [&]<class U>(Var<U> v) { return ops::sum(ops::scale(ops::add(v, v), static_cast<U>(f))); },
                    no_kinks, o.probes, h);
      check_case<T>(report("scale_add"), rng, x2,
                    [&]<class U>(Var<U> v) {
                      return ops::add(weighted_sum(v, as<U>(w2)), ops::scale(ops::sum(v), static_cast<U>(f)));
                    },
                    no_kinks, o.probes, h);
      const D target = random_tensor<double>(rng, {r, d}, -1, 1);
      check_case<T>(report("l1_mean"), rng, x2,
                    [&]<class U>(Var<U> v) { return ops::l1_mean(v, as<U>(target)); },
                    [&](const D& v) {
                      D diff = v;
                      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= target[i];
                      return sign_pattern(diff);
                    },
                    o.probes, h);
    }
    {
      const std::size_t nr = 4 + rng.below(12);
      const D real = random_tensor<double>(rng, {nr, d}, -1, 1);
      const D t = random_tensor<double>(rng, {2 + rng.below(6), d}, -2, 2);
      const double alpha = rng.uniform(0, 1);
      check_case<T>(report("chf_discrepancy"), rng, x2,
                    [&]<class U>(Var<U> v) {
                      return chf_discrepancy(as<U>(real), v, as<U>(t), static_cast<U>(alpha));
                    },
                    no_kinks, o.probes, h);
    }
    {
      ArchSpec arch{{c, 2 + rng.below(3), 2 + rng.below(3)}, {k, 3}, 0.2f};
      const Extractor ex = Extractor::random_init(arch, rng.below(1000));
      const D w = random_tensor<double>(rng, {n, arch.widths.back(), hh, ww}, -1, 1);
      check_case<T>(report("extractor"), rng, x4,
                    [&]<class U>(Var<U> v) { return weighted_sum(ex.extract(v), as<U>(w)); },
                    [&](const D& v) { return ex.activation_pattern(v); }, o.probes, h);
    }
    {
      const std::size_t kr = rng.below(2) ? 3 : 1;
      const std::size_t c_out = 1 + rng.below(2 * c * kr * kr);
      const std::uint64_t fseed = rng.below(1u << 30);
      const D feats = random_tensor<double>(rng, {3, c, hh, ww}, -1, 1);
      const D w = random_tensor<double>(rng, {n, c_out, hh, ww}, -1, 1);
      check_case<T>(report("apply_rlff"), rng, x4,
                    [&]<class U>(Var<U> v) {
                      const auto flt = fourier_filter(build_identity_filter<U>(c, kr), fseed, c_out);
                      return weighted_sum(apply_rlff(v, flt, channel_stats(as<U>(feats))), as<U>(w));
                    },
                    no_kinks, o.probes, h);
    }
    {  // losses on a small instance through extractor and RLFF
      PatchSet real;
      real.source_id = "gradcheck";
      real.kind = PatchKind::real_lr;
      real.pixels = random_tensor<float>(rng, {2, 3, 8, 8}, 0.1, 0.9);
      CondenseConfig cc;
      cc.r = 0.5;
      cc.groups = 2;
      cc.num_freqs = 8;
      cc.p = 4;
      cc.k = 3;
      cc.c_out = 16;
      cc.w_pair = rng.uniform(0.05, 0.5);
      cc.ablation.use_unfold = rng.below(4) != 0;
      const Extractor ex = Extractor::random_init(ArchSpec{{3, 4, 4}, {3, 3}, 0.2f}, rng.below(1000));
      const FeaturePipeline<double> pipe_d(ex, real.pixels.cast<double>(), cc);
      const FeaturePipeline<float> pipe_f(ex, real.pixels.cast<float>(), cc);
      auto pipe = [&]<class U>(Var<U> v, std::uint64_t seed) {
        if constexpr (std::is_same_v<U, double>)
          return pipe_d.run(v, seed);
        else
          return pipe_f.run(v, seed);
      };
      const D syn0 = random_tensor<double>(rng, {1, 3, 8, 8}, 0.1, 0.9);
      const std::uint64_t fseed = rng.below(1u << 30);
      const D t = sample_frequencies<double>({cc.num_freqs, pipe_d.row_width(), 1.0, rng.below(1u << 30)});

      // The assignment is not differentiable and is held fixed.
      Tape<double> tape0;
      const auto s0 = pipe_d.run(tape0.constant(syn0), fseed);
      const D rm = patch_means(s0.real_rows, s0.real_layout);
      GroupAssignment<double> ga = kmeans_group(rm, cc.groups, 5);
      assign_synthetic(ga, rm, patch_means(s0.syn.rows.value(), s0.syn.layout), 1.0);
      auto ga_as = [&]<class U>() {
        GroupAssignment<U> g;
        g.centroids = as<U>(ga.centroids);
        g.real_group_of_patch = ga.real_group_of_patch;
        g.group_sizes = ga.group_sizes;
        g.syn_group_of_patch = ga.syn_group_of_patch;
        g.quotas = ga.quotas;
        g.active_fraction = ga.active_fraction;
        g.pairs = ga.pairs;
        return g;
      };
      const auto ga_f = ga_as.template operator()<float>();
      auto ga_for = [&]<class U>() -> const GroupAssignment<U>& {
        if constexpr (std::is_same_v<U, double>)
          return ga;
        else
          return ga_f;
      };

      auto pattern = [&](const D& v) {
        Pattern p = ex.activation_pattern(v);
        Tape<double> tp;
        const auto st = pipe_d.run(tp.constant(v), fseed);
        const D& sr = st.syn.rows.value();
        const std::size_t wd = sr.dim(1);
        for (const auto& [s, rr] : ga.pairs) {
          const auto srows = st.syn.layout.rows_of_patch(s);
          const auto rrows = st.real_layout.rows_of_patch(rr);
          for (std::size_t q = 0; q < srows.size(); ++q)
            for (std::size_t e = 0; e < wd; ++e)
              p.push_back(sr[srows[q] * wd + e] > st.real_rows[rrows[q] * wd + e]);
        }
        return p;
      };
      check_case<T>(report("total_loss"), rng, syn0,
                    [&]<class U>(Var<U> v) {
                      const auto st = pipe(v, fseed);
                      return total_loss(st.real_rows, st.real_layout, st.syn, &ga_for.template operator()<U>(),
                                        as<U>(t), cc, Phase::main)
                          .total;
                    },
                    pattern, o.probes, h);
      const double alpha = cc.alpha;
      check_case<T>(report("instance_loss"), rng, syn0,
                    [&]<class U>(Var<U> v) {
                      const auto st = pipe(v, fseed);
                      return chf_discrepancy(st.real_rows, st.syn.rows, as<U>(t), static_cast<U>(alpha));
                    },
                    pattern, o.probes, h);
      check_case<T>(report("group_loss"), rng, syn0,
                    [&]<class U>(Var<U> v) {
                      const auto st = pipe(v, fseed);
                      return group_loss(ga_for.template operator()<U>(), st.real_rows, st.syn,
                                        st.real_layout, as<U>(t), static_cast<U>(alpha));
                    },
                    pattern, o.probes, h);
      check_case<T>(report("pair_loss"), rng, syn0,
                    [&]<class U>(Var<U> v) {
                      const auto st = pipe(v, fseed);
                      return pair_loss(ga_for.template operator()<U>(), st.real_rows, st.syn, st.real_layout);
                    },
                    pattern, o.probes, h);
    }
  }
  for (auto& r : reps) r.passed = r.probes > 0 && r.max_rel_error < thr;
  return reps;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  const bool f64 = opts.precision == Precision::f64;
  GradcheckReport rep;
  rep.step = opts.step > 0 ? opts.step : 1e-4;
  rep.threshold = opts.threshold > 0 ? opts.threshold : (f64 ? 1e-4 : 1e-2);
  const auto t0 = std::chrono::steady_clock::now();
  rep.ops = f64 ? run_suite<double>(opts, rep.step, rep.threshold)
                : run_suite<float>(opts, rep.step, rep.threshold);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace idc
