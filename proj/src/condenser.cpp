#include "idc/condenser.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "idc/random.hpp"

namespace idc {

namespace {

constexpr std::size_t kResponseCacheBytes = std::size_t{256} << 20;

// seed streams
constexpr std::uint64_t kStreamFilter = 1, kStreamFreqs = 2, kStreamKmeans = 3, kStreamInit = 4;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

template <class T>
T rms_row_norm(const Tensor<T>& rows) {
  double acc = 0;
  for (const T v : rows.values()) acc += static_cast<double>(v) * v;
  const double rms = std::sqrt(acc / static_cast<double>(std::max<std::size_t>(1, rows.dim(0))));
  if (!(rms > 0) || !std::isfinite(rms))
    throw NumericError("real feature rows have zero or non-finite norm");
  return static_cast<T>(rms);
}

std::string LogRecord::to_line() const {
  return "iter=" + std::to_string(iteration) + " l_ins=" + fmt_double(l_ins) +
         " l_group=" + fmt_double(l_group) + " l_pair=" + fmt_double(l_pair) +
         " total=" + fmt_double(total) + " grad_norm=" + fmt_double(grad_norm) +
         " fraction=" + fmt_double(fraction);
}

std::size_t synthetic_count(std::size_t n_real, double r) {
  if (!(r > 0.0)) throw ConfigError("condensation ratio r must be > 0");
  // ties to even: 0.1 * 120765 -> 12076
  const auto n = static_cast<std::size_t>(std::nearbyint(r * static_cast<double>(n_real)));
  return std::max<std::size_t>(1, n);
}

std::uint64_t instance_salt(const std::string& source_id) noexcept { return fnv1a64(source_id); }

PatchSet init_synthetic(const PatchSet& real, double r, InitMode mode, std::uint64_t seed) {
  if (real.size() == 0) throw ConfigError("init_synthetic: real patch set is empty");
  const std::size_t n = synthetic_count(real.size(), r);
  if (n > real.size()) throw ConfigError("init_synthetic: r > 1");
  const std::size_t c = real.pixels.dim(1), h = real.height(), w = real.width();
  const std::size_t per = c * h * w;
  PatchSet syn;
  syn.kind = PatchKind::synthetic_lr;
  syn.source_id = real.source_id;
  syn.pixels = Tensor<float>({n, c, h, w});
  Rng rng(seed);
  if (mode == InitMode::real_subset) {
    const auto picks = rng.sample_without_replacement(real.size(), n);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(real.pixels.data() + picks[i] * per, per, syn.pixels.data() + i * per);
  } else {
    for (auto& v : syn.pixels.values())
      v = static_cast<float>(std::clamp(rng.normal(0.5, 0.1), 0.0, 1.0));
  }
  return syn;
}

// ---------------------------------------------------------------------------
// FeaturePipeline

template <class T>
FeaturePipeline<T>::FeaturePipeline(const Extractor& extractor, const Tensor<T>& real_pixels,
                                    const CondenseConfig& cfg)
    : extractor_(extractor), cfg_(cfg) {
  real_features_ = extractor.extract(real_pixels);
  stats_ = channel_stats(real_features_);
  const std::size_t c = real_features_.dim(1);
  const std::size_t cells = cfg.ablation.use_unfold ? 1 : cfg.p * cfg.p;
  if (cfg.ablation.use_local_filter) {
    identity_ = build_identity_filter<T>(c, cfg.k);
    c_out_ = cfg.resolved_c_out(c);
    if (c_out_ > 2 * identity_.dim(0))
      throw ConfigError("C_out " + std::to_string(c_out_) + " exceeds 2*C' = " +
                        std::to_string(2 * identity_.dim(0)));
    row_width_ = c_out_ * cells;
    const std::size_t full = 2 * identity_.dim(0);
    const std::size_t bytes = real_features_.dim(0) * full * real_features_.dim(2) *
                              real_features_.dim(3) * sizeof(T);
    if (bytes <= kResponseCacheBytes) {
      const auto all = fourier_filter(identity_, 0, full);
      Tape<T> tape;
      full_response_ = apply_rlff(tape.constant(real_features_), all, stats_).value();
    }
  } else {
    row_width_ = c * cells;
  }
}

template <class T>
Tensor<T> FeaturePipeline<T>::real_rows_for(const FourierLocalFilter<T>* flt) const {
  Tape<T> tape;
  Var<T> fp;
  if (!flt) {
    fp = ops::batch_norm(tape.constant(real_features_), stats_);
  } else if (full_response_) {
    const Tensor<T>& full = *full_response_;
    const std::size_t n = full.dim(0), plane = full.dim(2) * full.dim(3), cf = full.dim(1);
    Tensor<T> sel({n, flt->c_out(), full.dim(2), full.dim(3)});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < flt->c_out(); ++s)
        std::copy_n(full.data() + (i * cf + flt->selected[s]) * plane, plane,
                    sel.data() + (i * flt->c_out() + s) * plane);
    fp = tape.constant(std::move(sel));
  } else {
    fp = apply_rlff(tape.constant(real_features_), *flt, stats_);
  }
  auto rows = cfg_.ablation.use_unfold ? partition_unfold(fp, cfg_.p) : partition_tiles(fp, cfg_.p);
  return rows.rows.value();
}

template <class T>
typename FeaturePipeline<T>::Step FeaturePipeline<T>::run(Var<T> syn_pixels,
                                                          std::uint64_t filter_seed) const {
  Var<T> sf = extractor_.extract(syn_pixels);
  Var<T> syn_fp;
  Tensor<T> real_rows;
  if (cfg_.ablation.use_local_filter) {
    const auto flt = fourier_filter(identity_, filter_seed, c_out_);
    syn_fp = apply_rlff(sf, flt, stats_);
    real_rows = real_rows_for(&flt);
  } else {
    syn_fp = ops::batch_norm(sf, stats_);
    real_rows = real_rows_for(nullptr);
  }
  auto syn = cfg_.ablation.use_unfold ? partition_unfold(syn_fp, cfg_.p)
                                      : partition_tiles(syn_fp, cfg_.p);
  const T inv = T{1} / rms_row_norm(real_rows);
  for (auto& v : real_rows.values()) v *= inv;
  syn.rows = ops::scale(syn.rows, inv);
  const std::size_t p = cfg_.p;
  RowLayout real_layout{real_features_.dim(0), (real_features_.dim(2) + p - 1) / p,
                        (real_features_.dim(3) + p - 1) / p, p, cfg_.ablation.use_unfold};
  return Step{std::move(real_rows), real_layout, std::move(syn)};
}

// ---------------------------------------------------------------------------
// losses

template <class T>
LossTerms<T> total_loss(const Tensor<T>& real_rows, const RowLayout& real_layout,
                        const LocalFeatureRows<T>& syn, const GroupAssignment<T>* ga,
                        const Tensor<T>& t, const CondenseConfig& cfg, Phase phase) {
  Tape<T>& tape = *syn.rows.tape;
  const Var<T> zero = tape.constant(Tensor<T>({}, std::vector<T>{T{0}}));
  const T alpha = static_cast<T>(cfg.alpha);
  LossTerms<T> terms{zero, zero, zero, zero};
  std::optional<Var<T>> total;
  auto push = [&](Var<T> term, double weight) {
    Var<T> w = ops::scale(term, static_cast<T>(weight));
    total = total ? ops::add(*total, w) : w;
  };
  if (cfg.ablation.use_instance) {
    terms.ins = chf_discrepancy(real_rows, syn.rows, t, alpha);
    push(terms.ins, cfg.w_ins);
  }
  if (phase == Phase::main && ga) {
    if (cfg.ablation.use_group) {
      terms.group = group_loss(*ga, real_rows, syn, real_layout, t, alpha);
      push(terms.group, cfg.w_group);
    }
    if (cfg.ablation.use_pair) {
      terms.pair = pair_loss(*ga, real_rows, syn, real_layout);
      push(terms.pair, cfg.w_pair);
    }
  }
  terms.total = total ? *total : zero;
  return terms;
}

namespace {

template <class T>
InstanceResult run_instance(const PatchSet& real, const Extractor& extractor,
                            const CondenseConfig& cfg, const CondenseHooks& hooks) {
  cfg.validate();
  if (real.size() == 0) throw ConfigError("instance '" + real.source_id + "' has no patches");
  const auto started = std::chrono::steady_clock::now();
  const auto& ab = cfg.ablation;
  if (!ab.use_instance && !ab.use_group && !ab.use_pair && hooks.on_warning)
    hooks.on_warning("all loss terms disabled; synthetic patches will not change");

  const std::uint64_t salt = instance_salt(real.source_id);
  const FeaturePipeline<T> pipe(extractor, real.pixels.template cast<T>(), cfg);
  PatchSet init = init_synthetic(real, cfg.r, cfg.init_mode, derive_seed(cfg.seeds.init, salt, kStreamInit));
  Tensor<T> syn = init.pixels.template cast<T>();

  OptimState<T> opt;
  std::optional<GroupAssignment<T>> ga;
  const bool grouping = ab.use_group || ab.use_pair;
  const std::size_t assign_stop = std::max(cfg.assign_end, cfg.warmup_end + 1);
  const double ramp_len = static_cast<double>(std::max<std::size_t>(1, cfg.assign_end - cfg.warmup_end));
  const T lo = static_cast<T>(cfg.clamp_lo), hi = static_cast<T>(cfg.clamp_hi);

  InstanceResult result;
  result.log.reserve(cfg.iters);
  for (std::size_t j = 0; j < cfg.iters; ++j) {
    LogRecord rec;
    rec.iteration = j;
    try {
      Tape<T> tape;
      const Var<T> x = tape.leaf(syn, true);
      auto step = pipe.run(x, derive_seed(cfg.seeds.filter, salt, j));
      const Tensor<T> t = sample_frequencies<T>(
          {cfg.num_freqs, pipe.row_width(), cfg.sigma_t, derive_seed(cfg.seeds.freqs, salt, j)});
      const Phase phase = j < cfg.warmup_end ? Phase::warmup : Phase::main;

      if (phase == Phase::main && grouping) {
        const Tensor<T> real_means = patch_means(step.real_rows, step.real_layout);
        if (!ga) ga = kmeans_group(real_means, cfg.groups, derive_seed(cfg.seeds.kmeans, salt, kStreamKmeans));
        if (j < assign_stop) {
          refresh_centroids(*ga, real_means);
          const double fraction =
              std::min(1.0, static_cast<double>(j - cfg.warmup_end + 1) / ramp_len);
          assign_synthetic(*ga, real_means, patch_means(step.syn.rows.value(), step.syn.layout),
                           fraction);
        }
      }
      rec.fraction = ga ? ga->active_fraction : 0.0;

      const auto terms = total_loss(step.real_rows, step.real_layout, step.syn,
                                    ga ? &*ga : nullptr, t, cfg, phase);
      rec.l_ins = terms.ins.value()[0];
      rec.l_group = terms.group.value()[0];
      rec.l_pair = terms.pair.value()[0];
      rec.total = terms.total.value()[0];
      tape.backward(terms.total);

      const Tensor<T>* g = tape.grad(x);
      const Tensor<T> grad = g ? *g : Tensor<T>(syn.shape());
      double norm = 0;
      for (const T v : grad.values()) norm += static_cast<double>(v) * v;
      rec.grad_norm = std::sqrt(norm);

      if (cfg.optimizer == OptimizerKind::adam)
        adam_step(syn, grad, opt, static_cast<T>(cfg.lr));
      else
        sgd_step(syn, grad, static_cast<T>(cfg.lr));
      for (auto& v : syn.values()) v = std::clamp(v, lo, hi);
    } catch (const NumericError& e) {
      throw NumericError("instance '" + real.source_id + "' iteration " + std::to_string(j) +
                         ": " + e.what() + " (l_ins=" + fmt_double(rec.l_ins) +
                         " l_group=" + fmt_double(rec.l_group) +
                         " l_pair=" + fmt_double(rec.l_pair) + ")");
    }
    if (hooks.on_log) hooks.on_log(real.source_id, rec);
    result.log.push_back(rec);
  }

  result.synthetic.kind = PatchKind::synthetic_lr;
  result.synthetic.source_id = real.source_id;
  result.synthetic.pixels = syn.template cast<float>();
  for (auto& v : result.synthetic.pixels.values())
    v = std::clamp(v, static_cast<float>(cfg.clamp_lo), static_cast<float>(cfg.clamp_hi));
  if (ga) {
    result.assignment.groups = ga->groups();
    result.assignment.group_sizes = ga->group_sizes;
    result.assignment.quotas = ga->quotas;
    result.assignment.assigned = ga->assigned_count();
    result.assignment.pairs = ga->pairs.size();
  }
  result.iterations = cfg.iters;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

template <class T>
double discrepancy_impl(const PatchSet& real, const Tensor<float>& syn_pixels,
                        const Extractor& extractor, const CondenseConfig& cfg,
                        std::uint64_t eval_seed, std::size_t draws) {
  const FeaturePipeline<T> pipe(extractor, real.pixels.template cast<T>(), cfg);
  double acc = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    Tape<T> tape;
    auto step = pipe.run(tape.constant(syn_pixels.template cast<T>()),
                         derive_seed(eval_seed, kStreamFilter, d));
    const Tensor<T> t = sample_frequencies<T>(
        {cfg.num_freqs, pipe.row_width(), cfg.sigma_t, derive_seed(eval_seed, kStreamFreqs, d)});
    acc += chf_discrepancy(step.real_rows, step.syn.rows, t, static_cast<T>(cfg.alpha)).value()[0];
  }
  return acc / static_cast<double>(std::max<std::size_t>(1, draws));
}

}  // namespace

InstanceResult condense_instance(const PatchSet& real, const Extractor& extractor,
                                 const CondenseConfig& cfg, const CondenseHooks& hooks) {
  return cfg.precision == Precision::f64 ? run_instance<double>(real, extractor, cfg, hooks)
                                         : run_instance<float>(real, extractor, cfg, hooks);
}

double instance_discrepancy(const PatchSet& real, const Tensor<float>& syn_pixels,
                            const Extractor& extractor, const CondenseConfig& cfg,
                            std::uint64_t eval_seed, std::size_t draws) {
  return cfg.precision == Precision::f64
             ? discrepancy_impl<double>(real, syn_pixels, extractor, cfg, eval_seed, draws)
             : discrepancy_impl<float>(real, syn_pixels, extractor, cfg, eval_seed, draws);
}

std::vector<InstanceOutcome> condense_dataset(std::span<const PatchSet> instances,
                                              const Extractor& extractor,
                                              const CondenseConfig& cfg, std::size_t parallelism,
                                              bool fail_fast, const CondenseHooks& hooks) {
  cfg.validate();
  std::vector<InstanceOutcome> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) out[i].source_id = instances[i].source_id;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      if (stop) return;
      const std::size_t i = next++;
      if (i >= instances.size()) return;
      try {
        out[i].result = condense_instance(instances[i], extractor, cfg, hooks);
      } catch (const Error& e) {
        out[i].error = e.what();
        out[i].error_code = e.exit_code();
        if (fail_fast) stop = true;
      } catch (const std::exception& e) {
        out[i].error = e.what();
        out[i].error_code = 1;
        if (fail_fast) stop = true;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, instances.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& o : out)
    if (!o.result && o.error.empty()) {
      o.error = "skipped after an earlier failure (fail-fast)";
      o.error_code = 1;
    }
  return out;
}

template float rms_row_norm(const Tensor<float>&);
template double rms_row_norm(const Tensor<double>&);
template class FeaturePipeline<float>;
template class FeaturePipeline<double>;
template LossTerms<float> total_loss(const Tensor<float>&, const RowLayout&,
                                     const LocalFeatureRows<float>&, const GroupAssignment<float>*,
                                     const Tensor<float>&, const CondenseConfig&, Phase);
template LossTerms<double> total_loss(const Tensor<double>&, const RowLayout&,
                                      const LocalFeatureRows<double>&,
                                      const GroupAssignment<double>*, const Tensor<double>&,
                                      const CondenseConfig&, Phase);

}  // namespace idc
