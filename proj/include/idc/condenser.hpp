#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idc/config.hpp"
#include "idc/datapipe.hpp"
#include "idc/extractor.hpp"
#include "idc/matching.hpp"
#include "idc/rlff.hpp"

namespace idc {

/// One line of the per-iteration log.
struct LogRecord {
  std::size_t iteration = 0;
  double l_ins = 0;
  double l_group = 0;
  double l_pair = 0;
  double total = 0;
  double grad_norm = 0;
  double fraction = 0;

  /// "iter=12 l_ins=... l_group=... l_pair=... total=... grad_norm=... fraction=..."
  std::string to_line() const;
};

struct AssignmentSummary {
  std::size_t groups = 0;
  std::vector<std::size_t> group_sizes;
  std::vector<std::size_t> quotas;
  std::size_t assigned = 0;
  std::size_t pairs = 0;
};

struct InstanceResult {
  PatchSet synthetic;  // synthetic-LR
  std::vector<LogRecord> log;
  AssignmentSummary assignment;
  double wall_seconds = 0;
  std::size_t iterations = 0;
};

/// Optional observers. Callbacks may be invoked from worker threads when
/// condensing a dataset in parallel.
struct CondenseHooks {
  std::function<void(const std::string& source_id, const LogRecord&)> on_log;
  std::function<void(const std::string& message)> on_warning;
};

/// max(1, round(r * n_real)), halves rounded to even.
std::size_t synthetic_count(std::size_t n_real, double r);

/// Learnable starting point: a random subset of the real patches, or
/// N(0.5, 0.1^2) noise clamped to [0,1].
PatchSet init_synthetic(const PatchSet& real, double r, InitMode mode, std::uint64_t seed);

/// Per-instance salt mixed into every seed, so results do not depend on
/// scheduling order.
std::uint64_t instance_salt(const std::string& source_id) noexcept;

/// sqrt(mean_i ||row_i||^2). Both branches are divided by the real value each
/// iteration so that unit-scale frequencies probe the informative range.
template <class T>
T rms_row_norm(const Tensor<T>& rows);

/// Real-branch features of one instance plus the per-iteration transform
/// shared by both branches (extract, batch-norm with real statistics, Fourier
/// filter, partition).
template <class T>
class FeaturePipeline {
 public:
  struct Step {
    Tensor<T> real_rows;
    RowLayout real_layout;
    LocalFeatureRows<T> syn;
  };

  FeaturePipeline(const Extractor& extractor, const Tensor<T>& real_pixels,
                  const CondenseConfig& cfg);

  /// Transforms the synthetic batch (recorded on its tape) and the real batch
  /// with one filter drawn from `filter_seed`.
  Step run(Var<T> syn_pixels, std::uint64_t filter_seed) const;

  std::size_t row_width() const noexcept { return row_width_; }
  const ChannelStats<T>& stats() const noexcept { return stats_; }

 private:
  Tensor<T> real_rows_for(const FourierLocalFilter<T>* flt) const;

  const Extractor& extractor_;
  CondenseConfig cfg_;
  Tensor<T> real_features_;
  ChannelStats<T> stats_;
  Tensor<T> identity_;
  std::size_t c_out_ = 0;
  std::size_t row_width_ = 0;
  // Fourier response of the normalized real features on all 2*C' channels,
  // kept when it fits the memory budget.
  std::optional<Tensor<T>> full_response_;
};

enum class Phase { warmup, main };

template <class T>
struct LossTerms {
  Var<T> total;
  Var<T> ins;
  Var<T> group;
  Var<T> pair;
};

/// Warm-up: w_ins * L_ins. Main: the full weighted sum. Disabled terms are
/// exact zeros with no gradient path.
template <class T>
LossTerms<T> total_loss(const Tensor<T>& real_rows, const RowLayout& real_layout,
                        const LocalFeatureRows<T>& syn, const GroupAssignment<T>* ga,
                        const Tensor<T>& t, const CondenseConfig& cfg, Phase phase);

/// Runs the full optimization loop for one instance at the configured
/// precision.
InstanceResult condense_instance(const PatchSet& real, const Extractor& extractor,
                                 const CondenseConfig& cfg, const CondenseHooks& hooks = {});

struct InstanceOutcome {
  std::string source_id;
  std::optional<InstanceResult> result;
  std::string error;  // empty on success
  int error_code = 0;
};

/// Independent per-instance condensation on `parallelism` workers. Failures
/// are isolated; with `fail_fast` no new instance starts after the first one.
std::vector<InstanceOutcome> condense_dataset(std::span<const PatchSet> instances,
                                              const Extractor& extractor,
                                              const CondenseConfig& cfg, std::size_t parallelism,
                                              bool fail_fast = false,
                                              const CondenseHooks& hooks = {});

/// Instance-level discrepancy between real patches and a synthetic batch,
/// averaged over `draws` filter/frequency draws derived from `eval_seed`.
double instance_discrepancy(const PatchSet& real, const Tensor<float>& syn_pixels,
                            const Extractor& extractor, const CondenseConfig& cfg,
                            std::uint64_t eval_seed, std::size_t draws = 8);

}  // namespace idc
