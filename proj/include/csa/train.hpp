#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csa/config.hpp"
#include "csa/data.hpp"
#include "csa/model.hpp"
#include "csa/rouge.hpp"
#include "csa/tensor.hpp"

namespace csa {

enum class ScheduleMode { PerIteration, PerEpoch };

struct ScheduleSpec {
  ScheduleMode mode = ScheduleMode::PerIteration;
  double gamma = 1.0;  // decay factor in (0, 1]
  int period = 1;      // iterations per decay step; per-epoch mode decays every epoch
};

// base * gamma^floor(index/period) for per-iteration mode (index counts
// optimizer steps); base * gamma^index for per-epoch mode (index counts
// epochs). Non-increasing in index for gamma <= 1.
double lr_at(const ScheduleSpec& spec, double base, std::int64_t index);

// Per-parameter moment accumulators for the adaptive optimizer, aligned with
// the parameter map order.
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<Array> m, v;

  static OptimizerState init(const ParamMap& params);
};

// In-place updates from the persistent gradients. A non-finite gradient aborts
// naming the parameter.
void sgd_step(ParamMap& params, double rate);
// Bias-corrected first/second moments, beta1=0.9, beta2=0.999, eps=1e-8.
void adam_step(OptimizerState& state, ParamMap& params, double rate);

double global_grad_norm(const ParamMap& params);
// Scales all gradients so the global norm is at most max_norm; below the
// limit the gradients are untouched.
void clip_global_norm(ParamMap& params, double max_norm);

struct TrainConfig {
  int epochs = 1;
  int batch_size = 16;
  double lr = 1e-3;
  ScheduleSpec schedule;
  bool use_sgd = false;        // adaptive optimizer by default
  double clip_norm = 1.0;      // <= 0 disables clipping
  int val_period = 200;        // optimizer steps between validations
  int patience = 5;            // non-improving validations before stopping
  std::int64_t max_steps = 0;  // 0 = no cap
  double stop_at_metric = -1;  // stop once the validation metric reaches this
  std::uint64_t seed = 0;
  std::string checkpoint_path;  // best-validation checkpoint; empty skips saving
  std::ostream* log = nullptr;  // one JSON line per event
};

// Reference setups: plain SGD with exponential per-iteration decay for the
// abstractive task, adaptive steps with per-epoch decay for the extractive
// one.
TrainConfig abstractive_train_preset();
TrainConfig extractive_train_preset();

struct ValPoint {
  std::int64_t step = 0;
  double loss = 0;
  double metric = 0;  // exact match (abstractive) or selection F1 (extractive)
};

struct TrainResult {
  std::vector<double> train_losses;  // one entry per optimizer step
  std::vector<ValPoint> validations;
  double best_val_loss = 0;
  std::int64_t best_val_step = 0;
  std::int64_t steps = 0;
  bool early_stopped = false;
  bool metric_reached = false;
};

// Epochs of freshly shuffled batches with clipping, scheduling, periodic
// validation, and a best-validation checkpoint. An always-run validation at
// step 0 makes the 0-epoch case emit the initial checkpoint. Divergence
// (non-finite loss or gradient) propagates as NumericsError with the last
// saved checkpoint retained on disk.
TrainResult train(const ModelConfig& config, QsummParams& params,
                  const std::vector<QsummInstance>& train_set,
                  const std::vector<QsummInstance>& val_set, const Vocab& vocab,
                  const TrainConfig& tc);

struct EvalReport {
  bool extractive = false;
  int n_instances = 0;
  double mean_loss = 0;
  double exact_match = 0;  // abstractive only
  RougeScore r1, r2, rl;
  double sel_precision = 0, sel_recall = 0, sel_f1 = 0;  // extractive, micro-averaged
};

// Pure measurement: parameters are never written. Abstractive mode decodes
// greedily and scores corpus ROUGE plus exact match; extractive mode applies
// the selection threshold and scores micro precision/recall/F1 plus ROUGE of
// the concatenated selection against the reference (the summary when present,
// otherwise the gold-labeled sentences). Instances with an empty selection
// score zero ROUGE and are logged.
EvalReport evaluate(const ModelConfig& config, const QsummParams& params,
                    const std::vector<QsummInstance>& data, const Vocab& vocab,
                    std::ostream* log = nullptr);

// Metric plumbing, exposed for direct verification.
struct AbstractiveMetrics {
  double exact_match = 0;
  RougeScore r1, r2, rl;
};
AbstractiveMetrics abstractive_metrics(const std::vector<Tokens>& predicted,
                                       const std::vector<Tokens>& reference);

struct SelectionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

struct GradCheckEntry {
  std::string target;
  double worst_rel = 0;
  bool pass = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;  // one per differentiable stage, fixed order
  bool all_pass = false;
};

// Finite-difference audit of every differentiable stage plus the end-to-end
// model, worst case over n_seeds seeds. inject_compat_sign_error flips the
// compat backward for the duration to prove the audit reports a broken
// gradient.
GradCheckReport run_gradcheck(int n_seeds, bool inject_compat_sign_error = false);

// Condition distribution and per-head weight matrices for one instance,
// serialized as JSON: blocks (token lists), p, and heads. Conditional
// variants only.
std::string attn_dump_json(const ModelConfig& config, const QsummParams& params,
                           const Vocab& vocab, const QsummInstance& instance);

}  // namespace csa
