#include "csa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "csa/attention.hpp"
#include "csa/checkpoint.hpp"
#include "csa/csa.hpp"
#include "csa/error.hpp"
#include "csa/gradcheck.hpp"
#include "csa/ops.hpp"

namespace csa {

namespace {

using nlohmann::json;

void emit(std::ostream* log, const json& line) {
  if (log) *log << line.dump() << "\n";
}

void validate_schedule(const ScheduleSpec& spec) {
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0))
    throw ContractError("schedule: decay factor must lie in (0, 1], got " +
                        std::to_string(spec.gamma));
  if (spec.period < 1)
    throw ContractError("schedule: period must be at least 1, got " + std::to_string(spec.period));
}

const Array* grad_or_null(const Tensor& t) {
  const Array& g = t.grad();
  return g.size() == 0 ? nullptr : &g;
}

}  // namespace

double lr_at(const ScheduleSpec& spec, double base, std::int64_t index) {
  validate_schedule(spec);
  if (index < 0) throw ContractError("lr_at: negative step index");
  const std::int64_t k =
      spec.mode == ScheduleMode::PerIteration ? index / spec.period : index;
  return base * std::pow(spec.gamma, static_cast<double>(k));
}

OptimizerState OptimizerState::init(const ParamMap& params) {
  OptimizerState s;
  s.m.reserve(params.items.size());
  s.v.reserve(params.items.size());
  for (const auto& [name, t] : params.items) {
    s.m.push_back(Array::Zero(t.size()));
    s.v.push_back(Array::Zero(t.size()));
  }
  return s;
}

void sgd_step(ParamMap& params, double rate) {
  for (auto& [name, t] : params.items) {
    const Array* g = grad_or_null(t);
    if (!g) continue;
    if (!g->allFinite()) throw NumericsError("non-finite gradient in " + name);
    t.value() -= rate * (*g);
  }
}

void adam_step(OptimizerState& state, ParamMap& params, double rate) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (state.m.size() != params.items.size())
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) +
                        " parameters, map has " + std::to_string(params.items.size()));
  const double t = static_cast<double>(++state.step);
  const double corr1 = 1.0 - std::pow(kBeta1, t);
  const double corr2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    auto& [name, p] = params.items[i];
    const Array* g = grad_or_null(p);
    if (g && !g->allFinite()) throw NumericsError("non-finite gradient in " + name);
    Array& m = state.m[i];
    Array& v = state.v[i];
    if (g) {
      m = kBeta1 * m + (1.0 - kBeta1) * (*g);
      v = kBeta2 * v + (1.0 - kBeta2) * g->square();
    } else {
      m *= kBeta1;
      v *= kBeta2;
    }
    p.value() -= rate * (m / corr1) / ((v / corr2).sqrt() + kEps);
  }
}

double global_grad_norm(const ParamMap& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items) {
    const Array* g = grad_or_null(t);
    if (g) sq += g->square().sum();
  }
  return std::sqrt(sq);
}

void clip_global_norm(ParamMap& params, double max_norm) {
  if (max_norm <= 0.0) throw ContractError("clip_global_norm: limit must be positive");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (auto& [name, t] : params.items) {
    auto impl = t.ptr();
    if (impl->grad.size() != 0) impl->grad *= factor;
  }
}

TrainConfig abstractive_train_preset() {
  TrainConfig tc;
  tc.batch_size = 64;
  tc.lr = 0.5;
  tc.use_sgd = true;
  tc.schedule = {ScheduleMode::PerIteration, 0.8, 3000};
  return tc;
}

TrainConfig extractive_train_preset() {
  TrainConfig tc;
  tc.batch_size = 32;
  tc.lr = 1e-4;
  tc.use_sgd = false;
  tc.schedule = {ScheduleMode::PerEpoch, 0.9, 1};
  return tc;
}

namespace {

std::vector<std::uint8_t> labels_for_row(const Batch& b, std::size_t row) {
  std::size_t present = 0;
  for (std::uint8_t v : b.sentence_present[row]) present += v;
  return std::vector<std::uint8_t>(b.labels[row].begin(),
                                   b.labels[row].begin() + static_cast<std::ptrdiff_t>(present));
}

Tensor batch_loss(const ModelConfig& config, const QsummParams& params, const Batch& b,
                  const RunCtx& ctx) {
  const std::size_t n = b.instance_index.size();
  std::vector<Tensor> losses;
  losses.reserve(n);
  for (std::size_t row = 0; row < n; ++row) {
    ModelInput in = input_from_batch(b, row);
    ModelOutput enc = model_encode(config, params, in, ctx);
    if (b.extractive)
      losses.push_back(extractive_loss(config, params, enc, labels_for_row(b, row), ctx));
    else
      losses.push_back(
          abstractive_loss(config, params, enc, b.target.ids[row], b.target.mask[row], ctx));
  }
  Tensor total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  return scale(total, 1.0 / static_cast<double>(n));
}

// Validation loss plus the task metric (exact match or selection F1), no
// dropout, no tape.
ValPoint run_validation(const ModelConfig& config, const QsummParams& params,
                        const std::vector<QsummInstance>& val_set, const Vocab& vocab,
                        std::int64_t step) {
  NoGrad guard;
  ValPoint v;
  v.step = step;
  double loss_sum = 0.0;
  SelectionCounts counts;
  std::int64_t exact = 0;
  for (const QsummInstance& inst : val_set) {
    ModelInput in = input_from_instance(vocab, inst);
    ModelOutput enc = model_encode(config, params, in);
    if (config.decoder == DecoderMode::Extractive) {
      loss_sum += extractive_loss(config, params, enc, inst.labels).item();
      ExtractiveResult sel = extractive_decode(config, params, enc);
      std::vector<bool> chosen(inst.labels.size(), false);
      for (int idx : sel.selected) chosen[static_cast<std::size_t>(idx)] = true;
      for (std::size_t i = 0; i < inst.labels.size(); ++i) {
        if (chosen[i] && inst.labels[i])
          ++counts.tp;
        else if (chosen[i])
          ++counts.fp;
        else if (inst.labels[i])
          ++counts.fn;
      }
    } else {
      loss_sum += abstractive_loss(config, params, enc, target_from_instance(vocab, inst), {})
                      .item();
      if (greedy_decode(config, params, enc) == vocab.encode(tokenize(inst.summary))) ++exact;
    }
  }
  v.loss = loss_sum / static_cast<double>(val_set.size());
  v.metric = config.decoder == DecoderMode::Extractive
                 ? counts.f1()
                 : static_cast<double>(exact) / static_cast<double>(val_set.size());
  return v;
}

}  // namespace

TrainResult train(const ModelConfig& config, QsummParams& params,
                  const std::vector<QsummInstance>& train_set,
                  const std::vector<QsummInstance>& val_set, const Vocab& vocab,
                  const TrainConfig& tc) {
  validate(config);
  if (train_set.empty() || val_set.empty()) throw ContractError("train: empty dataset");
  if (tc.epochs < 0) throw ContractError("train: negative epoch count");
  if (tc.lr <= 0.0) throw ContractError("train: learning rate must be positive");
  if (tc.val_period < 1) throw ContractError("train: validation period must be at least 1");
  if (tc.patience < 1) throw ContractError("train: patience must be at least 1");
  validate_schedule(tc.schedule);

  ParamMap pm;
  params.register_into(pm);
  OptimizerState state = OptimizerState::init(pm);
  std::mt19937_64 drop_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult res;
  int stale = 0;

  // Returns true when training should stop.
  auto validate_now = [&](std::int64_t step) {
    ValPoint v = run_validation(config, params, val_set, vocab, step);
    res.validations.push_back(v);
    emit(tc.log, {{"event", "val"}, {"step", step}, {"split", "val"}, {"loss", v.loss},
                  {"metric", v.metric}});
    const bool improved = res.validations.size() == 1 || v.loss < res.best_val_loss;
    if (improved) {
      res.best_val_loss = v.loss;
      res.best_val_step = step;
      stale = 0;
      if (!tc.checkpoint_path.empty()) {
        save_checkpoint(tc.checkpoint_path, pm);
        emit(tc.log, {{"event", "checkpoint"}, {"step", step}, {"path", tc.checkpoint_path}});
      }
    } else {
      ++stale;
    }
    if (tc.stop_at_metric >= 0.0 && v.metric >= tc.stop_at_metric) {
      res.metric_reached = true;
      emit(tc.log, {{"event", "target_reached"}, {"step", step}, {"metric", v.metric}});
      return true;
    }
    if (stale >= tc.patience) {
      res.early_stopped = true;
      emit(tc.log, {{"event", "early_stop"}, {"step", step}});
      return true;
    }
    return false;
  };

  if (validate_now(0)) return res;

  std::int64_t opt_step = 0;
  bool stopped = false;
  try {
    for (int epoch = 0; epoch < tc.epochs && !stopped; ++epoch) {
      auto batches = make_batches(train_set, vocab, tc.batch_size, tc.seed + epoch);
      for (const Batch& b : batches) {
        if (tc.max_steps > 0 && opt_step >= tc.max_steps) {
          stopped = true;
          break;
        }
        const double rate = tc.schedule.mode == ScheduleMode::PerIteration
                                ? lr_at(tc.schedule, tc.lr, opt_step)
                                : lr_at(tc.schedule, tc.lr, epoch);
        RunCtx ctx{&drop_rng, true, config.dropout};
        double loss_value = 0.0;
        {
          Tape tape;
          Tensor loss = batch_loss(config, params, b, ctx);
          loss_value = loss.item();
          tape.backward(loss);
        }
        if (tc.clip_norm > 0.0) clip_global_norm(pm, tc.clip_norm);
        if (tc.use_sgd)
          sgd_step(pm, rate);
        else
          adam_step(state, pm, rate);
        pm.zero_grad();
        ++opt_step;
        res.steps = opt_step;
        res.train_losses.push_back(loss_value);
        emit(tc.log, {{"event", "train_step"}, {"step", opt_step}, {"epoch", epoch},
                      {"split", "train"}, {"loss", loss_value}, {"lr", rate}});
        if (opt_step % tc.val_period == 0 && validate_now(opt_step)) {
          stopped = true;
          break;
        }
      }
    }
  } catch (const NumericsError& e) {
    emit(tc.log, {{"event", "divergence"}, {"step", opt_step}, {"error", e.what()}});
    throw;
  }
  if (!res.metric_reached && !res.early_stopped && opt_step > 0 &&
      res.validations.back().step != opt_step)
    validate_now(opt_step);
  return res;
}

double SelectionCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double SelectionCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double SelectionCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

AbstractiveMetrics abstractive_metrics(const std::vector<Tokens>& predicted,
                                       const std::vector<Tokens>& reference) {
  if (predicted.size() != reference.size())
    throw ContractError("metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                        std::to_string(reference.size()) + " references");
  if (predicted.empty()) throw ContractError("metrics: empty corpus");
  AbstractiveMetrics m;
  std::vector<RougePair> pairs;
  pairs.reserve(predicted.size());
  std::int64_t exact = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    pairs.push_back({predicted[i], reference[i]});
    if (predicted[i] == reference[i]) ++exact;
  }
  m.exact_match = static_cast<double>(exact) / static_cast<double>(predicted.size());
  m.r1 = corpus_rouge_n(pairs, 1);
  m.r2 = corpus_rouge_n(pairs, 2);
  m.rl = corpus_rouge_l(pairs);
  return m;
}

EvalReport evaluate(const ModelConfig& config, const QsummParams& params,
                    const std::vector<QsummInstance>& data, const Vocab& vocab,
                    std::ostream* log) {
  validate(config);
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  if (params.embedding.rows() != vocab.size())
    throw ContractError("evaluate: vocab size " + std::to_string(vocab.size()) +
                        " does not match embedding rows " +
                        std::to_string(params.embedding.rows()));
  const bool extractive = config.decoder == DecoderMode::Extractive;
  for (const QsummInstance& inst : data)
    if (inst.extractive != extractive)
      throw ContractError("evaluate: instance kind does not match the decoder mode");

  NoGrad guard;
  EvalReport report;
  report.extractive = extractive;
  report.n_instances = static_cast<int>(data.size());
  double loss_sum = 0.0;
  SelectionCounts counts;
  std::vector<Tokens> predicted, reference;
  std::vector<RougePair> sel_pairs;
  std::size_t index = 0;
  for (const QsummInstance& inst : data) {
    ModelInput in = input_from_instance(vocab, inst);
    ModelOutput enc = model_encode(config, params, in);
    if (extractive) {
      loss_sum += extractive_loss(config, params, enc, inst.labels).item();
      ExtractiveResult sel = extractive_decode(config, params, enc);
      std::vector<bool> chosen(inst.labels.size(), false);
      for (int idx : sel.selected) chosen[static_cast<std::size_t>(idx)] = true;
      Tokens candidate, ref;
      for (std::size_t i = 0; i < inst.labels.size(); ++i) {
        if (chosen[i] && inst.labels[i])
          ++counts.tp;
        else if (chosen[i])
          ++counts.fp;
        else if (inst.labels[i])
          ++counts.fn;
        if (chosen[i])
          for (const std::string& t : tokenize(inst.sentences[i])) candidate.push_back(t);
      }
      if (!inst.summary.empty()) {
        ref = tokenize(inst.summary);
      } else {
        for (std::size_t i = 0; i < inst.labels.size(); ++i)
          if (inst.labels[i])
            for (const std::string& t : tokenize(inst.sentences[i])) ref.push_back(t);
      }
      if (sel.selected.empty())
        emit(log, {{"event", "empty_selection"}, {"instance", index}});
      sel_pairs.push_back({candidate, ref});
    } else {
      loss_sum +=
          abstractive_loss(config, params, enc, target_from_instance(vocab, inst), {}).item();
      Tokens pred;
      for (int id : greedy_decode(config, params, enc)) pred.push_back(vocab.token(id));
      predicted.push_back(pred);
      reference.push_back(tokenize(inst.summary));
    }
    ++index;
  }
  report.mean_loss = loss_sum / static_cast<double>(data.size());
  if (extractive) {
    report.sel_precision = counts.precision();
    report.sel_recall = counts.recall();
    report.sel_f1 = counts.f1();
    report.r1 = corpus_rouge_n(sel_pairs, 1);
    report.r2 = corpus_rouge_n(sel_pairs, 2);
    report.rl = corpus_rouge_l(sel_pairs);
  } else {
    AbstractiveMetrics m = abstractive_metrics(predicted, reference);
    report.exact_match = m.exact_match;
    report.r1 = m.r1;
    report.r2 = m.r2;
    report.rl = m.rl;
  }
  return report;
}

namespace {

struct Probe {
  Tensor* t;
  double eps = 1e-5;
};

double worst_over(const std::function<Tensor(const Tensor&)>& f, const std::vector<Probe>& probes) {
  double worst = 0.0;
  for (const Probe& p : probes) worst = std::max(worst, finite_difference_check(f, *p.t, p.eps));
  return worst;
}

MaskVec all_live(int n) { return MaskVec::Constant(n, true); }

struct SignRestore {
  double saved = detail::compat_grad_sign;
  ~SignRestore() { detail::compat_grad_sign = saved; }
};

}  // namespace

GradCheckReport run_gradcheck(int n_seeds, bool inject_compat_sign_error) {
  if (n_seeds < 1) throw ContractError("run_gradcheck: needs at least one seed");
  SignRestore restore;
  if (inject_compat_sign_error) detail::compat_grad_sign = -1.0;

  GradCheckReport report;
  const std::vector<std::string> targets = {
      "multiplicative-scorer", "additive-scorer",    "token-self-attention",
      "sequence-to-token-attention", "position-feed-forward", "conditional-compat",
      "conditional-layer",     "multi-head-conditional", "extractive-decoder",
      "abstractive-decoder",   "end-to-end-model"};
  for (const std::string& t : targets) report.entries.push_back({t, 0.0, false});
  auto note = [&](std::size_t target, double rel) {
    report.entries[target].worst_rel = std::max(report.entries[target].worst_rel, rel);
  };

  QsummInstance e2e_inst;
  e2e_inst.passage = "k1 v1 k2 v2 k3 v3";
  e2e_inst.query = "k2 v2";
  e2e_inst.summary = "v2";
  Vocab e2e_vocab = Vocab::build({e2e_inst}, 1);

  for (int s = 0; s < n_seeds; ++s) {
    auto seeded = [&](int target) { return std::mt19937_64(10'000 + 97 * s + target); };
    {
      auto rng = seeded(0);
      Tensor x = uniform({6}, -1.0, 1.0, rng, true);
      Tensor c = uniform({6}, -1.0, 1.0, rng, true);
      AttentionParams p = AttentionParams::init(3, 6, 6, rng);
      auto f = [&](const Tensor&) { return multiplicative_score(x, c, p); };
      note(0, worst_over(f, {{&p.W1}, {&p.W2}, {&p.w}, {&x}, {&c}}));
    }
    {
      auto rng = seeded(1);
      Tensor x = uniform({6}, -1.0, 1.0, rng, true);
      Tensor c = uniform({6}, -1.0, 1.0, rng, true);
      AttentionParams p = AttentionParams::init(3, 6, 6, rng);
      auto f = [&](const Tensor&) { return additive_score(x, c, p); };
      note(1, worst_over(f, {{&p.W1}, {&p.W2}, {&p.w}, {&p.b_vec}, {&p.b_scalar}, {&x}}));
    }
    {
      auto rng = seeded(2);
      MultiHeadParams p = MultiHeadParams::init(2, 6, 3, rng);
      Tensor xs = uniform({4, 6}, -1.0, 1.0, rng, true);
      auto f = [&](const Tensor&) { return sum(t2t_self_attention(xs, p, full_square(4))); };
      note(2, worst_over(f, {{&p.Wq[0]}, {&p.Wk[1]}, {&p.Wv[0]}, {&p.Wo}, {&xs}}));
    }
    {
      auto rng = seeded(3);
      S2tParams p = S2tParams::init(3, 6, rng);
      Tensor xs = uniform({4, 6}, -1.0, 1.0, rng, true);
      auto f = [&](const Tensor&) { return sum(s2t_self_attention(xs, p, all_live(4)).u); };
      note(3, worst_over(f, {{&p.W1}, {&p.w}, {&p.b_vec}, {&xs}}));
    }
    {
      auto rng = seeded(4);
      PfnParams p = PfnParams::init(6, 8, rng);
      Tensor x = uniform({4, 6}, -1.0, 1.0, rng, true);
      // Plain sums cancel across a normalized output; probe a random functional.
      Tensor probe = uniform({4, 6}, -1.0, 1.0, rng);
      auto f = [&](const Tensor&) { return sum(mul(pfn(x, p), probe)); };
      note(4, worst_over(f, {{&p.W1}, {&p.b1}, {&p.W2}, {&p.b2}, {&p.ln_gain}, {&p.ln_bias}, {&x}}));
    }
    {
      auto rng = seeded(5);
      AttentionParams sa = AttentionParams::init(3, 6, 6, rng);
      Tensor hi = uniform({6}, -1.0, 1.0, rng, true);
      Tensor hj = uniform({6}, -1.0, 1.0, rng, true);
      auto f = [&](const Tensor&) { return csa_compat(hi, hj, sa); };
      note(5, worst_over(f, {{&sa.W1}, {&sa.W2}, {&sa.w}, {&sa.b_vec}, {&hi}, {&hj}}));
    }
    {
      auto rng = seeded(6);
      CsaParams p = CsaParams::init(s % 2 == 0 ? CsaVariant::Additive : CsaVariant::Multiplicative,
                                    6, 6, 3, 2, 6, 8, rng);
      Tensor xs = uniform({4, 6}, -1.0, 1.0, rng, true);
      Tensor c = uniform({6}, -1.0, 1.0, rng, true);
      auto f = [&](const Tensor&) { return sum(csa_layer(xs, c, p, all_live(4))); };
      note(6, worst_over(f, {{&p.cross.W1}, {&p.sa.W1}, {&p.sa.w}, {&p.heads[0]}, {&c}, {&xs}}));
    }
    {
      auto rng = seeded(7);
      CsaParams p = CsaParams::init(s % 2 == 0 ? CsaVariant::Multiplicative : CsaVariant::Additive,
                                    6, 6, 3, 2, 6, 8, rng);
      Tensor xs = uniform({4, 6}, -1.0, 1.0, rng, true);
      Tensor c = uniform({6}, -1.0, 1.0, rng, true);
      Tensor probe = uniform({4, 6}, -1.0, 1.0, rng);
      auto f = [&](const Tensor&) {
        return sum(mul(multi_head_csa(xs, c, p, all_live(4)).u, probe));
      };
      note(7, worst_over(f, {{&p.cross.W1}, {&p.cross.w}, {&p.heads[1]}, {&p.w_head},
                             {&p.pfn.W1}, {&c}, {&xs}}));
    }
    {
      auto rng = seeded(8);
      ModelConfig mc;
      mc.vocab_size = 8;
      mc.d_model = 6;
      mc.d_w = 3;
      mc.d_ffn = 8;
      mc.decoder = DecoderMode::Extractive;
      mc.block_mode = BlockMode::Sentence;
      mc.decoder_layers = 1;
      mc.csa_heads = 2;
      mc.sa_heads = 2;
      QsummParams qp = QsummParams::init(mc, rng);
      ModelOutput enc;
      enc.u = uniform({4, 6}, -1.0, 1.0, rng, true);
      enc.n_blocks = 4;
      std::vector<std::uint8_t> labels = {1, 0, 1, 0};
      auto f = [&](const Tensor&) { return extractive_loss(mc, qp, enc, labels); };
      note(8, worst_over(f, {{&qp.ext_w}, {&qp.ext_b}, {&qp.ext_layers[0].ffn.W1},
                             {&qp.ext_layers[0].ln_gain}, {&enc.u}}));
    }
    {
      auto rng = seeded(9);
      ModelConfig mc;
      mc.vocab_size = 8;
      mc.d_model = 6;
      mc.d_w = 3;
      mc.d_ffn = 8;
      mc.decoder_layers = 1;
      mc.csa_heads = 2;
      mc.sa_heads = 2;
      QsummParams qp = QsummParams::init(mc, rng);
      ModelOutput enc;
      enc.u = uniform({3, 6}, -1.0, 1.0, rng, true);
      enc.n_blocks = 3;
      std::vector<int> target = {Vocab::kBos, 5, 6, 7, Vocab::kEos};
      auto f = [&](const Tensor&) { return abstractive_loss(mc, qp, enc, target, {}); };
      note(9, worst_over(f, {{&qp.dec_layers[0].ffn.W1}, {&qp.dec_layers[0].self_mha.Wo},
                             {&qp.dec_layers[0].cross_mha.Wo}, {&qp.dec_layers[0].ln1_gain},
                             {&qp.out_w}, {&qp.out_b}, {&qp.embedding}, {&enc.u}}));
    }
    for (ModelVariant variant : {ModelVariant::CsaAdd, ModelVariant::CsaMul}) {
      auto rng = seeded(10 + (variant == ModelVariant::CsaMul ? 13 : 0));
      ModelConfig mc;
      mc.vocab_size = e2e_vocab.size();
      mc.d_model = 8;
      mc.d_w = 3;
      mc.d_ffn = 10;
      mc.block_len = 2;
      mc.layers_pre_block = 1;
      mc.layers_post_block = 0;
      mc.layers_query = 1;
      mc.layers_post_csa = 1;
      mc.decoder_layers = 1;
      mc.csa_heads = 2;
      mc.sa_heads = 2;
      mc.variant = variant;
      QsummParams qp = QsummParams::init(mc, rng);
      ModelInput in = input_from_instance(e2e_vocab, e2e_inst);
      std::vector<int> target = target_from_instance(e2e_vocab, e2e_inst);
      auto f = [&](const Tensor&) {
        return abstractive_loss(mc, qp, model_encode(mc, qp, in), target, {});
      };
      note(10, worst_over(f, {{&qp.csa.cross.W1},
                              {&qp.csa.w_head},
                              {&qp.csa.sa.w},
                              {&qp.block_s2t.w},
                              {&qp.query_s2t.w, 1e-3},
                              {&qp.dec_layers[0].ffn.b2},
                              {&qp.out_b},
                              {&qp.embedding}}));
    }
  }

  report.all_pass = true;
  for (GradCheckEntry& e : report.entries) {
    e.pass = e.worst_rel < report.tolerance;
    report.all_pass = report.all_pass && e.pass;
  }
  return report;
}

std::string attn_dump_json(const ModelConfig& config, const QsummParams& params,
                           const Vocab& vocab, const QsummInstance& instance) {
  if (config.variant != ModelVariant::CsaMul && config.variant != ModelVariant::CsaAdd)
    throw ContractError("attention dump requires a conditional variant");
  NoGrad guard;
  ModelInput in = input_from_instance(vocab, instance);
  ModelOutput out = model_encode(config, params, in);

  std::vector<std::vector<std::string>> blocks;
  if (config.block_mode == BlockMode::Sentence) {
    for (const std::string& s : instance.sentences) blocks.push_back(tokenize(s));
  } else {
    std::vector<std::string> tokens = tokenize(instance.passage);
    for (std::size_t i = 0; i < tokens.size(); i += static_cast<std::size_t>(config.block_len)) {
      std::size_t end = std::min(tokens.size(), i + static_cast<std::size_t>(config.block_len));
      blocks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                          tokens.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  if (static_cast<int>(blocks.size()) != out.n_blocks)
    throw ContractError("attention dump: " + std::to_string(blocks.size()) + " blocks vs " +
                        std::to_string(out.n_blocks) + " encoded rows");

  json j;
  j["query"] = tokenize(instance.query);
  j["blocks"] = blocks;
  std::vector<double> p(out.n_blocks);
  for (int i = 0; i < out.n_blocks; ++i) p[static_cast<std::size_t>(i)] = out.p(i);
  j["p"] = p;
  std::vector<std::vector<std::vector<double>>> heads;
  for (const Tensor& w : out.head_weights) {
    std::vector<std::vector<double>> mat(static_cast<std::size_t>(w.rows()));
    for (int r = 0; r < w.rows(); ++r) {
      mat[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(w.cols()));
      for (int c = 0; c < w.cols(); ++c) mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = w(r, c);
    }
    heads.push_back(std::move(mat));
  }
  j["heads"] = heads;
  return j.dump(2);
}

}  // namespace csa
