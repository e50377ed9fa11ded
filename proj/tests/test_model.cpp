#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "csa/checkpoint.hpp"
#include "csa/data.hpp"
#include "csa/error.hpp"
#include "csa/gradcheck.hpp"
#include "csa/model.hpp"

using namespace csa;

namespace {

ModelConfig tiny_config(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.d_w = 4;
  c.d_ffn = 24;
  c.block_len = 3;
  c.layers_pre_block = 1;
  c.layers_post_block = 1;
  c.layers_query = 1;
  c.layers_post_csa = 1;
  c.decoder_layers = 1;
  c.csa_heads = 2;
  c.sa_heads = 2;
  c.dropout = 0.0;
  return c;
}

QsummInstance abs_instance(const std::string& passage, const std::string& query,
                           const std::string& summary) {
  QsummInstance inst;
  inst.passage = passage;
  inst.query = query;
  inst.summary = summary;
  return inst;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.size() == b.size());
  return (a.value() - b.value()).abs().maxCoeff();
}

}  // namespace

TEST_CASE("encoded shapes follow the block structure") {
  QsummInstance inst = abs_instance("k1 v1 k2 v2 k3 v3", "k2", "v2");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(1);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_instance(vocab, inst);

  ModelOutput out = model_encode(cfg, params, in);
  CHECK(out.n_blocks == 2);
  CHECK(out.u.shape() == Shape{2, 16});
  CHECK(out.p.shape() == Shape{2});
  REQUIRE(out.head_weights.size() == 2);
  CHECK(out.head_weights[0].shape() == Shape{2, 2});
  CHECK(out.block_offset == 0);

  cfg.block_len = 1;
  ModelOutput fine = model_encode(cfg, params, in);
  CHECK(fine.n_blocks == 6);
  CHECK(fine.u.shape() == Shape{6, 16});

  cfg.block_len = 100;
  ModelOutput coarse = model_encode(cfg, params, in);
  CHECK(coarse.n_blocks == 1);
  CHECK(coarse.u.shape() == Shape{1, 16});
}

TEST_CASE("sentence blocks map one block per present sentence") {
  auto data = gen_conditional_extract(3, 1, 4, 2);
  Vocab vocab = Vocab::build(data, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.variant = ModelVariant::CsaMul;
  std::mt19937_64 rng(2);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, data[0]));
  CHECK(out.n_blocks == 4);
  CHECK(out.u.shape() == Shape{4, 16});
}

TEST_CASE("one token passage flows through every stage") {
  QsummInstance inst = abs_instance("k1", "k1", "k1");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(3);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, inst));
  CHECK(out.n_blocks == 1);
  CHECK(out.u.shape() == Shape{1, 16});
  Tensor loss = abstractive_loss(cfg, params, out, target_from_instance(vocab, inst), {});
  CHECK(std::isfinite(loss.item()));
}

TEST_CASE("query encoder reduces to the embedded token when layers are off") {
  QsummInstance inst = abs_instance("k1 v1", "k1", "v1");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.layers_query = 0;
  cfg.token_pos_enc = false;
  std::mt19937_64 rng(4);
  QsummParams params = QsummParams::init(cfg, rng);

  const int qid = vocab.id("k1");
  Tensor c = encode_query_vec(cfg, params, {qid}, {});
  REQUIRE(c.shape() == Shape{16});
  for (int j = 0; j < 16; ++j) CHECK(c(j) == params.embedding(qid, j));

  Tensor c2 = encode_query_vec(cfg, params, {qid, qid}, {});
  CHECK(max_abs_diff(c, c2) == 0.0);
}

TEST_CASE("condition vector width matches the model width") {
  QsummInstance inst = abs_instance("k1 v1", "k1 v1", "v1");
  Vocab vocab = Vocab::build({inst}, 1);
  for (int d : {8, 16, 32}) {
    ModelConfig cfg = tiny_config(vocab.size());
    cfg.d_model = d;
    std::mt19937_64 rng(5);
    QsummParams params = QsummParams::init(cfg, rng);
    Tensor c = encode_query_vec(cfg, params, input_from_instance(vocab, inst).query_ids, {});
    CHECK(c.shape() == Shape{d});
  }
}

TEST_CASE("identical blocks produce identical block vectors") {
  QsummInstance inst = abs_instance("a b c a b c", "a", "b");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::Transformer;
  cfg.layers_post_block = 0;
  cfg.layers_post_csa = 0;
  cfg.block_pos_enc = false;
  std::mt19937_64 rng(6);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, inst));
  REQUIRE(out.n_blocks == 2);
  for (int j = 0; j < 16; ++j) CHECK(out.u(0, j) == out.u(1, j));
}

TEST_CASE("swapping blocks permutes block vectors when block positions are off") {
  QsummInstance ab = abs_instance("a b c d e f", "a", "b");
  QsummInstance ba = abs_instance("d e f a b c", "a", "b");
  Vocab vocab = Vocab::build({ab}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::Transformer;
  cfg.layers_post_block = 0;
  cfg.layers_post_csa = 0;
  cfg.block_pos_enc = false;
  std::mt19937_64 rng(7);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput u1 = model_encode(cfg, params, input_from_instance(vocab, ab));
  ModelOutput u2 = model_encode(cfg, params, input_from_instance(vocab, ba));
  for (int j = 0; j < 16; ++j) {
    CHECK(u1.u(0, j) == u2.u(1, j));
    CHECK(u1.u(1, j) == u2.u(0, j));
  }
}

TEST_CASE("add variant shifts every block vector by the condition") {
  QsummInstance inst = abs_instance("k1 v1 k2 v2 k3 v3", "k2", "v2");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.layers_post_csa = 0;
  std::mt19937_64 rng(8);
  cfg.variant = ModelVariant::Transformer;
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_instance(vocab, inst);
  ModelOutput base = model_encode(cfg, params, in);
  cfg.variant = ModelVariant::AddBaseline;
  ModelOutput shifted = model_encode(cfg, params, in);
  Tensor c = encode_query_vec(cfg, params, in.query_ids, in.query_mask);
  REQUIRE(base.n_blocks == shifted.n_blocks);
  for (int i = 0; i < base.n_blocks; ++i)
    for (int j = 0; j < 16; ++j) CHECK(shifted.u(i, j) == base.u(i, j) + c(j));
}

TEST_CASE("rowwise addition hand cases") {
  Tensor v = Tensor::from({1, 2}, {1, 2});
  Tensor c = Tensor::from({2}, {10, 20});
  Tensor u = add_rowwise(v, c);
  CHECK(u(0, 0) == 11.0);
  CHECK(u(0, 1) == 22.0);
  Tensor zero_c = Tensor::zeros({2});
  CHECK(max_abs_diff(add_rowwise(v, zero_c), v) == 0.0);
  Tensor zero_v = Tensor::zeros({3, 2});
  Tensor rows = add_rowwise(zero_v, c);
  for (int i = 0; i < 3; ++i) {
    CHECK(rows(i, 0) == 10.0);
    CHECK(rows(i, 1) == 20.0);
  }
  CHECK_THROWS_AS(add_rowwise(v, Tensor::from({3}, {1, 2, 3})), DimensionError);
}

TEST_CASE("concat variant prepends query and separator tokens") {
  QsummInstance inst = abs_instance("a b c", "q1 q2", "a");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::Concat;
  cfg.block_len = 1;
  std::mt19937_64 rng(9);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, inst));
  CHECK(out.n_blocks == 6);
  CHECK(out.block_offset == 0);

  auto ext = gen_conditional_extract(3, 1, 2, 2);
  Vocab evocab = Vocab::build(ext, 1);
  ModelConfig ecfg = tiny_config(evocab.size());
  ecfg.variant = ModelVariant::Concat;
  ecfg.block_mode = BlockMode::Sentence;
  ecfg.decoder = DecoderMode::Extractive;
  std::mt19937_64 rng2(10);
  QsummParams eparams = QsummParams::init(ecfg, rng2);
  ModelOutput eout = model_encode(ecfg, eparams, input_from_instance(evocab, ext[0]));
  CHECK(eout.n_blocks == 3);
  CHECK(eout.block_offset == 1);

  ecfg.block_mode = BlockMode::FixedLength;
  CHECK_THROWS_AS(model_encode(ecfg, eparams, input_from_instance(evocab, ext[0])),
                  ContractError);
}

TEST_CASE("transformer variant ignores the query while conditioned variants react") {
  QsummInstance a = abs_instance("k1 v1 k2 v2", "k1", "v1");
  QsummInstance b = abs_instance("k1 v1 k2 v2", "k2", "v2");
  Vocab vocab = Vocab::build({a, b}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  std::mt19937_64 rng(11);
  cfg.variant = ModelVariant::Transformer;
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput ua = model_encode(cfg, params, input_from_instance(vocab, a));
  ModelOutput ub = model_encode(cfg, params, input_from_instance(vocab, b));
  CHECK(max_abs_diff(ua.u, ub.u) == 0.0);

  cfg.variant = ModelVariant::CsaMul;
  ModelOutput ca = model_encode(cfg, params, input_from_instance(vocab, a));
  ModelOutput cb = model_encode(cfg, params, input_from_instance(vocab, b));
  CHECK(max_abs_diff(ca.u, cb.u) > 1e-12);
}

TEST_CASE("decoder layer respects the causal mask") {
  std::mt19937_64 rng(12);
  DecoderLayerParams p = DecoderLayerParams::init(2, 8, 12, rng);
  Tensor memory = uniform({3, 8}, -1.0, 1.0, rng);
  Tensor x1 = uniform({4, 8}, -1.0, 1.0, rng);
  Array data2 = x1.value();
  for (int j = 0; j < 8; ++j) data2(3 * 8 + j) += 7.0;
  Tensor x2 = Tensor::from_array({4, 8}, data2);
  MaskVec live4 = MaskVec::Constant(4, true);
  MaskVec live3 = MaskVec::Constant(3, true);
  Tensor y1 = decoder_layer(x1, memory, p, causal_square(live4), cross_keep(4, live3));
  Tensor y2 = decoder_layer(x2, memory, p, causal_square(live4), cross_keep(4, live3));
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < 8; ++j) CHECK(y1(r, j) == y2(r, j));
  double last_diff = 0;
  for (int j = 0; j < 8; ++j) last_diff = std::max(last_diff, std::abs(y1(3, j) - y2(3, j)));
  CHECK(last_diff > 1e-12);
}

TEST_CASE("abstractive loss is finite and greedy decode stays in vocabulary") {
  QsummInstance inst = abs_instance("k1 v1 k2 v2", "k2", "v2");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  cfg.max_decode_len = 5;
  std::mt19937_64 rng(13);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, inst));
  Tensor loss = abstractive_loss(cfg, params, out, target_from_instance(vocab, inst), {});
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() > 0.0);
  std::vector<int> decoded = greedy_decode(cfg, params, out);
  CHECK(decoded.size() <= 5);
  for (int id : decoded) {
    CHECK(id >= 0);
    CHECK(id < vocab.size());
  }
  CHECK_THROWS_AS(abstractive_loss(cfg, params, out, {Vocab::kBos}, {}), ContractError);
}

TEST_CASE("selection rule is a strict threshold on probabilities") {
  auto data = gen_conditional_extract(21, 1, 4, 2);
  Vocab vocab = Vocab::build(data, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.variant = ModelVariant::CsaMul;
  std::mt19937_64 rng(14);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_instance(vocab, data[0]);
  ModelOutput out = model_encode(cfg, params, in);

  params.ext_w.value().setZero();
  params.ext_b.value().setZero();
  ExtractiveResult all = extractive_decode(cfg, params, out);
  REQUIRE(all.probs.shape() == Shape{4});
  for (int i = 0; i < 4; ++i) CHECK(all.probs[i] == 0.5);
  CHECK(all.selected == std::vector<int>{0, 1, 2, 3});

  cfg.threshold = 0.5;
  ExtractiveResult none = extractive_decode(cfg, params, out);
  CHECK(none.selected.empty());

  cfg.force_top1 = true;
  ExtractiveResult forced = extractive_decode(cfg, params, out);
  CHECK(forced.selected == std::vector<int>{0});
}

TEST_CASE("selection shrinks as the threshold grows") {
  auto data = gen_conditional_extract(22, 1, 6, 3);
  Vocab vocab = Vocab::build(data, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(15);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, data[0]));
  cfg.threshold = 0.2;
  auto low = extractive_decode(cfg, params, out).selected;
  cfg.threshold = 0.6;
  auto high = extractive_decode(cfg, params, out).selected;
  for (int idx : high) CHECK(std::find(low.begin(), low.end(), idx) != low.end());
}

TEST_CASE("zeroed projection gives the exact coin flip loss") {
  auto data = gen_conditional_extract(23, 1, 3, 2);
  Vocab vocab = Vocab::build(data, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(16);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelOutput out = model_encode(cfg, params, input_from_instance(vocab, data[0]));
  params.ext_w.value().setZero();
  params.ext_b.value().setZero();
  Tensor loss = extractive_loss(cfg, params, out, data[0].labels);
  CHECK(std::abs(loss.item() - std::log(2.0)) <= 1e-12);
  CHECK_THROWS_AS(extractive_loss(cfg, params, out, {1, 0}), DimensionError);
}

TEST_CASE("shared block encoder gradients double with duplicated blocks") {
  QsummInstance one = abs_instance("a b c", "a", "b");
  QsummInstance two = abs_instance("a b c a b c", "a", "b");
  Vocab vocab = Vocab::build({two}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::Transformer;
  cfg.layers_post_block = 0;
  cfg.layers_post_csa = 0;
  cfg.block_pos_enc = false;
  std::mt19937_64 rng(17);
  QsummParams params = QsummParams::init(cfg, rng);
  ParamMap pm;
  params.register_into(pm);

  {
    Tape tape;
    Tensor loss = sum(model_encode(cfg, params, input_from_instance(vocab, one)).u);
    tape.backward(loss);
  }
  Array g_ffn = params.block_layers[0].ffn.W1.grad();
  Array g_s2t = params.block_s2t.w.grad();
  pm.zero_grad();
  {
    Tape tape;
    Tensor loss = sum(model_encode(cfg, params, input_from_instance(vocab, two)).u);
    tape.backward(loss);
  }
  CHECK((params.block_layers[0].ffn.W1.grad() - 2.0 * g_ffn).abs().maxCoeff() <= 1e-12);
  CHECK((params.block_s2t.w.grad() - 2.0 * g_s2t).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("pad embedding rows never affect abstractive outputs") {
  QsummInstance shorter = abs_instance("k1 v1", "k1", "v1");
  QsummInstance longer = abs_instance("k2 v2 k3 v3 k4 v4 k5 v5", "k2", "v2");
  Vocab vocab = Vocab::build({shorter, longer}, 1);
  auto batches = make_batches({shorter, longer}, vocab, 2, 0);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  std::size_t row = b.passage.mask[0][7] == 0 ? 0 : 1;
  REQUIRE(b.passage.mask[row][7] == 0);

  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(18);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_batch(b, row);
  ModelOutput out1 = model_encode(cfg, params, in);
  Tensor loss1 = abstractive_loss(cfg, params, out1, b.target.ids[row], b.target.mask[row]);

  params.embedding.value().segment(Vocab::kPad * 16, 16).setConstant(1000.0);
  ModelOutput out2 = model_encode(cfg, params, in);
  Tensor loss2 = abstractive_loss(cfg, params, out2, b.target.ids[row], b.target.mask[row]);
  CHECK(max_abs_diff(out1.u, out2.u) <= 1e-10);
  CHECK(std::abs(loss1.item() - loss2.item()) <= 1e-10);
}

TEST_CASE("pad positions never affect extractive outputs") {
  QsummInstance small;
  small.extractive = true;
  small.sentences = {"t0 w1", "t1 w2 w3 w4 w5 w6"};
  small.query = "t0";
  small.labels = {1, 0};
  QsummInstance big;
  big.extractive = true;
  big.sentences = {"t0 w9 w9", "t1 w2", "t0 w7"};
  big.query = "t1";
  big.labels = {0, 1, 0};
  Vocab vocab = Vocab::build({small, big}, 1);
  auto batches = make_batches({small, big}, vocab, 2, 1);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  std::size_t row = b.sentence_present[0][2] == 0 ? 0 : 1;
  REQUIRE(b.sentence_present[row][2] == 0);

  ModelConfig cfg = tiny_config(vocab.size());
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.variant = ModelVariant::CsaMul;
  std::mt19937_64 rng(19);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_batch(b, row);
  const QsummInstance& inst = b.instance_index[row] == 0 ? small : big;
  ModelOutput out1 = model_encode(cfg, params, in);
  Tensor loss1 = extractive_loss(cfg, params, out1, inst.labels);

  params.embedding.value().segment(Vocab::kPad * 16, 16).setConstant(-500.0);
  ModelOutput out2 = model_encode(cfg, params, in);
  Tensor loss2 = extractive_loss(cfg, params, out2, inst.labels);
  CHECK(max_abs_diff(out1.u, out2.u) <= 1e-10);
  CHECK(std::abs(loss1.item() - loss2.item()) <= 1e-10);
}

TEST_CASE("checkpoint round trip reproduces forwards exactly") {
  const std::string path = "model_ckpt_test.bin";
  QsummInstance inst = abs_instance("k1 v1 k2 v2 k3 v3", "k3", "v3");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaMul;
  std::mt19937_64 rng1(20), rng2(21);
  QsummParams original = QsummParams::init(cfg, rng1);
  QsummParams reloaded = QsummParams::init(cfg, rng2);
  ParamMap pm1, pm2;
  original.register_into(pm1);
  reloaded.register_into(pm2);
  save_checkpoint(path, pm1);
  load_checkpoint(path, pm2);

  ModelInput in = input_from_instance(vocab, inst);
  ModelOutput a = model_encode(cfg, original, in);
  ModelOutput b = model_encode(cfg, reloaded, in);
  CHECK(max_abs_diff(a.u, b.u) == 0.0);
  CHECK(greedy_decode(cfg, original, a) == greedy_decode(cfg, reloaded, b));
  Tensor la = abstractive_loss(cfg, original, a, target_from_instance(vocab, inst), {});
  Tensor lb = abstractive_loss(cfg, reloaded, b, target_from_instance(vocab, inst), {});
  CHECK(la.item() == lb.item());
  std::remove(path.c_str());
}

TEST_CASE("training dropout is reproducible under a fixed seed") {
  QsummInstance inst = abs_instance("k1 v1 k2 v2", "k1", "v1");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  cfg.dropout = 0.3;
  std::mt19937_64 rng(22);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_instance(vocab, inst);
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 drop_rng(seed);
    RunCtx ctx{&drop_rng, true, cfg.dropout};
    ModelOutput out = model_encode(cfg, params, in, ctx);
    return abstractive_loss(cfg, params, out, target_from_instance(vocab, inst), {}, ctx).item();
  };
  CHECK(run(99) == run(99));
  CHECK(run(99) != run(100));
}

TEST_CASE("end to end gradients match finite differences") {
  // Three blocks and a two token query keep every attention softmax away from
  // the single element case whose scorer gradients are structurally zero.
  QsummInstance inst = abs_instance("k1 v1 k2 v2 k3 v3", "k2 v2", "v2");
  Vocab vocab = Vocab::build({inst}, 1);
  for (ModelVariant variant : {ModelVariant::CsaAdd, ModelVariant::CsaMul}) {
    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.d_model = 8;
    cfg.d_w = 3;
    cfg.d_ffn = 10;
    cfg.block_len = 2;
    cfg.layers_pre_block = 1;
    cfg.layers_post_block = 0;
    cfg.layers_query = 1;
    cfg.layers_post_csa = 1;
    cfg.decoder_layers = 1;
    cfg.csa_heads = 2;
    cfg.sa_heads = 2;
    cfg.variant = variant;
    std::mt19937_64 rng(23);
    QsummParams params = QsummParams::init(cfg, rng);
    ModelInput in = input_from_instance(vocab, inst);
    std::vector<int> target = target_from_instance(vocab, inst);
    auto loss_fn = [&](const Tensor&) {
      return abstractive_loss(cfg, params, model_encode(cfg, params, in), target, {});
    };
    CHECK(finite_difference_check(loss_fn, params.csa.cross.W1) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.csa.w_head) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.csa.sa.w) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.block_s2t.w) < 1e-4);
    // Tiny gradient under deep attenuation; the larger step keeps central
    // difference roundoff below the tolerance.
    CHECK(finite_difference_check(loss_fn, params.query_s2t.w, 1e-3) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.dec_layers[0].ffn.b2) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.out_b) < 1e-4);
    CHECK(finite_difference_check(loss_fn, params.embedding) < 1e-4);
  }
}

TEST_CASE("extractive gradients match finite differences") {
  auto data = gen_conditional_extract(24, 1, 3, 2);
  Vocab vocab = Vocab::build(data, 1);
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.d_model = 8;
  cfg.d_w = 3;
  cfg.d_ffn = 10;
  cfg.block_mode = BlockMode::Sentence;
  cfg.decoder = DecoderMode::Extractive;
  cfg.layers_pre_block = 1;
  cfg.layers_post_block = 0;
  cfg.layers_query = 1;
  cfg.layers_post_csa = 1;
  cfg.decoder_layers = 1;
  cfg.csa_heads = 2;
  cfg.sa_heads = 2;
  cfg.variant = ModelVariant::CsaMul;
  std::mt19937_64 rng(25);
  QsummParams params = QsummParams::init(cfg, rng);
  ModelInput in = input_from_instance(vocab, data[0]);
  auto loss_fn = [&](const Tensor&) {
    return extractive_loss(cfg, params, model_encode(cfg, params, in), data[0].labels);
  };
  CHECK(finite_difference_check(loss_fn, params.csa.cross.W2) < 1e-4);
  CHECK(finite_difference_check(loss_fn, params.ext_w) < 1e-4);
  CHECK(finite_difference_check(loss_fn, params.ext_b) < 1e-4);
  CHECK(finite_difference_check(loss_fn, params.ext_layers[0].ln_gain) < 1e-4);
}

TEST_CASE("invalid inputs are rejected with precise errors") {
  QsummInstance inst = abs_instance("k1 v1", "k1", "v1");
  Vocab vocab = Vocab::build({inst}, 1);
  ModelConfig cfg = tiny_config(vocab.size());
  cfg.variant = ModelVariant::CsaAdd;
  std::mt19937_64 rng(26);
  QsummParams params = QsummParams::init(cfg, rng);

  ModelInput bad_id = input_from_instance(vocab, inst);
  bad_id.passage_ids[0] = vocab.size();
  CHECK_THROWS_WITH_AS(model_encode(cfg, params, bad_id), doctest::Contains("unknown token"),
                       DataError);

  ModelInput no_query = input_from_instance(vocab, inst);
  no_query.query_ids.clear();
  CHECK_THROWS_WITH_AS(model_encode(cfg, params, no_query), doctest::Contains("empty query"),
                       DataError);

  ModelInput dead_passage = input_from_instance(vocab, inst);
  dead_passage.passage_mask.assign(dead_passage.passage_ids.size(), 0);
  CHECK_THROWS_WITH_AS(model_encode(cfg, params, dead_passage),
                       doctest::Contains("empty passage"), DataError);

  ModelConfig scfg = tiny_config(vocab.size());
  scfg.block_mode = BlockMode::Sentence;
  scfg.variant = ModelVariant::CsaAdd;
  ModelInput dead_sentence;
  dead_sentence.sentence_ids = {{vocab.id("k1")}};
  dead_sentence.sentence_mask = {{0}};
  dead_sentence.sentence_present = {1};
  dead_sentence.query_ids = {vocab.id("k1")};
  CHECK_THROWS_WITH_AS(model_encode(scfg, params, dead_sentence), doctest::Contains("block 0"),
                       DataError);
}
