#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "csa/config.hpp"
#include "csa/error.hpp"

using namespace csa;

namespace {

std::string tmp_path(const std::string& stem) { return "config_test_" + stem + ".txt"; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  os << content;
}

}  // namespace

TEST_CASE("default configuration validates") {
  ModelConfig c;
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("validation rejects out of range fields") {
  ModelConfig c;
  c.threshold = 0.0;
  CHECK_THROWS_AS(validate(c), ContractError);
  c.threshold = 1.0;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.dropout = -0.1;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.vocab_size = 4;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.d_model = 0;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.layers_pre_block = -1;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.decoder_layers = 0;
  CHECK_THROWS_AS(validate(c), ContractError);
  c = ModelConfig{};
  c.block_len = 0;
  CHECK_THROWS_AS(validate(c), ContractError);
}

TEST_CASE("enum spellings round trip and reject unknowns") {
  for (ModelVariant v : {ModelVariant::CsaMul, ModelVariant::CsaAdd, ModelVariant::Concat,
                         ModelVariant::AddBaseline, ModelVariant::Transformer})
    CHECK(variant_from_string(to_string(v)) == v);
  for (BlockMode m : {BlockMode::FixedLength, BlockMode::Sentence})
    CHECK(block_mode_from_string(to_string(m)) == m);
  for (DecoderMode m : {DecoderMode::Abstractive, DecoderMode::Extractive})
    CHECK(decoder_mode_from_string(to_string(m)) == m);
  CHECK(to_string(ModelVariant::AddBaseline) == "add-baseline");
  CHECK_THROWS_AS(variant_from_string("csa"), DataError);
  CHECK_THROWS_AS(block_mode_from_string("blocks"), DataError);
  CHECK_THROWS_AS(decoder_mode_from_string("both"), DataError);
}

TEST_CASE("config file round trips every field") {
  const std::string path = tmp_path("roundtrip");
  ModelConfig c;
  c.vocab_size = 57;
  c.d_model = 48;
  c.d_w = 12;
  c.d_ffn = 96;
  c.block_mode = BlockMode::Sentence;
  c.block_len = 7;
  c.layers_pre_block = 2;
  c.layers_post_block = 1;
  c.layers_query = 2;
  c.layers_post_csa = 3;
  c.decoder_layers = 2;
  c.csa_heads = 3;
  c.sa_heads = 6;
  c.variant = ModelVariant::CsaMul;
  c.decoder = DecoderMode::Extractive;
  c.threshold = 1.0 / 3.0;
  c.dropout = 0.15;
  c.token_pos_enc = false;
  c.block_pos_enc = true;
  c.force_top1 = true;
  c.max_decode_len = 11;
  save_config(path, c);
  ModelConfig r = load_config(path);
  CHECK(r.vocab_size == c.vocab_size);
  CHECK(r.d_model == c.d_model);
  CHECK(r.d_w == c.d_w);
  CHECK(r.d_ffn == c.d_ffn);
  CHECK(r.block_mode == c.block_mode);
  CHECK(r.block_len == c.block_len);
  CHECK(r.layers_pre_block == c.layers_pre_block);
  CHECK(r.layers_post_block == c.layers_post_block);
  CHECK(r.layers_query == c.layers_query);
  CHECK(r.layers_post_csa == c.layers_post_csa);
  CHECK(r.decoder_layers == c.decoder_layers);
  CHECK(r.csa_heads == c.csa_heads);
  CHECK(r.sa_heads == c.sa_heads);
  CHECK(r.variant == c.variant);
  CHECK(r.decoder == c.decoder);
  CHECK(r.threshold == c.threshold);
  CHECK(r.dropout == c.dropout);
  CHECK(r.token_pos_enc == c.token_pos_enc);
  CHECK(r.block_pos_enc == c.block_pos_enc);
  CHECK(r.force_top1 == c.force_top1);
  CHECK(r.max_decode_len == c.max_decode_len);
  std::remove(path.c_str());
}

TEST_CASE("config loader rejects malformed files") {
  const std::string path = tmp_path("bad");
  write_file(path, "vocab_size 10\n");
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("config_version"), DataError);

  write_file(path, "config_version 99\nvocab_size 10\n");
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("unsupported"), DataError);

  write_file(path, "config_version 1\nnot_a_key 3\n");
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("unknown key"), DataError);

  write_file(path, "config_version 1\nd_model 32\nd_model 64\n");
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("duplicate"), DataError);

  write_file(path, "config_version 1\nd_model abc\n");
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("bad value"), DataError);

  write_file(path, "config_version 1\nthreshold 2.5\n");
  CHECK_THROWS_AS(load_config(path), ContractError);

  write_file(path, "");
  CHECK_THROWS_AS(load_config(path), DataError);

  CHECK_THROWS_AS(load_config("missing_config.txt"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("presets are valid and carry their documented shapes") {
  ModelConfig a = abstractive_preset();
  a.vocab_size = 100;
  CHECK_NOTHROW(validate(a));
  CHECK(a.d_model == 128);
  CHECK(a.d_w == 16);
  CHECK(a.csa_heads == 4);
  CHECK(a.sa_heads == 4);
  CHECK(a.layers_pre_block == 1);
  CHECK(a.layers_post_block == 0);
  CHECK(a.layers_query == 1);
  CHECK(a.layers_post_csa == 1);
  CHECK(a.dropout == 0.2);
  CHECK(a.decoder == DecoderMode::Abstractive);

  ModelConfig e = extractive_preset();
  e.vocab_size = 100;
  CHECK_NOTHROW(validate(e));
  CHECK(e.d_model == 300);
  CHECK(e.layers_pre_block == 2);
  CHECK(e.layers_post_block == 2);
  CHECK(e.layers_query == 2);
  CHECK(e.layers_post_csa == 2);
  CHECK(e.dropout == 0.1);
  CHECK(e.block_mode == BlockMode::Sentence);
  CHECK(e.decoder == DecoderMode::Extractive);
  CHECK(e.threshold == 0.25);
}
