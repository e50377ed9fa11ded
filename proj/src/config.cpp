#include "csa/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "csa/error.hpp"

namespace csa {
namespace {

constexpr int kConfigVersion = 1;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_positive(const char* name, int v) {
  if (v < 1) throw ContractError(std::string(name) + " must be >= 1, got " + std::to_string(v));
}

void require_nonnegative(const char* name, int v) {
  if (v < 0) throw ContractError(std::string(name) + " must be >= 0, got " + std::to_string(v));
}

}  // namespace

void validate(const ModelConfig& c) {
  require_positive("vocab_size", c.vocab_size);
  require_positive("d_model", c.d_model);
  require_positive("d_w", c.d_w);
  require_positive("d_ffn", c.d_ffn);
  require_positive("block_len", c.block_len);
  require_nonnegative("layers_pre_block", c.layers_pre_block);
  require_nonnegative("layers_post_block", c.layers_post_block);
  require_nonnegative("layers_query", c.layers_query);
  require_nonnegative("layers_post_csa", c.layers_post_csa);
  require_positive("decoder_layers", c.decoder_layers);
  require_positive("csa_heads", c.csa_heads);
  require_positive("sa_heads", c.sa_heads);
  require_positive("max_decode_len", c.max_decode_len);
  if (!(c.threshold > 0.0 && c.threshold < 1.0))
    throw ContractError("threshold must lie in (0,1), got " + fmt_double(c.threshold));
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw ContractError("dropout must lie in [0,1), got " + fmt_double(c.dropout));
  if (c.vocab_size < 5) throw ContractError("vocab_size must cover the reserved control ids");
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::CsaMul: return "mul";
    case ModelVariant::CsaAdd: return "add";
    case ModelVariant::Concat: return "concat";
    case ModelVariant::AddBaseline: return "add-baseline";
    case ModelVariant::Transformer: return "transformer";
  }
  throw ContractError("unknown variant");
}

std::string to_string(BlockMode m) {
  return m == BlockMode::FixedLength ? "fixed-length" : "sentence";
}

std::string to_string(DecoderMode m) {
  return m == DecoderMode::Abstractive ? "abstractive" : "extractive";
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "mul") return ModelVariant::CsaMul;
  if (s == "add") return ModelVariant::CsaAdd;
  if (s == "concat") return ModelVariant::Concat;
  if (s == "add-baseline") return ModelVariant::AddBaseline;
  if (s == "transformer") return ModelVariant::Transformer;
  throw DataError("unknown variant \"" + s +
                  "\" (expected mul, add, concat, add-baseline, or transformer)");
}

BlockMode block_mode_from_string(const std::string& s) {
  if (s == "fixed-length") return BlockMode::FixedLength;
  if (s == "sentence") return BlockMode::Sentence;
  throw DataError("unknown block mode \"" + s + "\" (expected fixed-length or sentence)");
}

DecoderMode decoder_mode_from_string(const std::string& s) {
  if (s == "abstractive") return DecoderMode::Abstractive;
  if (s == "extractive") return DecoderMode::Extractive;
  throw DataError("unknown decoder mode \"" + s + "\" (expected abstractive or extractive)");
}

void save_config(const std::string& path, const ModelConfig& c) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open config for writing: " + path);
  os << "config_version " << kConfigVersion << '\n'
     << "vocab_size " << c.vocab_size << '\n'
     << "d_model " << c.d_model << '\n'
     << "d_w " << c.d_w << '\n'
     << "d_ffn " << c.d_ffn << '\n'
     << "block_mode " << to_string(c.block_mode) << '\n'
     << "block_len " << c.block_len << '\n'
     << "layers_pre_block " << c.layers_pre_block << '\n'
     << "layers_post_block " << c.layers_post_block << '\n'
     << "layers_query " << c.layers_query << '\n'
     << "layers_post_csa " << c.layers_post_csa << '\n'
     << "decoder_layers " << c.decoder_layers << '\n'
     << "csa_heads " << c.csa_heads << '\n'
     << "sa_heads " << c.sa_heads << '\n'
     << "variant " << to_string(c.variant) << '\n'
     << "decoder " << to_string(c.decoder) << '\n'
     << "threshold " << fmt_double(c.threshold) << '\n'
     << "dropout " << fmt_double(c.dropout) << '\n'
     << "token_pos_enc " << (c.token_pos_enc ? 1 : 0) << '\n'
     << "block_pos_enc " << (c.block_pos_enc ? 1 : 0) << '\n'
     << "force_top1 " << (c.force_top1 ? 1 : 0) << '\n'
     << "max_decode_len " << c.max_decode_len << '\n';
}

ModelConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config: " + path);
  ModelConfig c;
  std::map<std::string, std::function<void(const std::string&)>> setters;
  auto set_int = [](int& field) {
    return [p = &field](const std::string& v) { *p = std::stoi(v); };
  };
  auto set_double = [](double& field) {
    return [p = &field](const std::string& v) { *p = std::stod(v); };
  };
  auto set_bool = [](bool& field) {
    return [p = &field](const std::string& v) { *p = std::stoi(v) != 0; };
  };
  setters["vocab_size"] = set_int(c.vocab_size);
  setters["d_model"] = set_int(c.d_model);
  setters["d_w"] = set_int(c.d_w);
  setters["d_ffn"] = set_int(c.d_ffn);
  setters["block_mode"] = [&c](const std::string& v) { c.block_mode = block_mode_from_string(v); };
  setters["block_len"] = set_int(c.block_len);
  setters["layers_pre_block"] = set_int(c.layers_pre_block);
  setters["layers_post_block"] = set_int(c.layers_post_block);
  setters["layers_query"] = set_int(c.layers_query);
  setters["layers_post_csa"] = set_int(c.layers_post_csa);
  setters["decoder_layers"] = set_int(c.decoder_layers);
  setters["csa_heads"] = set_int(c.csa_heads);
  setters["sa_heads"] = set_int(c.sa_heads);
  setters["variant"] = [&c](const std::string& v) { c.variant = variant_from_string(v); };
  setters["decoder"] = [&c](const std::string& v) { c.decoder = decoder_mode_from_string(v); };
  setters["threshold"] = set_double(c.threshold);
  setters["dropout"] = set_double(c.dropout);
  setters["token_pos_enc"] = set_bool(c.token_pos_enc);
  setters["block_pos_enc"] = set_bool(c.block_pos_enc);
  setters["force_top1"] = set_bool(c.force_top1);
  setters["max_decode_len"] = set_int(c.max_decode_len);

  std::string line;
  std::size_t line_no = 0;
  bool versioned = false;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key.empty() || value.empty())
      throw DataError(path + " line " + std::to_string(line_no) + ": expected \"key value\"");
    if (!versioned) {
      if (key != "config_version")
        throw DataError(path + ": first entry must be config_version");
      if (std::stoi(value) != kConfigVersion)
        throw DataError(path + ": unsupported config_version " + value);
      versioned = true;
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end())
      throw DataError(path + " line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    if (++seen[key] > 1)
      throw DataError(path + " line " + std::to_string(line_no) + ": duplicate key \"" + key +
                      "\"");
    try {
      it->second(value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw DataError(path + " line " + std::to_string(line_no) + ": bad value \"" + value +
                      "\" for " + key);
    }
  }
  if (!versioned) throw DataError(path + ": missing config_version");
  validate(c);
  return c;
}

ModelConfig abstractive_preset() {
  ModelConfig c;
  c.d_model = 128;
  c.d_w = 16;
  c.d_ffn = 256;
  c.block_mode = BlockMode::FixedLength;
  c.block_len = 10;
  c.layers_pre_block = 1;
  c.layers_post_block = 0;
  c.layers_query = 1;
  c.layers_post_csa = 1;
  c.decoder_layers = 2;
  c.csa_heads = 4;
  c.sa_heads = 4;
  c.variant = ModelVariant::CsaAdd;
  c.decoder = DecoderMode::Abstractive;
  c.dropout = 0.2;
  return c;
}

ModelConfig extractive_preset() {
  ModelConfig c;
  c.d_model = 300;
  c.d_w = 16;
  c.d_ffn = 600;
  c.block_mode = BlockMode::Sentence;
  c.layers_pre_block = 2;
  c.layers_post_block = 2;
  c.layers_query = 2;
  c.layers_post_csa = 2;
  c.decoder_layers = 2;
  c.csa_heads = 4;
  c.sa_heads = 4;
  c.variant = ModelVariant::CsaMul;
  c.decoder = DecoderMode::Extractive;
  c.dropout = 0.1;
  return c;
}

}  // namespace csa
