#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "csa/checkpoint.hpp"
#include "csa/config.hpp"
#include "csa/data.hpp"
#include "csa/error.hpp"
#include "csa/model.hpp"
#include "csa/rouge.hpp"
#include "csa/train.hpp"

namespace fs = std::filesystem;
using namespace csa;

namespace {

ModelVariant parse_variant(const std::string& name) {
  if (name == "mul") return ModelVariant::CsaMul;
  if (name == "add") return ModelVariant::CsaAdd;
  if (name == "concat") return ModelVariant::Concat;
  if (name == "add-baseline") return ModelVariant::AddBaseline;
  if (name == "transformer") return ModelVariant::Transformer;
  throw ContractError("unknown variant: " + name);
}

bool parse_mode_extractive(const std::string& mode) {
  if (mode == "abstractive") return false;
  if (mode == "extractive") return true;
  throw ContractError("unknown mode: " + mode);
}

std::vector<QsummInstance> load_dataset(const std::string& path, bool extractive) {
  return extractive ? load_extractive(path) : load_abstractive(path);
}

// A dataset argument may be a single record file or a directory produced by
// gen-data; directories resolve to the named split inside.
std::string resolve_split(const std::string& data, const std::string& split) {
  if (fs::is_directory(data)) return (fs::path(data) / (split + ".jsonl")).string();
  return data;
}

struct BundlePaths {
  std::string checkpoint, config, vocab, log, attn;
  explicit BundlePaths(const std::string& dir)
      : checkpoint((fs::path(dir) / "model.ckpt").string()),
        config((fs::path(dir) / "config.cfg").string()),
        vocab((fs::path(dir) / "vocab.txt").string()),
        log((fs::path(dir) / "train_log.jsonl").string()),
        attn((fs::path(dir) / "attn.json").string()) {}
};

struct LoadedBundle {
  ModelConfig config;
  Vocab vocab;
  QsummParams params;
};

LoadedBundle load_bundle(const std::string& dir) {
  BundlePaths paths(dir);
  LoadedBundle b;
  b.config = load_config(paths.config);
  b.vocab = Vocab::load(paths.vocab);
  if (b.config.vocab_size != b.vocab.size())
    throw ContractError("bundle vocabulary has " + std::to_string(b.vocab.size()) +
                        " entries but the config expects " + std::to_string(b.config.vocab_size));
  std::mt19937_64 rng(0);
  b.params = QsummParams::init(b.config, rng);
  ParamMap pm;
  b.params.register_into(pm);
  load_checkpoint(paths.checkpoint, pm);
  return b;
}

int cmd_gen_data(const std::string& out, const std::string& mode, std::uint64_t seed) {
  const bool extractive = parse_mode_extractive(mode);
  fs::create_directories(out);
  const std::string train_path = (fs::path(out) / "train.jsonl").string();
  const std::string val_path = (fs::path(out) / "val.jsonl").string();
  if (extractive) {
    save_extractive(train_path, gen_conditional_extract(seed, 2000, 8, 4));
    save_extractive(val_path, gen_conditional_extract(seed + 1, 200, 8, 4));
  } else {
    save_abstractive(train_path, gen_conditional_copy(seed, 2000, 4, 100));
    save_abstractive(val_path, gen_conditional_copy(seed + 1, 200, 4, 100));
  }
  std::cout << "wrote " << train_path << " and " << val_path << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& config_path,
              const std::string& mode, bool mode_given, const std::string& variant,
              bool variant_given, std::uint64_t seed, int epochs, double lr, bool lr_given,
              double threshold, bool threshold_given) {
  ModelConfig config;
  bool extractive;
  if (!config_path.empty()) {
    config = load_config(config_path);
    extractive = config.decoder == DecoderMode::Extractive;
    if (mode_given && parse_mode_extractive(mode) != extractive)
      throw ContractError("--mode " + mode + " conflicts with the decoder in " + config_path);
  } else {
    extractive = mode_given && parse_mode_extractive(mode);
    if (extractive) {
      config.block_mode = BlockMode::Sentence;
      config.decoder = DecoderMode::Extractive;
    }
  }
  if (variant_given) config.variant = parse_variant(variant);
  if (threshold_given) config.threshold = threshold;

  std::vector<QsummInstance> train_set = load_dataset(resolve_split(data, "train"), extractive);
  std::vector<QsummInstance> val_set = load_dataset(resolve_split(data, "val"), extractive);
  std::vector<QsummInstance> all = train_set;
  all.insert(all.end(), val_set.begin(), val_set.end());
  Vocab vocab = Vocab::build(all, 1);
  config.vocab_size = vocab.size();
  validate(config);

  fs::create_directories(out);
  BundlePaths paths(out);
  save_config(paths.config, config);
  vocab.save(paths.vocab);

  std::mt19937_64 rng(seed);
  QsummParams params = QsummParams::init(config, rng);

  TrainConfig tc;
  tc.epochs = epochs;
  if (lr_given) tc.lr = lr;
  tc.seed = seed;
  tc.checkpoint_path = paths.checkpoint;
  std::ofstream log(paths.log);
  if (!log) throw DataError("cannot write training log: " + paths.log);
  tc.log = &log;

  TrainResult res = train(config, params, train_set, val_set, vocab, tc);
  std::cout << "steps " << res.steps << " best_val_loss " << res.best_val_loss << " at step "
            << res.best_val_step;
  if (res.early_stopped) std::cout << " (early stop)";
  if (res.metric_reached) std::cout << " (metric target reached)";
  std::cout << "\ncheckpoint " << paths.checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& out, const std::string& data, const std::string& mode,
             bool mode_given, double threshold, bool threshold_given) {
  LoadedBundle b = load_bundle(out);
  const bool extractive = b.config.decoder == DecoderMode::Extractive;
  if (mode_given && parse_mode_extractive(mode) != extractive)
    throw ContractError("--mode " + mode + " conflicts with the decoder in the bundle at " + out);
  if (threshold_given) b.config.threshold = threshold;
  std::vector<QsummInstance> dataset = load_dataset(resolve_split(data, "val"), extractive);
  EvalReport report = evaluate(b.config, b.params, dataset, b.vocab, &std::cerr);
  std::cout << "instances " << report.n_instances << " mean_loss " << report.mean_loss << "\n";
  if (extractive) {
    std::cout << "selection P=" << report.sel_precision << " R=" << report.sel_recall
              << " F1=" << report.sel_f1 << "\n";
  } else {
    std::cout << "exact_match " << report.exact_match << "\n";
  }
  std::cout << rouge_report_line("rouge-1", report.r1) << "\n"
            << rouge_report_line("rouge-2", report.r2) << "\n"
            << rouge_report_line("rouge-l", report.rl) << "\n";
  return 0;
}

int cmd_gradcheck() {
  GradCheckReport report = run_gradcheck(5);
  for (const GradCheckEntry& e : report.entries)
    std::cout << (e.pass ? "PASS " : "FAIL ") << e.target << " worst_rel " << e.worst_rel << "\n";
  std::cout << (report.all_pass ? "all gradients verified" : "gradient check FAILED") << "\n";
  return report.all_pass ? 0 : 1;
}

int cmd_attn_dump(const std::string& out, const std::string& data, std::uint64_t index) {
  LoadedBundle b = load_bundle(out);
  const bool extractive = b.config.decoder == DecoderMode::Extractive;
  std::vector<QsummInstance> dataset = load_dataset(resolve_split(data, "val"), extractive);
  if (index >= dataset.size())
    throw ContractError("instance index " + std::to_string(index) + " outside dataset of " +
                        std::to_string(dataset.size()));
  std::string dump = attn_dump_json(b.config, b.params, b.vocab, dataset[index]);
  BundlePaths paths(out);
  std::ofstream os(paths.attn);
  if (!os) throw DataError("cannot write attention dump: " + paths.attn);
  os << dump << "\n";
  std::cout << dump << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-conditioned summarization kit"};
  app.require_subcommand(1);

  std::string data, out, config_path;
  std::string mode = "abstractive", variant = "add";
  std::uint64_t seed = 0;
  int epochs = 5;
  double lr = 1e-3, threshold = 0.25;

  CLI::App* gen = app.add_subcommand("gen-data", "write synthetic train/val splits");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--mode", mode, "abstractive or extractive");
  gen->add_option("--seed", seed, "generator seed");

  CLI::App* tr = app.add_subcommand("train", "train a model into an artifact directory");
  tr->add_option("--data", data, "dataset directory or record file")->required();
  tr->add_option("--out", out, "artifact directory")->required();
  tr->add_option("--config", config_path, "model config file");
  CLI::Option* tr_mode = tr->add_option("--mode", mode, "abstractive or extractive");
  CLI::Option* tr_variant =
      tr->add_option("--variant", variant, "mul, add, concat, add-baseline, or transformer");
  tr->add_option("--seed", seed, "initialization and shuffling seed");
  tr->add_option("--epochs", epochs, "training epochs");
  CLI::Option* tr_lr = tr->add_option("--lr", lr, "base learning rate");
  CLI::Option* tr_thresh = tr->add_option("--threshold", threshold, "extractive selection threshold");

  CLI::App* ev = app.add_subcommand("eval", "evaluate an artifact directory on a dataset");
  ev->add_option("--out", out, "artifact directory")->required();
  ev->add_option("--data", data, "dataset directory or record file")->required();
  CLI::Option* ev_mode = ev->add_option("--mode", mode, "abstractive or extractive");
  CLI::Option* ev_thresh = ev->add_option("--threshold", threshold, "extractive selection threshold");

  app.add_subcommand("gradcheck", "finite-difference audit of every stage");

  CLI::App* ad = app.add_subcommand("attn-dump", "dump attention weights for one instance");
  ad->add_option("--out", out, "artifact directory")->required();
  ad->add_option("--data", data, "dataset directory or record file")->required();
  ad->add_option("--seed", seed, "instance index within the dataset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) return cmd_gen_data(out, mode, seed);
    if (app.got_subcommand("train"))
      return cmd_train(data, out, config_path, mode, tr_mode->count() > 0, variant,
                       tr_variant->count() > 0, seed, epochs, lr, tr_lr->count() > 0, threshold,
                       tr_thresh->count() > 0);
    if (app.got_subcommand("eval"))
      return cmd_eval(out, data, mode, ev_mode->count() > 0, threshold, ev_thresh->count() > 0);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
    if (app.got_subcommand("attn-dump")) return cmd_attn_dump(out, data, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
