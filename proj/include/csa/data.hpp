#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace csa {

// One record of either task shape. Abstractive records fill passage/query/
// summary; extractive records fill sentences/query/labels.
struct QsummInstance {
  bool extractive = false;
  std::string passage;
  std::string query;
  std::string summary;
  std::vector<std::string> sentences;
  std::vector<std::uint8_t> labels;
};

// Lowercase, split on whitespace; punctuation characters become standalone
// tokens.
std::vector<std::string> tokenize(const std::string& text);

// Token/id bijection with reserved control ids. Out-of-vocabulary tokens map
// to UNK on encode.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;

  Vocab();

  // Frequency-ordered (ties broken lexicographically); tokens below min_freq
  // are dropped and encode as UNK.
  static Vocab build(const std::vector<QsummInstance>& instances, int min_freq);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // One non-control token per line in id order; control ids are implicit.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Line-delimited records; abstractive lines carry string fields "passage",
// "query", "summary"; extractive lines carry "sentences", "query", "labels".
std::vector<QsummInstance> load_abstractive(const std::string& path);
std::vector<QsummInstance> load_extractive(const std::string& path);
void save_abstractive(const std::string& path, const std::vector<QsummInstance>& instances);
void save_extractive(const std::string& path, const std::vector<QsummInstance>& instances);

// Passage = shuffled key-value pairs, query = one key, summary = its value.
// Chance exact-match for a query-blind model is 1/n_pairs by construction.
std::vector<QsummInstance> gen_conditional_copy(std::uint64_t seed, int count, int n_pairs,
                                                int vocab_size);

// Each sentence opens with a topic marker; query names one topic; labels mark
// the sentences whose marker matches.
std::vector<QsummInstance> gen_conditional_extract(std::uint64_t seed, int count,
                                                   int n_sentences, int n_topics);

// Row-major padded id grids; mask is 1 exactly on real tokens.
struct PaddedSeqs {
  std::vector<std::vector<int>> ids;
  std::vector<std::vector<std::uint8_t>> mask;
  int max_len = 0;
};

struct Batch {
  bool extractive = false;
  std::vector<int> instance_index;

  PaddedSeqs passage;
  PaddedSeqs query;
  PaddedSeqs target;  // BOS ... EOS framed summary ids

  // [B][S_max][L_max] sentence grids; sentence_present marks real sentences.
  std::vector<std::vector<std::vector<int>>> sentence_ids;
  std::vector<std::vector<std::vector<std::uint8_t>>> sentence_mask;
  std::vector<std::vector<std::uint8_t>> sentence_present;
  std::vector<std::vector<std::uint8_t>> labels;  // 0 where no sentence
};

// Shuffles deterministically under seed, then slices consecutive batches; the
// final batch may be short. Every padded axis uses the batch maximum.
std::vector<Batch> make_batches(const std::vector<QsummInstance>& instances, const Vocab& vocab,
                                int batch_size, std::uint64_t seed);

// Deterministic bounded draw and in-place shuffle used by every data-side
// sampler (keeps datasets byte-identical across platforms).
std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n);
template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[draw(rng, i)]);
}

}  // namespace csa
