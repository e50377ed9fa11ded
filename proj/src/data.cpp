#include "csa/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "csa/error.hpp"

namespace csa {

using nlohmann::json;

namespace {

const char* const kReserved[] = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};

std::string line_tag(const std::string& path, std::size_t line_no) {
  return path + " line " + std::to_string(line_no);
}

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw DataError(line_tag(path, line_no) + ": malformed record");
  return j;
}

std::string string_field(const json& j, const std::string& path, std::size_t line_no,
                         const char* field) {
  auto it = j.find(field);
  if (it == j.end())
    throw DataError(line_tag(path, line_no) + ": missing field \"" + field + "\"");
  if (!it->is_string())
    throw DataError(line_tag(path, line_no) + ": field \"" + field + "\" must be a string");
  return it->get<std::string>();
}

template <typename Fn>
std::vector<QsummInstance> load_lines(const std::string& path, Fn parse_record) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset: " + path);
  std::vector<QsummInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line_no, line));
  }
  if (out.empty()) throw ContractError("empty dataset file: " + path);
  return out;
}

// Real tokens only; an empty sequence degrades to a single UNK so every mask
// row keeps at least one live position.
std::vector<int> encode_nonempty(const Vocab& vocab, const std::string& text) {
  std::vector<int> ids = vocab.encode(tokenize(text));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

void pad_into(PaddedSeqs& out, std::vector<std::vector<int>> rows) {
  out.max_len = 0;
  for (const auto& r : rows) out.max_len = std::max(out.max_len, static_cast<int>(r.size()));
  for (auto& r : rows) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(out.max_len), 0);
    std::fill(mask.begin(), mask.begin() + static_cast<long>(r.size()), 1);
    r.resize(static_cast<std::size_t>(out.max_len), Vocab::kPad);
    out.ids.push_back(std::move(r));
    out.mask.push_back(std::move(mask));
  }
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (std::ispunct(u)) {
      flush();
      out.emplace_back(1, static_cast<char>(u));
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (const char* tok : kReserved) {
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(tok);
  }
}

Vocab Vocab::build(const std::vector<QsummInstance>& instances, int min_freq) {
  std::map<std::string, std::int64_t> freq;
  auto count = [&](const std::string& text) {
    for (std::string& tok : tokenize(text)) ++freq[tok];
  };
  for (const QsummInstance& inst : instances) {
    count(inst.query);
    if (inst.extractive) {
      for (const std::string& s : inst.sentences) count(s);
    } else {
      count(inst.passage);
      count(inst.summary);
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : freq)
    if (n >= min_freq) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (auto& [tok, n] : kept) {
    (void)n;
    if (v.token_to_id_.count(tok)) continue;
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write vocabulary: " + path);
  for (int i = kSep + 1; i < size(); ++i) os << id_to_token_[static_cast<std::size_t>(i)] << "\n";
  if (!os) throw DataError("failed writing vocabulary: " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open vocabulary: " + path);
  Vocab v;
  std::string tok;
  std::size_t line_no = 0;
  while (std::getline(is, tok)) {
    ++line_no;
    if (tok.empty()) throw DataError(line_tag(path, line_no) + ": empty vocabulary entry");
    if (v.token_to_id_.count(tok))
      throw DataError(line_tag(path, line_no) + ": duplicate token \"" + tok + "\"");
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int i : ids) toks.push_back(token(i));
  return toks;
}

std::vector<QsummInstance> load_abstractive(const std::string& path) {
  return load_lines(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    QsummInstance inst;
    inst.passage = string_field(j, path, line_no, "passage");
    inst.query = string_field(j, path, line_no, "query");
    inst.summary = string_field(j, path, line_no, "summary");
    return inst;
  });
}

std::vector<QsummInstance> load_extractive(const std::string& path) {
  return load_lines(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    QsummInstance inst;
    inst.extractive = true;
    inst.query = string_field(j, path, line_no, "query");
    auto sit = j.find("sentences");
    if (sit == j.end() || !sit->is_array())
      throw DataError(line_tag(path, line_no) + ": missing field \"sentences\"");
    for (const json& s : *sit) {
      if (!s.is_string())
        throw DataError(line_tag(path, line_no) + ": \"sentences\" entries must be strings");
      inst.sentences.push_back(s.get<std::string>());
    }
    auto lit = j.find("labels");
    if (lit == j.end() || !lit->is_array())
      throw DataError(line_tag(path, line_no) + ": missing field \"labels\"");
    for (const json& l : *lit) {
      if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1))
        throw DataError(line_tag(path, line_no) + ": \"labels\" entries must be 0 or 1");
      inst.labels.push_back(static_cast<std::uint8_t>(l.get<int>()));
    }
    if (inst.labels.size() != inst.sentences.size())
      throw DataError(line_tag(path, line_no) + ": labels length " +
                      std::to_string(inst.labels.size()) + " does not match sentence count " +
                      std::to_string(inst.sentences.size()));
    return inst;
  });
}

void save_abstractive(const std::string& path, const std::vector<QsummInstance>& instances) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open dataset for writing: " + path);
  for (const QsummInstance& inst : instances) {
    json j{{"passage", inst.passage}, {"query", inst.query}, {"summary", inst.summary}};
    os << j.dump() << '\n';
  }
}

void save_extractive(const std::string& path, const std::vector<QsummInstance>& instances) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open dataset for writing: " + path);
  for (const QsummInstance& inst : instances) {
    json labels = json::array();
    for (std::uint8_t l : inst.labels) labels.push_back(static_cast<int>(l));
    json j{{"sentences", inst.sentences}, {"query", inst.query}, {"labels", labels}};
    os << j.dump() << '\n';
  }
}

std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return n == 0 ? 0 : rng() % n; }

std::vector<QsummInstance> gen_conditional_copy(std::uint64_t seed, int count, int n_pairs,
                                                int vocab_size) {
  if (n_pairs < 2) throw ContractError("gen_conditional_copy: n_pairs must be >= 2");
  if (count < 1) throw ContractError("gen_conditional_copy: count must be >= 1");
  const int budget = (vocab_size - 5) / 2;
  if (budget < n_pairs)
    throw ContractError("gen_conditional_copy: vocab_size " + std::to_string(vocab_size) +
                        " cannot host " + std::to_string(n_pairs) + " distinct keys");
  std::mt19937_64 rng(seed);
  std::vector<int> key_pool(static_cast<std::size_t>(budget));
  std::vector<int> val_pool(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) key_pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < budget; ++i) val_pool[static_cast<std::size_t>(i)] = i;

  std::vector<QsummInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    shuffle_inplace(key_pool, rng);
    shuffle_inplace(val_pool, rng);
    std::ostringstream passage;
    for (int p = 0; p < n_pairs; ++p) {
      if (p > 0) passage << ' ';
      passage << 'k' << key_pool[static_cast<std::size_t>(p)] << " v"
              << val_pool[static_cast<std::size_t>(p)];
    }
    const std::size_t pick = static_cast<std::size_t>(draw(rng, static_cast<std::uint64_t>(n_pairs)));
    QsummInstance inst;
    inst.passage = passage.str();
    inst.query = "k" + std::to_string(key_pool[pick]);
    inst.summary = "v" + std::to_string(val_pool[pick]);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<QsummInstance> gen_conditional_extract(std::uint64_t seed, int count,
                                                   int n_sentences, int n_topics) {
  if (n_topics < 2) throw ContractError("gen_conditional_extract: n_topics must be >= 2");
  if (n_sentences < n_topics)
    throw ContractError("gen_conditional_extract: n_sentences must be >= n_topics");
  if (count < 1) throw ContractError("gen_conditional_extract: count must be >= 1");
  constexpr int kFiller = 20;
  constexpr int kFillerPerSentence = 4;
  std::mt19937_64 rng(seed);
  std::vector<QsummInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    QsummInstance inst;
    inst.extractive = true;
    std::vector<int> topics(static_cast<std::size_t>(n_sentences));
    for (int s = 0; s < n_sentences; ++s) {
      topics[static_cast<std::size_t>(s)] =
          static_cast<int>(draw(rng, static_cast<std::uint64_t>(n_topics)));
      std::ostringstream sent;
      sent << 't' << topics[static_cast<std::size_t>(s)];
      for (int w = 0; w < kFillerPerSentence; ++w)
        sent << " w" << draw(rng, static_cast<std::uint64_t>(kFiller));
      inst.sentences.push_back(sent.str());
    }
    const int query_topic = static_cast<int>(draw(rng, static_cast<std::uint64_t>(n_topics)));
    inst.query = "t" + std::to_string(query_topic);
    for (int s = 0; s < n_sentences; ++s)
      inst.labels.push_back(topics[static_cast<std::size_t>(s)] == query_topic ? 1 : 0);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<QsummInstance>& instances, const Vocab& vocab,
                                int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
  std::vector<int> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  shuffle_inplace(order, rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    Batch batch;
    batch.extractive = instances[static_cast<std::size_t>(order[start])].extractive;

    std::vector<std::vector<int>> passages, queries, targets;
    int s_max = 0, l_max = 0;
    std::vector<std::vector<std::vector<int>>> grids;
    for (std::size_t k = start; k < stop; ++k) {
      const QsummInstance& inst = instances[static_cast<std::size_t>(order[k])];
      if (inst.extractive != batch.extractive)
        throw ContractError("make_batches: mixed abstractive and extractive instances");
      batch.instance_index.push_back(order[k]);
      queries.push_back(encode_nonempty(vocab, inst.query));
      if (inst.extractive) {
        std::vector<std::vector<int>> grid;
        for (const std::string& s : inst.sentences) {
          grid.push_back(encode_nonempty(vocab, s));
          l_max = std::max(l_max, static_cast<int>(grid.back().size()));
        }
        s_max = std::max(s_max, static_cast<int>(grid.size()));
        grids.push_back(std::move(grid));
      } else {
        passages.push_back(encode_nonempty(vocab, inst.passage));
        std::vector<int> tgt{Vocab::kBos};
        for (int id : vocab.encode(tokenize(inst.summary))) tgt.push_back(id);
        tgt.push_back(Vocab::kEos);
        targets.push_back(std::move(tgt));
      }
    }
    pad_into(batch.query, std::move(queries));
    if (batch.extractive) {
      for (std::size_t b = 0; b < grids.size(); ++b) {
        const QsummInstance& inst = instances[static_cast<std::size_t>(batch.instance_index[b])];
        std::vector<std::vector<int>> ids;
        std::vector<std::vector<std::uint8_t>> masks;
        std::vector<std::uint8_t> present(static_cast<std::size_t>(s_max), 0);
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(s_max), 0);
        for (int s = 0; s < s_max; ++s) {
          std::vector<int> row(static_cast<std::size_t>(l_max), Vocab::kPad);
          std::vector<std::uint8_t> mask(static_cast<std::size_t>(l_max), 0);
          if (s < static_cast<int>(grids[b].size())) {
            const std::vector<int>& src = grids[b][static_cast<std::size_t>(s)];
            std::copy(src.begin(), src.end(), row.begin());
            std::fill(mask.begin(), mask.begin() + static_cast<long>(src.size()), 1);
            present[static_cast<std::size_t>(s)] = 1;
            labels[static_cast<std::size_t>(s)] = inst.labels[static_cast<std::size_t>(s)];
          }
          ids.push_back(std::move(row));
          masks.push_back(std::move(mask));
        }
        batch.sentence_ids.push_back(std::move(ids));
        batch.sentence_mask.push_back(std::move(masks));
        batch.sentence_present.push_back(std::move(present));
        batch.labels.push_back(std::move(labels));
      }
    } else {
      pad_into(batch.passage, std::move(passages));
      pad_into(batch.target, std::move(targets));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace csa
