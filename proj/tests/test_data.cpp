#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "csa/data.hpp"
#include "csa/error.hpp"

using namespace csa;

namespace {

std::string tmp_path(const std::string& stem) { return "data_test_" + stem + ".jsonl"; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  os << content;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(static_cast<bool>(is));
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

bool same_instance(const QsummInstance& a, const QsummInstance& b) {
  return a.extractive == b.extractive && a.passage == b.passage && a.query == b.query &&
         a.summary == b.summary && a.sentences == b.sentences && a.labels == b.labels;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits punctuation into standalone tokens") {
  CHECK(tokenize("Don't stop.") ==
        std::vector<std::string>{"don", "'", "t", "stop", "."});
  CHECK(tokenize("  Hello   WORLD  ") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("a,b") == std::vector<std::string>{"a", ",", "b"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("k3 v7") == std::vector<std::string>{"k3", "v7"});
}

TEST_CASE("fresh vocabulary holds exactly the reserved control tokens") {
  Vocab v;
  CHECK(v.size() == 5);
  CHECK(v.id("<pad>") == Vocab::kPad);
  CHECK(v.id("<unk>") == Vocab::kUnk);
  CHECK(v.id("<bos>") == Vocab::kBos);
  CHECK(v.id("<eos>") == Vocab::kEos);
  CHECK(v.id("<sep>") == Vocab::kSep);
  CHECK(v.token(Vocab::kSep) == "<sep>");
  CHECK(v.id("anything") == Vocab::kUnk);
  CHECK_THROWS_AS(v.token(5), IndexError);
  CHECK_THROWS_AS(v.token(-1), IndexError);
}

TEST_CASE("vocabulary build orders by frequency then spelling and honors min_freq") {
  QsummInstance a;
  a.passage = "cat cat cat dog dog bird";
  a.query = "cat";
  a.summary = "dog";
  Vocab v = Vocab::build({a}, 1);
  CHECK(v.size() == 8);
  CHECK(v.id("cat") == 5);
  CHECK(v.id("dog") == 6);
  CHECK(v.id("bird") == 7);
  CHECK(v.contains("bird"));

  Vocab cut = Vocab::build({a}, 3);
  CHECK(cut.id("cat") != Vocab::kUnk);
  CHECK(cut.id("dog") != Vocab::kUnk);
  CHECK(cut.id("bird") == Vocab::kUnk);

  Vocab none = Vocab::build({a}, 1000000);
  CHECK(none.size() == 5);
  CHECK(none.encode(tokenize("cat dog")) == std::vector<int>{Vocab::kUnk, Vocab::kUnk});

  std::vector<std::string> text = tokenize("cat dog bird");
  CHECK(v.decode(v.encode(text)) == text);
}

TEST_CASE("extractive sentences feed the vocabulary") {
  QsummInstance e;
  e.extractive = true;
  e.sentences = {"alpha beta", "beta gamma"};
  e.query = "alpha";
  e.labels = {1, 0};
  Vocab v = Vocab::build({e}, 1);
  CHECK(v.contains("alpha"));
  CHECK(v.contains("beta"));
  CHECK(v.contains("gamma"));
}

TEST_CASE("abstractive loader parses records and reports bad lines by number") {
  const std::string path = tmp_path("abs");
  write_file(path,
             "{\"passage\": \"p one\", \"query\": \"q one\", \"summary\": \"s one\"}\n"
             "{\"passage\": \"p two\", \"query\": \"q two\", \"summary\": \"s two\"}\n"
             "\n"
             "{\"passage\": \"p three\", \"query\": \"q three\", \"summary\": \"s three\"}\n");
  auto got = load_abstractive(path);
  REQUIRE(got.size() == 3);
  CHECK(got[0].passage == "p one");
  CHECK(got[1].query == "q two");
  CHECK(got[2].summary == "s three");
  CHECK_FALSE(got[0].extractive);

  write_file(path,
             "{\"passage\": \"p\", \"query\": \"q\", \"summary\": \"s\"}\n"
             "{\"passage\": \"p\", \"summary\": \"s\"}\n");
  CHECK_THROWS_WITH_AS(load_abstractive(path), doctest::Contains("line 2"), DataError);

  write_file(path, "{\"passage\": \"p\", \"query\": \"q\", \"summary\": \"s\"}\nnot json\n");
  CHECK_THROWS_WITH_AS(load_abstractive(path), doctest::Contains("line 2"), DataError);

  write_file(path, "");
  CHECK_THROWS_AS(load_abstractive(path), ContractError);

  CHECK_THROWS_AS(load_abstractive("missing_file.jsonl"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("abstractive round trip is exact including unicode") {
  const std::string path = tmp_path("abs_rt");
  QsummInstance a;
  a.passage = "the \"quoted\" naïve passage";
  a.query = "why?";
  a.summary = "because — reasons";
  QsummInstance b;
  b.passage = "second";
  b.query = "q";
  b.summary = "s";
  save_abstractive(path, {a, b});
  auto got = load_abstractive(path);
  REQUIRE(got.size() == 2);
  CHECK(same_instance(got[0], a));
  CHECK(same_instance(got[1], b));
  std::remove(path.c_str());
}

TEST_CASE("extractive loader validates labels") {
  const std::string path = tmp_path("ext");
  write_file(path,
             "{\"sentences\": [\"s one\", \"s two\"], \"query\": \"q\", \"labels\": [1, 0]}\n"
             "{\"sentences\": [\"a\"], \"query\": \"q\", \"labels\": [0]}\n");
  auto got = load_extractive(path);
  REQUIRE(got.size() == 2);
  CHECK(got[0].extractive);
  CHECK(got[0].sentences == std::vector<std::string>{"s one", "s two"});
  CHECK(got[0].labels == std::vector<std::uint8_t>{1, 0});
  CHECK(got[1].labels == std::vector<std::uint8_t>{0});

  write_file(path, "{\"sentences\": [\"a\", \"b\"], \"query\": \"q\", \"labels\": [1]}\n");
  CHECK_THROWS_WITH_AS(load_extractive(path), doctest::Contains("labels length"), DataError);

  write_file(path, "{\"sentences\": [\"a\"], \"query\": \"q\", \"labels\": [2]}\n");
  CHECK_THROWS_WITH_AS(load_extractive(path), doctest::Contains("0 or 1"), DataError);

  write_file(path, "{\"sentences\": [\"a\"], \"labels\": [0]}\n");
  CHECK_THROWS_WITH_AS(load_extractive(path), doctest::Contains("query"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("extractive round trip is exact") {
  const std::string path = tmp_path("ext_rt");
  QsummInstance e;
  e.extractive = true;
  e.sentences = {"first sentence", "second sentence", "third"};
  e.query = "which";
  e.labels = {0, 1, 1};
  save_extractive(path, {e});
  auto got = load_extractive(path);
  REQUIRE(got.size() == 1);
  CHECK(same_instance(got[0], e));
  std::remove(path.c_str());
}

TEST_CASE("copy generator emits well formed key value passages") {
  auto data = gen_conditional_copy(42, 200, 4, 100);
  REQUIRE(data.size() == 200);
  for (const QsummInstance& inst : data) {
    auto toks = tokenize(inst.passage);
    REQUIRE(toks.size() == 8);
    std::vector<std::string> keys, vals;
    for (std::size_t i = 0; i < toks.size(); i += 2) {
      CHECK(toks[i][0] == 'k');
      CHECK(toks[i + 1][0] == 'v');
      keys.push_back(toks[i]);
      vals.push_back(toks[i + 1]);
    }
    for (std::size_t i = 0; i < keys.size(); ++i)
      for (std::size_t j = i + 1; j < keys.size(); ++j) {
        CHECK(keys[i] != keys[j]);
        CHECK(vals[i] != vals[j]);
      }
    bool found = false;
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == inst.query) {
        found = true;
        CHECK(vals[i] == inst.summary);
      }
    CHECK(found);
  }
}

TEST_CASE("copy generator oracle reaches exact match one") {
  auto data = gen_conditional_copy(7, 500, 4, 60);
  int hits = 0;
  for (const QsummInstance& inst : data) {
    auto toks = tokenize(inst.passage);
    std::string answer;
    for (std::size_t i = 0; i + 1 < toks.size(); i += 2)
      if (toks[i] == inst.query) answer = toks[i + 1];
    if (answer == inst.summary) ++hits;
  }
  CHECK(hits == 500);
}

TEST_CASE("copy generator is deterministic and validates arguments") {
  const std::string pa = tmp_path("copy_a");
  const std::string pb = tmp_path("copy_b");
  save_abstractive(pa, gen_conditional_copy(99, 50, 3, 40));
  save_abstractive(pb, gen_conditional_copy(99, 50, 3, 40));
  CHECK(file_bytes(pa) == file_bytes(pb));
  save_abstractive(pb, gen_conditional_copy(100, 50, 3, 40));
  CHECK(file_bytes(pa) != file_bytes(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());

  CHECK_THROWS_AS(gen_conditional_copy(1, 10, 1, 40), ContractError);
  CHECK_THROWS_WITH_AS(gen_conditional_copy(1, 10, 4, 10), doctest::Contains("vocab"),
                       ContractError);
  CHECK_THROWS_AS(gen_conditional_copy(1, 0, 4, 40), ContractError);
}

TEST_CASE("extract generator labels match topic markers") {
  auto data = gen_conditional_extract(11, 300, 8, 4);
  REQUIRE(data.size() == 300);
  long positives = 0, total = 0;
  for (const QsummInstance& inst : data) {
    REQUIRE(inst.sentences.size() == 8);
    REQUIRE(inst.labels.size() == 8);
    for (std::size_t s = 0; s < inst.sentences.size(); ++s) {
      auto toks = tokenize(inst.sentences[s]);
      REQUIRE(toks.size() == 5);
      CHECK(toks[0][0] == 't');
      CHECK(inst.labels[s] == (toks[0] == inst.query ? 1 : 0));
      positives += inst.labels[s];
      ++total;
    }
  }
  const double rate = static_cast<double>(positives) / static_cast<double>(total);
  CHECK(rate > 0.2);
  CHECK(rate < 0.3);
}

TEST_CASE("extract generator is deterministic and validates arguments") {
  const std::string pa = tmp_path("ext_a");
  const std::string pb = tmp_path("ext_b");
  save_extractive(pa, gen_conditional_extract(5, 40, 6, 3));
  save_extractive(pb, gen_conditional_extract(5, 40, 6, 3));
  CHECK(file_bytes(pa) == file_bytes(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());

  CHECK_THROWS_AS(gen_conditional_extract(1, 10, 6, 1), ContractError);
  CHECK_THROWS_AS(gen_conditional_extract(1, 10, 2, 4), ContractError);
  CHECK_THROWS_AS(gen_conditional_extract(1, 0, 6, 3), ContractError);
}

TEST_CASE("single instance batches carry no padding") {
  QsummInstance a;
  a.passage = "k1 v2 k3 v4";
  a.query = "k1";
  a.summary = "v2";
  Vocab v = Vocab::build({a}, 1);
  auto batches = make_batches({a}, v, 4, 0);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  CHECK_FALSE(b.extractive);
  REQUIRE(b.passage.ids.size() == 1);
  CHECK(b.passage.max_len == 4);
  CHECK(b.passage.mask[0] == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(b.query.max_len == 1);
  CHECK(b.target.max_len == 3);
  CHECK(b.target.ids[0][0] == Vocab::kBos);
  CHECK(b.target.ids[0][2] == Vocab::kEos);
}

TEST_CASE("batch masks count exactly the real tokens") {
  auto data = gen_conditional_copy(3, 37, 3, 40);
  QsummInstance longer;
  longer.passage = "k0 v0 k1 v1 k2 v2 k3 v3 k4 v4";
  longer.query = "k0";
  longer.summary = "v0";
  data.push_back(longer);
  Vocab v = Vocab::build(data, 1);
  auto batches = make_batches(data, v, 8, 123);
  std::size_t seen = 0;
  for (const Batch& b : batches) {
    REQUIRE(b.passage.ids.size() == b.instance_index.size());
    for (std::size_t r = 0; r < b.passage.ids.size(); ++r) {
      const QsummInstance& inst = data[static_cast<std::size_t>(b.instance_index[r])];
      long real = static_cast<long>(tokenize(inst.passage).size());
      long mask_sum = 0;
      for (std::uint8_t m : b.passage.mask[r]) mask_sum += m;
      CHECK(mask_sum == real);
      CHECK(static_cast<int>(b.passage.ids[r].size()) == b.passage.max_len);
      for (std::size_t i = static_cast<std::size_t>(real); i < b.passage.ids[r].size(); ++i)
        CHECK(b.passage.ids[r][i] == Vocab::kPad);
      ++seen;
    }
  }
  CHECK(seen == data.size());
}

TEST_CASE("batching shuffles deterministically under seed") {
  auto data = gen_conditional_copy(1, 50, 3, 40);
  Vocab v = Vocab::build(data, 1);
  auto a = make_batches(data, v, 8, 7);
  auto b = make_batches(data, v, 8, 7);
  auto c = make_batches(data, v, 8, 8);
  REQUIRE(a.size() == b.size());
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_same = all_same && a[i].instance_index == b[i].instance_index;
    any_diff = any_diff || a[i].instance_index != c[i].instance_index;
  }
  CHECK(all_same);
  CHECK(any_diff);
  std::vector<bool> seen(data.size(), false);
  for (const Batch& batch : a)
    for (int idx : batch.instance_index) seen[static_cast<std::size_t>(idx)] = true;
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool x) { return x; }));

  CHECK_THROWS_AS(make_batches(data, v, 0, 1), ContractError);
}

TEST_CASE("extractive batches pad sentence grids to the batch maxima") {
  auto data = gen_conditional_extract(9, 10, 5, 3);
  QsummInstance wide;
  wide.extractive = true;
  wide.sentences = {"t0 w1 w2 w3 w4 w5 w6", "t1 w1"};
  wide.query = "t0";
  wide.labels = {1, 0};
  data.push_back(wide);
  Vocab v = Vocab::build(data, 1);
  auto batches = make_batches(data, v, 4, 2);
  for (const Batch& b : batches) {
    REQUIRE(b.extractive);
    std::size_t s_max = b.sentence_ids[0].size();
    for (std::size_t r = 0; r < b.sentence_ids.size(); ++r) {
      const QsummInstance& inst = data[static_cast<std::size_t>(b.instance_index[r])];
      REQUIRE(b.sentence_ids[r].size() == s_max);
      REQUIRE(b.sentence_present[r].size() == s_max);
      REQUIRE(b.labels[r].size() == s_max);
      for (std::size_t s = 0; s < s_max; ++s) {
        bool real = s < inst.sentences.size();
        CHECK(b.sentence_present[r][s] == (real ? 1 : 0));
        if (real) {
          long mask_sum = 0;
          for (std::uint8_t m : b.sentence_mask[r][s]) mask_sum += m;
          CHECK(mask_sum == static_cast<long>(tokenize(inst.sentences[s]).size()));
          CHECK(b.labels[r][s] == inst.labels[s]);
        } else {
          for (std::uint8_t m : b.sentence_mask[r][s]) CHECK(m == 0);
          CHECK(b.labels[r][s] == 0);
        }
      }
    }
  }
}

TEST_CASE("mixed batches are rejected") {
  QsummInstance a;
  a.passage = "p";
  a.query = "q";
  a.summary = "s";
  QsummInstance e;
  e.extractive = true;
  e.sentences = {"x"};
  e.query = "q";
  e.labels = {0};
  Vocab v = Vocab::build({a, e}, 1);
  CHECK_THROWS_AS(make_batches({a, e}, v, 2, 0), ContractError);
}

TEST_CASE("vocabulary files round trip the id assignment") {
  auto data = gen_conditional_copy(77, 20, 3, 30);
  Vocab v = Vocab::build(data, 1);
  const std::string path = "vocab_roundtrip.txt";
  v.save(path);
  Vocab back = Vocab::load(path);
  REQUIRE(back.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  for (const QsummInstance& inst : data)
    CHECK(back.encode(tokenize(inst.passage)) == v.encode(tokenize(inst.passage)));
  std::remove(path.c_str());

  CHECK_THROWS_AS(Vocab::load("no_such_vocab_file.txt"), DataError);
  {
    std::ofstream os("vocab_dup.txt");
    os << "alpha\nalpha\n";
  }
  CHECK_THROWS_AS(Vocab::load("vocab_dup.txt"), DataError);
  std::remove("vocab_dup.txt");
}
