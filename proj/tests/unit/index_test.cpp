#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "dpr/checkpoint.hpp"
#include "dpr/error.hpp"
#include "dpr/index.hpp"
#include "dpr/synthetic.hpp"
#include "support.hpp"

namespace dpr {
namespace {

FlatIndex three_rows() {
  Matrix m(3, 2);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 0) = 1;
  m(2, 1) = 1;
  return FlatIndex(m, {PassageId{0}, PassageId{1}, PassageId{2}});
}

// Full scan with a stable sort on (score desc, id asc).
std::vector<ScoredPassage> brute_force(const FlatIndex& index, std::span<const double> q, std::size_t k) {
  std::vector<ScoredPassage> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += q[j] * index.embeddings()(i, j);
    all.push_back({index.ids()[i], s});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  all.resize(std::min(k, all.size()));
  return all;
}

TEST(Search, HandComputedExample) {
  auto idx = three_rows();
  std::vector<double> q{2, 1};
  auto r = idx.search(q, 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], (ScoredPassage{PassageId{2}, 3.0}));
  EXPECT_EQ(r[1], (ScoredPassage{PassageId{0}, 2.0}));
}

TEST(Search, ClampsToCollectionSize) {
  std::vector<double> q{1, 1};
  EXPECT_EQ(three_rows().search(q, 10).size(), 3u);
}

TEST(Search, TiesGoToLowerId) {
  Matrix m(4, 2, 0.5);
  FlatIndex idx(m, {PassageId{3}, PassageId{8}, PassageId{10}, PassageId{42}});
  std::vector<double> q{1, -1};
  auto r = idx.search(q, 4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r[i].id, idx.ids()[i]);
}

TEST(Search, Errors) {
  auto idx = three_rows();
  std::vector<double> q{1, 2, 3};
  EXPECT_THROW(idx.search(q, 1), Error);
  std::vector<double> ok{1, 2};
  EXPECT_THROW(idx.search(ok, 0), Error);
  EXPECT_THROW(FlatIndex(Matrix(2, 2), {PassageId{1}, PassageId{1}}), Error);
  EXPECT_THROW(FlatIndex(Matrix(2, 2), {PassageId{1}}), Error);
  Matrix bad(1, 1, NAN);
  EXPECT_THROW(FlatIndex(bad, {PassageId{0}}), Error);
}

TEST(SearchProperty, MatchesBruteForce) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 1 + rng() % 300;
    const std::size_t dim = 1 + rng() % 8;
    Matrix m(rows, dim);
    // Coarse values make exact ties common.
    for (auto& v : m.values()) v = std::round(n(rng) * 2) / 2;
    std::vector<PassageId> ids;
    std::uint64_t next = rng() % 5;
    for (std::size_t i = 0; i < rows; ++i) {
      ids.push_back(PassageId{next});
      next += 1 + rng() % 3;
    }
    FlatIndex idx(m, ids);
    for (int qn = 0; qn < 10; ++qn) {
      std::vector<double> q(dim);
      for (auto& v : q) v = std::round(n(rng));
      const std::size_t k = 1 + rng() % (rows + 5);
      auto got = idx.search(q, k);
      EXPECT_EQ(got, brute_force(idx, q, k));
      std::set<PassageId> distinct;
      for (std::size_t i = 0; i < got.size(); ++i) {
        distinct.insert(got[i].id);
        if (i) EXPECT_GE(got[i - 1].score, got[i].score);
      }
      EXPECT_EQ(distinct.size(), got.size());
    }
  }
}

TEST(BuildIndex, RowsMatchStandaloneEncoding) {
  auto spec = test::tiny_spec();
  spec.num_topics = 10;
  auto data = generate_synthetic(spec);
  auto params = init_dual_encoder({spec.vocab_size, 8, 32}, 1);
  auto idx = build_index(params, data.collection);
  EXPECT_EQ(idx.size(), 200u);
  EXPECT_EQ(idx.dim(), 32u);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(value(idx.ids()[i]), i);
    auto row = idx.embeddings().row(i);
    auto direct = encode_passage(params, data.collection[i].tokens);
    EXPECT_TRUE(std::equal(row.begin(), row.end(), direct.begin()));
  }
  EXPECT_EQ(idx.checkpoint_fingerprint(), checkpoint_fingerprint(params));
  EXPECT_EQ(serialize_index(idx), serialize_index(build_index(params, data.collection)));
}

TEST(SearchQuestions, FollowsQuestionOrder) {
  auto data = generate_synthetic(test::tiny_spec());
  auto params = init_dual_encoder({512, 4, 4}, 2);
  auto idx = build_index(params, data.collection);
  std::vector<Question> qs(data.test_questions.rbegin(), data.test_questions.rend());
  auto runs = search_questions(params, idx, qs, 5);
  ASSERT_EQ(runs.size(), qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(runs[i].question, qs[i].id);
    EXPECT_EQ(runs[i].hits, idx.search(encode_question(params, qs[i].tokens), 5));
  }
}

TEST(IndexFile, RoundTripIsIdempotent) {
  test::TempDir dir;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Matrix m(50, 7);
  for (auto& v : m.values()) v = n(rng);
  std::vector<PassageId> ids(50);
  for (std::size_t i = 0; i < 50; ++i) ids[i] = PassageId{i * 3};
  FlatIndex idx(m, ids, std::string(64, 'a'));
  save_index(idx, dir.file("a.idx"));
  auto loaded = load_index(dir.file("a.idx"));
  EXPECT_EQ(loaded.ids(), ids);
  EXPECT_EQ(loaded.checkpoint_fingerprint(), std::string(64, 'a'));
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(loaded.embeddings().values()[i], static_cast<double>(static_cast<float>(m.values()[i])));
  }
  save_index(loaded, dir.file("b.idx"));
  EXPECT_EQ(test::read_text(dir.file("a.idx")), test::read_text(dir.file("b.idx")));
}

TEST(IndexFile, DistinctErrors) {
  auto bytes = serialize_index(three_rows());
  EXPECT_EQ(bytes.substr(0, 8), "DPRINDEX");
  auto corrupt = bytes;
  corrupt[bytes.size() - 30] ^= 0x40;
  EXPECT_THROW(deserialize_index(corrupt), ChecksumError);
  auto magic = bytes;
  magic[2] = 'x';
  try {
    deserialize_index(magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_STREQ(e.what(), "not an index file");
  }
  auto version = bytes;
  version[8] = 7;
  EXPECT_THROW(deserialize_index(version), VersionError);
  EXPECT_THROW(deserialize_index(bytes.substr(0, bytes.size() - 4)), TruncatedError);
  EXPECT_THROW(deserialize_index(bytes.substr(0, 20)), TruncatedError);
}

TEST(RunFile, RoundTripAndFormat) {
  test::TempDir dir;
  std::vector<RunResult> runs{{QuestionId{4}, {{PassageId{7}, 2.5}, {PassageId{1}, -0.25}}},
                              {QuestionId{2}, {{PassageId{3}, 1.0}}}};
  write_run(dir.file("r.tsv"), runs);
  EXPECT_EQ(test::read_text(dir.file("r.tsv")), "4\t7\t1\t2.5\n4\t1\t2\t-0.25\n2\t3\t1\t1\n");
  auto loaded = load_run(dir.file("r.tsv"));
  ASSERT_EQ(loaded.size(), 2u);
  auto find = [&](QuestionId q) {
    return *std::find_if(loaded.begin(), loaded.end(), [&](const auto& r) { return r.question == q; });
  };
  EXPECT_EQ(find(QuestionId{4}), runs[0]);
  EXPECT_EQ(find(QuestionId{2}), runs[1]);
  test::write_text(dir.file("bad.tsv"), "1\t2\t1\t0.5\n1\t3\t3\t0.1\n");
  EXPECT_THROW(load_run(dir.file("bad.tsv")), Error);
  test::write_text(dir.file("bad2.tsv"), "1\t2\t0\t0.5\n");
  EXPECT_THROW(load_run(dir.file("bad2.tsv")), ParseError);
}

}  // namespace
}  // namespace dpr
