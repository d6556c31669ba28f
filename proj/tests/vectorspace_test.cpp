#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "tropeline/vectorspace.hpp"

namespace tropeline {
namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

EmbeddingSet random_set(std::mt19937_64& rng, std::size_t count, std::size_t d, bool small_ints = false) {
  EmbeddingSetBuilder b(d);
  std::uniform_int_distribution<int> pick(-1, 1);
  for (std::size_t i = 0; i < count; ++i) {
    Vector v = random_vector(rng, d);
    if (small_ints) {
      for (auto& x : v) x = pick(rng);
    }
    b.add("id" + std::to_string(1000 + (i * 7919) % count), v);
  }
  return std::move(b).build();
}

TEST(Cosine, SelfIsOne) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto v = random_vector(rng, 17);
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-12);
  }
}

TEST(Cosine, OrthogonalAxesAndScale) {
  Vector x{1, 0, 0}, y{0, 1, 0};
  EXPECT_EQ(cosine(x, y), 0.0);
  std::mt19937_64 rng(2);
  auto v = random_vector(rng, 9);
  Vector twice = v;
  for (auto& e : twice) e *= 2;
  EXPECT_NEAR(cosine(twice, v), 1.0, 1e-12);
}

TEST(Cosine, ZeroNormIsZero) {
  Vector zero(4, 0.0), v{1, 2, 3, 4};
  EXPECT_EQ(cosine(zero, v), 0.0);
  EXPECT_EQ(cosine(zero, zero), 0.0);
}

TEST(Cosine, DimensionMismatchThrows) {
  EXPECT_THROW(cosine(Vector{1, 2}, Vector{1, 2, 3}), UsageError);
}

TEST(Cosine, ExactlySymmetric) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto u = random_vector(rng, 13), v = random_vector(rng, 13);
    EXPECT_EQ(cosine(u, v), cosine(v, u));
  }
}

TEST(Embedders, BowCountsOverFittedVocabulary) {
  Corpus corpus({{"1", "", "t", "a b"}, {"2", "", "t", "b c"}});
  auto e = fit_embedder(EmbedderKind::kBow, corpus);
  ASSERT_EQ(e->dimension(), 3u);
  EXPECT_EQ(e->embed("b b"), (Vector{0, 2, 0}));
  EXPECT_EQ(e->embed("B, b! zzz"), (Vector{0, 2, 0}));
  EXPECT_EQ(e->embed("unknown"), (Vector{0, 0, 0}));
}

TEST(Embedders, TfidfZeroForUbiquitousTerm) {
  Corpus corpus({{"1", "", "t", "common rare"}, {"2", "", "t", "common other"}});
  auto e = fit_embedder(EmbedderKind::kTfidf, corpus);
  auto v = e->embed("common common");
  for (double x : v) EXPECT_EQ(x, 0.0);
  auto r = e->embed("rare");
  double total = 0;
  for (double x : r) total += x;
  EXPECT_NEAR(total, std::log(2.0), 1e-15);
}

TEST(Embedders, HashedDimensionAndErrors) {
  Corpus corpus({{"1", "", "t", "x"}});
  auto e = fit_embedder(EmbedderKind::kHashed, corpus, {64});
  EXPECT_EQ(e->embed("any text at all, with words").size(), 64u);
  EXPECT_THROW(fit_embedder(EmbedderKind::kHashed, corpus, {0}), UsageError);
  EXPECT_THROW(fit_embedder(EmbedderKind::kHashed, corpus, {-3}), UsageError);
}

TEST(Embedders, Pure) {
  auto corpus = testing::corpus_with_sizes({3, 3});
  for (auto kind : {EmbedderKind::kBow, EmbedderKind::kTfidf, EmbedderKind::kHashed}) {
    auto e = fit_embedder(kind, corpus, {32});
    EXPECT_EQ(e->embed(corpus[0].description), e->embed(corpus[0].description));
    auto a = embed_all(*e, corpus), b = embed_all(*e, corpus);
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_TRUE(std::equal(a.row(r).begin(), a.row(r).end(), b.row(r).begin()));
    }
  }
}

TEST(Embedders, EmptyCorpusRejected) {
  EXPECT_THROW(fit_embedder(EmbedderKind::kBow, Corpus()), UsageError);
}

TEST(TopN, DuplicateVectorComesFirst) {
  EmbeddingSetBuilder b(3);
  b.add("q", Vector{1, 0, 0});
  b.add("x", Vector{0, 1, 0});
  b.add("dup", Vector{1, 0, 0});
  auto set = std::move(b).build();
  auto list = top_n_neighbors("q", set, 2);
  ASSERT_EQ(list.entries.size(), 2u);
  EXPECT_EQ(list.entries[0].id, "dup");
  EXPECT_EQ(list.entries[0].cosine, 1.0);
}

TEST(TopN, ClampsToSetSizeMinusOne) {
  std::mt19937_64 rng(4);
  auto set = random_set(rng, 7, 5);
  EXPECT_EQ(top_n_neighbors(set.id(0), set, 100).entries.size(), 6u);
  EXPECT_THROW(top_n_neighbors("missing", set, 3), DataError);
  EXPECT_THROW(top_n_neighbors(set.id(0), set, 0), UsageError);
}

// Independent oracle: cosine for every pair via the free function, full sort.
std::vector<Neighbor> full_sort_oracle(const EmbeddingSet& set, const std::string& query) {
  std::vector<Neighbor> all;
  auto q = set.vector(query);
  for (std::size_t r = 0; r < set.size(); ++r) {
    if (set.id(r) != query) all.push_back({set.id(r), cosine(q, set.row(r))});
  }
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.cosine > b.cosine || (a.cosine == b.cosine && a.id < b.id);
  });
  return all;
}

TEST(TopN, MatchesFullSortOracle) {
  std::mt19937_64 rng(5);
  for (bool ties : {false, true}) {
    auto set = random_set(rng, 50, 6, ties);
    for (const auto& q : set.ids()) {
      auto oracle = full_sort_oracle(set, q);
      for (std::size_t n : {1u, 5u, 17u, 49u}) {
        auto got = top_n_neighbors(q, set, n);
        ASSERT_EQ(got.entries.size(), n);
        for (std::size_t i = 0; i < n; ++i) {
          EXPECT_EQ(got.entries[i].id, oracle[i].id);
          EXPECT_EQ(got.entries[i].cosine, oracle[i].cosine);
        }
      }
    }
  }
}

TEST(TopN, InvariantsAndPrefixProperty) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = random_set(rng, 30, 4, trial % 2 == 0);
    for (const auto& q : set.ids()) {
      auto full = top_n_neighbors(q, set, 29);
      std::set<std::string> seen;
      for (std::size_t i = 0; i < full.entries.size(); ++i) {
        const auto& e = full.entries[i];
        EXPECT_NE(e.id, q);
        EXPECT_TRUE(seen.insert(e.id).second);
        EXPECT_GE(e.cosine, -1.0);
        EXPECT_LE(e.cosine, 1.0);
        if (i > 0) {
          const auto& prev = full.entries[i - 1];
          EXPECT_TRUE(prev.cosine > e.cosine || (prev.cosine == e.cosine && prev.id < e.id));
        }
      }
      for (std::size_t n = 1; n < 29; ++n) {
        auto shorter = top_n_neighbors(q, set, n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(shorter.entries[i].id, full.entries[i].id);
      }
    }
  }
}

TEST(EmbeddingSet, RejectsBadTables) {
  EXPECT_THROW(EmbeddingSet(0, {}, {}), DataError);
  EXPECT_THROW(EmbeddingSet(2, {"a"}, {1.0}), DataError);
  EXPECT_THROW(EmbeddingSet(1, {"a", "a"}, {1.0, 2.0}), DataError);
  EXPECT_THROW(EmbeddingSet(1, {"a"}, {std::nan("")}), DataError);
  EmbeddingSet ok(2, {"a", "z"}, {0, 0, 1, 1});
  EXPECT_EQ(ok.zero_norm_rows(), 1u);
}

class EmbeddingFiles : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() /
                              ("tropeline_vs_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                               "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(EmbeddingFiles, TextRoundTripIsExact) {
  std::mt19937_64 rng(8);
  auto set = random_set(rng, 10, 5);
  auto path = (dir / "e.jsonl").string();
  {
    std::ofstream out(path);
    write_embeddings_text(out, set);
  }
  auto back = load_embeddings(path);
  ASSERT_EQ(back.ids(), set.ids());
  for (std::size_t r = 0; r < set.size(); ++r) {
    EXPECT_TRUE(std::equal(set.row(r).begin(), set.row(r).end(), back.row(r).begin()));
  }
}

TEST_F(EmbeddingFiles, BinaryLayoutIsBitExact) {
  EmbeddingSet set(2, {"ab", "c"}, {1.0, -2.0, 0.5, 0.0});
  std::ostringstream out;
  write_embeddings_binary(out, set);
  const unsigned char expected[] = {'E', 'M', 'B', '1', 2, 0, 0, 0,                              // header
                                    2, 0, 'a', 'b', 0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0,              // "ab"
                                    1, 0, 'c', 0, 0, 0, 0x3f, 0, 0, 0, 0};                        // "c"
  std::string bytes = out.str();
  ASSERT_EQ(bytes.size(), sizeof expected);
  for (std::size_t i = 0; i < bytes.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected[i]) << i;

  auto path = (dir / "e.bin").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << bytes;
  }
  auto back = load_embeddings(path);
  EXPECT_EQ(back.ids(), set.ids());
  EXPECT_EQ(back.vector("ab")[1], -2.0);
}

TEST_F(EmbeddingFiles, DimensionMismatchNamesId) {
  auto path = (dir / "bad.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"id":"a","vector":[1,2,3]})" << "\n" << R"({"id":"oops","vector":[1,2]})" << "\n";
  }
  try {
    load_embeddings(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos) << e.what();
  }
}

TEST_F(EmbeddingFiles, UnknownIdsAreLoadedAndReportedLater) {
  auto corpus = testing::corpus_with_sizes({2});
  EmbeddingSet set(1, {"r000", "stranger"}, {1.0, 2.0});
  EXPECT_EQ(set.size(), 2u);
  auto missing = missing_ids(corpus, set);
  ASSERT_EQ(missing.size(), 1u);
  EXPECT_EQ(missing[0], "r001");
}

TEST_F(EmbeddingFiles, TruncatedBinaryFails) {
  std::istringstream in(std::string("EMB1\x02\x00\x00\x00\x01\x00z\x00\x00", 13));
  EXPECT_THROW(read_embeddings_binary(in), DataError);
}

}  // namespace
}  // namespace tropeline
