#include <random>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "tropeline/corpus.hpp"

namespace tropeline {
namespace {

using testing::corpus_line;
using testing::corpus_with_sizes;
using testing::words;

TEST(WordCount, Examples) {
  EXPECT_EQ(word_count(""), 0u);
  EXPECT_EQ(word_count("a  b\tc"), 3u);
  EXPECT_EQ(word_count("Loki's constant scheming"), 3u);
  EXPECT_EQ(word_count("  leading and trailing \n"), 3u);
}

TEST(Ingest, KeepsLongRecordsOfOneTrope) {
  std::stringstream in;
  for (int i = 0; i < 3; ++i) in << corpus_line("id" + std::to_string(i), "Hero", words(150));
  auto corpus = ingest(in, 100);
  EXPECT_EQ(corpus.size(), 3u);
  EXPECT_EQ(corpus.trope_index().size(), 1u);
  EXPECT_EQ(corpus[0].id, "id0");
  EXPECT_EQ(corpus[2].id, "id2");
}

TEST(Ingest, ExactlyMinWordsIsDropped) {
  std::stringstream in;
  in << corpus_line("a", "T", words(100)) << corpus_line("b", "T", words(101)) << corpus_line("c", "T", words(101));
  auto corpus = ingest(in, 100);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_FALSE(corpus.find("a"));
}

TEST(Ingest, TropeShrinkingToOneIsDropped) {
  std::stringstream in;
  in << corpus_line("a", "Pair", words(150)) << corpus_line("b", "Pair", words(50))
     << corpus_line("c", "Keep", words(150)) << corpus_line("d", "Keep", words(150));
  auto corpus = ingest(in, 100);
  EXPECT_EQ(corpus.size(), 2u);
  EXPECT_FALSE(corpus.find("a"));
  EXPECT_FALSE(corpus.find("b"));
  EXPECT_EQ(corpus.trope_index().count("Pair"), 0u);
}

TEST(Ingest, MalformedLineReportsLineNumber) {
  std::stringstream in;
  in << corpus_line("a", "T", words(150)) << "{not json\n";
  try {
    ingest(in, 100, "corpus.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MissingFieldReportsLineNumber) {
  std::stringstream in;
  in << corpus_line("a", "T", words(150)) << "\n" << R"({"id":"b","name":"x","trope":"T"})" << "\n";
  try {
    ingest(in, 100, "c");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("c:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("description"), std::string::npos) << e.what();
  }
}

TEST(Ingest, DuplicateIdIsNamed) {
  std::stringstream in;
  in << corpus_line("dup", "T", words(150)) << corpus_line("dup", "T", words(150));
  try {
    ingest(in, 100);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'dup'"), std::string::npos) << e.what();
  }
}

TEST(Ingest, FilterInvariantsOnRandomInput) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::stringstream in;
    std::uniform_int_distribution<int> len(80, 130), trope(0, 9);
    for (int i = 0; i < 60; ++i) in << corpus_line("x" + std::to_string(i), "t" + std::to_string(trope(rng)), words(len(rng)));
    auto corpus = ingest(in, 100);
    for (const auto& [t, members] : corpus.trope_index()) EXPECT_GE(members.size(), 2u);
    for (const auto& r : corpus.records()) EXPECT_GE(word_count(r.description), 101u);
    std::size_t indexed = 0;
    for (const auto& [t, members] : corpus.trope_index()) {
      for (auto i : members) EXPECT_EQ(corpus[i].trope, t);
      indexed += members.size();
    }
    EXPECT_EQ(indexed, corpus.size());
  }
}

TEST(Split, CountsAndPartition) {
  auto corpus = corpus_with_sizes({4, 3, 3});
  auto [train, eval] = split(corpus, 0.2, 11);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(eval.size(), 2u);
  std::set<std::string> ids;
  for (const auto& r : train.records()) ids.insert(r.id);
  for (const auto& r : eval.records()) EXPECT_TRUE(ids.insert(r.id).second) << r.id;
  EXPECT_EQ(ids.size(), corpus.size());
}

TEST(Split, DeterministicUnderSeed) {
  auto corpus = corpus_with_sizes({5, 5, 5, 5});
  auto a = split(corpus, 0.25, 3);
  auto b = split(corpus, 0.25, 3);
  EXPECT_EQ(a.first.records(), b.first.records());
  EXPECT_EQ(a.second.records(), b.second.records());
  auto c = split(corpus, 0.25, 4);
  EXPECT_NE(a.second.records(), c.second.records());
}

TEST(Split, LargeCorpusSizes) {
  std::vector<CharacterRecord> records;
  records.reserve(136250);
  for (std::size_t i = 0; i < 136250; ++i) records.push_back({"c" + std::to_string(i), "", "t" + std::to_string(i % 5000), "x"});
  Corpus corpus(std::move(records));
  auto [train, eval] = split(corpus, 0.2, 1);
  EXPECT_EQ(eval.size(), 27250u);
  EXPECT_EQ(train.size(), 109000u);
}

TEST(Split, KeepsSingletonTropes) {
  auto corpus = corpus_with_sizes({2, 2, 2, 2, 2});
  auto [train, eval] = split(corpus, 0.5, 9);
  std::size_t members = 0;
  for (const auto& [t, m] : eval.trope_index()) members += m.size();
  EXPECT_EQ(members, eval.size());
}

TEST(Split, RejectsBadInput) {
  auto corpus = corpus_with_sizes({2});
  EXPECT_THROW(split(corpus, 0.0, 1), UsageError);
  EXPECT_THROW(split(corpus, 1.0, 1), UsageError);
  EXPECT_THROW(split(Corpus(), 0.2, 1), UsageError);
}

TEST(Pairs, CountsForKnownSizes) {
  auto corpus = corpus_with_sizes({2, 3, 5});
  auto pos = generate_pairs(corpus, false, 1);
  EXPECT_EQ(pos.size(), 14u);
  for (const auto& p : pos) EXPECT_EQ(p.label, PairLabel::kIsSimilar);

  auto all = generate_pairs(corpus, true, 1);
  ASSERT_EQ(all.size(), 28u);
  std::size_t neg = 0;
  for (const auto& p : all) {
    bool same = corpus[corpus.index_of(p.a_id)].trope == corpus[corpus.index_of(p.b_id)].trope;
    if (p.label == PairLabel::kNotSimilar) {
      ++neg;
      EXPECT_FALSE(same);
    } else {
      EXPECT_TRUE(same);
    }
  }
  EXPECT_EQ(neg, 14u);
}

TEST(Pairs, NegativeSharesFirstItemOfItsPositive) {
  auto corpus = corpus_with_sizes({3, 4});
  auto all = generate_pairs(corpus, true, 5);
  for (std::size_t i = 0; i + 1 < all.size(); i += 2) {
    EXPECT_EQ(all[i].label, PairLabel::kIsSimilar);
    EXPECT_EQ(all[i + 1].label, PairLabel::kNotSimilar);
    EXPECT_EQ(all[i].a_id, all[i + 1].a_id);
  }
}

TEST(Pairs, SingleTropeNegativesFail) {
  auto corpus = corpus_with_sizes({4});
  EXPECT_THROW(generate_pairs(corpus, true, 1), UsageError);
  EXPECT_EQ(generate_pairs(corpus, false, 1).size(), 6u);
  EXPECT_THROW(generate_pairs(Corpus(), false, 1), UsageError);
}

TEST(Pairs, PropertyCountsAndOrientation) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> n_tropes(2, 8), size(1, 7);
    std::vector<std::size_t> sizes(n_tropes(rng));
    std::uint64_t expected = 0;
    for (auto& s : sizes) {
      s = size(rng);
      expected += choose2(s);
    }
    auto corpus = corpus_with_sizes(sizes, trial);
    auto pairs = generate_pairs(corpus, true, trial);
    std::set<std::pair<std::string, std::string>> positives;
    std::uint64_t neg = 0;
    for (const auto& p : pairs) {
      EXPECT_NE(p.a_id, p.b_id);
      if (p.label == PairLabel::kIsSimilar) {
        EXPECT_TRUE(positives.emplace(p.a_id, p.b_id).second);
        EXPECT_EQ(positives.count({p.b_id, p.a_id}), 0u);
      } else {
        ++neg;
      }
    }
    EXPECT_EQ(positives.size(), expected);
    EXPECT_EQ(neg, expected);
    EXPECT_EQ(stats(corpus).n_is_similar_pairs, expected);
    EXPECT_EQ(generate_pairs(corpus, true, trial), pairs);
  }
}

TEST(Pairs, FileRoundTrip) {
  auto corpus = corpus_with_sizes({3, 3});
  auto pairs = generate_pairs(corpus, true, 2);
  std::stringstream buf;
  write_pairs(buf, pairs);
  EXPECT_EQ(read_pairs(buf), pairs);
  std::stringstream bad(R"({"a":"x","b":"y","label":"Maybe"})");
  EXPECT_THROW(read_pairs(bad), DataError);
}

TEST(Stats, TwoRecords) {
  Corpus corpus({{"a", "", "T", words(100)}, {"b", "", "T", words(200)}});
  auto s = stats(corpus);
  EXPECT_EQ(s.n_characters, 2u);
  EXPECT_DOUBLE_EQ(s.words_per_character.mean, 150.0);
  EXPECT_DOUBLE_EQ(s.words_per_character.std_dev, 50.0);
  EXPECT_EQ(s.n_tropes, 1u);
  EXPECT_DOUBLE_EQ(s.characters_per_trope.mean, 2.0);
  EXPECT_EQ(s.n_is_similar_pairs, 1u);
  EXPECT_EQ(s.n_not_similar_pairs, 0u);
  EXPECT_EQ(stats(corpus, true).n_not_similar_pairs, 1u);
}

TEST(Stats, EmptyCorpus) {
  auto s = stats(Corpus());
  EXPECT_EQ(s.n_characters, 0u);
  EXPECT_EQ(s.n_tropes, 0u);
  EXPECT_EQ(s.words_per_character.mean, 0.0);
  EXPECT_EQ(s.words_per_character.std_dev, 0.0);
  EXPECT_EQ(s.characters_per_trope.mean, 0.0);
  EXPECT_EQ(s.n_is_similar_pairs, 0u);
}

TEST(Stats, TableMentionsEveryRow) {
  auto table = format_stats_table({{"train", stats(corpus_with_sizes({2, 3}), true)}});
  for (const char* row : {"characters", "words per character", "tropes", "characters per trope", "character pairs"}) {
    EXPECT_NE(table.find(row), std::string::npos) << row;
  }
}

TEST(CorpusFile, WriteThenLoadPreservesRecords) {
  auto corpus = corpus_with_sizes({2, 2});
  std::stringstream buf;
  write_corpus(buf, corpus);
  EXPECT_EQ(buf.str().find('\t'), std::string::npos);
  Corpus back(read_records(buf));
  EXPECT_EQ(back.records(), corpus.records());
}

}  // namespace
}  // namespace tropeline
