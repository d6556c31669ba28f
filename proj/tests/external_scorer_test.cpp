#include <atomic>
#include <random>
#include <thread>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "tropeline/external_scorer.hpp"
#include "tropeline/pipeline.hpp"

namespace tropeline {
namespace {

using namespace std::chrono_literals;

ExternalScorerOptions adapter(std::vector<std::string> args, std::chrono::milliseconds timeout = 5000ms,
                              std::size_t max_inflight = 8) {
  args.insert(args.begin(), FAKE_ADAPTER_PATH);
  return {args, timeout, max_inflight};
}

CharacterRecord text(const std::string& s) { return {"x", "", "t", s}; }

TEST(ExternalScorer, ConstantAdapterCountsCalls) {
  ExternalScorer scorer(adapter({"constant:0.5"}));
  EXPECT_EQ(scorer.adapter_name(), "fake-constant:0.5");
  for (int i = 0; i < 25; ++i) EXPECT_EQ(scorer.score(text("a"), text("b")), 0.5);
  EXPECT_EQ(scorer.calls(), 25u);
  EXPECT_EQ(scorer.shutdown(), 0);
}

TEST(ExternalScorer, OutOfRangeScoreNamesRequestId) {
  ExternalScorer scorer(adapter({"out-of-range"}));
  try {
    scorer.score(text("a"), text("b"));
    FAIL();
  } catch (const ProtocolError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("request id 0"), std::string::npos) << what;
    EXPECT_NE(what.find("1.7"), std::string::npos) << what;
  }
}

TEST(ExternalScorer, LexicalAdapterMatchesInProcessScores) {
  auto corpus = testing::corpus_with_sizes({5, 5, 5, 5}, 3);
  auto uniform = IdfTable::uniform();
  ExternalScorer scorer(adapter({"lexical"}));
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  for (int i = 0; i < 200; ++i) {
    const auto& a = corpus[pick(rng)];
    const auto& b = corpus[pick(rng)];
    EXPECT_EQ(scorer.score(a, b), lexical_cross_score(a.description, b.description, uniform));
  }
}

TEST(ExternalScorer, LexicalAdapterReproducesRankings) {
  auto corpus = testing::corpus_with_sizes({4, 4, 4, 4, 4}, 5);
  auto emb = embed_all(*fit_embedder(EmbedderKind::kBow, corpus), corpus);
  CosineSelector selector(corpus, emb);
  LexicalScorer local(IdfTable::uniform());
  ExternalScorer remote(adapter({"lexical"}));
  RunConfig config;
  config.top_n = 10;
  config.threads = 4;
  auto expected = select_and_refine(corpus, selector, local, config);
  auto actual = select_and_refine(corpus, selector, remote, config);
  ASSERT_EQ(expected.ranking.size(), actual.ranking.size());
  for (std::size_t q = 0; q < expected.ranking.size(); ++q) {
    ASSERT_EQ(expected.ranking[q].ranked.size(), actual.ranking[q].ranked.size());
    for (std::size_t i = 0; i < expected.ranking[q].ranked.size(); ++i) {
      EXPECT_EQ(expected.ranking[q].ranked[i].candidate, actual.ranking[q].ranked[i].candidate);
      EXPECT_EQ(expected.ranking[q].ranked[i].score, actual.ranking[q].ranked[i].score);
    }
  }
}

TEST(ExternalScorer, MalformedLinePoisonsScorer) {
  ExternalScorer scorer(adapter({"malformed"}));
  EXPECT_THROW(scorer.score(text("a"), text("b")), ProtocolError);
  try {
    scorer.score(text("a"), text("b"));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos) << e.what();
  }
}

TEST(ExternalScorer, ChildExitFailsEveryInflightRequest) {
  // Two replies are held back, then the child dies on the third request.
  ExternalScorer scorer(adapter({"constant:0.5", "batch:4", "exit-after:2"}));
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&] {
      try {
        scorer.score(text("a"), text("b"));
      } catch (const ProtocolError&) {
        ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures.load(), 4);
  EXPECT_THROW(scorer.score(text("a"), text("b")), ProtocolError);
  EXPECT_EQ(scorer.shutdown(), 3);
}

TEST(ExternalScorer, SequentialExitAfterAnswers) {
  ExternalScorer scorer(adapter({"constant:0.75", "exit-after:3"}));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(scorer.score(text("a"), text("b")), 0.75);
  EXPECT_THROW(scorer.score(text("a"), text("b")), ProtocolError);
}

TEST(ExternalScorer, TimeoutFailsOnlyThatRequest) {
  ExternalScorer scorer(adapter({"constant:0.5"}, 200ms));
  EXPECT_THROW(scorer.score(text("__hang__"), text("b")), TimeoutError);
  EXPECT_EQ(scorer.score(text("a"), text("b")), 0.5);
  EXPECT_EQ(scorer.shutdown(), 0);
}

TEST(ExternalScorer, ErrorReplyFailsOnlyThatRequest) {
  ExternalScorer scorer(adapter({"constant:0.5"}));
  try {
    scorer.score(text("__error__"), text("b"));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("refused"), std::string::npos);
  }
  EXPECT_EQ(scorer.score(text("a"), text("b")), 0.5);
}

TEST(ExternalScorer, HandshakeFailures) {
  EXPECT_THROW(ExternalScorer(adapter({"no-hello"}, 200ms)), ProtocolError);
  EXPECT_THROW(ExternalScorer(adapter({"bad-hello"})), ProtocolError);
  EXPECT_THROW(ExternalScorer({{"/nonexistent/adapter-binary"}, 2000ms, 8}), ProtocolError);
  EXPECT_THROW(ExternalScorer({{}, 2000ms, 8}), UsageError);
}

TEST(ExternalScorer, ShutdownReportsExitCode) {
  ExternalScorer ok(adapter({"constant:0.5"}));
  EXPECT_EQ(ok.shutdown(), 0);
  EXPECT_EQ(ok.shutdown(), 0);
  ExternalScorer custom(adapter({"constant:0.5", "exit-code:7"}));
  EXPECT_EQ(custom.shutdown(), 7);
}

TEST(ExternalScorer, PipelinesUpToMaxInflight) {
  // The adapter answers only once four requests are outstanding, in reverse order.
  ExternalScorer scorer(adapter({"constant:0.5", "batch:4"}, 5000ms, 4));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      if (scorer.score(text("a"), text("b")) == 0.5) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 8);
}

TEST(ExternalScorer, InflightLimitIsRespected) {
  // With only two requests allowed in flight, pairs of requests time out
  // before the adapter's batch of five fills; the fifth request completes it.
  ExternalScorer scorer(adapter({"constant:0.5", "batch:5"}, 300ms, 2));
  std::atomic<int> timeouts{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&] {
      try {
        scorer.score(text("a"), text("b"));
      } catch (const TimeoutError&) {
        ++timeouts;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(timeouts.load(), 4);
  EXPECT_EQ(scorer.score(text("a"), text("b")), 0.5);
}

}  // namespace
}  // namespace tropeline
