#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/parallel.hpp"
#include "tropeline/scorer.hpp"
#include "tropeline/vectorspace.hpp"

namespace tropeline {

// Candidates for one query, as corpus positions in select-rank order.
struct CandidateList {
  std::size_t query;
  std::vector<std::size_t> candidates;

  friend bool operator==(const CandidateList&, const CandidateList&) = default;
};
using CandidateSet = std::vector<CandidateList>;

struct RankedCandidate {
  std::size_t candidate;
  double score;
  std::size_t select_rank;

  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

struct QueryRanking {
  std::size_t query;
  std::vector<RankedCandidate> ranked;

  friend bool operator==(const QueryRanking&, const QueryRanking&) = default;
};
using RefinedRanking = std::vector<QueryRanking>;

// Secondary key after score. kCandidateId makes a refine at full budget
// reproduce the exhaustive ranking for any scorer; kSelectRank keeps the
// select order among equal scores.
enum class TieBreak { kCandidateId, kSelectRank };

struct RunConfig {
  std::size_t top_n = 10;
  std::vector<std::size_t> k_values{1, 5, 10};
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
  TieBreak tie_break = TieBreak::kCandidateId;

  void validate() const {
    if (k_values.empty()) throw UsageError("k_values must not be empty");
    for (auto k : k_values) {
      if (k == 0) throw UsageError("every k must be at least 1");
    }
    auto max_k = *std::max_element(k_values.begin(), k_values.end());
    if (top_n < max_k) {
      throw UsageError("top_n (" + std::to_string(top_n) + ") must be at least max k (" + std::to_string(max_k) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// Select methods

class Selector {
 public:
  virtual ~Selector() = default;
  virtual std::string name() const = 0;
  // Up to top_n other records for `query`, best first.
  virtual std::vector<std::size_t> select(std::size_t query, std::size_t top_n) const = 0;
};

// Copies the rows for `corpus` out of `embeddings`, in corpus order, so that
// row i is record i. Records without a vector are reported together.
inline EmbeddingSet restrict_to_corpus(const Corpus& corpus, const EmbeddingSet& embeddings) {
  auto missing = missing_ids(corpus, embeddings);
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ... (" + std::to_string(missing.size()) + " total)";
    throw DataError("embeddings do not cover the corpus; missing ids: " + list);
  }
  EmbeddingSetBuilder builder(embeddings.dimension());
  for (const auto& r : corpus.records()) builder.add(r.id, embeddings.vector(r.id));
  return std::move(builder).build();
}

class CosineSelector : public Selector {
 public:
  CosineSelector(const Corpus& corpus, const EmbeddingSet& embeddings, std::string label = "cosine")
      : rows_(restrict_to_corpus(corpus, embeddings)), label_(std::move(label)) {}

  std::string name() const override { return label_; }

  std::vector<std::size_t> select(std::size_t query, std::size_t top_n) const override {
    std::vector<std::size_t> out;
    for (auto [row, c] : top_n_rows(rows_, query, top_n)) out.push_back(row);
    return out;
  }

  const EmbeddingSet& embeddings() const { return rows_; }

 private:
  EmbeddingSet rows_;
  std::string label_;
};

// Ranks every other record by the cached-embedding head, ties by id.
class SiameseSelector : public Selector {
 public:
  SiameseSelector(const Corpus& corpus, const EmbeddingSet& embeddings, HeadWeights head)
      : corpus_(corpus), rows_(restrict_to_corpus(corpus, embeddings)), head_(std::move(head)) {
    if (head_.dimension() != rows_.dimension()) throw DataError("head and embeddings disagree on dimension");
  }

  std::string name() const override { return "siamese"; }

  std::vector<std::size_t> select(std::size_t query, std::size_t top_n) const override {
    std::vector<std::pair<std::size_t, double>> scored;
    scored.reserve(corpus_.size());
    auto q = rows_.row(query);
    for (std::size_t c = 0; c < corpus_.size(); ++c) {
      if (c != query) scored.emplace_back(c, sigmoid(head_logit(head_.weights, q, rows_.row(c))));
    }
    return keep_best(std::move(scored), top_n);
  }

 private:
  std::vector<std::size_t> keep_best(std::vector<std::pair<std::size_t, double>> scored, std::size_t top_n) const {
    std::size_t keep = std::min(top_n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.second != b.second) return a.second > b.second;
                        return corpus_.id_rank(a.first) < corpus_.id_rank(b.first);
                      });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].first);
    return out;
  }

  const Corpus& corpus_;
  EmbeddingSet rows_;
  HeadWeights head_;
};

// Uniform sample without replacement, reproducible per (seed, query).
class RandomSelector : public Selector {
 public:
  RandomSelector(const Corpus& corpus, std::uint64_t seed) : n_(corpus.size()), seed_(seed) {}
  std::string name() const override { return "random"; }

  std::vector<std::size_t> select(std::size_t query, std::size_t top_n) const override {
    std::vector<std::size_t> others;
    others.reserve(n_ - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      if (i != query) others.push_back(i);
    }
    std::size_t keep = std::min(top_n, others.size());
    std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (query + 1)));
    for (std::size_t i = 0; i < keep; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
      std::swap(others[i], others[pick(rng)]);
    }
    others.resize(keep);
    return others;
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
};

// Ranks every other record by a pair scorer, ties by id. Costs n - 1 scorer
// calls per query.
class ScorerSelector : public Selector {
 public:
  ScorerSelector(const Corpus& corpus, const PairScorer& scorer) : corpus_(corpus), scorer_(scorer) {}
  std::string name() const override { return "scorer:" + scorer_.name(); }

  std::vector<std::size_t> select(std::size_t query, std::size_t top_n) const override {
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t c = 0; c < corpus_.size(); ++c) {
      if (c != query) scored.emplace_back(c, scorer_.score(corpus_[query], corpus_[c]));
    }
    std::size_t keep = std::min(top_n, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.second != b.second) return a.second > b.second;
                        return corpus_.id_rank(a.first) < corpus_.id_rank(b.first);
                      });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].first);
    return out;
  }

 private:
  const Corpus& corpus_;
  const PairScorer& scorer_;
};

// ---------------------------------------------------------------------------
// Select, refine, exhaustive

inline std::size_t clamp_top_n(const Corpus& corpus, std::size_t top_n) {
  return corpus.size() == 0 ? 0 : std::min(top_n, corpus.size() - 1);
}

inline CandidateSet select_for(const std::vector<std::size_t>& queries, const Selector& selector, std::size_t top_n,
                               unsigned threads = 0) {
  if (top_n == 0) throw UsageError("top_n must be at least 1");
  CandidateSet out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    out[i].query = queries[i];
    out[i].candidates = selector.select(queries[i], top_n);
  });
  return out;
}

// Every record is a query. top_n is clamped to n - 1.
inline CandidateSet select(const Corpus& corpus, const Selector& selector, std::size_t top_n, unsigned threads = 0) {
  std::vector<std::size_t> queries(corpus.size());
  std::iota(queries.begin(), queries.end(), std::size_t{0});
  return select_for(queries, selector, clamp_top_n(corpus, top_n), threads);
}

inline void sort_ranking(const Corpus& corpus, std::vector<RankedCandidate>& ranked, TieBreak tie_break) {
  std::sort(ranked.begin(), ranked.end(), [&](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (tie_break == TieBreak::kSelectRank && a.select_rank != b.select_rank) return a.select_rank < b.select_rank;
    return corpus.id_rank(a.candidate) < corpus.id_rank(b.candidate);
  });
}

struct RefineOptions {
  unsigned threads = 0;
  TieBreak tie_break = TieBreak::kCandidateId;
};

// Scores exactly (query, candidate) for every listed candidate and sorts by
// score descending. Any scorer failure aborts the whole refinement.
inline RefinedRanking refine(const Corpus& corpus, const CandidateSet& candidates, const PairScorer& scorer,
                             const RefineOptions& options = {}) {
  RefinedRanking out(candidates.size());
  parallel_for(candidates.size(), options.threads, [&](std::size_t i) {
    const auto& list = candidates[i];
    const auto& query = corpus[list.query];
    auto& ranking = out[i];
    ranking.query = list.query;
    ranking.ranked.reserve(list.candidates.size());
    for (std::size_t rank = 0; rank < list.candidates.size(); ++rank) {
      std::size_t c = list.candidates[rank];
      double s;
      try {
        s = scorer.score(query, corpus[c]);
      } catch (const std::exception& e) {
        throw ScorerError("scoring failed for query '" + query.id + "' candidate '" + corpus[c].id + "': " + e.what());
      }
      ranking.ranked.push_back({c, s, rank});
    }
    sort_ranking(corpus, ranking.ranked, options.tie_break);
  });
  return out;
}

struct ExhaustiveOptions {
  std::size_t max_records = 2000;
  bool allow_large = false;
  unsigned threads = 0;
};

// All other records as candidates, enumerated in ascending id order.
inline CandidateSet all_candidates(const Corpus& corpus, const std::vector<std::size_t>& queries) {
  std::vector<std::size_t> by_id(corpus.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return corpus.id_rank(a) < corpus.id_rank(b); });
  CandidateSet out;
  out.reserve(queries.size());
  for (auto q : queries) {
    CandidateList list{q, {}};
    list.candidates.reserve(corpus.size() - 1);
    for (auto c : by_id) {
      if (c != q) list.candidates.push_back(c);
    }
    out.push_back(std::move(list));
  }
  return out;
}

// Scores every ordered (query, other) pair. Quadratic in scorer calls, so
// corpora above max_records are refused unless allow_large is set.
inline RefinedRanking exhaustive(const Corpus& corpus, const PairScorer& scorer, const ExhaustiveOptions& options = {}) {
  if (corpus.size() > options.max_records && !options.allow_large) {
    throw UsageError("exhaustive comparison of " + std::to_string(corpus.size()) + " records needs " +
                     std::to_string(corpus.size() * (corpus.size() - 1)) +
                     " scorer calls, which is impractically long; limit is " + std::to_string(options.max_records) +
                     " records (override to proceed)");
  }
  std::vector<std::size_t> queries(corpus.size());
  std::iota(queries.begin(), queries.end(), std::size_t{0});
  return refine(corpus, all_candidates(corpus, queries), scorer, {options.threads, TieBreak::kCandidateId});
}

// Per-query prefix of length min(k, list length).
inline RefinedRanking top_k(const RefinedRanking& ranking, std::size_t k) {
  if (k == 0) throw UsageError("k must be at least 1");
  RefinedRanking out = ranking;
  for (auto& q : out) {
    if (q.ranked.size() > k) q.ranked.resize(k);
  }
  return out;
}

struct RunResult {
  CandidateSet candidates;
  RefinedRanking ranking;
  std::size_t requested_top_n = 0;
  std::size_t effective_top_n = 0;
  std::uint64_t scorer_calls = 0;
};

// Select then refine over every record, checking the scorer budget.
inline RunResult select_and_refine(const Corpus& corpus, const Selector& selector, PairScorer& scorer,
                                   const RunConfig& config) {
  config.validate();
  if (corpus.size() < 2) throw DataError("need at least 2 records to rank");
  RunResult result;
  result.requested_top_n = config.top_n;
  result.effective_top_n = clamp_top_n(corpus, config.top_n);
  result.candidates = select(corpus, selector, result.effective_top_n, config.threads);
  std::uint64_t before = scorer.calls();
  result.ranking = refine(corpus, result.candidates, scorer, {config.threads, config.tie_break});
  result.scorer_calls = scorer.calls() - before;
  std::uint64_t expected = static_cast<std::uint64_t>(corpus.size()) * result.effective_top_n;
  if (result.scorer_calls != expected) {
    throw Error("scorer budget violated: " + std::to_string(result.scorer_calls) + " calls, expected " +
                std::to_string(expected));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Files

inline void write_rankings(std::ostream& out, const Corpus& corpus, const RefinedRanking& ranking) {
  for (const auto& q : ranking) {
    ordered_json obj;
    obj["query"] = corpus[q.query].id;
    auto ranked = ordered_json::array();
    for (const auto& r : q.ranked) ranked.push_back(ordered_json::array({corpus[r.candidate].id, r.score}));
    obj["ranked"] = std::move(ranked);
    out << obj.dump() << '\n';
  }
}

// Select ranks are taken from the listed order.
inline RefinedRanking read_rankings(std::istream& in, const Corpus& corpus, const std::string& source = "<rankings>") {
  RefinedRanking out;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    auto where = source + ":" + std::to_string(line_no) + ": ";
    try {
      QueryRanking q;
      q.query = corpus.index_of(require_string(obj, "query"));
      const auto& ranked = obj.at("ranked");
      if (!ranked.is_array()) throw DataError("\"ranked\" must be an array");
      std::unordered_set<std::size_t> seen;
      for (const auto& entry : ranked) {
        if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_number()) {
          throw DataError("ranked entries must be [id, score]");
        }
        std::size_t c = corpus.index_of(entry[0].get<std::string>());
        if (c == q.query) throw DataError("ranking lists the query itself");
        if (!seen.insert(c).second) throw DataError("duplicate candidate '" + entry[0].get<std::string>() + "'");
        q.ranked.push_back({c, entry[1].get<double>(), q.ranked.size()});
      }
      out.push_back(std::move(q));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  });
  return out;
}

inline void write_candidates(std::ostream& out, const Corpus& corpus, const CandidateSet& candidates) {
  for (const auto& list : candidates) {
    ordered_json obj;
    obj["query"] = corpus[list.query].id;
    auto ids = ordered_json::array();
    for (auto c : list.candidates) ids.push_back(corpus[c].id);
    obj["candidates"] = std::move(ids);
    out << obj.dump() << '\n';
  }
}

inline CandidateSet read_candidates(std::istream& in, const Corpus& corpus, const std::string& source = "<candidates>") {
  CandidateSet out;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    try {
      CandidateList list;
      list.query = corpus.index_of(require_string(obj, "query"));
      std::unordered_set<std::size_t> seen;
      for (const auto& id : obj.at("candidates")) {
        std::size_t c = corpus.index_of(id.get<std::string>());
        if (c == list.query || !seen.insert(c).second) throw DataError("self or duplicate candidate");
        list.candidates.push_back(c);
      }
      out.push_back(std::move(list));
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace tropeline
