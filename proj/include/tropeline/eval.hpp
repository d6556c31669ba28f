#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/parallel.hpp"
#include "tropeline/pipeline.hpp"

namespace tropeline {

// Same-trope partners within one corpus, by record position.
class GroundTruth {
 public:
  GroundTruth() = default;

  explicit GroundTruth(const Corpus& corpus) : partners_(corpus.size()) {
    for (const auto& [trope, members] : corpus.trope_index()) {
      for (std::size_t x = 0; x < members.size(); ++x) {
        for (std::size_t y = 0; y < members.size(); ++y) {
          if (x != y) partners_[members[x]].push_back(members[y]);
        }
        n_pairs_ += members.size() - 1 - x;
      }
    }
    for (auto& p : partners_) std::sort(p.begin(), p.end());
  }

  std::size_t size() const { return partners_.size(); }
  std::uint64_t n_pairs() const { return n_pairs_; }
  const std::vector<std::size_t>& partners(std::size_t i) const { return partners_[i]; }

  bool related(std::size_t a, std::size_t b) const {
    const auto& p = partners_[a];
    return std::binary_search(p.begin(), p.end(), b);
  }

  // Unordered pairs as (smaller, larger) positions.
  std::set<std::pair<std::size_t, std::size_t>> pair_set() const {
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < partners_.size(); ++a) {
      for (auto b : partners_[a]) {
        if (a < b) out.emplace(a, b);
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::size_t>> partners_;
  std::uint64_t n_pairs_ = 0;
};

inline GroundTruth ground_truth(const Corpus& eval_corpus) { return GroundTruth(eval_corpus); }

enum class RecallMode { kDedup, kDirected };

inline const char* to_string(RecallMode m) { return m == RecallMode::kDedup ? "dedup" : "directed"; }

// dedup: share of ground-truth pairs whose partner shows up in the top k of at
// least one endpoint. directed: every (query, hit) event counts, so the value
// can exceed 100.
inline double recall_at_k(const RefinedRanking& ranking, const GroundTruth& gt, std::size_t k,
                          RecallMode mode = RecallMode::kDedup) {
  if (gt.n_pairs() == 0) throw DataError("recall is undefined: ground truth has no pairs");
  if (k == 0) throw UsageError("k must be at least 1");
  std::uint64_t directed_hits = 0;
  std::set<std::pair<std::size_t, std::size_t>> found;
  for (const auto& q : ranking) {
    std::size_t limit = std::min(k, q.ranked.size());
    for (std::size_t j = 0; j < limit; ++j) {
      std::size_t c = q.ranked[j].candidate;
      if (!gt.related(q.query, c)) continue;
      ++directed_hits;
      if (mode == RecallMode::kDedup) found.emplace(std::min(q.query, c), std::max(q.query, c));
    }
  }
  double hits = mode == RecallMode::kDedup ? static_cast<double>(found.size()) : static_cast<double>(directed_hits);
  return hits / static_cast<double>(gt.n_pairs()) * 100.0;
}

// Binary-relevance nDCG@k averaged over every query in the ranking; queries
// without partners contribute 0.
inline double ndcg_at_k(const RefinedRanking& ranking, const GroundTruth& gt, std::size_t k) {
  if (ranking.empty()) throw UsageError("nDCG needs at least one query");
  if (k == 0) throw UsageError("k must be at least 1");
  double total = 0.0;
  for (const auto& q : ranking) {
    std::size_t relevant = gt.partners(q.query).size();
    if (relevant == 0) continue;
    double dcg = 0.0;
    std::size_t limit = std::min(k, q.ranked.size());
    for (std::size_t j = 0; j < limit; ++j) {
      if (gt.related(q.query, q.ranked[j].candidate)) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t j = 0; j < std::min(k, relevant); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    total += dcg / idcg;
  }
  return total / static_cast<double>(ranking.size()) * 100.0;
}

// Mean reciprocal rank of the first partner in the full list (0 when absent).
inline double mrr(const RefinedRanking& ranking, const GroundTruth& gt, bool include_partnerless = false) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& q : ranking) {
    if (!include_partnerless && gt.partners(q.query).empty()) continue;
    ++counted;
    for (std::size_t j = 0; j < q.ranked.size(); ++j) {
      if (gt.related(q.query, q.ranked[j].candidate)) {
        total += 1.0 / static_cast<double>(j + 1);
        break;
      }
    }
  }
  if (counted == 0) {
    throw UsageError(include_partnerless ? "MRR needs at least one query" : "MRR needs at least one query with a partner");
  }
  return total / static_cast<double>(counted) * 100.0;
}

// (query, candidate) -> relevant, by corpus position.
using RelevanceLabels = std::map<std::pair<std::size_t, std::size_t>, bool>;

inline RelevanceLabels labels_from_ground_truth(const RefinedRanking& ranking, const GroundTruth& gt) {
  RelevanceLabels labels;
  for (const auto& q : ranking) {
    for (const auto& r : q.ranked) labels[{q.query, r.candidate}] = gt.related(q.query, r.candidate);
  }
  return labels;
}

inline RelevanceLabels read_labels(std::istream& in, const Corpus& corpus, const std::string& source = "<labels>") {
  RelevanceLabels labels;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    try {
      auto q = corpus.index_of(require_string(obj, "query"));
      auto c = corpus.index_of(require_string(obj, "candidate"));
      auto it = obj.find("relevant");
      if (it == obj.end() || !it->is_boolean()) throw DataError("\"relevant\" must be true or false");
      labels[{q, c}] = it->get<bool>();
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return labels;
}

struct PrecisionResult {
  double mean = 0.0;
  double std_dev = 0.0;  // population, across queries
};

// Mean over queries of (relevant in top k) / k, in percent.
inline PrecisionResult precision_at_k(const RefinedRanking& ranking, const RelevanceLabels& labels, std::size_t k,
                                      const Corpus* corpus = nullptr) {
  if (ranking.empty()) throw UsageError("precision needs at least one query");
  if (k == 0) throw UsageError("k must be at least 1");
  std::vector<double> per_query;
  per_query.reserve(ranking.size());
  for (const auto& q : ranking) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < std::min(k, q.ranked.size()); ++j) {
      auto it = labels.find({q.query, q.ranked[j].candidate});
      if (it == labels.end()) {
        std::string pair = corpus ? "('" + (*corpus)[q.query].id + "', '" + (*corpus)[q.ranked[j].candidate].id + "')"
                                  : "(" + std::to_string(q.query) + ", " + std::to_string(q.ranked[j].candidate) + ")";
        throw DataError("no relevance label for " + pair);
      }
      if (it->second) ++hits;
    }
    per_query.push_back(static_cast<double>(hits) / static_cast<double>(k) * 100.0);
  }
  auto ms = mean_std(per_query);
  return {ms.mean, ms.std_dev};
}

// ---------------------------------------------------------------------------
// Report

struct MetricsAtK {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::optional<PrecisionResult> precision;
};

struct MetricsReport {
  std::vector<MetricsAtK> at_k;
  std::optional<double> mrr;
  std::optional<double> mrr_including_partnerless;
  RecallMode recall_mode = RecallMode::kDedup;
  bool recall_exceeds_100 = false;
  std::size_t n_queries = 0;
  std::size_t n_partnerless_queries = 0;
  std::uint64_t n_pairs = 0;
  ordered_json config = ordered_json::object();
  std::map<std::string, std::uint64_t> warnings;
};

struct EvalOptions {
  std::vector<std::size_t> k_values{1, 5, 10};
  RecallMode recall_mode = RecallMode::kDedup;
  const RelevanceLabels* labels = nullptr;
};

inline MetricsReport evaluate(const RefinedRanking& ranking, const GroundTruth& gt, const EvalOptions& options,
                              const Corpus* corpus = nullptr) {
  if (options.k_values.empty()) throw UsageError("k_values must not be empty");
  MetricsReport report;
  report.recall_mode = options.recall_mode;
  report.n_queries = ranking.size();
  report.n_pairs = gt.n_pairs();
  for (const auto& q : ranking) {
    if (gt.partners(q.query).empty()) ++report.n_partnerless_queries;
  }
  if (report.n_partnerless_queries > 0) report.warnings["partnerless_queries"] = report.n_partnerless_queries;
  for (auto k : options.k_values) {
    MetricsAtK m;
    m.k = k;
    m.recall = recall_at_k(ranking, gt, k, options.recall_mode);
    m.ndcg = ndcg_at_k(ranking, gt, k);
    if (options.labels) m.precision = precision_at_k(ranking, *options.labels, k, corpus);
    if (m.recall > 100.0) report.recall_exceeds_100 = true;
    report.at_k.push_back(m);
  }
  if (report.n_partnerless_queries < ranking.size()) {
    report.mrr = mrr(ranking, gt, false);
  } else {
    report.warnings["no_partnered_queries"] = 1;
  }
  report.mrr_including_partnerless = mrr(ranking, gt, true);
  return report;
}

inline ordered_json to_json(const MetricsReport& r) {
  ordered_json obj;
  obj["recall_mode"] = to_string(r.recall_mode);
  obj["n_queries"] = r.n_queries;
  obj["n_partnerless_queries"] = r.n_partnerless_queries;
  obj["n_ground_truth_pairs"] = r.n_pairs;
  auto metrics = ordered_json::array();
  for (const auto& m : r.at_k) {
    ordered_json e;
    e["k"] = m.k;
    e["recall"] = m.recall;
    e["ndcg"] = m.ndcg;
    if (m.precision) {
      e["precision"] = m.precision->mean;
      e["precision_std_dev"] = m.precision->std_dev;
    }
    metrics.push_back(std::move(e));
  }
  obj["at_k"] = std::move(metrics);
  obj["mrr"] = r.mrr ? ordered_json(*r.mrr) : ordered_json();
  obj["mrr_including_partnerless"] = r.mrr_including_partnerless ? ordered_json(*r.mrr_including_partnerless) : ordered_json();
  obj["recall_exceeds_100"] = r.recall_exceeds_100;
  ordered_json warnings = ordered_json::object();
  for (const auto& [name, count] : r.warnings) warnings[name] = count;
  obj["warnings"] = std::move(warnings);
  obj["config"] = r.config;
  return obj;
}

inline std::string to_tsv(const MetricsReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  bool with_precision = !r.at_k.empty() && r.at_k.front().precision.has_value();
  os << "k\trecall\tndcg";
  if (with_precision) os << "\tprecision\tprecision_std_dev";
  os << '\n';
  for (const auto& m : r.at_k) {
    os << m.k << '\t' << m.recall << '\t' << m.ndcg;
    if (m.precision) os << '\t' << m.precision->mean << '\t' << m.precision->std_dev;
    os << '\n';
  }
  os << "mrr\t" << (r.mrr ? *r.mrr : 0.0) << '\n';
  os << "mrr_including_partnerless\t" << (r.mrr_including_partnerless ? *r.mrr_including_partnerless : 0.0) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Overlap harness

struct OverlapOptions {
  std::size_t n_queries = 100;
  std::size_t oracle_top = 100;
  std::size_t select_top = 500;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct MethodOverlap {
  std::string method;
  double overlap = 0.0;               // percent, mean over queries
  std::vector<double> per_query;      // percent
};

struct OverlapResult {
  std::vector<std::size_t> queries;
  std::vector<MethodOverlap> methods;
  std::uint64_t oracle_calls = 0;
};

inline std::vector<std::size_t> sample_queries(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(count, n));
  std::sort(all.begin(), all.end());
  return all;
}

// For sampled queries, ranks every other record with the refine scorer, keeps
// the best oracle_top, and reports what share of them each select method's
// top select_top recovers.
inline OverlapResult overlap_harness(const Corpus& corpus, const PairScorer& refine_scorer,
                                     const std::vector<const Selector*>& methods, const OverlapOptions& options) {
  const std::size_t n = corpus.size();
  if (options.select_top >= n) {
    throw UsageError("select_top (" + std::to_string(options.select_top) + ") must be below the corpus size (" +
                     std::to_string(n) + ")");
  }
  if (options.oracle_top == 0 || options.oracle_top > n - 1) throw UsageError("oracle_top must be in [1, n - 1]");
  if (options.n_queries == 0 || options.n_queries > n) throw UsageError("n_queries must be in [1, n]");

  OverlapResult result;
  result.queries = sample_queries(n, options.n_queries, options.seed);
  std::uint64_t before = refine_scorer.calls();
  auto oracle = refine(corpus, all_candidates(corpus, result.queries), refine_scorer,
                       {options.threads, TieBreak::kCandidateId});
  result.oracle_calls = refine_scorer.calls() - before;

  for (const Selector* method : methods) {
    MethodOverlap m;
    m.method = method->name();
    m.per_query.assign(result.queries.size(), 0.0);
    parallel_for(result.queries.size(), options.threads, [&](std::size_t i) {
      auto picked = method->select(result.queries[i], options.select_top);
      std::sort(picked.begin(), picked.end());
      std::size_t shared = 0;
      for (std::size_t j = 0; j < options.oracle_top; ++j) {
        if (std::binary_search(picked.begin(), picked.end(), oracle[i].ranked[j].candidate)) ++shared;
      }
      m.per_query[i] = static_cast<double>(shared) / static_cast<double>(options.oracle_top) * 100.0;
    });
    double total = 0.0;
    for (double v : m.per_query) total += v;
    m.overlap = total / static_cast<double>(m.per_query.size());
    result.methods.push_back(std::move(m));
  }
  return result;
}

inline ordered_json to_json(const OverlapResult& r, const Corpus& corpus) {
  ordered_json obj;
  auto ids = ordered_json::array();
  for (auto q : r.queries) ids.push_back(corpus[q].id);
  obj["queries"] = std::move(ids);
  obj["oracle_calls"] = r.oracle_calls;
  auto methods = ordered_json::array();
  for (const auto& m : r.methods) {
    ordered_json e;
    e["method"] = m.method;
    e["overlap"] = m.overlap;
    methods.push_back(std::move(e));
  }
  obj["methods"] = std::move(methods);
  return obj;
}

// ---------------------------------------------------------------------------
// top_n sweep

struct SweepOptions {
  std::size_t min_top_n = 1;
  std::size_t max_top_n = 500;
  std::size_t step = 1;
  std::size_t smooth_window = 10;
  std::vector<std::size_t> k_values{1, 5, 10};
  RecallMode recall_mode = RecallMode::kDedup;
  bool mrr_include_partnerless = false;
  TieBreak tie_break = TieBreak::kCandidateId;
  unsigned threads = 0;
};

struct MetricSeries {
  std::string metric;
  std::vector<double> values;    // one per top_n
  std::vector<double> marginal;  // (M(m) - M(m - step)) / step, from the second top_n on
  std::vector<double> smoothed;  // trailing mean of marginal
  std::size_t best_top_n = 0;
  std::optional<std::size_t> zero_crossing_top_n;
};

struct SweepResult {
  std::vector<std::size_t> top_n;
  std::vector<MetricSeries> metrics;
  std::uint64_t scorer_calls = 0;
  std::size_t refine_passes = 0;

  const MetricSeries& series(const std::string& name) const {
    for (const auto& s : metrics) {
      if (s.metric == name) return s;
    }
    throw UsageError("no metric named " + name);
  }
};

// Marginal change, trailing smoothing, argmax (ties to the smaller top_n) and
// the first smoothed point at or below zero.
inline void finish_series(MetricSeries& s, const std::vector<std::size_t>& top_n, std::size_t step,
                          std::size_t window) {
  s.marginal.clear();
  s.smoothed.clear();
  for (std::size_t i = 1; i < s.values.size(); ++i) {
    s.marginal.push_back((s.values[i] - s.values[i - 1]) / static_cast<double>(step));
  }
  if (window == 0) window = 1;
  for (std::size_t i = 0; i < s.marginal.size(); ++i) {
    std::size_t from = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = from; j <= i; ++j) sum += s.marginal[j];
    s.smoothed.push_back(sum / static_cast<double>(i + 1 - from));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.values.size(); ++i) {
    if (s.values[i] > s.values[best]) best = i;
  }
  s.best_top_n = top_n.empty() ? 0 : top_n[best];
  s.zero_crossing_top_n.reset();
  for (std::size_t i = 0; i < s.smoothed.size(); ++i) {
    if (s.smoothed[i] <= 0.0) {
      s.zero_crossing_top_n = top_n[i + 1];
      break;
    }
  }
}

// The ranking a refine with budget m would have produced: the full-budget
// ranking restricted to the first m select ranks. Filtering keeps the order.
inline RefinedRanking restrict_budget(const RefinedRanking& full, std::size_t m) {
  RefinedRanking out;
  out.reserve(full.size());
  for (const auto& q : full) {
    QueryRanking r{q.query, {}};
    for (const auto& e : q.ranked) {
      if (e.select_rank < m) r.ranked.push_back(e);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<std::string> sweep_metric_names(const SweepOptions& options) {
  std::vector<std::string> names;
  for (auto k : options.k_values) names.push_back("recall@" + std::to_string(k));
  for (auto k : options.k_values) names.push_back("ndcg@" + std::to_string(k));
  names.push_back("mrr");
  return names;
}

// Selects once at the largest budget, refines once, and evaluates every budget
// in [min_top_n, max_top_n] by step from prefixes of that single pass.
inline SweepResult sweep_top_n(const Corpus& corpus, const GroundTruth& gt, const Selector& selector,
                               PairScorer& scorer, const SweepOptions& options) {
  const std::size_t n = corpus.size();
  if (n < 2) throw DataError("sweep needs at least 2 records");
  if (options.step == 0) throw UsageError("sweep step must be at least 1");
  if (options.min_top_n == 0 || options.min_top_n > options.max_top_n) throw UsageError("invalid sweep range");
  if (options.max_top_n > n - 1) {
    throw UsageError("sweep range ends at " + std::to_string(options.max_top_n) + " but the corpus allows at most " +
                     std::to_string(n - 1));
  }
  if (options.k_values.empty()) throw UsageError("k_values must not be empty");

  SweepResult result;
  for (std::size_t m = options.min_top_n; m <= options.max_top_n; m += options.step) result.top_n.push_back(m);
  const std::size_t largest = result.top_n.back();

  auto candidates = select(corpus, selector, largest, options.threads);
  std::uint64_t before = scorer.calls();
  auto full = refine(corpus, candidates, scorer, {options.threads, options.tie_break});
  result.refine_passes = 1;
  result.scorer_calls = scorer.calls() - before;
  if (result.scorer_calls != static_cast<std::uint64_t>(n) * largest) {
    throw Error("scorer budget violated during sweep");
  }

  auto names = sweep_metric_names(options);
  result.metrics.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    result.metrics[i].metric = names[i];
    result.metrics[i].values.resize(result.top_n.size());
  }
  const std::size_t nk = options.k_values.size();
  parallel_for(result.top_n.size(), options.threads, [&](std::size_t t) {
    auto ranking = restrict_budget(full, result.top_n[t]);
    for (std::size_t j = 0; j < nk; ++j) {
      result.metrics[j].values[t] = recall_at_k(ranking, gt, options.k_values[j], options.recall_mode);
      result.metrics[nk + j].values[t] = ndcg_at_k(ranking, gt, options.k_values[j]);
    }
    result.metrics[2 * nk].values[t] = mrr(ranking, gt, options.mrr_include_partnerless);
  });
  for (auto& s : result.metrics) finish_series(s, result.top_n, options.step, options.smooth_window);
  return result;
}

inline ordered_json to_json(const SweepResult& r) {
  ordered_json obj;
  obj["top_n"] = r.top_n;
  obj["scorer_calls"] = r.scorer_calls;
  obj["refine_passes"] = r.refine_passes;
  auto metrics = ordered_json::array();
  for (const auto& s : r.metrics) {
    ordered_json e;
    e["metric"] = s.metric;
    e["best_top_n"] = s.best_top_n;
    e["zero_crossing_top_n"] = s.zero_crossing_top_n ? ordered_json(*s.zero_crossing_top_n) : ordered_json();
    e["values"] = s.values;
    e["marginal"] = s.marginal;
    e["smoothed_marginal"] = s.smoothed;
    metrics.push_back(std::move(e));
  }
  obj["metrics"] = std::move(metrics);
  return obj;
}

// Two columns (top_n, value) for external plotting.
inline std::string series_tsv(const SweepResult& r, const MetricSeries& s) {
  std::ostringstream os;
  os.precision(10);
  os << "top_n\t" << s.metric << '\n';
  for (std::size_t i = 0; i < r.top_n.size(); ++i) os << r.top_n[i] << '\t' << s.values[i] << '\n';
  return os.str();
}

inline std::string sweep_summary_tsv(const SweepResult& r) {
  std::ostringstream os;
  os << "metric\tbest_top_n\tbest_value\tzero_crossing_top_n\n";
  for (const auto& s : r.metrics) {
    double best_value = 0.0;
    for (std::size_t i = 0; i < r.top_n.size(); ++i) {
      if (r.top_n[i] == s.best_top_n) best_value = s.values[i];
    }
    os << s.metric << '\t' << s.best_top_n << '\t' << best_value << '\t';
    if (s.zero_crossing_top_n) {
      os << *s.zero_crossing_top_n;
    } else {
      os << "none";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tropeline
