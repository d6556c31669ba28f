#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/text.hpp"
#include "tropeline/vectorspace.hpp"

namespace tropeline {

// A pairwise similarity function with a call counter. Scores are in [0, 1],
// higher is more similar, and are always requested as (query, candidate).
// Implementations must be safe to call concurrently.
class PairScorer {
 public:
  virtual ~PairScorer() = default;

  virtual std::string name() const = 0;

  double score(const CharacterRecord& query, const CharacterRecord& candidate) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    double s = score_pair(query, candidate);
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ScorerError(name() + " produced score " + std::to_string(s) + " outside [0, 1] for ('" + query.id +
                        "', '" + candidate.id + "')");
    }
    return s;
  }

  std::uint64_t calls() const { return calls_.load(); }
  void reset_calls() { calls_.store(0); }

 protected:
  virtual double score_pair(const CharacterRecord& query, const CharacterRecord& candidate) const = 0;

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
};

class ConstantScorer : public PairScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) throw UsageError("constant score must be in [0, 1]");
  }
  std::string name() const override { return "constant"; }

 protected:
  double score_pair(const CharacterRecord&, const CharacterRecord&) const override { return value_; }

 private:
  double value_;
};

// ---------------------------------------------------------------------------
// Lexical cross-scorer

// Smoothed inverse document frequency: ln((1 + n) / (1 + df)) + 1, strictly
// positive for every term including unseen ones. uniform() weighs all terms 1.
class IdfTable {
 public:
  static IdfTable uniform() {
    IdfTable t;
    t.uniform_ = true;
    return t;
  }

  static IdfTable fit(const Corpus& corpus) {
    IdfTable t;
    t.n_docs_ = corpus.size();
    std::unordered_map<std::string, std::size_t> df;
    for (const auto& r : corpus.records()) {
      auto tokens = tokenize(r.description);
      std::sort(tokens.begin(), tokens.end());
      tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
      for (auto& tok : tokens) ++df[tok];
    }
    t.weights_.reserve(df.size());
    for (const auto& [term, count] : df) t.weights_.emplace(term, t.smoothed(count));
    return t;
  }

  double idf(const std::string& term) const {
    if (uniform_) return 1.0;
    auto it = weights_.find(term);
    return it == weights_.end() ? smoothed(0) : it->second;
  }

  bool is_uniform() const { return uniform_; }

 private:
  double smoothed(std::size_t df) const {
    return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df))) + 1.0;
  }

  bool uniform_ = false;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, double> weights_;
};

// Term multiset of one text, sorted by term so that sums run in a fixed order.
struct LexicalProfile {
  std::vector<std::string> terms;
  std::vector<double> tf;
  std::vector<double> idf;
  double mass = 0.0;  // sum of idf * tf
};

inline LexicalProfile lexical_profile(std::string_view text, const IdfTable& idf) {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  LexicalProfile p;
  for (std::size_t i = 0; i < tokens.size();) {
    std::size_t j = i;
    while (j < tokens.size() && tokens[j] == tokens[i]) ++j;
    p.terms.push_back(tokens[i]);
    p.tf.push_back(static_cast<double>(j - i));
    p.idf.push_back(idf.idf(tokens[i]));
    i = j;
  }
  for (std::size_t i = 0; i < p.terms.size(); ++i) p.mass += p.idf[i] * p.tf[i];
  return p;
}

// idf-weighted Dice coefficient over two profiles. Symmetric bit for bit.
inline double lexical_cross_score(const LexicalProfile& a, const LexicalProfile& b) {
  double denom = a.mass + b.mass;
  if (denom == 0.0) return 0.0;
  double shared = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.terms.size() && j < b.terms.size()) {
    int c = a.terms[i].compare(b.terms[j]);
    if (c < 0) {
      ++i;
    } else if (c > 0) {
      ++j;
    } else {
      shared += a.idf[i] * std::min(a.tf[i], b.tf[j]);
      ++i;
      ++j;
    }
  }
  return std::clamp(2.0 * shared / denom, 0.0, 1.0);
}

inline double lexical_cross_score(std::string_view text_a, std::string_view text_b, const IdfTable& idf) {
  return lexical_cross_score(lexical_profile(text_a, idf), lexical_profile(text_b, idf));
}

// Lexical scorer with per-record profiles cached for a known corpus. Records
// whose text differs from the cached one are profiled on the fly.
class LexicalScorer : public PairScorer {
 public:
  explicit LexicalScorer(IdfTable idf) : idf_(std::move(idf)) {}

  LexicalScorer(IdfTable idf, const Corpus& cache_for) : idf_(std::move(idf)) {
    for (const auto& r : cache_for.records()) cache_.emplace(r.id, Cached{r.description, lexical_profile(r.description, idf_)});
  }

  std::string name() const override { return "lexical"; }
  const IdfTable& idf() const { return idf_; }

 protected:
  double score_pair(const CharacterRecord& a, const CharacterRecord& b) const override {
    const LexicalProfile* pa = cached(a);
    const LexicalProfile* pb = cached(b);
    if (pa && pb) return lexical_cross_score(*pa, *pb);
    LexicalProfile fa, fb;
    if (!pa) {
      fa = lexical_profile(a.description, idf_);
      pa = &fa;
    }
    if (!pb) {
      fb = lexical_profile(b.description, idf_);
      pb = &fb;
    }
    return lexical_cross_score(*pa, *pb);
  }

 private:
  struct Cached {
    std::string text;
    LexicalProfile profile;
  };

  const LexicalProfile* cached(const CharacterRecord& r) const {
    auto it = cache_.find(r.id);
    if (it == cache_.end() || it->second.text != r.description) return nullptr;
    return &it->second.profile;
  }

  IdfTable idf_;
  std::unordered_map<std::string, Cached> cache_;
};

// ---------------------------------------------------------------------------
// Siamese-style head: logistic regression over [e_a ; e_b ; |e_a - e_b|]

struct HeadWeights {
  // 3 * dimension feature weights followed by the bias.
  std::vector<double> weights;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;

  std::size_t dimension() const { return weights.empty() ? 0 : (weights.size() - 1) / 3; }
  double bias() const { return weights.back(); }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double head_logit(std::span<const double> weights, std::span<const double> ea, std::span<const double> eb) {
  const std::size_t d = ea.size();
  double z = weights[3 * d];
  for (std::size_t i = 0; i < d; ++i) {
    z += weights[i] * ea[i] + weights[d + i] * eb[i] + weights[2 * d + i] * std::abs(ea[i] - eb[i]);
  }
  return z;
}

// One labelled training example resolved to embedding rows.
struct HeadExample {
  std::size_t a_row;
  std::size_t b_row;
  double label;  // 1 for IsSimilar
};

// Mean binary cross-entropy over `batch`; when `gradient` is non-null it
// receives d(loss)/d(weights), same layout as the weights.
inline double head_loss(std::span<const double> weights, const EmbeddingSet& embeddings,
                        std::span<const HeadExample> batch, std::vector<double>* gradient = nullptr) {
  const std::size_t d = embeddings.dimension();
  if (gradient) gradient->assign(weights.size(), 0.0);
  if (batch.empty()) return 0.0;
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    auto ea = embeddings.row(ex.a_row);
    auto eb = embeddings.row(ex.b_row);
    double z = head_logit(weights, ea, eb);
    loss += ex.label > 0.5 ? softplus(-z) : softplus(z);
    if (gradient) {
      double r = (sigmoid(z) - ex.label) * inv_m;
      auto& g = *gradient;
      for (std::size_t i = 0; i < d; ++i) {
        g[i] += r * ea[i];
        g[d + i] += r * eb[i];
        g[2 * d + i] += r * std::abs(ea[i] - eb[i]);
      }
      g[3 * d] += r;
    }
  }
  return loss * inv_m;
}

struct HeadTrainOptions {
  std::size_t epochs = 20;
  double learning_rate = 0.1;
  // 0 means full batch.
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

inline std::vector<HeadExample> resolve_examples(const std::vector<PairExample>& pairs, const EmbeddingSet& embeddings) {
  std::vector<HeadExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto a = embeddings.find(p.a_id);
    if (!a) throw DataError("pair references id '" + p.a_id + "' with no embedding");
    auto b = embeddings.find(p.b_id);
    if (!b) throw DataError("pair references id '" + p.b_id + "' with no embedding");
    out.push_back({*a, *b, p.label == PairLabel::kIsSimilar ? 1.0 : 0.0});
  }
  return out;
}

// Mini-batch gradient descent on the logistic head, starting from zero weights.
// The example order is reshuffled every epoch from a generator seeded once.
inline HeadWeights train_head(const std::vector<PairExample>& pairs, const EmbeddingSet& embeddings,
                              const HeadTrainOptions& options) {
  auto examples = resolve_examples(pairs, embeddings);
  bool has_pos = false, has_neg = false;
  for (const auto& ex : examples) (ex.label > 0.5 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw UsageError("train_head needs at least one pair of each label");
  if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate)) {
    throw UsageError("learning rate must be positive");
  }

  HeadWeights head;
  head.weights.assign(3 * embeddings.dimension() + 1, 0.0);
  head.epochs = options.epochs;
  head.learning_rate = options.learning_rate;
  head.batch_size = options.batch_size == 0 ? examples.size() : options.batch_size;
  head.seed = options.seed;

  std::mt19937_64 rng(options.seed);
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    for (std::size_t start = 0; start < examples.size(); start += head.batch_size) {
      std::size_t len = std::min(head.batch_size, examples.size() - start);
      head_loss(head.weights, embeddings, std::span<const HeadExample>(examples).subspan(start, len), &grad);
      for (std::size_t i = 0; i < grad.size(); ++i) head.weights[i] -= options.learning_rate * grad[i];
    }
    head.epoch_losses.push_back(head_loss(head.weights, embeddings, examples));
  }
  for (double w : head.weights) {
    if (!std::isfinite(w)) throw Error("head training diverged; lower the learning rate");
  }
  head.final_loss = head.epoch_losses.empty() ? head_loss(head.weights, embeddings, examples) : head.epoch_losses.back();
  return head;
}

inline double siamese_score(const HeadWeights& head, const EmbeddingSet& embeddings, std::string_view a_id,
                            std::string_view b_id) {
  if (head.dimension() != embeddings.dimension()) {
    throw DataError("head dimension " + std::to_string(head.dimension()) + " does not match embeddings dimension " +
                    std::to_string(embeddings.dimension()));
  }
  return sigmoid(head_logit(head.weights, embeddings.vector(a_id), embeddings.vector(b_id)));
}

class HeadScorer : public PairScorer {
 public:
  HeadScorer(const HeadWeights& head, const EmbeddingSet& embeddings) : head_(head), embeddings_(embeddings) {
    if (head.dimension() != embeddings.dimension()) throw DataError("head and embeddings disagree on dimension");
  }
  std::string name() const override { return "head"; }

 protected:
  double score_pair(const CharacterRecord& a, const CharacterRecord& b) const override {
    return siamese_score(head_, embeddings_, a.id, b.id);
  }

 private:
  const HeadWeights& head_;
  const EmbeddingSet& embeddings_;
};

inline ordered_json to_json(const HeadWeights& head) {
  ordered_json obj;
  obj["dimension"] = head.dimension();
  obj["epochs"] = head.epochs;
  obj["learning_rate"] = head.learning_rate;
  obj["batch_size"] = head.batch_size;
  obj["seed"] = head.seed;
  obj["final_loss"] = head.final_loss;
  obj["epoch_losses"] = head.epoch_losses;
  obj["weights"] = head.weights;
  return obj;
}

inline HeadWeights head_from_json(const json& obj) {
  HeadWeights h;
  h.weights = obj.at("weights").get<std::vector<double>>();
  if (h.weights.empty() || (h.weights.size() - 1) % 3 != 0) throw DataError("head weights have an invalid length");
  for (double w : h.weights) {
    if (!std::isfinite(w)) throw DataError("head weights must be finite");
  }
  h.epochs = obj.value("epochs", std::size_t{0});
  h.learning_rate = obj.value("learning_rate", 0.0);
  h.batch_size = obj.value("batch_size", std::size_t{0});
  h.seed = obj.value("seed", std::uint64_t{0});
  h.final_loss = obj.value("final_loss", 0.0);
  if (obj.contains("epoch_losses")) h.epoch_losses = obj.at("epoch_losses").get<std::vector<double>>();
  return h;
}

inline HeadWeights load_head(const std::string& path) {
  auto in = open_input(path);
  try {
    return head_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace tropeline
