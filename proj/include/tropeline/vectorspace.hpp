#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/hash.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/text.hpp"

namespace tropeline {

using Vector = std::vector<double>;

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double l2_norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

// Cosine from a dot product and two norms. A zero norm yields 0.
inline double cosine_from(double uv, double norm_u, double norm_v) {
  if (norm_u == 0.0 || norm_v == 0.0) return 0.0;
  return std::clamp(uv / (norm_u * norm_v), -1.0, 1.0);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw UsageError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) +
                     ")");
  }
  return cosine_from(dot(u, v), l2_norm(u), l2_norm(v));
}

// Dense id -> vector table. Immutable once built; norms are cached.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::size_t dimension, std::vector<std::string> ids, std::vector<double> values)
      : dimension_(dimension), ids_(std::move(ids)), values_(std::move(values)) {
    if (dimension_ == 0) throw DataError("embedding dimension must be positive");
    if (values_.size() != ids_.size() * dimension_) throw DataError("embedding table size does not match ids");
    norms_.resize(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      auto v = row(r);
      for (double x : v) {
        if (!std::isfinite(x)) throw DataError("non-finite value in vector for '" + ids_[r] + "'");
      }
      if (!rows_.emplace(ids_[r], r).second) throw DataError("duplicate embedding id '" + ids_[r] + "'");
      norms_[r] = l2_norm(v);
      if (norms_[r] == 0.0) ++zero_norm_rows_;
    }
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t r) const { return ids_[r]; }
  double norm(std::size_t r) const { return norms_[r]; }
  std::size_t zero_norm_rows() const { return zero_norm_rows_; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * dimension_, dimension_);
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = rows_.find(std::string(id));
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t row_of(std::string_view id) const {
    auto r = find(id);
    if (!r) throw DataError("no embedding for id '" + std::string(id) + "'");
    return *r;
  }

  std::span<const double> vector(std::string_view id) const { return row(row_of(id)); }

  double cosine_rows(std::size_t a, std::size_t b) const { return cosine_from(dot(row(a), row(b)), norms_[a], norms_[b]); }

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> rows_;
  std::size_t zero_norm_rows_ = 0;
};

// Accumulates rows before freezing them into an EmbeddingSet.
class EmbeddingSetBuilder {
 public:
  explicit EmbeddingSetBuilder(std::size_t dimension = 0) : dimension_(dimension) {}

  void add(std::string id, std::span<const double> v) {
    if (dimension_ == 0) dimension_ = v.size();
    if (v.size() != dimension_) {
      throw DataError("dimension mismatch for id '" + id + "': expected " + std::to_string(dimension_) + ", got " +
                      std::to_string(v.size()));
    }
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), v.begin(), v.end());
  }

  EmbeddingSet build() && { return EmbeddingSet(dimension_, std::move(ids_), std::move(values_)); }

 private:
  std::size_t dimension_;
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Embedders

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
};

// Term -> dense column index, assigned in first-seen order.
class Vocabulary {
 public:
  std::size_t add(const std::string& term) {
    auto [it, inserted] = index_.emplace(term, index_.size());
    return it->second;
  }
  std::optional<std::size_t> find(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return index_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Raw term counts over the fitted vocabulary. Out-of-vocabulary terms are ignored.
class BowEmbedder : public Embedder {
 public:
  explicit BowEmbedder(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  std::string name() const override { return "bow"; }
  std::size_t dimension() const override { return vocab_.size(); }
  Vector embed(std::string_view text) const override {
    Vector v(vocab_.size(), 0.0);
    for (const auto& t : tokenize(text)) {
      if (auto col = vocab_.find(t)) v[*col] += 1.0;
    }
    return v;
  }
  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  Vocabulary vocab_;
};

// tf * ln(n / df) over the fitted vocabulary.
class TfidfEmbedder : public Embedder {
 public:
  TfidfEmbedder(Vocabulary vocab, std::vector<double> idf) : vocab_(std::move(vocab)), idf_(std::move(idf)) {}
  std::string name() const override { return "tfidf"; }
  std::size_t dimension() const override { return vocab_.size(); }
  Vector embed(std::string_view text) const override {
    Vector v(vocab_.size(), 0.0);
    for (const auto& t : tokenize(text)) {
      if (auto col = vocab_.find(t)) v[*col] += 1.0;
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= idf_[i];
    return v;
  }
  double idf(std::size_t column) const { return idf_[column]; }
  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  Vocabulary vocab_;
  std::vector<double> idf_;
};

// Signed feature hashing: bucket from one hash, sign from an independent one.
class HashedEmbedder : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw UsageError("hashed embedder dimension must be positive");
  }
  std::string name() const override { return "hashed"; }
  std::size_t dimension() const override { return dimension_; }
  Vector embed(std::string_view text) const override {
    Vector v(dimension_, 0.0);
    for (const auto& t : tokenize(text)) {
      std::uint64_t h = fnv1a64(t);
      std::uint64_t s = fnv1a64(t, 0x84222325cbf29ce4ULL);
      v[h % dimension_] += (s & 1) ? 1.0 : -1.0;
    }
    return v;
  }

 private:
  std::size_t dimension_;
};

enum class EmbedderKind { kBow, kTfidf, kHashed };

struct EmbedderParams {
  // Only used by the hashed embedder. Signed so that a non-positive request can be rejected.
  long long hashed_dimension = 256;
};

inline std::unique_ptr<Embedder> fit_embedder(EmbedderKind kind, const Corpus& corpus, const EmbedderParams& params = {}) {
  if (kind == EmbedderKind::kHashed) {
    if (params.hashed_dimension <= 0) throw UsageError("hashed embedder dimension must be positive");
    return std::make_unique<HashedEmbedder>(static_cast<std::size_t>(params.hashed_dimension));
  }
  if (corpus.empty()) throw UsageError("cannot fit an embedder on an empty corpus");
  Vocabulary vocab;
  std::vector<std::size_t> df;
  std::vector<std::size_t> last_doc;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& t : tokenize(corpus[d].description)) {
      std::size_t col = vocab.add(t);
      if (col == df.size()) {
        df.push_back(0);
        last_doc.push_back(static_cast<std::size_t>(-1));
      }
      if (last_doc[col] != d) {
        last_doc[col] = d;
        ++df[col];
      }
    }
  }
  if (vocab.size() == 0) throw UsageError("corpus has no tokens; vocabulary would be empty");
  if (kind == EmbedderKind::kBow) return std::make_unique<BowEmbedder>(std::move(vocab));
  std::vector<double> idf(df.size());
  const auto n = static_cast<double>(corpus.size());
  for (std::size_t i = 0; i < df.size(); ++i) idf[i] = std::log(n / static_cast<double>(df[i]));
  return std::make_unique<TfidfEmbedder>(std::move(vocab), std::move(idf));
}

inline EmbeddingSet embed_all(const Embedder& embedder, const Corpus& corpus) {
  EmbeddingSetBuilder builder(embedder.dimension());
  for (const auto& r : corpus.records()) builder.add(r.id, embedder.embed(r.description));
  return std::move(builder).build();
}

// ---------------------------------------------------------------------------
// Embedding files

inline constexpr char kBinaryMagic[4] = {'E', 'M', 'B', '1'};

inline void write_embeddings_text(std::ostream& out, const EmbeddingSet& set) {
  for (std::size_t r = 0; r < set.size(); ++r) {
    ordered_json obj;
    obj["id"] = set.id(r);
    auto v = set.row(r);
    obj["vector"] = std::vector<double>(v.begin(), v.end());
    out << obj.dump() << '\n';
  }
}

namespace detail {
inline void put_le(std::ostream& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}
inline bool get_le(std::istream& in, std::uint64_t& value, int bytes) {
  value = 0;
  for (int i = 0; i < bytes; ++i) {
    int c = in.get();
    if (c == std::char_traits<char>::eof()) return false;
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return true;
}
}  // namespace detail

// Binary form: "EMB1", u32 dimension, then per record u16 id length, id bytes,
// and `dimension` float32 values. All integers little-endian.
inline void write_embeddings_binary(std::ostream& out, const EmbeddingSet& set) {
  out.write(kBinaryMagic, 4);
  detail::put_le(out, set.dimension(), 4);
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& id = set.id(r);
    if (id.size() > 0xffff) throw DataError("id too long for binary embedding file: '" + id.substr(0, 32) + "...'");
    detail::put_le(out, id.size(), 2);
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (double x : set.row(r)) {
      auto f = static_cast<float>(x);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      detail::put_le(out, bits, 4);
    }
  }
}

inline EmbeddingSet read_embeddings_binary(std::istream& in, const std::string& source = "<embeddings>") {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0) throw DataError(source + ": bad magic");
  std::uint64_t dim = 0;
  if (!detail::get_le(in, dim, 4) || dim == 0) throw DataError(source + ": bad dimension header");
  EmbeddingSetBuilder builder(dim);
  std::vector<double> v(dim);
  std::uint64_t len;
  while (detail::get_le(in, len, 2)) {
    std::string id(len, '\0');
    if (!in.read(id.data(), static_cast<std::streamsize>(len))) throw DataError(source + ": truncated id");
    for (std::size_t i = 0; i < dim; ++i) {
      std::uint64_t bits;
      if (!detail::get_le(in, bits, 4)) throw DataError(source + ": truncated vector for '" + id + "'");
      auto b32 = static_cast<std::uint32_t>(bits);
      float f;
      std::memcpy(&f, &b32, sizeof f);
      v[i] = f;
    }
    builder.add(std::move(id), v);
  }
  return std::move(builder).build();
}

inline EmbeddingSet read_embeddings_text(std::istream& in, const std::string& source = "<embeddings>") {
  EmbeddingSetBuilder builder;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    std::string id = require_string(obj, "id");
    auto it = obj.find("vector");
    if (it == obj.end() || !it->is_array()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": missing \"vector\" array for '" + id + "'");
    }
    auto v = it->get<std::vector<double>>();
    try {
      builder.add(std::move(id), v);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return std::move(builder).build();
}

// Detects the binary form by its magic bytes; otherwise reads JSON lines.
inline EmbeddingSet load_embeddings(const std::string& path) {
  auto in = open_input(path);
  char magic[4] = {};
  in.read(magic, 4);
  bool binary = in.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_embeddings_binary(in, path) : read_embeddings_text(in, path);
}

// Ids from the corpus with no vector in the set, in corpus order.
inline std::vector<std::string> missing_ids(const Corpus& corpus, const EmbeddingSet& set) {
  std::vector<std::string> missing;
  for (const auto& r : corpus.records()) {
    if (!set.find(r.id)) missing.push_back(r.id);
  }
  return missing;
}

// ---------------------------------------------------------------------------
// Exact neighbor search

struct Neighbor {
  std::string id;
  double cosine;
};

struct NeighborList {
  std::string query_id;
  std::vector<Neighbor> entries;
};

// Top min(n, size-1) rows by cosine to `query_row`, self excluded, ties by id
// ascending. Returns (row, cosine) pairs.
inline std::vector<std::pair<std::size_t, double>> top_n_rows(const EmbeddingSet& set, std::size_t query_row,
                                                              std::size_t n) {
  std::vector<std::pair<std::size_t, double>> scored;
  scored.reserve(set.size());
  auto q = set.row(query_row);
  for (std::size_t r = 0; r < set.size(); ++r) {
    if (r == query_row) continue;
    scored.emplace_back(r, cosine_from(dot(q, set.row(r)), set.norm(query_row), set.norm(r)));
  }
  std::size_t keep = std::min(n, scored.size());
  auto before = [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return set.id(a.first) < set.id(b.first);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), before);
  scored.resize(keep);
  return scored;
}

inline NeighborList top_n_neighbors(std::string_view query_id, const EmbeddingSet& set, std::size_t n) {
  if (n == 0) throw UsageError("top_n_neighbors: n must be at least 1");
  auto q = set.find(query_id);
  if (!q) throw DataError("query id '" + std::string(query_id) + "' not in embedding set");
  NeighborList out{std::string(query_id), {}};
  for (auto [r, c] : top_n_rows(set, *q, n)) out.entries.push_back({set.id(r), c});
  return out;
}

}  // namespace tropeline
