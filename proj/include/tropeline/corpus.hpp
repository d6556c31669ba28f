#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tropeline/error.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/text.hpp"

namespace tropeline {

struct CharacterRecord {
  std::string id;
  std::string name;
  std::string trope;
  std::string description;

  friend bool operator==(const CharacterRecord&, const CharacterRecord&) = default;
};

// An immutable, ordered collection of records plus the trope -> members index.
// Members are stored as record positions, ascending.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<CharacterRecord> records) : records_(std::move(records)) {
    by_id_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.description.empty()) throw DataError("record '" + r.id + "' has an empty description");
      if (!by_id_.emplace(r.id, i).second) throw DataError("duplicate id '" + r.id + "'");
      trope_index_[r.trope].push_back(i);
    }
    std::vector<std::size_t> order(records_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records_[a].id < records_[b].id; });
    id_rank_.resize(records_.size());
    for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = static_cast<std::uint32_t>(r);
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const CharacterRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<CharacterRecord>& records() const { return records_; }
  const std::map<std::string, std::vector<std::size_t>>& trope_index() const { return trope_index_; }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw DataError("unknown id '" + std::string(id) + "'");
    return *i;
  }

  // Position of record i in ascending id order; used for id tie-breaks.
  std::uint32_t id_rank(std::size_t i) const { return id_rank_[i]; }

  const std::vector<std::size_t>& members(const std::string& trope) const { return trope_index_.at(trope); }

 private:
  std::vector<CharacterRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> trope_index_;
  std::vector<std::uint32_t> id_rank_;
};

enum class PairLabel { kIsSimilar, kNotSimilar };

inline const char* to_string(PairLabel label) {
  return label == PairLabel::kIsSimilar ? "IsSimilar" : "NotSimilar";
}

struct PairExample {
  std::string a_id;
  std::string b_id;
  PairLabel label;

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

struct MeanStd {
  double mean = 0.0;
  double std_dev = 0.0;
};

struct CorpusStats {
  std::size_t n_characters = 0;
  MeanStd words_per_character;
  std::size_t n_tropes = 0;
  MeanStd characters_per_trope;
  std::uint64_t n_is_similar_pairs = 0;
  std::uint64_t n_not_similar_pairs = 0;
};

// Population mean and standard deviation.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std_dev = std::sqrt(ss / n);
  return out;
}

// ---------------------------------------------------------------------------
// Reading and writing

inline CharacterRecord record_from_json(const json& obj) {
  CharacterRecord r;
  r.id = require_string(obj, "id");
  r.name = obj.contains("name") ? require_string(obj, "name") : std::string();
  r.trope = require_string(obj, "trope");
  r.description = require_string(obj, "description");
  return r;
}

inline ordered_json record_to_json(const CharacterRecord& r) {
  ordered_json obj;
  obj["id"] = r.id;
  obj["name"] = r.name;
  obj["trope"] = r.trope;
  obj["description"] = r.description;
  return obj;
}

// Parses the corpus line format without filtering. Duplicate ids and empty
// descriptions are rejected with the offending line number.
inline std::vector<CharacterRecord> read_records(std::istream& in, const std::string& source = "<corpus>") {
  std::vector<CharacterRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    CharacterRecord r;
    try {
      r = record_from_json(obj);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (r.id.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty id");
    if (r.description.empty()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": empty description for '" + r.id + "'");
    }
    auto [it, inserted] = seen.emplace(r.id, line_no);
    if (!inserted) {
      throw DataError(source + ":" + std::to_string(line_no) + ": duplicate id '" + r.id + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    records.push_back(std::move(r));
  });
  return records;
}

inline Corpus load_corpus(const std::string& path) {
  auto in = open_input(path);
  return Corpus(read_records(in, path));
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& r : corpus.records()) out << record_to_json(r).dump() << '\n';
}

inline void write_corpus(const std::string& path, const Corpus& corpus) {
  auto out = open_output(path);
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Filtering

// Keeps records with more than min_words words, then drops tropes left with
// fewer than two records. Record order is preserved.
inline Corpus filter_records(std::vector<CharacterRecord> records, std::size_t min_words = 100) {
  std::vector<CharacterRecord> long_enough;
  long_enough.reserve(records.size());
  for (auto& r : records) {
    if (word_count(r.description) > min_words) long_enough.push_back(std::move(r));
  }
  std::unordered_map<std::string, std::size_t> trope_sizes;
  for (const auto& r : long_enough) ++trope_sizes[r.trope];
  std::vector<CharacterRecord> kept;
  kept.reserve(long_enough.size());
  for (auto& r : long_enough) {
    if (trope_sizes[r.trope] >= 2) kept.push_back(std::move(r));
  }
  return Corpus(std::move(kept));
}

inline Corpus ingest(std::istream& in, std::size_t min_words = 100, const std::string& source = "<corpus>") {
  return filter_records(read_records(in, source), min_words);
}

inline Corpus ingest(const std::string& path, std::size_t min_words = 100) {
  auto in = open_input(path);
  return ingest(in, min_words, path);
}

// ---------------------------------------------------------------------------
// Split

inline Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& positions) {
  std::vector<CharacterRecord> records;
  records.reserve(positions.size());
  for (std::size_t i : positions) records.push_back(corpus[i]);
  return Corpus(std::move(records));
}

// Record-level random split. Eval receives floor(n * eval_fraction) records;
// both halves keep the original record order. Tropes are not re-filtered.
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw UsageError("eval_fraction must be in (0, 1)");
  if (corpus.size() < 2) throw UsageError("split needs at least 2 records");
  const std::size_t n = corpus.size();
  const auto eval_size = static_cast<std::size_t>(std::floor(static_cast<double>(n) * eval_fraction + 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> eval_pos(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(eval_size));
  std::vector<std::size_t> train_pos(order.begin() + static_cast<std::ptrdiff_t>(eval_size), order.end());
  std::sort(eval_pos.begin(), eval_pos.end());
  std::sort(train_pos.begin(), train_pos.end());
  return {subset(corpus, train_pos), subset(corpus, eval_pos)};
}

// ---------------------------------------------------------------------------
// Pair generation

// Emits every unordered same-trope pair as IsSimilar (members in record order,
// a before b). With negatives, each IsSimilar pair is followed by a NotSimilar
// pair joining its first item to a uniformly drawn record of another trope.
inline void for_each_pair(const Corpus& corpus, bool with_negatives, std::uint64_t seed,
                          const std::function<void(const PairExample&)>& emit) {
  if (corpus.empty()) throw UsageError("generate_pairs needs a non-empty corpus");
  if (with_negatives && corpus.trope_index().size() < 2) {
    throw UsageError("negatives need at least two tropes");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  for (const auto& [trope, members] : corpus.trope_index()) {
    for (std::size_t x = 0; x < members.size(); ++x) {
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const auto& a = corpus[members[x]];
        emit(PairExample{a.id, corpus[members[y]].id, PairLabel::kIsSimilar});
        if (with_negatives) {
          std::size_t other;
          do {
            other = pick(rng);
          } while (corpus[other].trope == a.trope);
          emit(PairExample{a.id, corpus[other].id, PairLabel::kNotSimilar});
        }
      }
    }
  }
}

inline std::vector<PairExample> generate_pairs(const Corpus& corpus, bool with_negatives, std::uint64_t seed) {
  std::vector<PairExample> pairs;
  for_each_pair(corpus, with_negatives, seed, [&](const PairExample& p) { pairs.push_back(p); });
  return pairs;
}

inline void write_pairs(std::ostream& out, const std::vector<PairExample>& pairs) {
  for (const auto& p : pairs) {
    ordered_json obj;
    obj["a"] = p.a_id;
    obj["b"] = p.b_id;
    obj["label"] = to_string(p.label);
    out << obj.dump() << '\n';
  }
}

inline std::vector<PairExample> read_pairs(std::istream& in, const std::string& source = "<pairs>") {
  std::vector<PairExample> pairs;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
    PairExample p;
    try {
      p.a_id = require_string(obj, "a");
      p.b_id = require_string(obj, "b");
      const auto& label = require_string(obj, "label");
      if (label == "IsSimilar") {
        p.label = PairLabel::kIsSimilar;
      } else if (label == "NotSimilar") {
        p.label = PairLabel::kNotSimilar;
      } else {
        throw DataError("unknown label '" + label + "'");
      }
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

// ---------------------------------------------------------------------------
// Statistics

inline std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// `with_negatives` says whether the pair set for this corpus carries one
// NotSimilar pair per IsSimilar pair (the training convention).
inline CorpusStats stats(const Corpus& corpus, bool with_negatives = false) {
  CorpusStats s;
  s.n_characters = corpus.size();
  s.n_tropes = corpus.trope_index().size();
  std::vector<double> words;
  words.reserve(corpus.size());
  for (const auto& r : corpus.records()) words.push_back(static_cast<double>(word_count(r.description)));
  s.words_per_character = mean_std(words);
  std::vector<double> sizes;
  for (const auto& [trope, members] : corpus.trope_index()) {
    sizes.push_back(static_cast<double>(members.size()));
    s.n_is_similar_pairs += choose2(members.size());
  }
  s.characters_per_trope = mean_std(sizes);
  s.n_not_similar_pairs = with_negatives ? s.n_is_similar_pairs : 0;
  return s;
}

inline ordered_json to_json(const CorpusStats& s) {
  ordered_json obj;
  obj["n_characters"] = s.n_characters;
  obj["words_per_character"] = {{"mean", s.words_per_character.mean}, {"std_dev", s.words_per_character.std_dev}};
  obj["n_tropes"] = s.n_tropes;
  obj["characters_per_trope"] = {{"mean", s.characters_per_trope.mean},
                                 {"std_dev", s.characters_per_trope.std_dev}};
  obj["n_is_similar_pairs"] = s.n_is_similar_pairs;
  obj["n_not_similar_pairs"] = s.n_not_similar_pairs;
  return obj;
}

inline std::string format_stats_table(const std::vector<std::pair<std::string, CorpusStats>>& columns) {
  auto fixed = [](double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
  };
  std::ostringstream os;
  os << "statistic";
  for (const auto& [label, s] : columns) os << '\t' << label;
  os << "\ncharacters";
  for (const auto& [label, s] : columns) os << '\t' << s.n_characters;
  os << "\nwords per character";
  for (const auto& [label, s] : columns) {
    os << '\t' << fixed(s.words_per_character.mean, 2) << " (sd " << fixed(s.words_per_character.std_dev, 2) << ")";
  }
  os << "\ntropes";
  for (const auto& [label, s] : columns) os << '\t' << s.n_tropes;
  os << "\ncharacters per trope";
  for (const auto& [label, s] : columns) {
    os << '\t' << fixed(s.characters_per_trope.mean, 2) << " (sd " << fixed(s.characters_per_trope.std_dev, 2)
       << ")";
  }
  os << "\ncharacter pairs";
  for (const auto& [label, s] : columns) {
    os << '\t' << (s.n_is_similar_pairs + s.n_not_similar_pairs) << " (IsSimilar " << s.n_is_similar_pairs << ")";
  }
  os << '\n';
  return os.str();
}

}  // namespace tropeline
