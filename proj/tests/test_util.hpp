#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tropeline/corpus.hpp"

namespace tropeline::testing {

inline std::string words(std::size_t n, const std::string& stem = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += stem + std::to_string(i);
  }
  return out;
}

inline std::string corpus_line(const std::string& id, const std::string& trope, const std::string& description) {
  return record_to_json({id, "name " + id, trope, description}).dump() + "\n";
}

// Corpus with the given trope sizes; ids "r000".., tropes "t0".., descriptions
// of `n_words` words drawn from a small vocabulary.
inline Corpus corpus_with_sizes(const std::vector<std::size_t>& sizes, std::uint64_t seed = 1,
                                std::size_t n_words = 12, std::size_t vocab = 30) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::vector<CharacterRecord> records;
  std::size_t next = 0;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    for (std::size_t m = 0; m < sizes[t]; ++m, ++next) {
      std::string text;
      for (std::size_t w = 0; w < n_words; ++w) text += (w ? " v" : "v") + std::to_string(word(rng));
      std::ostringstream id;
      id << "r" << (next < 10 ? "00" : next < 100 ? "0" : "") << next;
      records.push_back({id.str(), "n", "t" + std::to_string(t), text});
    }
  }
  return Corpus(std::move(records));
}

}  // namespace tropeline::testing
