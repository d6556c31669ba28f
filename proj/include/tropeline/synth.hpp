#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tropeline/corpus.hpp"
#include "tropeline/error.hpp"
#include "tropeline/hash.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/scorer.hpp"

namespace tropeline {

struct SynthSpec {
  std::size_t n_groups = 50;
  std::size_t members_per_group = 6;
  // When above members_per_group, group sizes are drawn uniformly from
  // [members_per_group, members_max].
  std::size_t members_max = 0;
  std::size_t topic_vocab_size = 40;
  std::size_t shared_vocab_size = 2000;
  std::size_t words_per_description = 120;
  double topic_word_fraction = 0.3;
  double scorer_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_groups == 0 || members_per_group == 0 || topic_vocab_size == 0 || shared_vocab_size == 0 ||
        words_per_description == 0) {
      throw UsageError("synth counts must all be at least 1");
    }
    if (members_max != 0 && members_max < members_per_group) throw UsageError("members_max below members_per_group");
    if (!(topic_word_fraction >= 0.0 && topic_word_fraction <= 1.0)) {
      throw UsageError("topic_word_fraction must be in [0, 1]");
    }
    if (!(scorer_noise >= 0.0) || !std::isfinite(scorer_noise)) throw UsageError("scorer noise must be >= 0");
  }
};

inline std::string zero_pad(std::size_t v, std::size_t width) {
  std::string s = std::to_string(v);
  return s.size() >= width ? s : std::string(width - s.size(), '0') + s;
}

// Planted-group corpus: each group owns a disjoint topic vocabulary; every
// description draws round(fraction * words) topic words and fills the rest from
// a vocabulary shared by all groups. The group is recorded as the trope.
inline Corpus generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> sizes(spec.n_groups, spec.members_per_group);
  if (spec.members_max > spec.members_per_group) {
    std::uniform_int_distribution<std::size_t> size_dist(spec.members_per_group, spec.members_max);
    for (auto& s : sizes) s = size_dist(rng);
  }
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  const std::size_t id_width = std::to_string(total).size();
  const std::size_t group_width = std::to_string(spec.n_groups).size();
  const auto n_topic =
      static_cast<std::size_t>(std::llround(spec.topic_word_fraction * static_cast<double>(spec.words_per_description)));

  std::uniform_int_distribution<std::size_t> topic_word(0, spec.topic_vocab_size - 1);
  std::uniform_int_distribution<std::size_t> shared_word(0, spec.shared_vocab_size - 1);
  std::vector<CharacterRecord> records;
  records.reserve(total);
  std::size_t next = 0;
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    std::string trope = "group" + zero_pad(g, group_width);
    for (std::size_t m = 0; m < sizes[g]; ++m, ++next) {
      std::vector<std::string> words;
      words.reserve(spec.words_per_description);
      for (std::size_t w = 0; w < n_topic; ++w) words.push_back("g" + std::to_string(g) + "t" + std::to_string(topic_word(rng)));
      for (std::size_t w = n_topic; w < spec.words_per_description; ++w) words.push_back("s" + std::to_string(shared_word(rng)));
      std::shuffle(words.begin(), words.end(), rng);
      std::string text;
      for (const auto& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      records.push_back({"c" + zero_pad(next, id_width), "Character " + std::to_string(next), trope, std::move(text)});
    }
  }
  return Corpus(std::move(records));
}

inline ordered_json to_json(const SynthSpec& s) {
  ordered_json obj;
  obj["n_groups"] = s.n_groups;
  obj["members_per_group"] = s.members_per_group;
  obj["members_max"] = s.members_max;
  obj["topic_vocab_size"] = s.topic_vocab_size;
  obj["shared_vocab_size"] = s.shared_vocab_size;
  obj["words_per_description"] = s.words_per_description;
  obj["topic_word_fraction"] = s.topic_word_fraction;
  obj["scorer_noise"] = s.scorer_noise;
  obj["seed"] = s.seed;
  return obj;
}

// clamp(0.9 * same_trope + 0.1 + noise * N(0, 1), 0, 1). The normal draw is
// seeded from the unordered id pair, so (a, b) and (b, a) score identically
// and repeated runs see the same values.
class PlantedScorer : public PairScorer {
 public:
  PlantedScorer(double noise_sigma, std::uint64_t seed) : noise_(noise_sigma), seed_(seed) {
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw UsageError("noise sigma must be >= 0");
  }

  std::string name() const override { return "planted"; }

 protected:
  double score_pair(const CharacterRecord& a, const CharacterRecord& b) const override {
    double base = (a.trope == b.trope ? 0.9 : 0.0) + 0.1;
    if (noise_ == 0.0) return std::clamp(base, 0.0, 1.0);
    const auto& lo = a.id < b.id ? a.id : b.id;
    const auto& hi = a.id < b.id ? b.id : a.id;
    std::uint64_t state = fnv1a64(hi, fnv1a64(std::string_view("\x1f"), fnv1a64(lo))) ^ (seed_ * 0xd1b54a32d192ed03ULL);
    return std::clamp(base + noise_ * standard_normal(state), 0.0, 1.0);
  }

 private:
  double noise_;
  std::uint64_t seed_;
};

}  // namespace tropeline
