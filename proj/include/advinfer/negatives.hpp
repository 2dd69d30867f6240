#pragma once

// Negative-sample factory for discriminator training.

#include "advinfer/corpus.hpp"
#include "advinfer/generator.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace advinfer {

enum class NegativeKind {
  mismatched_gt,
  mismatched_gen,
  hard_same_activity,
  word_shuffle,
  repeat_phrase,
  order_shuffle,
  identical_pair,
  truncated_pair,
  generated,  // generator sample for the target clip itself
};
inline constexpr int kNumNegativeKinds = 9;

const char* to_string(NegativeKind k);
NegativeKind negative_kind_from_string(const std::string& s);
// Pair kinds produce (prev, cur) instead of a single sentence.
bool is_pair_kind(NegativeKind k);
bool needs_generator(NegativeKind k);

struct NegativeSpec {
  NegativeKind kind = NegativeKind::mismatched_gt;
  std::uint64_t seed = 0;
  int clip = 0;  // clip of the target video the negative is built for
  int ref = 0;   // which reference (0/1) seeds shuffles and pairs
};

struct NegativeSample {
  NegativeKind requested = NegativeKind::mismatched_gt;
  NegativeKind kind = NegativeKind::mismatched_gt;  // after fallback
  bool fallback = false;
  std::uint64_t seed = 0;
  TokenIds sentence;  // content ids, no BOS/EOS
  TokenIds prev;      // pair kinds only
  std::string target_video;
  int target_clip = 0;
  std::string source_video;  // mismatch kinds: where the sentence came from
  int source_clip = -1;
};

struct NegativeSources {
  const Vocabulary* vocab = nullptr;
  // Videos mismatched / hard negatives are drawn from.
  std::span<const VideoRecord> pool;
  // Required for the generated kinds; also adds generated sentences to the hard pool.
  const Generator* generator = nullptr;
  double temperature = 1.0;
};

NegativeSample make_negative(const NegativeSpec& spec, const VideoRecord& video,
                             const NegativeSources& src);

// Cuts at the first "and" if present, otherwise keeps the first ceil(n/2) words.
TokenIds truncate_sentence(const Vocabulary& vocab, const TokenIds& words);

// One JSON object per line: kind, requested, fallback, seed, target, source.
void write_audit_line(std::ostream& out, const NegativeSample& s);

}  // namespace advinfer
