#pragma once

// Multi-sentence generator: an LSTM decoder conditioned per step on
// temporally attended motion / appearance / object features and on the final
// hidden state of the previous sentence.

#include "advinfer/corpus.hpp"
#include "advinfer/layers.hpp"
#include "advinfer/params.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace advinfer {

struct GeneratorConfig {
  int vocab_size = 0;
  FeatureDims dims;
  int embed = 64;
  int hidden = 512;
  int attention = 64;
  int max_words = kMaxSentenceWords;

  Metadata to_metadata() const;
  static GeneratorConfig from_metadata(const Metadata& m);
  bool operator==(const GeneratorConfig&) const = default;
};

// Attention-side values of one clip, reusable across decoding steps.
struct ClipCache {
  std::array<AttentionSegments, 3> modalities;  // motion, appearance, objects
};
struct ClipValues {
  std::array<Matrix, 3> segments;      // D x T
  std::array<Matrix, 3> segment_proj;  // A x T
  ClipCache bind(Graph& g) const;
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);
  Generator(const GeneratorConfig& cfg, ParamStore store);
  Generator(const Generator& other);
  Generator& operator=(const Generator& other);
  Generator(Generator&&) noexcept;
  Generator& operator=(Generator&&) noexcept;

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int hidden() const { return cfg_.hidden; }

  ClipCache prepare_clip(Graph& g, const ClipFeatures& clip) const;
  ClipValues clip_values(const ClipFeatures& clip) const;

  struct Step {
    Var logits;  // V x B
    LstmState state;
  };
  // One decoder step for B columns sharing a clip. context: H x B.
  Step step(Graph& g, const ClipCache& clip, std::span<const int> prev_words,
            const LstmState& state, const Var& context) const;

  struct Forced {
    Var nll;      // 1x1 summed token cross-entropy
    Var final_h;  // H x B, state after each sentence's last input token
    int tokens = 0;
  };
  // Teacher forcing over B sentences (BOS ... EOS, or BOS + words when cut at
  // the word cap) of the same clip.
  Forced teacher_force(Graph& g, const ClipCache& clip, std::span<const TokenIds> sentences,
                       const Var& context) const;

  void save(const std::string& path, const Vocabulary& vocab) const;
  static Generator load(const std::string& path, const Vocabulary* expect_vocab = nullptr);

 private:
  void bind();

  GeneratorConfig cfg_;
  ParamStore store_;
  Parameter* embed_ = nullptr;
  std::array<AttentionParams, 3> attention_{};
  LstmParams lstm_{};
  Linear out_{};
};

// Value-level state of the decoder for a single column.
struct DecoderState {
  Vector h;
  Vector c;
  static DecoderState zero(int hidden);
};

struct StepResult {
  Vector distribution;  // length V, sums to 1
  DecoderState state;
};

// One step for one sentence. `context` is h^{i-1}; pass a zero vector (or
// std::nullopt) for the first sentence.
StepResult decode_step(const Generator& model, const ClipFeatures& clip, int prev_word,
                       const DecoderState& state, const std::optional<Vector>& context);

struct SampledSentence {
  TokenIds tokens;  // generated ids, ending in EOS unless the word cap was hit
  double logprob = 0.0;
  std::vector<double> token_logprobs;
  Vector final_h;

  TokenIds words() const;
  std::size_t length() const { return tokens.size(); }
  double normalized_logprob() const;
};

struct Paragraph {
  std::string video_id;
  std::vector<SampledSentence> sentences;
};

// Index drawn from a probability vector by inverse CDF.
int sample_index(const Vector& p, Rng& rng);

// K independent samples for one clip; candidate k uses sub-seed (seed, k), so
// candidate k does not depend on K. Token draws use softmax_with_temperature
// of the decoder distribution; logprob is under the untempered model.
std::vector<SampledSentence> sample_sentences(const Generator& model, const ClipFeatures& clip,
                                              const Vector& context, int K, double tau,
                                              std::uint64_t seed);

SampledSentence greedy_sentence(const Generator& model, const ClipFeatures& clip,
                                const Vector& context);
Paragraph greedy_decode(const Generator& model, const VideoRecord& video);

SampledSentence beam_sentence(const Generator& model, const ClipFeatures& clip,
                              const Vector& context, int beam);
Paragraph beam_search(const Generator& model, const VideoRecord& video, int beam);

// Argmax of length-normalised log-probability, lowest index on ties.
std::size_t logprob_rerank(std::span<const SampledSentence> candidates);

struct MleConfig {
  AdamConfig adam;
  int epochs = 10;
  std::uint64_t seed = 0;
  // Written if training diverges.
  std::string divergence_checkpoint;
  std::function<void(int epoch, double train_ce, double heldout_ce)> on_epoch;
};

struct MleResult {
  std::vector<double> train_ce;    // mean per-token CE per epoch
  std::vector<double> heldout_ce;  // empty without a held-out set
};

// Per-token cross-entropy of teacher-forced references (both reference chains).
double evaluate_ce(const Generator& model, const Vocabulary& vocab,
                   const std::vector<VideoRecord>& videos);

MleResult train_mle(Generator& model, const Vocabulary& vocab,
                    const std::vector<VideoRecord>& train, const MleConfig& cfg,
                    const std::vector<VideoRecord>* heldout = nullptr);

// Builds a graph computing the summed token NLL of both reference chains of
// one video (the MLE batch loss before normalisation).
Generator::Forced video_nll(Graph& g, const Generator& model, const Vocabulary& vocab,
                            const VideoRecord& video);

}  // namespace advinfer
