#pragma once

// Training-time baselines: self-critical sequence training with a metric
// reward, and the GAN loop where the single discriminator's score is the
// reward.

#include "advinfer/discriminators.hpp"
#include "advinfer/generator.hpp"
#include "advinfer/metrics.hpp"

#include <functional>
#include <string>
#include <vector>

namespace advinfer {

// Reward of one sentence (content ids, EOS stripped) for clip `clip` of `video`.
using SentenceReward = std::function<double(const TokenIds& words, const VideoRecord& video, int clip)>;

enum class ScstReward { cider_d, token_presence_probe };
const char* to_string(ScstReward r);
ScstReward scst_reward_from_string(const std::string& s);

struct ScstConfig {
  ScstReward reward = ScstReward::cider_d;
  AdamConfig adam{5e-5};
  int epochs = 1;
  // Stop after this many updates when > 0 (cycles through the videos).
  int max_updates = 0;
  std::string probe_token;  // token_presence_probe only
  std::uint64_t seed = 0;
  std::string curve_path;   // JSONL, optional
};

// CIDEr-D of a sentence against the two references of its clip; document
// frequencies come from the per-clip reference sets of `videos`.
SentenceReward make_cider_reward(const Vocabulary& vocab, const std::vector<VideoRecord>& videos);
// 1 if `token` occurs in the sentence, else 0.
SentenceReward make_probe_reward(int token);

struct ScstStep {
  std::vector<double> sample_reward;    // r(x^s) per clip
  std::vector<double> baseline_reward;  // r(x^) per clip
  std::vector<double> advantage;        // 0 for skipped clips
  std::size_t skipped = 0;              // clips whose reward failed
  bool applied = false;                 // false when every advantage is 0
};

// Surrogate whose gradient is the self-critical policy gradient:
// sum_i adv_i * NLL(sentence_i), sentences re-forced with their contexts
// threaded as during sampling. `sentences` holds the sampled ids (EOS
// included unless capped), one per clip.
Var scst_surrogate(Graph& g, const Generator& model, const VideoRecord& video,
                   std::span<const TokenIds> sentences, std::span<const double> advantages);

// One update: sample x^s at tau 1 (clip i uses sub-seed (seed, i)), greedy
// decode x^ fresh, and step on the surrogate unless all advantages are 0.
ScstStep scst_update(Generator& model, const VideoRecord& video, const SentenceReward& reward,
                     const AdamConfig& adam, std::uint64_t seed);

struct ScstEpoch {
  int epoch = 0;
  std::size_t updates = 0;
  std::size_t applied = 0;
  double sample_reward = 0.0;    // mean per clip
  double baseline_reward = 0.0;  // mean per clip
};
struct ScstResult {
  std::vector<ScstEpoch> curve;
  std::size_t updates = 0;
};

ScstResult scst_train(Generator& model, const Vocabulary& vocab, const std::vector<VideoRecord>& train,
                      const ScstConfig& cfg);

// lambda * l_gan + (1 - lambda) * l_ce.
double mixed_loss(double l_gan, double l_ce, double lambda);
Var mixed_loss(const Var& l_gan, const Var& l_ce, double lambda);

struct GanConfig {
  double lambda_mix = 0.995;
  int generator_steps_per_disc_step = 5;
  double mu = 0.5;
  double nu = 0.5;
  AdamConfig gen_adam{5e-5};
  AdamConfig disc_adam{5e-4};
  int epochs = 1;
  bool use_ce = true;
  double temperature = 1.0;  // generator samples used as discriminator negatives
  std::uint64_t seed = 0;
  std::string curve_path;     // JSONL, optional
  std::string step_log_path;  // JSONL, optional
  void validate() const;
};

struct GanStep {
  std::vector<double> sample_score;    // D(V_i, x^s_i)
  std::vector<double> baseline_score;  // D(V_i, x^_i)
  std::vector<double> advantage;
  double ce = 0.0;  // per-token CE of the references (use_ce only)
  bool applied = false;
};

// Self-critical update with the single discriminator's score as reward,
// mixed with reference cross-entropy when use_ce.
GanStep gan_generator_update(Generator& model, const Discriminator& disc, const Vocabulary& vocab,
                             const VideoRecord& video, const GanConfig& cfg, std::uint64_t seed);

struct GanStepRecord {
  char kind = 'G';  // 'G' generator, 'D' discriminator
  std::size_t index = 0;  // position in the global schedule
  std::string video_id;
  // Parameter versions seen when the step's graph was built and after it.
  std::uint64_t gen_version_before = 0, gen_version_after = 0;
  std::uint64_t disc_version_before = 0, disc_version_after = 0;
};

struct GanEpoch {
  int epoch = 0;
  std::size_t gen_steps = 0;
  std::size_t disc_steps = 0;
  double advantage = 0.0;  // mean over generator steps
  double ce = 0.0;         // held-out (or train) per-token CE after the epoch
  double disc_accuracy = 0.0;  // balanced held-out accuracy after the epoch
};

struct GanResult {
  double initial_ce = 0.0;
  std::vector<GanEpoch> curve;
  std::vector<GanStepRecord> steps;
  bool halted = false;
  std::string diagnostics;
};

// Alternates generator_steps_per_disc_step generator updates with one
// discriminator update. Halts (halted = true) once CE exceeds twice the
// pre-GAN CE for 3 consecutive epochs.
GanResult gan_train_loop(Generator& model, Discriminator& disc, const Vocabulary& vocab,
                         const std::vector<VideoRecord>& train, const GanConfig& cfg,
                         const std::vector<VideoRecord>* heldout = nullptr);

}  // namespace advinfer
