#pragma once

// Sample-and-select decoding with discriminators, plus the baseline decoders.

#include "advinfer/discriminators.hpp"
#include "advinfer/generator.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace advinfer {

struct HybridWeights {
  double alpha = 0.8;  // visual
  double beta = 0.2;   // language
  double gamma = 1.0;  // pairwise
  void validate() const;
};

// alpha*dv + beta*dl + gamma*dp; the gamma term is left out when dp is absent
// (first sentence of a paragraph).
double hybrid_score(const HybridWeights& w, double dv, double dl, std::optional<double> dp);

enum class InferenceMode { greedy, beam, logprob_sample, single_disc, hybrid_disc, reference };
const char* to_string(InferenceMode m);
InferenceMode inference_mode_from_string(const std::string& s);

struct InferenceConfig {
  InferenceMode mode = InferenceMode::hybrid_disc;
  int K = 100;
  double tau = 0.2;
  int beam = 3;
  HybridWeights weights;
  std::uint64_t seed = 0;
  void validate() const;
};

struct DiscriminatorSet {
  const Discriminator* visual = nullptr;
  const Discriminator* language = nullptr;
  const Discriminator* pairwise = nullptr;
  const Discriminator* single = nullptr;
};

struct CandidateRecord {
  SampledSentence sentence;
  std::optional<double> dv, dl, dp, ds;
  double score = 0.0;  // selection score (hybrid, single or normalised logprob)
};

struct ClipAudit {
  std::vector<CandidateRecord> candidates;
  std::size_t selected = 0;
};

struct InferenceResult {
  std::string video_id;
  InferenceMode mode = InferenceMode::greedy;
  std::uint64_t seed = 0;
  Paragraph paragraph;
  std::vector<std::string> sentences;  // text per clip
  std::vector<ClipAudit> audit;        // sampling modes only
};

// Lowest index among the maxima; -inf entries are only picked if all are.
std::size_t select_best(std::span<const double> scores);

// Per-clip sampling seed, a function of (seed, video id, clip) only.
std::uint64_t clip_seed(std::uint64_t seed, const std::string& video_id, int clip);

// Progressive selection: K samples per clip conditioned on the previous
// winner's final hidden state, scored by the hybrid (or single) discriminator.
InferenceResult adversarial_inference(const VideoRecord& video, const Generator& model,
                                      const DiscriminatorSet& discs, const InferenceConfig& cfg);

// Dispatch over every mode. `vocab` renders sentences (and encodes references).
InferenceResult run_inference(const VideoRecord& video, const Generator* model,
                              const DiscriminatorSet& discs, const InferenceConfig& cfg,
                              const Vocabulary& vocab);

// {mode, seed, videos:[{video_id, mode, seed, sentences, per_sentence_logprob,
//   per_clip:[{selected, candidates:[{tokens, text, logprob, dV, dL, dP, dS, hybrid}]}]}]}
nlohmann::ordered_json predictions_to_json(std::span<const InferenceResult> results,
                                           const InferenceConfig& cfg, const Vocabulary& vocab,
                                           bool with_audit = true);

// video_id -> sentences, from a predictions document.
struct PredictionSet {
  std::string mode;
  std::vector<std::pair<std::string, std::vector<std::string>>> videos;
};
PredictionSet predictions_from_json(const nlohmann::json& j);

}  // namespace advinfer
