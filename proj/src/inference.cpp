#include "advinfer/inference.hpp"

#include "advinfer/error.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace advinfer {

void HybridWeights::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw ValidationError("hybrid weights must be nonnegative");
  }
  if (alpha + beta + gamma <= 0.0) throw ValidationError("at least one hybrid weight must be positive");
}

double hybrid_score(const HybridWeights& w, double dv, double dl, std::optional<double> dp) {
  double s = w.alpha * dv + w.beta * dl;
  if (dp) s += w.gamma * *dp;
  return s;
}

namespace {
constexpr const char* kModeNames[] = {"greedy", "beam", "logprob_sample", "single_disc", "hybrid_disc",
                                      "reference"};
}

const char* to_string(InferenceMode m) { return kModeNames[static_cast<int>(m)]; }

InferenceMode inference_mode_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i) {
    if (s == kModeNames[i]) return static_cast<InferenceMode>(i);
  }
  throw ValidationError("unknown inference mode '" + s + "'");
}

void InferenceConfig::validate() const {
  if (K < 1) throw ValidationError("inference K must be >= 1");
  if (!(tau > 0.0)) throw ValidationError("inference temperature must be positive");
  if (beam < 1) throw ValidationError("beam size must be >= 1");
  weights.validate();
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("select_best of an empty candidate set");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

std::uint64_t clip_seed(std::uint64_t seed, const std::string& video_id, int clip) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : video_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return sub_seed(seed, h, static_cast<std::uint64_t>(clip));
}

namespace {

// Scores every distinct nonempty candidate once; duplicates share the value.
std::vector<std::optional<double>> score_unique(const Discriminator& d, const ClipFeatures& clip,
                                                const std::vector<TokenIds>& words,
                                                const TokenIds* prev) {
  std::map<TokenIds, std::size_t> slot;
  std::vector<TokenIds> uniq;
  std::vector<std::optional<double>> out(words.size());
  std::vector<std::ptrdiff_t> index(words.size(), -1);
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (words[k].empty()) continue;
    auto [it, fresh] = slot.emplace(words[k], uniq.size());
    if (fresh) uniq.push_back(words[k]);
    index[k] = static_cast<std::ptrdiff_t>(it->second);
  }
  if (uniq.empty()) return out;
  std::vector<TokenIds> prevs;
  if (prev != nullptr) prevs.assign(uniq.size(), *prev);
  Vector s = d.score(&clip, uniq, prevs);
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (index[k] >= 0) out[k] = s(index[k]);
  }
  return out;
}

}  // namespace

InferenceResult adversarial_inference(const VideoRecord& video, const Generator& model,
                                      const DiscriminatorSet& discs, const InferenceConfig& cfg) {
  cfg.validate();
  const bool single = cfg.mode == InferenceMode::single_disc;
  if (!single && cfg.mode != InferenceMode::hybrid_disc) {
    throw ValidationError("adversarial_inference needs mode hybrid_disc or single_disc");
  }
  if (single && discs.single == nullptr) throw ValidationError("single_disc mode needs a single discriminator");
  if (!single) {
    if (cfg.weights.alpha > 0 && discs.visual == nullptr) throw ValidationError("alpha > 0 needs a visual discriminator");
    if (cfg.weights.beta > 0 && discs.language == nullptr) throw ValidationError("beta > 0 needs a language discriminator");
    if (cfg.weights.gamma > 0 && discs.pairwise == nullptr) throw ValidationError("gamma > 0 needs a pairwise discriminator");
  }
  InferenceResult res;
  res.video_id = video.id;
  res.mode = cfg.mode;
  res.seed = cfg.seed;
  res.paragraph.video_id = video.id;
  Vector context = Vector::Zero(model.hidden());
  TokenIds prev_words;
  for (int i = 0; i < static_cast<int>(video.clips.size()); ++i) {
    const ClipFeatures& clip = video.clips[static_cast<std::size_t>(i)].features;
    std::vector<SampledSentence> cands =
        sample_sentences(model, clip, context, cfg.K, cfg.tau, clip_seed(cfg.seed, video.id, i));
    std::vector<TokenIds> words;
    for (const auto& c : cands) words.push_back(c.words());
    ClipAudit audit;
    audit.candidates.resize(cands.size());
    std::vector<std::optional<double>> dv, dl, dp, ds;
    if (single) {
      ds = score_unique(*discs.single, clip, words, nullptr);
    } else {
      if (discs.visual) dv = score_unique(*discs.visual, clip, words, nullptr);
      if (discs.language) dl = score_unique(*discs.language, clip, words, nullptr);
      if (discs.pairwise && i > 0 && !prev_words.empty()) {
        dp = score_unique(*discs.pairwise, clip, words, &prev_words);
      }
    }
    std::vector<double> scores(cands.size());
    for (std::size_t k = 0; k < cands.size(); ++k) {
      CandidateRecord& r = audit.candidates[k];
      r.sentence = std::move(cands[k]);
      if (!ds.empty()) r.ds = ds[k];
      if (!dv.empty()) r.dv = dv[k];
      if (!dl.empty()) r.dl = dl[k];
      if (!dp.empty()) r.dp = dp[k];
      if (words[k].empty()) {
        r.score = -std::numeric_limits<double>::infinity();
      } else if (single) {
        r.score = *r.ds;
      } else {
        r.score = hybrid_score(cfg.weights, r.dv.value_or(0.0), r.dl.value_or(0.0), r.dp);
      }
      scores[k] = r.score;
    }
    audit.selected = select_best(scores);
    const SampledSentence& win = audit.candidates[audit.selected].sentence;
    res.paragraph.sentences.push_back(win);
    context = win.final_h;
    prev_words = words[audit.selected];
    res.audit.push_back(std::move(audit));
  }
  return res;
}

InferenceResult run_inference(const VideoRecord& video, const Generator* model,
                              const DiscriminatorSet& discs, const InferenceConfig& cfg,
                              const Vocabulary& vocab) {
  cfg.validate();
  InferenceResult res;
  if (cfg.mode == InferenceMode::reference) {
    res.video_id = res.paragraph.video_id = video.id;
    res.mode = cfg.mode;
    res.seed = cfg.seed;
    for (const Clip& c : video.clips) {
      SampledSentence s;
      s.tokens = encode_words(vocab, c.refs[0]);
      s.tokens.push_back(Vocabulary::kEos);
      res.paragraph.sentences.push_back(std::move(s));
      res.sentences.push_back(normalize_text(c.refs[0]));
    }
    return res;
  }
  if (model == nullptr) throw ValidationError(std::string(to_string(cfg.mode)) + " mode needs a generator");
  switch (cfg.mode) {
    case InferenceMode::greedy:
      res.paragraph = greedy_decode(*model, video);
      break;
    case InferenceMode::beam:
      res.paragraph = beam_search(*model, video, cfg.beam);
      break;
    case InferenceMode::logprob_sample: {
      res.paragraph.video_id = video.id;
      Vector context = Vector::Zero(model->hidden());
      for (int i = 0; i < static_cast<int>(video.clips.size()); ++i) {
        auto cands = sample_sentences(*model, video.clips[static_cast<std::size_t>(i)].features, context,
                                      cfg.K, cfg.tau, clip_seed(cfg.seed, video.id, i));
        ClipAudit audit;
        audit.selected = logprob_rerank(cands);
        for (auto& c : cands) {
          CandidateRecord r;
          r.score = c.normalized_logprob();
          r.sentence = std::move(c);
          audit.candidates.push_back(std::move(r));
        }
        res.paragraph.sentences.push_back(audit.candidates[audit.selected].sentence);
        context = res.paragraph.sentences.back().final_h;
        res.audit.push_back(std::move(audit));
      }
      break;
    }
    case InferenceMode::single_disc:
    case InferenceMode::hybrid_disc:
      res = adversarial_inference(video, *model, discs, cfg);
      break;
    case InferenceMode::reference:
      break;
  }
  res.video_id = video.id;
  res.mode = cfg.mode;
  res.seed = cfg.seed;
  for (const auto& s : res.paragraph.sentences) res.sentences.push_back(detokenize(vocab, s.tokens));
  return res;
}

nlohmann::ordered_json predictions_to_json(std::span<const InferenceResult> results,
                                           const InferenceConfig& cfg, const Vocabulary& vocab,
                                           bool with_audit) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["mode"] = to_string(cfg.mode);
  doc["seed"] = cfg.seed;
  doc["videos"] = ordered_json::array();
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  for (const InferenceResult& r : results) {
    ordered_json v;
    v["video_id"] = r.video_id;
    v["mode"] = to_string(r.mode);
    v["seed"] = r.seed;
    v["sentences"] = r.sentences;
    ordered_json lps = ordered_json::array();
    for (const auto& s : r.paragraph.sentences) lps.push_back(s.logprob);
    v["per_sentence_logprob"] = lps;
    if (with_audit && !r.audit.empty()) {
      ordered_json clips = ordered_json::array();
      for (const ClipAudit& a : r.audit) {
        ordered_json c;
        c["selected"] = a.selected;
        ordered_json cands = ordered_json::array();
        for (const CandidateRecord& cr : a.candidates) {
          ordered_json e;
          e["tokens"] = cr.sentence.tokens;
          e["text"] = detokenize(vocab, cr.sentence.tokens);
          e["logprob"] = cr.sentence.logprob;
          e["dV"] = opt(cr.dv);
          e["dL"] = opt(cr.dl);
          e["dP"] = opt(cr.dp);
          e["dS"] = opt(cr.ds);
          e["hybrid"] = std::isfinite(cr.score) ? ordered_json(cr.score) : ordered_json(nullptr);
          cands.push_back(std::move(e));
        }
        c["candidates"] = std::move(cands);
        clips.push_back(std::move(c));
      }
      v["per_clip"] = std::move(clips);
    }
    doc["videos"].push_back(std::move(v));
  }
  return doc;
}

PredictionSet predictions_from_json(const nlohmann::json& j) {
  try {
    PredictionSet p;
    p.mode = j.at("mode").get<std::string>();
    for (const auto& v : j.at("videos")) {
      p.videos.emplace_back(v.at("video_id").get<std::string>(),
                            v.at("sentences").get<std::vector<std::string>>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed predictions document: ") + e.what());
  }
}

}  // namespace advinfer
