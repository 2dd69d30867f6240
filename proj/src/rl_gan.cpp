#include "advinfer/rl_gan.hpp"

#include "advinfer/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>

namespace advinfer {

namespace {

struct SampledParagraph {
  std::vector<SampledSentence> sentences;
  std::vector<TokenIds> forced;  // BOS + sampled ids
};

SampledParagraph sample_paragraph(const Generator& model, const VideoRecord& video, std::uint64_t seed) {
  SampledParagraph out;
  Vector context = Vector::Zero(model.hidden());
  for (std::size_t i = 0; i < video.clips.size(); ++i) {
    SampledSentence s = std::move(sample_sentences(model, video.clips[i].features, context, 1, 1.0,
                                                   sub_seed(seed, static_cast<std::uint64_t>(i)))[0]);
    context = s.final_h;
    TokenIds seq{Vocabulary::kBos};
    seq.insert(seq.end(), s.tokens.begin(), s.tokens.end());
    out.forced.push_back(std::move(seq));
    out.sentences.push_back(std::move(s));
  }
  return out;
}

bool any_nonzero(const std::vector<double>& xs) {
  return std::any_of(xs.begin(), xs.end(), [](double x) { return x != 0.0; });
}

std::ofstream open_jsonl(const std::string& path) {
  std::ofstream out;
  if (!path.empty()) {
    out.open(path);
    if (!out) throw Error("cannot write '" + path + "'");
  }
  return out;
}

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

const char* to_string(ScstReward r) {
  return r == ScstReward::cider_d ? "cider_d" : "token_presence_probe";
}

ScstReward scst_reward_from_string(const std::string& s) {
  if (s == "cider_d") return ScstReward::cider_d;
  if (s == "token_presence_probe") return ScstReward::token_presence_probe;
  throw ValidationError("unknown SCST reward '" + s + "'");
}

SentenceReward make_cider_reward(const Vocabulary& vocab, const std::vector<VideoRecord>& videos) {
  std::vector<std::vector<Words>> sets;
  for (const VideoRecord& v : videos) {
    for (const Clip& c : v.clips) sets.push_back({tokenize(c.refs[0]), tokenize(c.refs[1])});
  }
  if (sets.empty()) throw ValidationError("CIDEr-D reward needs at least one reference clip");
  auto stats = std::make_shared<const CiderStats>(sets);
  const Vocabulary* vp = &vocab;
  return [stats, vp](const TokenIds& words, const VideoRecord& video, int clip) {
    const Clip& c = video.clips.at(static_cast<std::size_t>(clip));
    return cider_d(id_tokens(*vp, words), {tokenize(c.refs[0]), tokenize(c.refs[1])}, *stats);
  };
}

SentenceReward make_probe_reward(int token) {
  return [token](const TokenIds& words, const VideoRecord&, int) {
    return std::find(words.begin(), words.end(), token) != words.end() ? 1.0 : 0.0;
  };
}

Var scst_surrogate(Graph& g, const Generator& model, const VideoRecord& video,
                   std::span<const TokenIds> sentences, std::span<const double> advantages) {
  if (sentences.size() != video.clips.size() || advantages.size() != sentences.size()) {
    throw ValidationError("scst_surrogate: need one sentence and one advantage per clip");
  }
  Var context = g.constant(Matrix::Zero(model.hidden(), 1));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    ClipCache cache = model.prepare_clip(g, video.clips[i].features);
    Generator::Forced f = model.teacher_force(g, cache, sentences.subspan(i, 1), context);
    if (advantages[i] != 0.0) terms.push_back(scale(f.nll, advantages[i]));
    context = f.final_h;
  }
  if (terms.empty()) return g.constant(Matrix::Zero(1, 1));
  return terms.size() == 1 ? terms[0] : sum(concat_rows(terms));
}

ScstStep scst_update(Generator& model, const VideoRecord& video, const SentenceReward& reward,
                     const AdamConfig& adam, std::uint64_t seed) {
  SampledParagraph sampled = sample_paragraph(model, video, seed);
  Paragraph greedy = greedy_decode(model, video);
  ScstStep out;
  for (std::size_t i = 0; i < video.clips.size(); ++i) {
    double rs = 0.0, rb = 0.0;
    try {
      rs = reward(sampled.sentences[i].words(), video, static_cast<int>(i));
      rb = reward(greedy.sentences[i].words(), video, static_cast<int>(i));
      if (!std::isfinite(rs) || !std::isfinite(rb)) throw NumericError("non-finite reward");
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping SCST sample for " << video.id << " clip " << i << ": " << e.what()
                << "\n";
      ++out.skipped;
      rs = rb = 0.0;
    }
    out.sample_reward.push_back(rs);
    out.baseline_reward.push_back(rb);
    out.advantage.push_back(rs - rb);
  }
  // Equal rewards leave the parameters (and Adam moments) untouched.
  if (!any_nonzero(out.advantage)) return out;
  model.params().zero_grad();
  Graph g;
  g.backward(scst_surrogate(g, model, video, sampled.forced, out.advantage));
  adam_step(model.params(), adam);
  out.applied = true;
  return out;
}

ScstResult scst_train(Generator& model, const Vocabulary& vocab, const std::vector<VideoRecord>& train,
                      const ScstConfig& cfg) {
  if (train.empty()) throw ValidationError("scst_train: empty training corpus");
  if (cfg.max_updates <= 0 && cfg.epochs <= 0) throw ValidationError("scst_train: nothing to do");
  if (model.config().vocab_size != vocab.size()) {
    throw ValidationError("scst_train: generator vocabulary size does not match corpus");
  }
  SentenceReward reward;
  if (cfg.reward == ScstReward::cider_d) {
    reward = make_cider_reward(vocab, train);
  } else {
    const int token = vocab.id(cfg.probe_token);
    if (token == Vocabulary::kUnk || Vocabulary::is_special(token)) {
      throw ValidationError("probe token '" + cfg.probe_token + "' is not a vocabulary word");
    }
    reward = make_probe_reward(token);
  }
  std::ofstream curve = open_jsonl(cfg.curve_path);
  ScstResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto done = [&] { return cfg.max_updates > 0 && result.updates >= static_cast<std::size_t>(cfg.max_updates); };
  for (int epoch = 1; !done() && (cfg.max_updates > 0 || epoch <= cfg.epochs); ++epoch) {
    Rng rng = make_rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), rng);
    ScstEpoch e;
    e.epoch = epoch;
    std::vector<double> rs, rb;
    for (std::size_t idx : order) {
      if (done()) break;
      ScstStep s = scst_update(model, train[idx], reward, cfg.adam,
                               sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), idx + 1));
      rs.insert(rs.end(), s.sample_reward.begin(), s.sample_reward.end());
      rb.insert(rb.end(), s.baseline_reward.begin(), s.baseline_reward.end());
      ++e.updates;
      e.applied += s.applied ? 1 : 0;
      ++result.updates;
    }
    e.sample_reward = mean_of(rs);
    e.baseline_reward = mean_of(rb);
    if (curve.is_open()) {
      nlohmann::ordered_json j{{"epoch", e.epoch},
                               {"updates", e.updates},
                               {"applied", e.applied},
                               {"sample_reward", e.sample_reward},
                               {"baseline_reward", e.baseline_reward}};
      curve << j.dump() << "\n";
    }
    result.curve.push_back(e);
  }
  return result;
}

double mixed_loss(double l_gan, double l_ce, double lambda) {
  return lambda * l_gan + (1.0 - lambda) * l_ce;
}

Var mixed_loss(const Var& l_gan, const Var& l_ce, double lambda) {
  return add(scale(l_gan, lambda), scale(l_ce, 1.0 - lambda));
}

void GanConfig::validate() const {
  if (!(lambda_mix >= 0.0 && lambda_mix <= 1.0)) throw ValidationError("gan: lambda_mix must be in [0, 1]");
  if (generator_steps_per_disc_step < 1) throw ValidationError("gan: generator_steps_per_disc_step must be >= 1");
  if (mu < 0.0 || nu < 0.0) throw ValidationError("gan: mu and nu must be non-negative");
  if (epochs < 0) throw ValidationError("gan: epochs must be non-negative");
  if (!(temperature > 0.0)) throw ValidationError("gan: temperature must be positive");
}

GanStep gan_generator_update(Generator& model, const Discriminator& disc, const Vocabulary& vocab,
                             const VideoRecord& video, const GanConfig& cfg, std::uint64_t seed) {
  if (disc.kind() != DiscKind::single) throw ValidationError("GAN training uses the single discriminator");
  SampledParagraph sampled = sample_paragraph(model, video, seed);
  Paragraph greedy = greedy_decode(model, video);
  GanStep out;
  for (std::size_t i = 0; i < video.clips.size(); ++i) {
    const ClipFeatures* clip = &video.clips[i].features;
    // An empty sentence gets score 0.
    auto score = [&](const TokenIds& w) {
      if (w.empty()) return 0.0;
      const TokenIds one[] = {w};
      return disc.score(clip, one)(0);
    };
    const double ds = score(sampled.sentences[i].words());
    const double dg = score(greedy.sentences[i].words());
    out.sample_score.push_back(ds);
    out.baseline_score.push_back(dg);
    out.advantage.push_back(ds - dg);
  }
  const bool ce_term = cfg.use_ce && cfg.lambda_mix < 1.0;
  if (!any_nonzero(out.advantage) && !ce_term) return out;
  model.params().zero_grad();
  Graph g;
  Var loss = scst_surrogate(g, model, video, sampled.forced, out.advantage);
  if (cfg.use_ce) {
    Generator::Forced f = video_nll(g, model, vocab, video);
    Var ce = scale(f.nll, 1.0 / static_cast<double>(f.tokens));
    out.ce = ce.scalar();
    loss = mixed_loss(loss, ce, cfg.lambda_mix);
  }
  g.backward(loss);
  adam_step(model.params(), cfg.gen_adam);
  out.applied = true;
  return out;
}

GanResult gan_train_loop(Generator& model, Discriminator& disc, const Vocabulary& vocab,
                         const std::vector<VideoRecord>& train, const GanConfig& cfg,
                         const std::vector<VideoRecord>* heldout) {
  cfg.validate();
  if (train.size() < 2) throw ValidationError("gan_train_loop needs at least 2 training videos");
  if (disc.kind() != DiscKind::single) throw ValidationError("GAN training uses the single discriminator");
  if (model.config().vocab_size != vocab.size() || disc.config().vocab_size != vocab.size()) {
    throw ValidationError("gan_train_loop: model vocabulary size does not match corpus");
  }
  const std::vector<VideoRecord>& monitor = heldout != nullptr && heldout->size() >= 2 ? *heldout : train;
  NegativeSources src{&vocab, train, &model, cfg.temperature};
  std::ofstream curve = open_jsonl(cfg.curve_path);
  std::ofstream step_log = open_jsonl(cfg.step_log_path);

  GanResult result;
  result.initial_ce = evaluate_ce(model, vocab, monitor);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto k = static_cast<std::size_t>(cfg.generator_steps_per_disc_step);
  std::size_t gen_total = 0;
  int over = 0;

  auto log_step = [&](const GanStepRecord& r) {
    if (step_log.is_open()) {
      nlohmann::ordered_json j{{"index", r.index},
                               {"kind", std::string(1, r.kind)},
                               {"video_id", r.video_id},
                               {"gen_version_before", r.gen_version_before},
                               {"gen_version_after", r.gen_version_after},
                               {"disc_version_before", r.disc_version_before},
                               {"disc_version_after", r.disc_version_after}};
      step_log << j.dump() << "\n";
    }
    result.steps.push_back(r);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = make_rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), rng);
    const NegativeBuckets buckets = negative_buckets(DiscKind::single, epoch, 0);
    const std::size_t mu_off = rng() % buckets.mu.size();
    const std::size_t nu_off = rng() % buckets.nu.size();
    GanEpoch e;
    e.epoch = epoch;
    std::vector<double> adv;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const VideoRecord& video = train[order[pos]];
      GanStepRecord gr{'G', result.steps.size(), video.id, model.params().version, 0, disc.params().version, 0};
      GanStep s = gan_generator_update(model, disc, vocab, video, cfg,
                                       sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), order[pos] + 1));
      gr.gen_version_after = model.params().version;
      gr.disc_version_after = disc.params().version;
      log_step(gr);
      adv.insert(adv.end(), s.advantage.begin(), s.advantage.end());
      ++e.gen_steps;
      if (++gen_total % k != 0) continue;

      // Discriminator step on its own graph, negatives from the current generator.
      const std::size_t d = gen_total / k - 1;
      bool stepped = false;
      for (std::size_t t = 0; t < train.size() && !stepped; ++t) {
        const std::size_t vi = order[(pos + t) % order.size()];
        GanStepRecord dr{'D', result.steps.size(), train[vi].id, model.params().version, 0,
                         disc.params().version, 0};
        std::optional<double> obj = discriminator_step(
            disc, vocab, train[vi], src, buckets.mu[(mu_off + d) % buckets.mu.size()],
            buckets.nu[(nu_off + d) % buckets.nu.size()], cfg.mu, cfg.nu, cfg.disc_adam,
            sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0x100000 + d * train.size() + t));
        if (!obj) continue;
        dr.gen_version_after = model.params().version;
        dr.disc_version_after = disc.params().version;
        log_step(dr);
        ++e.disc_steps;
        stepped = true;
      }
      if (!stepped) throw Error("gan_train_loop: no usable discriminator batch");
    }
    e.advantage = mean_of(adv);
    e.ce = evaluate_ce(model, vocab, monitor);
    e.disc_accuracy = evaluate_discriminator(disc, vocab, monitor, &model,
                                             sub_seed(cfg.seed, 0xe7a1, static_cast<std::uint64_t>(epoch)),
                                             cfg.temperature)
                          .balanced;
    if (curve.is_open()) {
      nlohmann::ordered_json j{{"epoch", e.epoch},
                               {"gen_steps", e.gen_steps},
                               {"disc_steps", e.disc_steps},
                               {"advantage", e.advantage},
                               {"ce", e.ce},
                               {"initial_ce", result.initial_ce},
                               {"disc_accuracy", e.disc_accuracy}};
      curve << j.dump() << "\n";
    }
    result.curve.push_back(e);
    over = e.ce > 2.0 * result.initial_ce ? over + 1 : 0;
    if (over >= 3) {
      result.halted = true;
      result.diagnostics = "GAN training halted after epoch " + std::to_string(epoch) + ": CE " +
                           std::to_string(e.ce) + " exceeded twice the pre-GAN CE " +
                           std::to_string(result.initial_ce) + " for 3 consecutive epochs";
      std::cerr << "error: " << result.diagnostics << "\n";
      break;
    }
  }
  return result;
}

}  // namespace advinfer
