#include "advinfer/error.hpp"
#include "advinfer/generator.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace advinfer;

namespace {

struct World {
  CorpusBundle bundle;
  VideoRecord video;
  Generator memorized;
  double memorized_ce = 0.0;
};

// One video memorized for 400 epochs, shared by the tests below.
const World& world() {
  static const World w = [] {
    CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(), 21);
    VideoRecord v = b.train.front();
    b.vocab = build_vocabulary({v}, 1);
    Generator g(testutil::small_gen_config(b.vocab, 24), 5);
    MleConfig mc;
    mc.epochs = 400;
    mc.adam.lr = 5e-3;
    mc.seed = 1;
    train_mle(g, b.vocab, {v}, mc);
    const double ce = evaluate_ce(g, b.vocab, {v});
    return World{std::move(b), v, std::move(g), ce};
  }();
  return w;
}

Generator fresh(const Vocabulary& v, std::uint64_t seed = 3) { return Generator(testutil::small_gen_config(v), seed); }

}  // namespace

TEST(Generator, MemorizesOneVideo) { EXPECT_LT(world().memorized_ce, 0.1); }

TEST(Generator, InitialLossNearLogV) {
  const World& w = world();
  const Generator g = fresh(w.bundle.vocab);
  const double ce = evaluate_ce(g, w.bundle.vocab, {w.video});
  const double lnv = std::log(static_cast<double>(w.bundle.vocab.size()));
  EXPECT_NEAR(ce, lnv, 0.1 * lnv);
}

TEST(Generator, TrainingIsDeterministic) {
  const CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(), 4);
  MleConfig mc;
  mc.epochs = 2;
  mc.seed = 8;
  Generator a = fresh(b.vocab), c = fresh(b.vocab);
  const MleResult ra = train_mle(a, b.vocab, b.train, mc, &b.val);
  const MleResult rc = train_mle(c, b.vocab, b.train, mc, &b.val);
  EXPECT_EQ(ra.train_ce, rc.train_ce);
  EXPECT_EQ(ra.heldout_ce, rc.heldout_ce);
  ASSERT_EQ(ra.train_ce.size(), 2u);
}

TEST(Generator, TeacherForceGradCheck) {
  const World& w = world();
  Generator g = fresh(w.bundle.vocab, 11);
  const GradCheckReport r = grad_check([&](Graph& gr) { return video_nll(gr, g, w.bundle.vocab, w.video).nll; },
                                       g.params(), 1e-4, 1e-5, 1e-4, 12);
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.worst_rel_error;
}

TEST(DecodeStep, DistributionAndZeroContext) {
  const World& w = world();
  const Generator g = fresh(w.bundle.vocab);
  const ClipFeatures& clip = w.video.clips[0].features;
  const StepResult a = decode_step(g, clip, Vocabulary::kBos, DecoderState::zero(g.hidden()), std::nullopt);
  const StepResult b = decode_step(g, clip, Vocabulary::kBos, DecoderState::zero(g.hidden()),
                                   Vector::Zero(g.hidden()));
  EXPECT_EQ(a.distribution.size(), w.bundle.vocab.size());
  EXPECT_NEAR(a.distribution.sum(), 1.0, 1e-12);
  EXPECT_GE(a.distribution.minCoeff(), 0.0);
  EXPECT_EQ(a.distribution, b.distribution);
}

TEST(DecodeStep, IdenticalSegmentsPermutationInvariant) {
  const World& w = world();
  const Generator g = fresh(w.bundle.vocab);
  ClipFeatures clip = w.video.clips[0].features;
  for (int t = 1; t < kMotionSegments; ++t) clip.motion.row(t) = clip.motion.row(0);
  ClipFeatures shuffled = clip;
  shuffled.motion.row(0).swap(shuffled.motion.row(7));
  const StepResult a = decode_step(g, clip, Vocabulary::kBos, DecoderState::zero(g.hidden()), std::nullopt);
  const StepResult b = decode_step(g, shuffled, Vocabulary::kBos, DecoderState::zero(g.hidden()), std::nullopt);
  EXPECT_TRUE(a.distribution.isApprox(b.distribution, 1e-14));
}

TEST(Decode, GreedyProperties) {
  const World& w = world();
  const Paragraph a = greedy_decode(w.memorized, w.video);
  const Paragraph b = greedy_decode(w.memorized, w.video);
  ASSERT_EQ(a.sentences.size(), w.video.clips.size());
  for (std::size_t i = 0; i < a.sentences.size(); ++i) {
    EXPECT_EQ(a.sentences[i].tokens, b.sentences[i].tokens);
    EXPECT_EQ(a.sentences[i].logprob, b.sentences[i].logprob);
  }
}

TEST(Decode, BeamOneIsGreedy) {
  const World& w = world();
  for (const Generator* g : {&w.memorized}) {
    const Paragraph gr = greedy_decode(*g, w.video);
    const Paragraph bm = beam_search(*g, w.video, 1);
    for (std::size_t i = 0; i < gr.sentences.size(); ++i) {
      EXPECT_EQ(gr.sentences[i].tokens, bm.sentences[i].tokens);
      EXPECT_NEAR(gr.sentences[i].logprob, bm.sentences[i].logprob, 1e-12);
    }
  }
  const Generator r = fresh(w.bundle.vocab, 99);
  const Paragraph gr = greedy_decode(r, w.video);
  const Paragraph bm = beam_search(r, w.video, 1);
  for (std::size_t i = 0; i < gr.sentences.size(); ++i) EXPECT_EQ(gr.sentences[i].tokens, bm.sentences[i].tokens);
}

TEST(Decode, BeamDominatesGreedy) {
  const World& w = world();
  Vector context = Vector::Zero(w.memorized.hidden());
  for (const Clip& clip : w.video.clips) {
    const SampledSentence g = greedy_sentence(w.memorized, clip.features, context);
    const SampledSentence b = beam_sentence(w.memorized, clip.features, context, 3);
    EXPECT_GE(b.normalized_logprob(), g.normalized_logprob() - 1e-12);
    context = g.final_h;
  }
  const Paragraph x = beam_search(w.memorized, w.video, 3);
  const Paragraph y = beam_search(w.memorized, w.video, 3);
  for (std::size_t i = 0; i < x.sentences.size(); ++i) EXPECT_EQ(x.sentences[i].tokens, y.sentences[i].tokens);
}

TEST(Sampling, ColdSingleSampleIsGreedy) {
  const World& w = world();
  Vector context = Vector::Zero(w.memorized.hidden());
  for (const Clip& clip : w.video.clips) {
    const SampledSentence g = greedy_sentence(w.memorized, clip.features, context);
    const auto s = sample_sentences(w.memorized, clip.features, context, 1, 0.01, 17);
    EXPECT_EQ(s[0].tokens, g.tokens);
    context = g.final_h;
  }
}

TEST(Sampling, CandidatesIndependentOfK) {
  const World& w = world();
  const Generator g = fresh(w.bundle.vocab);
  const Vector ctx = Vector::Zero(g.hidden());
  const auto few = sample_sentences(g, w.video.clips[0].features, ctx, 3, 1.0, 5);
  const auto many = sample_sentences(g, w.video.clips[0].features, ctx, 8, 1.0, 5);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(few[k].tokens, many[k].tokens);
  for (const auto& s : many) {
    EXPECT_LE(s.tokens.size(), static_cast<std::size_t>(kMaxSentenceWords) + 1);
    const bool ended = !s.tokens.empty() && s.tokens.back() == Vocabulary::kEos;
    EXPECT_TRUE(ended || s.tokens.size() == static_cast<std::size_t>(kMaxSentenceWords));
    for (std::size_t i = 0; i + 1 < s.tokens.size(); ++i) EXPECT_NE(s.tokens[i], Vocabulary::kEos);
    double sum = 0.0;
    for (double lp : s.token_logprobs) sum += lp;
    EXPECT_NEAR(sum, s.logprob, 1e-9);
  }
}

TEST(Sampling, TemperatureLawTotalVariation) {
  Vector p(3);
  p << 0.6, 0.3, 0.1;
  for (double tau : {0.2, 0.5, 1.0}) {
    const Vector q = softmax_with_temperature(p, tau);
    Rng rng = make_rng(1234);
    Vector counts = Vector::Zero(3);
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts(sample_index(q, rng)) += 1.0;
    const double tv = 0.5 * (counts / n - q).cwiseAbs().sum();
    EXPECT_LT(tv, 0.02) << "tau " << tau;
  }
}

TEST(Sampling, TauOneIsUnmodified) {
  Vector p(3);
  p << 0.6, 0.3, 0.1;
  Rng a = make_rng(77), b = make_rng(77);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_index(softmax_with_temperature(p, 1.0), a), sample_index(p, b));
}

TEST(LogprobRerank, Contract) {
  SampledSentence a, b;
  a.tokens = {5, 6, Vocabulary::kEos};
  b.tokens = {7, 8, Vocabulary::kEos};
  a.logprob = -5.0;
  b.logprob = -2.0;
  const SampledSentence one[] = {a};
  EXPECT_EQ(logprob_rerank(one), 0u);
  const SampledSentence two[] = {a, b};
  EXPECT_EQ(logprob_rerank(two), 1u);
  // same per-token shift on both keeps the argmax
  SampledSentence a2 = a, b2 = b;
  a2.logprob -= 3 * 0.7;
  b2.logprob -= 3 * 0.7;
  const SampledSentence shifted[] = {a2, b2};
  EXPECT_EQ(logprob_rerank(shifted), 1u);
  const SampledSentence tie[] = {b, b};
  EXPECT_EQ(logprob_rerank(tie), 0u);
}

TEST(Generator, CheckpointRoundTrip) {
  const World& w = world();
  testutil::TempDir dir("gen_ckpt");
  w.memorized.save(dir.file("g.ckpt"), w.bundle.vocab);
  const Generator back = Generator::load(dir.file("g.ckpt"), &w.bundle.vocab);
  EXPECT_EQ(back.config(), w.memorized.config());
  const Paragraph a = greedy_decode(w.memorized, w.video);
  const Paragraph b = greedy_decode(back, w.video);
  for (std::size_t i = 0; i < a.sentences.size(); ++i) EXPECT_EQ(a.sentences[i].logprob, b.sentences[i].logprob);
  const Vocabulary other({"zzz"});
  EXPECT_THROW(Generator::load(dir.file("g.ckpt"), &other), ValidationError);
}
