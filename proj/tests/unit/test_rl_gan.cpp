#include "advinfer/error.hpp"
#include "advinfer/rl_gan.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace advinfer;

namespace {

struct Small {
  CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(16), 17);
  Generator g{testutil::small_gen_config(b.vocab, 12), 3};
  Small() {
    MleConfig mc;
    mc.epochs = 2;
    mc.seed = 1;
    train_mle(g, b.vocab, b.train, mc);
  }
};

bool same_params(const ParamStore& a, const ParamStore& b) {
  for (const auto& n : a.names()) {
    if (a.at(n).value != b.at(n).value || a.at(n).m != b.at(n).m || a.at(n).v != b.at(n).v) return false;
  }
  return true;
}

VideoRecord first_clip_only(const VideoRecord& v) {
  VideoRecord out = v;
  out.clips.resize(1);
  return out;
}

// -log p of `tokens` (EOS included) for a one-clip video under `g`.
double nll_of(const Generator& g, const VideoRecord& v, const TokenIds& tokens) {
  Graph gr(false);
  TokenIds seq{Vocabulary::kBos};
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  const TokenIds one[] = {seq};
  const double adv[] = {1.0};
  return scst_surrogate(gr, g, v, one, adv).scalar();
}

}  // namespace

TEST(MixedLoss, Arithmetic) {
  EXPECT_NEAR(mixed_loss(2.0, 4.0, 0.995), 2.01, 1e-12);
  EXPECT_EQ(mixed_loss(2.0, 4.0, 0.0), 4.0);
  EXPECT_EQ(mixed_loss(2.0, 4.0, 1.0), 2.0);
  Graph g;
  Matrix a(1, 1), c(1, 1);
  a << 2.0;
  c << 4.0;
  EXPECT_NEAR(mixed_loss(g.constant(a), g.constant(c), 0.995).scalar(), 2.01, 1e-12);
  // linear in both losses
  const double l = 0.3;
  EXPECT_NEAR(mixed_loss(1.0 + 2.0, 5.0 + 7.0, l), mixed_loss(1.0, 5.0, l) + mixed_loss(2.0, 7.0, l), 1e-12);
}

TEST(Scst, EqualRewardsExactlyZeroUpdate) {
  Small s;
  const Generator before = s.g;
  const SentenceReward constant = [](const TokenIds&, const VideoRecord&, int) { return 0.75; };
  const ScstStep st = scst_update(s.g, s.b.train[0], constant, AdamConfig{1e-2}, 5);
  EXPECT_FALSE(st.applied);
  for (double a : st.advantage) EXPECT_EQ(a, 0.0);
  EXPECT_TRUE(same_params(before.params(), s.g.params()));
  EXPECT_EQ(s.g.params().version, before.params().version);
  EXPECT_EQ(s.g.params().steps, before.params().steps);
}

TEST(Scst, UnitAdvantageIsLogProbGradient) {
  Small s;
  const VideoRecord& v = s.b.train[1];
  // sample the paragraph the update sees
  std::vector<TokenIds> forced;
  double logprob = 0.0;
  Vector ctx = Vector::Zero(s.g.hidden());
  for (std::size_t i = 0; i < v.clips.size(); ++i) {
    const auto smp = sample_sentences(s.g, v.clips[i].features, ctx, 1, 1.0, sub_seed(9, i))[0];
    TokenIds seq{Vocabulary::kBos};
    seq.insert(seq.end(), smp.tokens.begin(), smp.tokens.end());
    forced.push_back(seq);
    logprob += smp.logprob;
    ctx = smp.final_h;
  }
  const std::vector<double> ones(v.clips.size(), 1.0);
  Graph g;
  Var sur = scst_surrogate(g, s.g, v, forced, ones);
  EXPECT_NEAR(sur.scalar(), -logprob, 1e-9);
  const GradCheckReport r = grad_check([&](Graph& gr) { return scst_surrogate(gr, s.g, v, forced, ones); },
                                       s.g.params(), 1e-4, 1e-5, 1e-4, 10);
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.worst_rel_error;
}

TEST(Scst, RewardFailureSkipsClip) {
  Small s;
  const SentenceReward bad = [](const TokenIds&, const VideoRecord&, int clip) {
    if (clip == 0) throw std::runtime_error("boom");
    return 0.0;
  };
  const ScstStep st = scst_update(s.g, s.b.train[0], bad, AdamConfig{}, 1);
  EXPECT_EQ(st.skipped, 1u);
  EXPECT_EQ(st.advantage[0], 0.0);
}

TEST(Scst, ProbeTokenMustBeVocabularyWord) {
  Small s;
  ScstConfig c;
  c.reward = ScstReward::token_presence_probe;
  c.probe_token = "notaword";
  EXPECT_THROW(scst_train(s.g, s.b.vocab, s.b.train, c), ValidationError);
}

TEST(Scst, CiderRewardIsDeterministic) {
  Small s;
  ScstConfig c;
  c.epochs = 1;
  c.seed = 4;
  Generator a = s.g, b = s.g;
  const ScstResult ra = scst_train(a, s.b.vocab, s.b.train, c);
  const ScstResult rb = scst_train(b, s.b.vocab, s.b.train, c);
  EXPECT_EQ(ra.updates, s.b.train.size());
  EXPECT_EQ(ra.curve[0].sample_reward, rb.curve[0].sample_reward);
  EXPECT_TRUE(same_params(a.params(), b.params()));
}

TEST(Gan, EqualScoresAndNoCeIsZeroUpdate) {
  Small s;
  auto d = make_discriminator(testutil::small_disc_config(DiscKind::single, s.b.vocab), 1);
  zero_head(*d);
  GanConfig c;
  c.use_ce = false;
  const Generator before = s.g;
  const GanStep st = gan_generator_update(s.g, *d, s.b.vocab, s.b.train[0], c, 3);
  EXPECT_FALSE(st.applied);
  EXPECT_TRUE(same_params(before.params(), s.g.params()));
}

TEST(Gan, UpdateFollowsScoreDifferenceSign) {
  Small s;
  bool saw_pos = false, saw_neg = false;
  for (std::uint64_t seed = 0; seed < 40 && !(saw_pos && saw_neg); ++seed) {
    const VideoRecord v = first_clip_only(s.b.train[seed % s.b.train.size()]);
    auto d = make_discriminator(testutil::small_disc_config(DiscKind::single, s.b.vocab), seed);
    d->params().at("ds.head.weight").value *= 20.0;
    Generator g = s.g;
    GanConfig c;
    c.use_ce = false;
    c.gen_adam.lr = 1e-5;
    const TokenIds sample =
        sample_sentences(g, v.clips[0].features, Vector::Zero(g.hidden()), 1, 1.0, sub_seed(seed, 0))[0].tokens;
    const double before = nll_of(g, v, sample);
    const GanStep st = gan_generator_update(g, *d, s.b.vocab, v, c, seed);
    if (st.advantage[0] == 0.0) continue;
    const double after = nll_of(g, v, sample);
    if (st.advantage[0] > 0) {
      saw_pos = true;
      EXPECT_LT(after, before);
    } else {
      saw_neg = true;
      EXPECT_GT(after, before);
    }
  }
  EXPECT_TRUE(saw_pos);
  EXPECT_TRUE(saw_neg);
}

TEST(Gan, ScheduleRatioAndVersions) {
  Small s;
  auto d = make_discriminator(testutil::small_disc_config(DiscKind::single, s.b.vocab), 2);
  GanConfig c;
  c.epochs = 2;
  c.seed = 11;
  const GanResult r = gan_train_loop(s.g, *d, s.b.vocab, s.b.train, c, &s.b.val);
  std::size_t gen = 0, disc = 0;
  std::uint64_t gv = 0, dv = 0;
  bool first = true;
  for (const GanStepRecord& st : r.steps) {
    if (!first) {
      EXPECT_EQ(st.gen_version_before, gv);
      EXPECT_EQ(st.disc_version_before, dv);
    }
    first = false;
    if (st.kind == 'G') {
      ++gen;
      EXPECT_EQ(st.disc_version_after, st.disc_version_before);
    } else {
      ++disc;
      EXPECT_EQ(gen % 5, 0u);
      EXPECT_EQ(disc, gen / 5);
      EXPECT_EQ(st.disc_version_after, st.disc_version_before + 1);
      EXPECT_EQ(st.gen_version_after, st.gen_version_before);
    }
    gv = st.gen_version_after;
    dv = st.disc_version_after;
    // the discriminator step follows every fifth generator step
    EXPECT_EQ(disc, (gen - (st.kind == 'G' ? 1 : 0)) / 5);
  }
  EXPECT_EQ(disc, gen / 5);
  EXPECT_EQ(gen, 2 * s.b.train.size());
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_FALSE(r.halted);
}

TEST(Gan, DeterministicAndCeKept) {
  Small s;
  auto d0 = make_discriminator(testutil::small_disc_config(DiscKind::single, s.b.vocab), 2);
  GanConfig c;
  c.epochs = 2;
  c.seed = 5;
  Generator ga = s.g, gb = s.g;
  auto da = d0->clone(), db = d0->clone();
  const GanResult ra = gan_train_loop(ga, *da, s.b.vocab, s.b.train, c, &s.b.val);
  const GanResult rb = gan_train_loop(gb, *db, s.b.vocab, s.b.train, c, &s.b.val);
  ASSERT_EQ(ra.curve.size(), rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) {
    EXPECT_EQ(ra.curve[i].ce, rb.curve[i].ce);
    EXPECT_EQ(ra.curve[i].advantage, rb.curve[i].advantage);
    EXPECT_EQ(ra.curve[i].disc_accuracy, rb.curve[i].disc_accuracy);
    EXPECT_LE(ra.curve[i].ce, 1.25 * ra.initial_ce);
  }
  EXPECT_TRUE(same_params(ga.params(), gb.params()));
}

TEST(Gan, ConfigValidation) {
  GanConfig c;
  c.lambda_mix = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = GanConfig{};
  c.generator_steps_per_disc_step = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  Small s;
  auto lang = make_discriminator(testutil::small_disc_config(DiscKind::language, s.b.vocab), 1);
  EXPECT_THROW(gan_generator_update(s.g, *lang, s.b.vocab, s.b.train[0], GanConfig{}, 1), ValidationError);
}
