#include "advinfer/error.hpp"
#include "advinfer/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace advinfer;

// Values produced by tests/oracles/metrics_oracle.py (exact rational
// arithmetic where possible, converted to double at the end).
namespace oracle {
constexpr double bleu_clipped_unigram = 0.3333333333333333;
constexpr double bleu_identical = 1.0;
constexpr double bleu_multi = 0.5035337887555859;
constexpr double bleu_no_overlap = 7.788007830714054e-10;
constexpr double bleu_short = 0.0028871566309219905;
constexpr double bleu_the_the_the = 1.351200154807036e-07;
constexpr double cider_identical_disjoint = 10.0;
constexpr double cider_no_overlap = 0.0;
constexpr double cider_three_a = 1.9025566932180793;
constexpr double cider_three_b = 2.4810688770728513;
constexpr double corpus_bleu4_mean = 0.20236058767690462;
constexpr double corpus_bleu4_v0 = 0.4047110785334739;
constexpr double corpus_bleu4_v1 = 1.009682033535204e-05;
constexpr double corpus_cider_d_mean = 1.387622003464706;
constexpr double corpus_cider_d_v0 = 2.587028943306808;
constexpr double corpus_cider_d_v1 = 0.18821506362260404;
constexpr double corpus_div1_mean = 0.4700854700854701;
constexpr double corpus_div1_v0 = 0.5555555555555556;
constexpr double corpus_div1_v1 = 0.38461538461538464;
constexpr double corpus_div2_mean = 0.5641025641025641;
constexpr double corpus_div2_v0 = 0.6666666666666666;
constexpr double corpus_div2_v1 = 0.46153846153846156;
constexpr double corpus_person_exact = 0.3333333333333333;
constexpr double corpus_person_gp = 0.4;
constexpr double corpus_re4_activity = 0.2;
constexpr double corpus_re4_mean = 0.2;
constexpr double corpus_re4_v0 = 0.0;
constexpr double corpus_re4_v1 = 0.4;
constexpr double corpus_sentence_length = 4.4;
constexpr double corpus_vocab_size = 9.0;
constexpr double div1_a_man_is_seen_speaking = 1.0;
constexpr double div1_aab = 0.6666666666666666;
constexpr double div1_same7 = 0.14285714285714285;
constexpr double div2_aab = 0.6666666666666666;
constexpr double person_f1_guy_man_exact = 0.0;
constexpr double person_f1_guy_man_gp = 1.0;
constexpr double person_f1_man_vs_man_woman = 0.6666666666666666;
constexpr double person_f1_multi_exact = 0.6153846153846154;
constexpr double person_f1_multi_gp = 0.8;
constexpr double re4_abcd3 = 0.5555555555555556;
constexpr double re4_act_generic = 0.75;
constexpr double re4_act_two = 0.35714285714285715;
constexpr double re4_three = 0.0;
}  // namespace oracle

namespace {

constexpr double kTol = 1e-9;

Words chars(const std::string& s) {
  Words w;
  for (char c : s) w.emplace_back(1, c);
  return w;
}

const PersonLexicon& lex() {
  static const PersonLexicon l = PersonLexicon::defaults();
  return l;
}

}  // namespace

TEST(Div, Oracle) {
  EXPECT_NEAR(div_n(tokenize("a man is seen speaking"), 1), oracle::div1_a_man_is_seen_speaking, kTol);
  EXPECT_NEAR(div_n({"a", "a", "b"}, 1), oracle::div1_aab, kTol);
  EXPECT_NEAR(div_n({"a", "a", "b"}, 2), oracle::div2_aab, kTol);
  EXPECT_NEAR(div_n(Words(7, "x"), 1), oracle::div1_same7, kTol);
  EXPECT_NEAR(div_n({"a", "a", "b"}, 1), 2.0 / 3.0, kTol);
  EXPECT_EQ(div_n({}, 1), 0.0);
}

TEST(Re, Oracle) {
  EXPECT_NEAR(re_n(chars("abcdabcdabcd"), 4), oracle::re4_abcd3, kTol);
  EXPECT_NEAR(re_n(chars("abcdabcdabcd"), 4), 5.0 / 9.0, kTol);
  EXPECT_NEAR(re_n({"a", "b", "c"}, 4), oracle::re4_three, kTol);
  EXPECT_EQ(re_n(chars("abcdefg"), 4), 0.0);
}

TEST(Re, PerActivity) {
  const Words sent = tokenize("a man is seen throwing a red ball");
  EXPECT_NEAR(re4_per_activity({{0, {sent, sent, sent, sent}}}), oracle::re4_act_generic, kTol);
  EXPECT_NEAR(re4_per_activity({{0, {chars("abcdabcdab")}}, {1, {chars("abcdeabcde")}}}), oracle::re4_act_two, kTol);
  const Words p = chars("abcdabcdab");
  EXPECT_NEAR(re4_per_activity({{3, {p}}}), re_n(p, 4), kTol);
  // 4-grams never span two paragraphs
  EXPECT_EQ(re4_per_activity({{0, {chars("abc"), chars("dab")}}}), 0.0);
}

TEST(Bleu, Oracle) {
  const Words s = tokenize("a man throws a ball in a room");
  EXPECT_NEAR(bleu4(s, {s}), oracle::bleu_identical, kTol);
  EXPECT_NEAR(bleu4({"the", "the", "the"}, {{"the", "cat"}}), oracle::bleu_the_the_the, kTol);
  EXPECT_NEAR(bleu4(tokenize("a man is seen throwing a ball on the street"),
                    {tokenize("a man throws a ball on the street"), tokenize("a guy is seen tossing the ball outside")}),
              oracle::bleu_multi, kTol);
  EXPECT_NEAR(bleu4(tokenize("a man throws"), {tokenize("a man throws a ball"), tokenize("the man throws it far away")}),
              oracle::bleu_short, kTol);
  EXPECT_NEAR(bleu4(tokenize("dogs bark loudly today"), {tokenize("a man throws a ball")}), oracle::bleu_no_overlap,
              kTol);
  // clipped unigram precision enters as the first factor of the geometric mean
  const double p1 = oracle::bleu_clipped_unigram;
  const double bp = std::exp(1.0 - 2.0 / 3.0);
  const double expected = std::min(1.0, bp) * std::exp(0.25 * (std::log(p1) + 3.0 * std::log(kBleuEpsilon)));
  EXPECT_NEAR(bleu4({"the", "the", "the"}, {{"the", "cat"}}), expected, kTol);
}

TEST(Cider, Oracle) {
  const Words s0 = tokenize("a man throws a ball");
  const Words s1 = tokenize("two women paint the fence");
  const CiderStats two({{s0}, {s1}});
  EXPECT_NEAR(cider_d(s0, {s0}, two), oracle::cider_identical_disjoint, kTol);
  const std::vector<std::vector<Words>> three{
      {tokenize("a man throws a ball"), tokenize("a guy tosses the ball")},
      {tokenize("a woman throws a frisbee"), tokenize("a lady tosses a frisbee")},
      {tokenize("two kids kick a ball"), tokenize("some children boot the ball")}};
  const CiderStats st(three);
  EXPECT_NEAR(cider_d(tokenize("a man tosses a ball"), three[0], st), oracle::cider_three_a, kTol);
  EXPECT_NEAR(cider_d(tokenize("a woman throws a ball a ball"), three[1], st), oracle::cider_three_b, kTol);
  EXPECT_NEAR(cider_d(tokenize("zebra quietly"), three[2], st), oracle::cider_no_overlap, kTol);
}

TEST(Cider, UbiquitousNgramHasZeroIdf) {
  const std::vector<std::vector<Words>> sets{{{"x", "cat"}}, {{"x", "dog"}}};
  const CiderStats st(sets);
  EXPECT_EQ(st.df({"x"}), 2.0);
  EXPECT_EQ(cider_d({"x"}, sets[0], st), 0.0);
}

TEST(PersonF1, Oracle) {
  EXPECT_NEAR(person_f1({{"man"}}, {{{"man", "woman"}}}, lex(), PersonMode::exact_word),
              oracle::person_f1_man_vs_man_woman, kTol);
  EXPECT_NEAR(person_f1({{"guy"}}, {{{"man"}}}, lex(), PersonMode::gender_plurality), oracle::person_f1_guy_man_gp,
              kTol);
  EXPECT_NEAR(person_f1({{"guy"}}, {{{"man"}}}, lex(), PersonMode::exact_word), oracle::person_f1_guy_man_exact, kTol);
  const std::vector<Words> p{tokenize("a man and a woman talk he smiles"), tokenize("the kids play they run")};
  const std::vector<std::vector<Words>> r{
      {tokenize("a man talks to a lady she smiles"), tokenize("a guy and a woman chat")},
      {tokenize("two children play they laugh"), tokenize("some kids run")}};
  EXPECT_NEAR(person_f1(p, r, lex(), PersonMode::exact_word), oracle::person_f1_multi_exact, kTol);
  EXPECT_NEAR(person_f1(p, r, lex(), PersonMode::gender_plurality), oracle::person_f1_multi_gp, kTol);
  EXPECT_EQ(person_f1({{"man", "woman"}}, {{{"woman", "man"}}}, lex(), PersonMode::exact_word), 1.0);
}

TEST(PersonLexicon, Conflicts) {
  PersonLexicon l = PersonLexicon::defaults();
  EXPECT_NO_THROW(l.add("man", Gender::male, Plurality::single));
  EXPECT_THROW(l.add("man", Gender::female, Plurality::single), ValidationError);
  ASSERT_NE(l.find("they"), nullptr);
  EXPECT_EQ(l.find("they")->plurality, Plurality::plural);
  EXPECT_EQ(l.find("ball"), nullptr);
}

namespace {

struct FixtureVideo {
  std::string id;
  int activity;
  std::vector<std::string> refs0, refs1, pred;
};

const std::vector<FixtureVideo> kCorpus{
    {"v0", 0, {"a man throws a ball.", "he catches the ball in a large room."},
     {"a guy is seen tossing a ball.", "he is seen grabbing the ball."},
     {"a man throws a ball.", "he throws a ball."}},
    {"v1", 1, {"two women paint a fence.", "they wash a bucket very slowly.", "they drop the brush."},
     {"some ladies are seen coloring a fence.", "they are seen rinsing a bucket.", "they are seen releasing the brush."},
     {"a woman paints a fence.", "she paints a fence.", "she paints a fence."}},
};

std::vector<VideoRecord> fixture_videos() {
  std::vector<VideoRecord> out;
  for (const auto& f : kCorpus) {
    VideoRecord v;
    v.id = f.id;
    v.activity = f.activity;
    for (std::size_t i = 0; i < f.refs0.size(); ++i) {
      Clip c;
      c.refs = {f.refs0[i], f.refs1[i]};
      v.clips.push_back(c);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(EvaluateCorpus, Oracle) {
  std::vector<std::pair<std::string, std::vector<std::string>>> preds;
  for (const auto& f : kCorpus) preds.emplace_back(f.id, f.pred);
  const MetricsReport r = evaluate_corpus(preds, fixture_videos(), lex());
  ASSERT_EQ(r.videos.size(), 2u);
  EXPECT_NEAR(r.videos[0].bleu4, oracle::corpus_bleu4_v0, kTol);
  EXPECT_NEAR(r.videos[1].bleu4, oracle::corpus_bleu4_v1, kTol);
  EXPECT_NEAR(r.videos[0].cider_d, oracle::corpus_cider_d_v0, kTol);
  EXPECT_NEAR(r.videos[1].cider_d, oracle::corpus_cider_d_v1, kTol);
  EXPECT_NEAR(r.videos[0].div1, oracle::corpus_div1_v0, kTol);
  EXPECT_NEAR(r.videos[1].div1, oracle::corpus_div1_v1, kTol);
  EXPECT_NEAR(r.videos[0].div2, oracle::corpus_div2_v0, kTol);
  EXPECT_NEAR(r.videos[1].div2, oracle::corpus_div2_v1, kTol);
  EXPECT_NEAR(r.videos[0].re4, oracle::corpus_re4_v0, kTol);
  EXPECT_NEAR(r.videos[1].re4, oracle::corpus_re4_v1, kTol);
  EXPECT_NEAR(r.bleu4, oracle::corpus_bleu4_mean, kTol);
  EXPECT_NEAR(r.cider_d, oracle::corpus_cider_d_mean, kTol);
  EXPECT_NEAR(r.div1, oracle::corpus_div1_mean, kTol);
  EXPECT_NEAR(r.div2, oracle::corpus_div2_mean, kTol);
  EXPECT_NEAR(r.re4, oracle::corpus_re4_mean, kTol);
  EXPECT_NEAR(r.re4_activity, oracle::corpus_re4_activity, kTol);
  EXPECT_NEAR(r.vocab_size, oracle::corpus_vocab_size, kTol);
  EXPECT_NEAR(r.sentence_length, oracle::corpus_sentence_length, kTol);
  EXPECT_NEAR(r.person_f1_exact, oracle::corpus_person_exact, kTol);
  EXPECT_NEAR(r.person_f1_gender, oracle::corpus_person_gp, kTol);
}

TEST(EvaluateCorpus, ReferencesAsPredictions) {
  std::vector<std::pair<std::string, std::vector<std::string>>> preds;
  for (const auto& f : kCorpus) preds.emplace_back(f.id, f.refs0);
  const MetricsReport r = evaluate_corpus(preds, fixture_videos(), lex());
  EXPECT_NEAR(r.bleu4, 1.0, kTol);
  // precision is 1; recall misses "guy" and "ladies", which only the second chain uses
  EXPECT_NEAR(r.person_f1_exact, 5.0 / 6.0, kTol);
  EXPECT_NEAR(r.person_f1_gender, 1.0, kTol);
  const MetricsReport back = MetricsReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), r.to_json().dump());
}

TEST(EvaluateCorpus, MissingPrediction) {
  std::vector<std::pair<std::string, std::vector<std::string>>> preds{{"v0", kCorpus[0].pred}};
  EXPECT_THROW(evaluate_corpus(preds, fixture_videos(), lex()), ValidationError);
}
