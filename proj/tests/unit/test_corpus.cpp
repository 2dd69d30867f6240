#include "advinfer/corpus.hpp"
#include "advinfer/error.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace advinfer;

namespace {

VideoRecord text_video(const std::vector<std::string>& sentences) {
  VideoRecord v;
  v.id = "t";
  for (const auto& s : sentences) {
    Clip c;
    c.refs = {s, s};
    v.clips.push_back(c);
  }
  return v;
}

}  // namespace

TEST(Corpus, ShapeContract) {
  CorpusSpec spec;
  spec.num_videos = 10;
  const CorpusBundle b = gen_synthetic_corpus(spec, 7);
  EXPECT_EQ(b.train.size() + b.val.size() + b.test.size(), 10u);
  for (const auto* split : {&b.train, &b.val, &b.test}) {
    for (const VideoRecord& v : *split) {
      EXPECT_GE(v.clips.size(), 2u);
      EXPECT_LE(v.clips.size(), 4u);
      for (const Clip& c : v.clips) {
        EXPECT_EQ(c.features.motion.rows(), kMotionSegments);
        EXPECT_EQ(c.features.motion.cols(), spec.dims.motion);
        EXPECT_EQ(c.features.appearance.rows(), kAppearanceSegments);
        EXPECT_EQ(c.features.objects.rows(), kObjectSegments);
        EXPECT_GE(c.features.objects.minCoeff(), 0.0);
        EXPECT_LE(c.features.objects.maxCoeff(), 1.0);
        EXPECT_FALSE(c.refs[0].empty());
        EXPECT_FALSE(c.refs[1].empty());
        EXPECT_NE(c.refs[0], c.refs[1]);
        ASSERT_TRUE(c.latent.has_value());
      }
    }
  }
}

TEST(Corpus, Deterministic) {
  const CorpusSpec spec = testutil::small_spec();
  EXPECT_EQ(corpus_to_json(gen_synthetic_corpus(spec, 3)), corpus_to_json(gen_synthetic_corpus(spec, 3)));
  EXPECT_NE(corpus_to_json(gen_synthetic_corpus(spec, 3)), corpus_to_json(gen_synthetic_corpus(spec, 4)));
}

TEST(Corpus, NearestCentroidRecoversEvent) {
  CorpusSpec spec;
  spec.num_videos = 60;
  spec.noise_sigma = 0.1;
  const CorpusBundle b = gen_synthetic_corpus(spec, 11);
  const SyntheticWorld w = make_world(spec, 11);
  int hit = 0, total = 0;
  for (const auto* split : {&b.train, &b.val, &b.test}) {
    for (const VideoRecord& v : *split) {
      for (const Clip& c : v.clips) {
        const Vector mean = c.features.motion.colwise().mean().transpose();
        Eigen::Index best = 0;
        (w.event_centroids.rowwise() - mean.transpose()).rowwise().squaredNorm().minCoeff(&best);
        hit += static_cast<int>(best) == c.latent->event_id;
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(hit) / total, 0.95);
}

TEST(Corpus, SaveLoadRoundTrip) {
  testutil::TempDir dir("corpus_rt");
  const CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(), 5);
  save_corpus(b, dir.file("c.json"));
  const CorpusBundle back = load_corpus(dir.file("c.json"));
  EXPECT_EQ(back.vocab, b.vocab);
  EXPECT_EQ(back.spec, b.spec);
  EXPECT_EQ(corpus_to_json(back), corpus_to_json(b));
  ASSERT_EQ(back.train.size(), b.train.size());
  EXPECT_EQ(back.train[0].clips[0].refs, b.train[0].clips[0].refs);
  EXPECT_NEAR(back.train[0].clips[0].features.motion(0, 0), b.train[0].clips[0].features.motion(0, 0), 1e-8);
}

TEST(Corpus, TruncatedAndVersion) {
  const std::string text = corpus_to_json(gen_synthetic_corpus(testutil::small_spec(), 5));
  EXPECT_THROW(corpus_from_json(text.substr(0, text.size() / 2)), FormatError);
  std::string next = text;
  const auto pos = next.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  next.replace(pos, 11, "\"version\":2");
  EXPECT_THROW(corpus_from_json(next), VersionError);
  EXPECT_THROW(load_corpus("/nonexistent/corpus.json"), Error);
}

TEST(Corpus, InvalidSpec) {
  CorpusSpec s;
  s.min_clips = 5;
  s.max_clips = 2;
  EXPECT_THROW(s.validate(), ValidationError);
  CorpusSpec z;
  z.num_videos = 0;
  EXPECT_THROW(gen_synthetic_corpus(z, 1), ValidationError);
}

TEST(Vocabulary, MinCount) {
  const VideoRecord v = text_video({"a man runs", "a man jumps", "the man sits", "a man waves", "the man eats"});
  // refs are duplicated, so "man" occurs 10 times and "runs" twice
  const Vocabulary two = build_vocabulary({v}, 2);
  EXPECT_TRUE(two.contains("man"));
  EXPECT_TRUE(two.contains("runs"));
  const Vocabulary three = build_vocabulary({v}, 3);
  EXPECT_FALSE(three.contains("runs"));
  EXPECT_TRUE(three.contains("the"));
  EXPECT_EQ(build_vocabulary({v}, 1000).size(), Vocabulary::kNumSpecial);
}

TEST(Vocabulary, BoundaryIncluded) {
  VideoRecord v;
  v.id = "b";
  Clip c;
  c.refs = {"zeta one", "zeta two"};
  v.clips.push_back(c);
  c.refs = {"zeta three", "four"};
  v.clips.push_back(c);
  const Vocabulary voc = build_vocabulary({v}, 3);
  EXPECT_TRUE(voc.contains("zeta"));
  EXPECT_FALSE(voc.contains("one"));
}

TEST(Encode, Basic) {
  const Vocabulary v({"a", "man", "runs", "dog"});
  EXPECT_EQ(encode_sentence(v, "A man runs."),
            (TokenIds{Vocabulary::kBos, v.id("a"), v.id("man"), v.id("runs"), Vocabulary::kEos}));
  EXPECT_EQ(encode_sentence(v, "xyzzy"), (TokenIds{Vocabulary::kBos, Vocabulary::kUnk, Vocabulary::kEos}));
  std::string long_text;
  for (int i = 0; i < 35; ++i) long_text += "dog ";
  const TokenIds ids = encode_sentence(v, long_text);
  EXPECT_EQ(ids.size(), 32u);
  EXPECT_EQ(ids.front(), Vocabulary::kBos);
  EXPECT_EQ(ids.back(), Vocabulary::kEos);
  EXPECT_EQ(detokenize(v, encode_sentence(v, "a man runs")), "a man runs");
}

TEST(Encode, BowVector) {
  const Vocabulary v({"a", "man", "runs", "dog"});
  auto bow = [&](const std::string& s) {
    const Vector b = bow_vector(v, encode_words(v, s));
    return std::vector<double>(b.data() + Vocabulary::kNumSpecial, b.data() + b.size());
  };
  EXPECT_EQ(bow("a man runs"), (std::vector<double>{1, 1, 1, 0}));
  EXPECT_EQ(bow("a a man"), (std::vector<double>{1, 1, 0, 0}));
  EXPECT_EQ(bow(""), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(bow_vector(v, encode_sentence(v, "a"))(Vocabulary::kBos), 0.0);
}

TEST(Tokenize, Punctuation) {
  EXPECT_EQ(tokenize("A man, then HE runs."), (std::vector<std::string>{"a", "man", "then", "he", "runs"}));
  EXPECT_TRUE(tokenize("  ").empty());
}

TEST(Corpus, ReferencesUsePronounChains) {
  const CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(30), 2);
  int pronoun = 0, later = 0;
  for (const VideoRecord& v : b.train) {
    for (std::size_t i = 1; i < v.clips.size(); ++i) {
      ++later;
      const auto w = tokenize(v.clips[i].refs[0]);
      pronoun += w[0] == "he" || w[0] == "she" || w[0] == "they" || w[0] == "the";
    }
  }
  ASSERT_GT(later, 0);
  EXPECT_EQ(pronoun, later);
}
