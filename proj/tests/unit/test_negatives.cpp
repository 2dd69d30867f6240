#include "advinfer/error.hpp"
#include "advinfer/negatives.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <sstream>

using namespace advinfer;

namespace {

struct World {
  CorpusBundle b = gen_synthetic_corpus(testutil::small_spec(16), 13);
  Generator g{testutil::small_gen_config(b.vocab), 2};
  NegativeSources src() const {
    NegativeSources s;
    s.vocab = &b.vocab;
    s.pool = b.train;
    s.generator = &g;
    return s;
  }
  const VideoRecord& video() const { return b.train.front(); }
};

NegativeSample make(const World& s, NegativeKind k, int clip = 1, int ref = 0, std::uint64_t seed = 4) {
  return make_negative({k, seed, clip, ref}, s.video(), s.src());
}

}  // namespace

TEST(Negatives, TruncatedPairCutsAtAnd) {
  const Vocabulary v({"a", "person", "enters", "and", "takes", "chair"});
  const TokenIds cut = truncate_sentence(v, encode_words(v, "a person enters and takes a chair"));
  EXPECT_EQ(detokenize(v, cut), "a person enters");
  EXPECT_EQ(detokenize(v, truncate_sentence(v, encode_words(v, "a person takes a chair"))), "a person takes");
}

TEST(Negatives, PairKinds) {
  World s;
  const NegativeSample id = make(s, NegativeKind::identical_pair);
  EXPECT_EQ(id.prev, id.sentence);
  EXPECT_FALSE(id.sentence.empty());
  const NegativeSample tr = make(s, NegativeKind::truncated_pair);
  EXPECT_EQ(tr.sentence, truncate_sentence(s.b.vocab, tr.prev));
  EXPECT_TRUE(is_pair_kind(NegativeKind::order_shuffle));
  EXPECT_FALSE(is_pair_kind(NegativeKind::word_shuffle));
  const NegativeSample os = make(s, NegativeKind::order_shuffle);
  EXPECT_FALSE(os.prev.empty());
  EXPECT_FALSE(os.sentence.empty());
}

TEST(Negatives, WordShufflePreservesBow) {
  World s;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NegativeSample n = make(s, NegativeKind::word_shuffle, 0, static_cast<int>(seed % 2), seed);
    const TokenIds ref = encode_words(s.b.vocab, s.video().clips[0].refs[seed % 2]);
    EXPECT_EQ(bow_vector(s.b.vocab, n.sentence), bow_vector(s.b.vocab, ref));
    TokenIds a = n.sentence, b = ref;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Negatives, MismatchComesFromAnotherVideo) {
  World s;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NegativeSample m = make(s, NegativeKind::mismatched_gt, 0, 0, seed);
    EXPECT_NE(m.source_video, s.video().id);
    const NegativeSample h = make(s, NegativeKind::hard_same_activity, 0, 0, seed);
    EXPECT_NE(h.source_video, s.video().id);
    if (!h.fallback) {
      for (const VideoRecord& v : s.b.train) {
        if (v.id == h.source_video) {
          EXPECT_EQ(v.activity, s.video().activity);
        }
      }
    }
  }
}

TEST(Negatives, DeterministicAndAudited) {
  World s;
  for (int k = 0; k < kNumNegativeKinds; ++k) {
    const auto kind = static_cast<NegativeKind>(k);
    const NegativeSample a = make(s, kind), b = make(s, kind);
    EXPECT_EQ(a.sentence, b.sentence) << to_string(kind);
    EXPECT_EQ(a.prev, b.prev) << to_string(kind);
    EXPECT_EQ(negative_kind_from_string(to_string(kind)), kind);
    std::ostringstream out;
    write_audit_line(out, a);
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j.at("requested").get<std::string>(), to_string(kind));
  }
}

TEST(Negatives, Errors) {
  World s;
  NegativeSources no_gen = s.src();
  no_gen.generator = nullptr;
  EXPECT_THROW(make_negative({NegativeKind::generated, 1, 0, 0}, s.video(), no_gen), ValidationError);
  EXPECT_THROW(make_negative({NegativeKind::word_shuffle, 1, 99, 0}, s.video(), s.src()), ValidationError);
  NegativeSources lonely = s.src();
  lonely.pool = std::span<const VideoRecord>(&s.video(), 1);
  EXPECT_THROW(make_negative({NegativeKind::mismatched_gt, 1, 0, 0}, s.video(), lonely), ValidationError);
  EXPECT_THROW(negative_kind_from_string("nope"), ValidationError);
}
