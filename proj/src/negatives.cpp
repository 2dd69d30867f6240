#include "advinfer/negatives.hpp"

#include "advinfer/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <ostream>

namespace advinfer {

namespace {

constexpr const char* kKindNames[kNumNegativeKinds] = {
    "mismatched_gt", "mismatched_gen", "hard_same_activity", "word_shuffle",
    "repeat_phrase", "order_shuffle",  "identical_pair",     "truncated_pair", "generated"};

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

TokenIds reference_words(const NegativeSources& src, const VideoRecord& v, int clip, int ref) {
  return encode_words(*src.vocab, v.clips[static_cast<std::size_t>(clip)].refs[static_cast<std::size_t>(ref)]);
}

// h^{i-1} after teacher forcing clips [0, clip) of one reference chain, as in MLE training.
Vector chain_context(const NegativeSources& src, const VideoRecord& v, int clip, int ref) {
  Graph g(false);
  Var context = g.constant(Matrix::Zero(src.generator->hidden(), 1));
  for (int c = 0; c < clip; ++c) {
    const Clip& cl = v.clips[static_cast<std::size_t>(c)];
    const TokenIds sent[] = {encode_sentence(*src.vocab, cl.refs[static_cast<std::size_t>(ref)])};
    ClipCache cache = src.generator->prepare_clip(g, cl.features);
    context = src.generator->teacher_force(g, cache, sent, context).final_h;
  }
  return context.value().col(0);
}

// Generated sentence for a clip, continuing reference chain `ref` of its video;
// empty if the generator keeps stopping at once.
TokenIds generated_words(const NegativeSources& src, const VideoRecord& v, int clip, int ref,
                         std::uint64_t seed) {
  const Vector context = chain_context(src, v, clip, ref);
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    auto s = sample_sentences(*src.generator, v.clips[static_cast<std::size_t>(clip)].features, context, 1,
                              src.temperature, sub_seed(seed, attempt));
    TokenIds w = s[0].words();
    if (!w.empty()) return w;
  }
  return {};
}

void from_other_video(NegativeSample& out, const NegativeSources& src, const VideoRecord& video,
                      Rng& rng, bool same_activity, bool generated) {
  std::vector<std::size_t> cands;
  for (std::size_t i = 0; i < src.pool.size(); ++i) {
    if (src.pool[i].id == video.id || src.pool[i].clips.empty()) continue;
    if (same_activity && src.pool[i].activity != video.activity) continue;
    cands.push_back(i);
  }
  if (cands.empty()) {
    if (same_activity) {
      out.fallback = true;
      out.kind = NegativeKind::mismatched_gt;
      from_other_video(out, src, video, rng, false, false);
      return;
    }
    throw ValidationError("negative pool has no video other than " + video.id);
  }
  const VideoRecord& other = src.pool[cands[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<int>(cands.size()) - 1))]];
  const int clip = uniform_int(rng, 0, static_cast<int>(other.clips.size()) - 1);
  const int ref = uniform_int(rng, 0, 1);
  out.source_video = other.id;
  out.source_clip = clip;
  if (generated) {
    out.sentence = generated_words(src, other, clip, ref, rng());
    if (!out.sentence.empty()) return;
    out.fallback = true;
    out.kind = NegativeKind::mismatched_gt;
  }
  out.sentence = reference_words(src, other, clip, ref);
}

}  // namespace

const char* to_string(NegativeKind k) { return kKindNames[static_cast<int>(k)]; }

NegativeKind negative_kind_from_string(const std::string& s) {
  for (int i = 0; i < kNumNegativeKinds; ++i) {
    if (s == kKindNames[i]) return static_cast<NegativeKind>(i);
  }
  throw ValidationError("unknown negative kind '" + s + "'");
}

bool is_pair_kind(NegativeKind k) {
  return k == NegativeKind::order_shuffle || k == NegativeKind::identical_pair ||
         k == NegativeKind::truncated_pair;
}

bool needs_generator(NegativeKind k) {
  return k == NegativeKind::mismatched_gen || k == NegativeKind::generated;
}

TokenIds truncate_sentence(const Vocabulary& vocab, const TokenIds& words) {
  const int and_id = vocab.contains("and") ? vocab.id("and") : -1;
  auto it = std::find(words.begin(), words.end(), and_id);
  if (and_id >= 0 && it != words.end() && it != words.begin()) return TokenIds(words.begin(), it);
  return TokenIds(words.begin(), words.begin() + static_cast<std::ptrdiff_t>((words.size() + 1) / 2));
}

NegativeSample make_negative(const NegativeSpec& spec, const VideoRecord& video,
                             const NegativeSources& src) {
  if (src.vocab == nullptr) throw ValidationError("make_negative: vocabulary required");
  if (spec.clip < 0 || spec.clip >= static_cast<int>(video.clips.size()) || spec.ref < 0 ||
      spec.ref > 1) {
    throw ValidationError("make_negative: clip/ref index out of range for " + video.id);
  }
  if (needs_generator(spec.kind) && src.generator == nullptr) {
    throw ValidationError(std::string(to_string(spec.kind)) + " negatives need a generator");
  }
  NegativeSample out;
  out.requested = out.kind = spec.kind;
  out.seed = spec.seed;
  out.target_video = video.id;
  out.target_clip = spec.clip;
  Rng rng = make_rng(spec.seed);
  const TokenIds own = reference_words(src, video, spec.clip, spec.ref);

  switch (spec.kind) {
    case NegativeKind::mismatched_gt:
      from_other_video(out, src, video, rng, false, false);
      break;
    case NegativeKind::mismatched_gen:
      from_other_video(out, src, video, rng, false, true);
      break;
    case NegativeKind::hard_same_activity: {
      const bool gen = src.generator != nullptr && uniform_int(rng, 0, 1) == 1;
      from_other_video(out, src, video, rng, true, gen);
      break;
    }
    case NegativeKind::generated:
      out.sentence = generated_words(src, video, spec.clip, spec.ref, rng());
      out.source_video = video.id;
      out.source_clip = spec.clip;
      if (out.sentence.empty()) {
        NegativeSpec alt = spec;
        alt.kind = NegativeKind::word_shuffle;
        NegativeSample s = make_negative(alt, video, src);
        s.requested = NegativeKind::generated;
        s.fallback = true;
        return s;
      }
      break;
    case NegativeKind::word_shuffle: {
      out.sentence = own;
      // A few retries so the shuffle actually moves something when it can.
      for (int t = 0; t < 10; ++t) {
        std::shuffle(out.sentence.begin(), out.sentence.end(), rng);
        if (out.sentence != own) break;
      }
      break;
    }
    case NegativeKind::repeat_phrase: {
      const int n = static_cast<int>(own.size());
      if (n == 0) throw ValidationError("repeat_phrase on an empty reference");
      const int len = std::min(n, uniform_int(rng, 2, 4));
      const int start = uniform_int(rng, 0, n - len);
      out.sentence = own;
      out.sentence.insert(out.sentence.begin() + start + len, own.begin() + start,
                          own.begin() + start + len);
      if (static_cast<int>(out.sentence.size()) > kMaxSentenceWords) out.sentence.resize(kMaxSentenceWords);
      break;
    }
    case NegativeKind::identical_pair:
      out.prev = own;
      out.sentence = own;
      break;
    case NegativeKind::truncated_pair:
      out.prev = own;
      out.sentence = truncate_sentence(*src.vocab, own);
      break;
    case NegativeKind::order_shuffle: {
      const int L = static_cast<int>(video.clips.size());
      if (L < 2) throw ValidationError("order_shuffle needs a paragraph of at least 2 sentences");
      std::vector<int> perm(static_cast<std::size_t>(L));
      std::iota(perm.begin(), perm.end(), 0);
      std::vector<std::pair<int, int>> pairs;
      while (pairs.empty()) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int j = 0; j + 1 < L; ++j) {
          const int a = perm[static_cast<std::size_t>(j)];
          const int b = perm[static_cast<std::size_t>(j + 1)];
          if (b != a + 1) pairs.emplace_back(a, b);
        }
      }
      auto [a, b] = pairs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pairs.size()) - 1))];
      out.prev = reference_words(src, video, a, spec.ref);
      out.sentence = reference_words(src, video, b, spec.ref);
      out.source_video = video.id;
      out.source_clip = b;
      break;
    }
  }
  if (out.sentence.empty()) {
    throw ValidationError(std::string("empty ") + to_string(spec.kind) + " negative for " + video.id);
  }
  return out;
}

void write_audit_line(std::ostream& out, const NegativeSample& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["requested"] = to_string(s.requested);
  j["fallback"] = s.fallback;
  j["seed"] = s.seed;
  j["target_video"] = s.target_video;
  j["target_clip"] = s.target_clip;
  j["source_video"] = s.source_video;
  j["source_clip"] = s.source_clip;
  out << j.dump() << '\n';
}

}  // namespace advinfer
