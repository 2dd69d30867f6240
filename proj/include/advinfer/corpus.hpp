#pragma once

// Synthetic multimodal clip corpus, tokenisation and vocabulary.

#include "advinfer/autodiff.hpp"
#include "advinfer/layers.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace advinfer {

inline constexpr int kMaxSentenceWords = 30;
inline constexpr int kMotionSegments = 10;
inline constexpr int kAppearanceSegments = 10;
inline constexpr int kObjectSegments = 3;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;

  Vocabulary();
  // Specials followed by `tokens` in the given order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  static bool is_special(int id) { return id >= 0 && id < kNumSpecial; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  // FNV-1a over the token list; embedded in checkpoints.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

enum class Gender { male, female, neutral };
enum class Plurality { single, plural };

const char* to_string(Gender g);
const char* to_string(Plurality p);
Gender gender_from_string(const std::string& s);
Plurality plurality_from_string(const std::string& s);

struct ClipFeatures {
  Matrix motion;      // 10 x D_m
  Matrix appearance;  // 10 x D_a
  Matrix objects;     // 3 x V_o, weights in [0, 1]

  void validate() const;
  bool operator==(const ClipFeatures& o) const;
};

struct ClipLatent {
  int event_id = 0;
  Gender gender = Gender::neutral;
  Plurality plurality = Plurality::single;
  std::vector<int> object_ids;
  bool operator==(const ClipLatent&) const = default;
};

struct Clip {
  ClipFeatures features;
  std::array<std::string, 2> refs;
  std::optional<ClipLatent> latent;
  bool operator==(const Clip&) const = default;
};

struct VideoRecord {
  std::string id;
  int activity = 0;
  std::vector<Clip> clips;
  bool operator==(const VideoRecord&) const = default;
};

struct FeatureDims {
  int motion = 64;
  int appearance = 64;
  int objects = 100;
  bool operator==(const FeatureDims&) const = default;
};

struct CorpusSpec {
  int num_videos = 10;
  int min_clips = 2;
  int max_clips = 4;
  int num_events = 20;
  int num_activities = 5;
  double noise_sigma = 0.1;
  FeatureDims dims;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  int min_count = 1;

  void validate() const;
  bool operator==(const CorpusSpec&) const = default;
};

struct CorpusBundle {
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> val;
  std::vector<VideoRecord> test;
  Vocabulary vocab;
  CorpusSpec spec;
  std::uint64_t seed = 0;
  // True when loaded from external features (no generator spec / latents).
  bool imported = false;

  const std::vector<VideoRecord>& split(const std::string& name) const;
  bool operator==(const CorpusBundle&) const = default;
};

// Latent world shared by every video generated from one (spec, seed).
struct EventInfo {
  int activity = 0;
  int script_position = 0;
  int verb = 0;                 // index into the verb table
  int lead = -1;                // optional leading action, -1 if none
  std::array<int, 2> objects{};  // object ids
};

struct SyntheticWorld {
  std::vector<EventInfo> events;
  std::vector<std::vector<int>> scripts;  // event ids per activity, in order
  Matrix event_centroids;                 // num_events x D_m
  Matrix actor_centroids;                 // 6 x D_a (gender x plurality)
  std::vector<std::string> object_names;  // V_o
};

SyntheticWorld make_world(const CorpusSpec& spec, std::uint64_t seed);
int actor_class(Gender g, Plurality p);

CorpusBundle gen_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed);

// Lowercase, split on whitespace and punctuation.
std::vector<std::string> tokenize(const std::string& text);
std::string normalize_text(const std::string& text);

Vocabulary build_vocabulary(const std::vector<VideoRecord>& records, int min_count);

// BOS + up to 30 ids + EOS.
TokenIds encode_sentence(const Vocabulary& vocab, const std::string& text);
// Content ids only (no BOS/EOS), truncated to 30.
TokenIds encode_words(const Vocabulary& vocab, const std::string& text);
// Joins non-special tokens with single spaces.
std::string detokenize(const Vocabulary& vocab, std::span<const int> ids);
std::vector<std::string> id_tokens(const Vocabulary& vocab, std::span<const int> ids);

// Binary indicator over the vocabulary; specials are excluded.
Vector bow_vector(const Vocabulary& vocab, std::span<const int> ids);

inline constexpr int kCorpusFormatVersion = 1;

void save_corpus(const CorpusBundle& bundle, const std::string& path);
std::string corpus_to_json(const CorpusBundle& bundle);
CorpusBundle load_corpus(const std::string& path);
CorpusBundle corpus_from_json(const std::string& text);

// Round to 9 significant digits, the precision used on disk.
double quantize9(double x);

}  // namespace advinfer
