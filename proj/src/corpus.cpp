#include "advinfer/corpus.hpp"

#include "advinfer/error.hpp"
#include "advinfer/rng.hpp"
#include "lexicon.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace advinfer {

using json = nlohmann::ordered_json;

// ---- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < kNumSpecial; ++i) token_to_id_[id_to_token_[i]] = i;
  for (const std::string& t : tokens) {
    if (token_to_id_.count(t) != 0) {
      throw ValidationError("duplicate vocabulary token '" + t + "'");
    }
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || it->second < kNumSpecial) return kUnk;
  return it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it != token_to_id_.end() && it->second >= kNumSpecial;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range");
  return id_to_token_[id];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& t : id_to_token_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::neutral: return "neutral";
  }
  return "neutral";
}

const char* to_string(Plurality p) { return p == Plurality::single ? "single" : "plural"; }

Gender gender_from_string(const std::string& s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "neutral") return Gender::neutral;
  throw FormatError("unknown gender '" + s + "'");
}

Plurality plurality_from_string(const std::string& s) {
  if (s == "single") return Plurality::single;
  if (s == "plural") return Plurality::plural;
  throw FormatError("unknown plurality '" + s + "'");
}

int actor_class(Gender g, Plurality p) {
  return static_cast<int>(g) * 2 + (p == Plurality::plural ? 1 : 0);
}

// ---- features --------------------------------------------------------------

void ClipFeatures::validate() const {
  if (motion.rows() != kMotionSegments || appearance.rows() != kAppearanceSegments ||
      objects.rows() != kObjectSegments) {
    throw ShapeError("clip features need 10 motion, 10 appearance and 3 object rows");
  }
  if (!motion.allFinite() || !appearance.allFinite() || !objects.allFinite()) {
    throw ValidationError("clip features contain non-finite values");
  }
  if ((objects.array() < 0.0).any() || (objects.array() > 1.0).any()) {
    throw ValidationError("object weights must lie in [0, 1]");
  }
}

bool ClipFeatures::operator==(const ClipFeatures& o) const {
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(motion, o.motion) && same(appearance, o.appearance) && same(objects, o.objects);
}

void CorpusSpec::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("invalid corpus spec: " + m); };
  if (num_videos < 1) fail("num_videos must be >= 1");
  if (min_clips < 1 || max_clips > 8 || min_clips > max_clips) {
    fail("clip_range must satisfy 1 <= min <= max <= 8");
  }
  if (num_activities < 1) fail("num_activities must be >= 1");
  if (num_events < num_activities || num_events % num_activities != 0) {
    fail("num_events must be a positive multiple of num_activities");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (dims.motion < 1 || dims.appearance < 1) fail("feature dims must be positive");
  if (dims.objects < 2) fail("object vocabulary needs at least 2 labels");
  if (!(train_fraction > 0.0) || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
    fail("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
  }
  if (min_count < 1) fail("min_count must be >= 1");
}

const std::vector<VideoRecord>& CorpusBundle::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + name + "'");
}

double quantize9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

// ---- synthetic world -------------------------------------------------------

namespace {

std::string object_name(int id) {
  if (id < static_cast<int>(lexicon::kObjects.size())) {
    return std::string(lexicon::kObjects[static_cast<std::size_t>(id)]);
  }
  return "item" + std::to_string(id);
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sigma * n(rng);
  }
  return m;
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

SyntheticWorld make_world(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(sub_seed(seed, 0));
  SyntheticWorld w;
  for (int o = 0; o < spec.dims.objects; ++o) w.object_names.push_back(object_name(o));

  const int per_activity = spec.num_events / spec.num_activities;
  std::vector<int> actions(lexicon::kActions.size());
  std::iota(actions.begin(), actions.end(), 0);
  std::shuffle(actions.begin(), actions.end(), rng);
  const int usable_objects = std::min<int>(spec.dims.objects, static_cast<int>(lexicon::kObjects.size()));

  w.scripts.assign(static_cast<std::size_t>(spec.num_activities), {});
  for (int e = 0; e < spec.num_events; ++e) {
    EventInfo ev;
    ev.activity = e / per_activity;
    ev.script_position = e % per_activity;
    ev.verb = actions[static_cast<std::size_t>(e) % actions.size()];
    ev.lead = std::bernoulli_distribution(0.35)(rng)
                  ? uniform_int(rng, 0, static_cast<int>(lexicon::kLeads.size()) - 1)
                  : -1;
    ev.objects[0] = uniform_int(rng, 0, usable_objects - 1);
    do {
      ev.objects[1] = uniform_int(rng, 0, usable_objects - 1);
    } while (ev.objects[1] == ev.objects[0]);
    w.events.push_back(ev);
    w.scripts[static_cast<std::size_t>(ev.activity)].push_back(e);
  }
  w.event_centroids = gaussian_matrix(spec.num_events, spec.dims.motion, 1.0, rng);
  w.actor_centroids = gaussian_matrix(6, spec.dims.appearance, 1.0, rng);
  return w;
}

namespace {

struct ChainState {
  std::set<int> mentioned;
  std::vector<bool> used_modifiers = std::vector<bool>(lexicon::kModifiers.size(), false);
};

std::string subject_phrase(int ref, Gender g, Plurality p, int variant, bool first) {
  const auto gi = static_cast<std::size_t>(g);
  const std::size_t pi = p == Plurality::plural ? 1 : 0;
  const std::string word(lexicon::kActorWords[gi][pi][static_cast<std::size_t>(variant)]);
  if (first) {
    if (p == Plurality::single) return "a " + word;
    return (ref == 0 ? "two " : "some ") + word;
  }
  if (p == Plurality::plural) return "they";
  if (g == Gender::male) return "he";
  if (g == Gender::female) return "she";
  return "the " + word;
}

std::string realize_reference(int ref, const EventInfo& ev, const SyntheticWorld& world,
                              Gender g, Plurality p, int variant, bool first,
                              ChainState& chain, Rng& rng) {
  const bool single = p == Plurality::single;
  const auto& action = lexicon::kActions[static_cast<std::size_t>(ev.verb)];
  std::string s = subject_phrase(ref, g, p, variant, first);
  if (ref == 0) {
    if (ev.lead >= 0) {
      const auto& lead = lexicon::kLeads[static_cast<std::size_t>(ev.lead)];
      s += " ";
      s += single ? lead.s3 : lead.base;
      s += " and";
    }
    s += " ";
    s += single ? action.primary.s3 : action.primary.base;
  } else {
    s += single ? " is seen" : " are seen";
    if (ev.lead >= 0) {
      s += " ";
      s += lexicon::kLeads[static_cast<std::size_t>(ev.lead)].ing;
      s += " and";
    }
    s += " ";
    s += action.paraphrase.ing;
  }
  const int object = ref == 0 ? ev.objects[0] : ev.objects[static_cast<std::size_t>(uniform_int(rng, 0, 1))];
  s += chain.mentioned.count(object) != 0 ? " the " : " a ";
  s += world.object_names[static_cast<std::size_t>(object)];
  chain.mentioned.insert(object);
  if (std::bernoulli_distribution(0.6)(rng)) {
    std::vector<int> free;
    for (std::size_t m = 0; m < chain.used_modifiers.size(); ++m) {
      if (!chain.used_modifiers[m]) free.push_back(static_cast<int>(m));
    }
    if (!free.empty()) {
      int m = free[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(free.size()) - 1))];
      chain.used_modifiers[static_cast<std::size_t>(m)] = true;
      s += " ";
      s += lexicon::kModifiers[static_cast<std::size_t>(m)];
    }
  }
  return s;
}

VideoRecord generate_video(const CorpusSpec& spec, const SyntheticWorld& world, int index,
                           std::uint64_t seed) {
  Rng rng = make_rng(sub_seed(seed, 1, static_cast<std::uint64_t>(index)));
  VideoRecord v;
  char id[32];
  std::snprintf(id, sizeof(id), "video_%05d", index);
  v.id = id;
  v.activity = uniform_int(rng, 0, spec.num_activities - 1);
  const auto& script = world.scripts[static_cast<std::size_t>(v.activity)];
  const int per = static_cast<int>(script.size());
  const int L = uniform_int(rng, spec.min_clips, spec.max_clips);
  const int start = uniform_int(rng, 0, std::max(0, per - L));

  const Gender gender = static_cast<Gender>(uniform_int(rng, 0, 2));
  const Plurality plurality =
      std::bernoulli_distribution(0.7)(rng) ? Plurality::single : Plurality::plural;
  const int variant0 = uniform_int(rng, 0, 2);
  const int variant1 = (variant0 + 1 + uniform_int(rng, 0, 1)) % 3;
  const int actor = actor_class(gender, plurality);

  std::array<ChainState, 2> chains;
  std::uniform_real_distribution<double> strong(0.6, 1.0);
  std::uniform_real_distribution<double> weak(0.0, 0.3);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < L; ++k) {
    const int event = script[static_cast<std::size_t>((start + k) % per)];
    const EventInfo& ev = world.events[static_cast<std::size_t>(event)];
    Clip clip;
    ClipFeatures& f = clip.features;
    f.motion = world.event_centroids.row(event).replicate(kMotionSegments, 1) +
               gaussian_matrix(kMotionSegments, spec.dims.motion, spec.noise_sigma, rng);
    f.appearance = world.actor_centroids.row(actor).replicate(kAppearanceSegments, 1) +
                   gaussian_matrix(kAppearanceSegments, spec.dims.appearance,
                                   spec.noise_sigma, rng);
    f.objects = Matrix::Zero(kObjectSegments, spec.dims.objects);
    for (int r = 0; r < kObjectSegments; ++r) {
      for (int o : ev.objects) {
        f.objects(r, o) = std::clamp(strong(rng) + spec.noise_sigma * noise(rng), 0.0, 1.0);
      }
      for (int d = 0; d < 2; ++d) {
        int o = uniform_int(rng, 0, spec.dims.objects - 1);
        if (o != ev.objects[0] && o != ev.objects[1]) f.objects(r, o) = weak(rng);
      }
    }
    f.motion = f.motion.unaryExpr(&quantize9);
    f.appearance = f.appearance.unaryExpr(&quantize9);
    f.objects = f.objects.unaryExpr(&quantize9);

    for (int ref = 0; ref < 2; ++ref) {
      clip.refs[static_cast<std::size_t>(ref)] =
          realize_reference(ref, ev, world, gender, plurality, ref == 0 ? variant0 : variant1,
                            k == 0, chains[static_cast<std::size_t>(ref)], rng);
    }
    clip.latent = ClipLatent{event, gender, plurality, {ev.objects[0], ev.objects[1]}};
    v.clips.push_back(std::move(clip));
  }
  return v;
}

}  // namespace

CorpusBundle gen_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  const SyntheticWorld world = make_world(spec, seed);
  std::vector<VideoRecord> videos;
  videos.reserve(static_cast<std::size_t>(spec.num_videos));
  for (int i = 0; i < spec.num_videos; ++i) videos.push_back(generate_video(spec, world, i, seed));

  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = make_rng(sub_seed(seed, 2));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n = static_cast<double>(videos.size());
  auto n_train = static_cast<std::size_t>(std::llround(n * spec.train_fraction));
  auto n_val = static_cast<std::size_t>(std::llround(n * spec.val_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, videos.size());
  n_val = std::min(n_val, videos.size() - n_train);

  CorpusBundle b;
  b.spec = spec;
  b.seed = seed;
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> va(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                              order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::vector<std::size_t> te(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* part : {&tr, &va, &te}) std::sort(part->begin(), part->end());
  for (std::size_t i : tr) b.train.push_back(videos[i]);
  for (std::size_t i : va) b.val.push_back(videos[i]);
  for (std::size_t i : te) b.test.push_back(videos[i]);
  b.vocab = build_vocabulary(b.train, spec.min_count);
  return b;
}

// ---- tokenisation ----------------------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string normalize_text(const std::string& text) {
  std::string out;
  for (const std::string& t : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<VideoRecord>& records, int min_count) {
  if (records.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, int> counts;
  for (const VideoRecord& v : records) {
    for (const Clip& c : v.clips) {
      for (const std::string& r : c.refs) {
        for (const std::string& t : tokenize(r)) ++counts[t];
      }
    }
  }
  std::vector<std::string> kept;
  for (const auto& [t, n] : counts) {
    if (n >= min_count) kept.push_back(t);
  }
  return Vocabulary(kept);
}

TokenIds encode_words(const Vocabulary& vocab, const std::string& text) {
  TokenIds ids;
  for (const std::string& t : tokenize(text)) {
    if (static_cast<int>(ids.size()) == kMaxSentenceWords) break;
    ids.push_back(vocab.id(t));
  }
  return ids;
}

TokenIds encode_sentence(const Vocabulary& vocab, const std::string& text) {
  TokenIds ids{Vocabulary::kBos};
  TokenIds words = encode_words(vocab, text);
  ids.insert(ids.end(), words.begin(), words.end());
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<std::string> id_tokens(const Vocabulary& vocab, std::span<const int> ids) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kUnk) {
      out.push_back(vocab.token(id));
    } else if (!Vocabulary::is_special(id)) {
      out.push_back(vocab.token(id));
    }
  }
  return out;
}

std::string detokenize(const Vocabulary& vocab, std::span<const int> ids) {
  std::string out;
  for (const std::string& t : id_tokens(vocab, ids)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vector bow_vector(const Vocabulary& vocab, std::span<const int> ids) {
  Vector v = Vector::Zero(vocab.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) throw ValidationError("bow_vector: id out of range");
    if (!Vocabulary::is_special(id)) v(id) = 1.0;
  }
  return v;
}

// ---- serialisation ---------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(quantize9(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Eigen::Index expect_rows, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expect_rows) {
    throw FormatError(std::string(what) + ": expected " + std::to_string(expect_rows) + " rows");
  }
  const std::size_t cols = j.empty() ? 0 : j[0].size();
  if (cols == 0) throw FormatError(std::string(what) + ": empty rows");
  Matrix m(expect_rows, static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw FormatError(std::string(what) + ": ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw FormatError(std::string(what) + ": non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

json spec_to_json(const CorpusSpec& s, std::uint64_t seed) {
  return json{{"num_videos", s.num_videos},
              {"clip_range", {s.min_clips, s.max_clips}},
              {"num_events", s.num_events},
              {"num_activities", s.num_activities},
              {"noise_sigma", s.noise_sigma},
              {"feature_dims", {s.dims.motion, s.dims.appearance, s.dims.objects}},
              {"train_fraction", s.train_fraction},
              {"val_fraction", s.val_fraction},
              {"min_count", s.min_count},
              {"seed", seed}};
}

CorpusSpec spec_from_json(const json& j, std::uint64_t* seed) {
  CorpusSpec s;
  s.num_videos = j.at("num_videos").get<int>();
  s.min_clips = j.at("clip_range").at(0).get<int>();
  s.max_clips = j.at("clip_range").at(1).get<int>();
  s.num_events = j.at("num_events").get<int>();
  s.num_activities = j.at("num_activities").get<int>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.dims.motion = j.at("feature_dims").at(0).get<int>();
  s.dims.appearance = j.at("feature_dims").at(1).get<int>();
  s.dims.objects = j.at("feature_dims").at(2).get<int>();
  s.train_fraction = j.at("train_fraction").get<double>();
  s.val_fraction = j.at("val_fraction").get<double>();
  s.min_count = j.at("min_count").get<int>();
  *seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json video_to_json(const VideoRecord& v, const char* split) {
  json clips = json::array();
  for (const Clip& c : v.clips) {
    json jc{{"motion", matrix_to_json(c.features.motion)},
            {"appearance", matrix_to_json(c.features.appearance)},
            {"objects", matrix_to_json(c.features.objects)},
            {"refs", {c.refs[0], c.refs[1]}}};
    if (c.latent) {
      jc["latent"] = json{{"event_id", c.latent->event_id},
                          {"actor_gender", to_string(c.latent->gender)},
                          {"actor_plurality", to_string(c.latent->plurality)},
                          {"object_ids", c.latent->object_ids}};
    }
    clips.push_back(std::move(jc));
  }
  return json{{"id", v.id}, {"activity", v.activity}, {"split", split}, {"clips", std::move(clips)}};
}

VideoRecord video_from_json(const json& j) {
  VideoRecord v;
  v.id = j.at("id").get<std::string>();
  v.activity = j.at("activity").get<int>();
  for (const json& jc : j.at("clips")) {
    Clip c;
    c.features.motion = matrix_from_json(jc.at("motion"), kMotionSegments, "motion");
    c.features.appearance = matrix_from_json(jc.at("appearance"), kAppearanceSegments, "appearance");
    c.features.objects = matrix_from_json(jc.at("objects"), kObjectSegments, "objects");
    c.features.validate();
    const json& refs = jc.at("refs");
    if (!refs.is_array() || refs.size() != 2) throw FormatError("each clip needs exactly 2 refs");
    c.refs = {refs[0].get<std::string>(), refs[1].get<std::string>()};
    if (jc.contains("latent")) {
      const json& l = jc["latent"];
      c.latent = ClipLatent{l.at("event_id").get<int>(),
                            gender_from_string(l.at("actor_gender").get<std::string>()),
                            plurality_from_string(l.at("actor_plurality").get<std::string>()),
                            l.at("object_ids").get<std::vector<int>>()};
    }
    v.clips.push_back(std::move(c));
  }
  if (v.clips.empty()) throw FormatError("video '" + v.id + "' has no clips");
  return v;
}

}  // namespace

std::string corpus_to_json(const CorpusBundle& b) {
  json doc;
  doc["version"] = kCorpusFormatVersion;
  if (!b.imported) doc["spec"] = spec_to_json(b.spec, b.seed);
  json vocab = json::array();
  for (int i = Vocabulary::kNumSpecial; i < b.vocab.size(); ++i) vocab.push_back(b.vocab.token(i));
  doc["vocab"] = std::move(vocab);
  json videos = json::array();
  for (const auto& v : b.train) videos.push_back(video_to_json(v, "train"));
  for (const auto& v : b.val) videos.push_back(video_to_json(v, "val"));
  for (const auto& v : b.test) videos.push_back(video_to_json(v, "test"));
  doc["videos"] = std::move(videos);
  return doc.dump();
}

CorpusBundle corpus_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("corpus file is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("version")) {
      throw FormatError("corpus file lacks a version header");
    }
    const int version = doc["version"].get<int>();
    if (version != kCorpusFormatVersion) {
      throw VersionError("corpus format version " + std::to_string(version) +
                         " unsupported (reader is version " +
                         std::to_string(kCorpusFormatVersion) + ")");
    }
    CorpusBundle b;
    if (doc.contains("spec")) {
      b.spec = spec_from_json(doc["spec"], &b.seed);
    } else {
      b.imported = true;
    }
    std::set<std::string> ids;
    for (const json& jv : doc.at("videos")) {
      VideoRecord v = video_from_json(jv);
      if (!ids.insert(v.id).second) throw FormatError("duplicate video id '" + v.id + "'");
      const std::string split = jv.value("split", "train");
      if (split == "train") {
        b.train.push_back(std::move(v));
      } else if (split == "val") {
        b.val.push_back(std::move(v));
      } else if (split == "test") {
        b.test.push_back(std::move(v));
      } else {
        throw FormatError("unknown split '" + split + "'");
      }
    }
    if (doc.contains("vocab")) {
      b.vocab = Vocabulary(doc["vocab"].get<std::vector<std::string>>());
    } else {
      b.vocab = build_vocabulary(b.train, 1);
    }
    return b;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed corpus file: ") + e.what());
  }
}

void save_corpus(const CorpusBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << corpus_to_json(bundle);
  if (!out) throw Error("failed writing corpus to '" + path + "'");
}

CorpusBundle load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return corpus_from_json(ss.str());
}

}  // namespace advinfer
