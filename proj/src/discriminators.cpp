#include "advinfer/discriminators.hpp"

#include "advinfer/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

namespace advinfer {

namespace {

constexpr const char* kModalityNames[3] = {"motion", "appearance", "objects"};

const Matrix& modality_rows(const ClipFeatures& clip, int f) {
  return f == 0 ? clip.motion : (f == 1 ? clip.appearance : clip.objects);
}

int modality_dim(const FeatureDims& d, int f) {
  return f == 0 ? d.motion : (f == 1 ? d.appearance : d.objects);
}

std::string meta_get(const Metadata& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

Linear bind_linear(ParamStore& s, const std::string& prefix, bool bias = true) {
  return {&s.at(prefix + ".weight"), bias ? &s.at(prefix + ".bias") : nullptr};
}

LstmParams bind_lstm(ParamStore& s, const std::string& prefix) {
  return {&s.at(prefix + ".weight"), &s.at(prefix + ".bias")};
}

BiLstmParams bind_bilstm(ParamStore& s, const std::string& prefix) {
  return {&s.at(prefix + ".embed"), bind_lstm(s, prefix + ".fwd"), bind_lstm(s, prefix + ".bwd")};
}

AttentionParams bind_attention(ParamStore& s, const std::string& prefix) {
  return {&s.at(prefix + ".query"), &s.at(prefix + ".segment"), &s.at(prefix + ".bias"),
          &s.at(prefix + ".score")};
}

// Row-wise log-sum-exp of each column, 1 x B.
Var log_sum_exp_cols(const Var& y) {
  std::vector<int> zeros(static_cast<std::size_t>(y.cols()), 0);
  return sub(pick(y, zeros), pick(log_softmax(y), zeros));
}

DiscOutput from_logit(const Var& z) {
  return {log_sigmoid(z), log_sigmoid(scale(z, -1.0))};
}

}  // namespace

const char* to_string(DiscKind k) {
  switch (k) {
    case DiscKind::visual: return "visual";
    case DiscKind::language: return "language";
    case DiscKind::pairwise: return "pairwise";
    case DiscKind::single: return "single";
  }
  return "?";
}

DiscKind disc_kind_from_string(const std::string& s) {
  if (s == "visual") return DiscKind::visual;
  if (s == "language") return DiscKind::language;
  if (s == "pairwise") return DiscKind::pairwise;
  if (s == "single") return DiscKind::single;
  throw ValidationError("unknown discriminator kind '" + s + "'");
}

Metadata DiscConfig::to_metadata() const {
  return {{"kind", "discriminator"},
          {"disc_kind", to_string(kind)},
          {"vocab_size", std::to_string(vocab_size)},
          {"dims.motion", std::to_string(dims.motion)},
          {"dims.appearance", std::to_string(dims.appearance)},
          {"dims.objects", std::to_string(dims.objects)},
          {"embed", std::to_string(embed)},
          {"hidden", std::to_string(hidden)},
          {"attention", std::to_string(attention)},
          {"fusion", std::to_string(fusion)}};
}

DiscConfig DiscConfig::from_metadata(const Metadata& m) {
  if (meta_get(m, "kind") != "discriminator") throw FormatError("checkpoint is not a discriminator");
  DiscConfig c;
  c.kind = disc_kind_from_string(meta_get(m, "disc_kind"));
  c.vocab_size = std::stoi(meta_get(m, "vocab_size"));
  c.dims.motion = std::stoi(meta_get(m, "dims.motion"));
  c.dims.appearance = std::stoi(meta_get(m, "dims.appearance"));
  c.dims.objects = std::stoi(meta_get(m, "dims.objects"));
  c.embed = std::stoi(meta_get(m, "embed"));
  c.hidden = std::stoi(meta_get(m, "hidden"));
  c.attention = std::stoi(meta_get(m, "attention"));
  c.fusion = std::stoi(meta_get(m, "fusion"));
  return c;
}

// ---- base ------------------------------------------------------------------

void Discriminator::check_batch(const ClipFeatures* clip, std::span<const TokenIds> sentences,
                                std::span<const TokenIds> prevs) const {
  if (sentences.empty()) throw ValidationError("discriminator: empty batch");
  if (needs_clip() && clip == nullptr) {
    throw ValidationError(std::string(to_string(kind())) + " discriminator needs clip features");
  }
  if (needs_prev() && prevs.size() != sentences.size()) {
    throw ValidationError("pairwise discriminator needs one previous sentence per sentence");
  }
  auto check = [&](const TokenIds& s) {
    if (s.empty()) throw ValidationError("discriminator: empty sentence");
    for (int id : s) {
      if (id < 0 || id >= cfg_.vocab_size) throw ValidationError("discriminator: token id out of range");
    }
  };
  for (const TokenIds& s : sentences) check(s);
  if (needs_prev()) {
    for (const TokenIds& s : prevs) check(s);
  }
}

Vector Discriminator::score(const ClipFeatures* clip, std::span<const TokenIds> sentences,
                            std::span<const TokenIds> prevs) const {
  Graph g(false);
  DiscOutput out = forward(g, clip, sentences, prevs);
  return out.log_d.value().row(0).transpose().array().exp();
}

void Discriminator::save(const std::string& path, const Vocabulary& vocab) const {
  Metadata meta = cfg_.to_metadata();
  meta["vocab_hash"] = std::to_string(vocab.hash());
  save_checkpoint(store_, meta, path);
}

// ---- visual ----------------------------------------------------------------

VisualDisc::VisualDisc(const DiscConfig& cfg, ParamStore store) : Discriminator(cfg, std::move(store)) {
  bind();
}
VisualDisc::VisualDisc(const VisualDisc& o) : Discriminator(o) { bind(); }

void VisualDisc::bind() {
  bow_ = bind_linear(store_, "dv.bow");
  modality_weights_ = bind_linear(store_, "dv.lambda", false);
  for (int f = 0; f < 3; ++f) {
    const std::string p = std::string("dv.") + kModalityNames[f];
    auto& m = modalities_[static_cast<std::size_t>(f)];
    m.attention = bind_attention(store_, p + ".att");
    m.u = &store_.at(p + ".u");
    m.v = &store_.at(p + ".v");
    m.reduce = bind_linear(store_, p + ".reduce");
  }
}

std::unique_ptr<Discriminator> VisualDisc::clone() const { return std::make_unique<VisualDisc>(*this); }

Var VisualDisc::bow_batch(Graph& g, std::span<const TokenIds> sentences) const {
  Matrix bow = Matrix::Zero(cfg_.vocab_size, static_cast<Eigen::Index>(sentences.size()));
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    for (int id : sentences[j]) {
      if (!Vocabulary::is_special(id)) bow(id, static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  return g.constant(std::move(bow));
}

Var VisualDisc::logits(Graph& g, const ClipFeatures& clip, std::span<const TokenIds> sentences,
                       Var* lambda_logits) const {
  Var omega = bow_(g, bow_batch(g, sentences));
  std::vector<Var> z;
  for (int f = 0; f < 3; ++f) {
    const auto& m = modalities_[static_cast<std::size_t>(f)];
    AttentionSegments segs = prepare_segments(g, m.attention, modality_rows(clip, f));
    Var attended = temporal_attention(g, m.attention, omega, segs);
    Var fused = mul(tanh(matmul(g.param(*m.u), attended)), tanh(matmul(g.param(*m.v), omega)));
    z.push_back(m.reduce(g, fused));
  }
  *lambda_logits = modality_weights_(g, omega);
  return concat_rows(z);
}

DiscOutput VisualDisc::forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                               std::span<const TokenIds> prevs) const {
  check_batch(clip, sentences, prevs);
  Var lambda_logits;
  Var z = logits(g, *clip, sentences, &lambda_logits);
  Var log_lambda = log_softmax(lambda_logits);
  // log sum_f lambda_f sigma(+-z_f), kept in log space.
  return {log_sum_exp_cols(add(log_lambda, log_sigmoid(z))),
          log_sum_exp_cols(add(log_lambda, log_sigmoid(scale(z, -1.0))))};
}

VisualDisc::Parts VisualDisc::parts(const ClipFeatures& clip, std::span<const TokenIds> sentences) const {
  check_batch(&clip, sentences, {});
  Graph g(false);
  Var lambda_logits;
  Var z = logits(g, clip, sentences, &lambda_logits);
  return {sigmoid(z).value(), softmax(lambda_logits).value()};
}

// ---- language --------------------------------------------------------------

LanguageDisc::LanguageDisc(const DiscConfig& cfg, ParamStore store)
    : Discriminator(cfg, std::move(store)) {
  bind();
}
LanguageDisc::LanguageDisc(const LanguageDisc& o) : Discriminator(o) { bind(); }

void LanguageDisc::bind() {
  encoder_ = bind_bilstm(store_, "dl.enc");
  head_ = bind_linear(store_, "dl.head");
}

std::unique_ptr<Discriminator> LanguageDisc::clone() const {
  return std::make_unique<LanguageDisc>(*this);
}

DiscOutput LanguageDisc::forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                                 std::span<const TokenIds> prevs) const {
  check_batch(clip, sentences, prevs);
  return from_logit(head_(g, bilstm_encode(g, encoder_, sentences)));
}

// ---- pairwise --------------------------------------------------------------

PairwiseDisc::PairwiseDisc(const DiscConfig& cfg, ParamStore store)
    : Discriminator(cfg, std::move(store)) {
  bind();
}
PairwiseDisc::PairwiseDisc(const PairwiseDisc& o) : Discriminator(o) { bind(); }

void PairwiseDisc::bind() {
  encoder_ = bind_bilstm(store_, "dp.enc");
  head_ = bind_linear(store_, "dp.head");
}

std::unique_ptr<Discriminator> PairwiseDisc::clone() const {
  return std::make_unique<PairwiseDisc>(*this);
}

DiscOutput PairwiseDisc::forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                                 std::span<const TokenIds> prevs) const {
  check_batch(clip, sentences, prevs);
  std::vector<TokenIds> both(prevs.begin(), prevs.end());
  both.insert(both.end(), sentences.begin(), sentences.end());
  Var enc = bilstm_encode(g, encoder_, both);
  const auto B = static_cast<Eigen::Index>(sentences.size());
  const Var prev = slice_cols(enc, 0, B);
  const Var cur = slice_cols(enc, B, B);
  // The product term lets the head compare the two sentences; with the plain
  // concatenation the ranking of candidates for a fixed prev ignores prev.
  const Var parts[] = {prev, cur, mul(prev, cur)};
  return from_logit(head_(g, concat_rows(parts)));
}

// ---- single ----------------------------------------------------------------

SingleDisc::SingleDisc(const DiscConfig& cfg, ParamStore store) : Discriminator(cfg, std::move(store)) {
  bind();
}
SingleDisc::SingleDisc(const SingleDisc& o) : Discriminator(o) { bind(); }

void SingleDisc::bind() {
  encoder_ = bind_bilstm(store_, "ds.enc");
  for (int f = 0; f < 3; ++f) {
    attention_[static_cast<std::size_t>(f)] =
        bind_attention(store_, std::string("ds.") + kModalityNames[f] + ".att");
  }
  visual_ = bind_linear(store_, "ds.visual");
  sentence_ = bind_linear(store_, "ds.sentence");
  head_ = bind_linear(store_, "ds.head");
}

std::unique_ptr<Discriminator> SingleDisc::clone() const { return std::make_unique<SingleDisc>(*this); }

DiscOutput SingleDisc::forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                               std::span<const TokenIds> prevs) const {
  check_batch(clip, sentences, prevs);
  Var code = bilstm_encode(g, encoder_, sentences);
  std::vector<Var> attended;
  for (int f = 0; f < 3; ++f) {
    const auto& att = attention_[static_cast<std::size_t>(f)];
    AttentionSegments segs = prepare_segments(g, att, modality_rows(*clip, f));
    attended.push_back(temporal_attention(g, att, code, segs));
  }
  Var fused = mul(tanh(visual_(g, concat_rows(attended))), tanh(sentence_(g, code)));
  return from_logit(head_(g, fused));
}

// ---- construction ----------------------------------------------------------

namespace {

std::unique_ptr<Discriminator> wrap(const DiscConfig& cfg, ParamStore store) {
  switch (cfg.kind) {
    case DiscKind::visual: return std::make_unique<VisualDisc>(cfg, std::move(store));
    case DiscKind::language: return std::make_unique<LanguageDisc>(cfg, std::move(store));
    case DiscKind::pairwise: return std::make_unique<PairwiseDisc>(cfg, std::move(store));
    case DiscKind::single: return std::make_unique<SingleDisc>(cfg, std::move(store));
  }
  throw ValidationError("unknown discriminator kind");
}

}  // namespace

std::unique_ptr<Discriminator> make_discriminator(const DiscConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size <= Vocabulary::kNumSpecial || cfg.embed < 1 || cfg.hidden < 1 ||
      cfg.attention < 1 || cfg.fusion < 1) {
    throw ValidationError("invalid discriminator configuration");
  }
  Rng rng = make_rng(seed);
  ParamStore s;
  const int E = cfg.embed, H = cfg.hidden, A = cfg.attention, R = cfg.fusion;
  switch (cfg.kind) {
    case DiscKind::visual:
      make_linear(s, "dv.bow", cfg.vocab_size, E, rng);
      make_linear(s, "dv.lambda", E, 3, rng, false);
      for (int f = 0; f < 3; ++f) {
        const std::string p = std::string("dv.") + kModalityNames[f];
        const int D = modality_dim(cfg.dims, f);
        make_attention(s, p + ".att", E, D, A, rng);
        s.create_uniform(p + ".u", R, D, 1.0 / std::sqrt(static_cast<double>(D)), rng);
        s.create_uniform(p + ".v", R, E, 1.0 / std::sqrt(static_cast<double>(E)), rng);
        make_linear(s, p + ".reduce", R, 1, rng);
      }
      break;
    case DiscKind::language:
      make_bilstm(s, "dl.enc", cfg.vocab_size, E, H, rng);
      make_linear(s, "dl.head", 2 * H, 1, rng);
      break;
    case DiscKind::pairwise:
      make_bilstm(s, "dp.enc", cfg.vocab_size, E, H, rng);
      make_linear(s, "dp.head", 6 * H, 1, rng);
      break;
    case DiscKind::single:
      make_bilstm(s, "ds.enc", cfg.vocab_size, E, H, rng);
      for (int f = 0; f < 3; ++f) {
        make_attention(s, std::string("ds.") + kModalityNames[f] + ".att", 2 * H, modality_dim(cfg.dims, f),
                       A, rng);
      }
      make_linear(s, "ds.visual", cfg.dims.motion + cfg.dims.appearance + cfg.dims.objects, R, rng);
      make_linear(s, "ds.sentence", 2 * H, R, rng);
      make_linear(s, "ds.head", R, 1, rng);
      break;
  }
  return wrap(cfg, std::move(s));
}

std::unique_ptr<Discriminator> load_discriminator(const std::string& path, const Vocabulary* expect_vocab) {
  Metadata meta;
  ParamStore store = load_checkpoint(path, &meta);
  if (expect_vocab != nullptr && meta_get(meta, "vocab_hash") != std::to_string(expect_vocab->hash())) {
    throw ValidationError("checkpoint '" + path + "' was trained with a different vocabulary");
  }
  return wrap(DiscConfig::from_metadata(meta), std::move(store));
}

void zero_head(Discriminator& d) {
  std::vector<std::string> heads;
  switch (d.kind()) {
    case DiscKind::visual:
      for (const char* m : kModalityNames) {
        heads.push_back(std::string("dv.") + m + ".reduce.weight");
        heads.push_back(std::string("dv.") + m + ".reduce.bias");
      }
      break;
    case DiscKind::language: heads = {"dl.head.weight", "dl.head.bias"}; break;
    case DiscKind::pairwise: heads = {"dp.head.weight", "dp.head.bias"}; break;
    case DiscKind::single: heads = {"ds.head.weight", "ds.head.bias"}; break;
  }
  for (const std::string& h : heads) d.params().at(h).value.setZero();
}

// ---- objective -------------------------------------------------------------

double disc_objective(std::span<const double> pos, std::span<const double> gen_neg,
                      std::span<const double> mis_neg, double mu, double nu) {
  auto mean_log = [](std::span<const double> xs, bool complement) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += std::log(complement ? 1.0 - x : x);
    return s / static_cast<double>(xs.size());
  };
  return mean_log(pos, false) + mu * mean_log(gen_neg, true) + nu * mean_log(mis_neg, true);
}

NegativeBuckets negative_buckets(DiscKind kind, int epoch, int hard_after) {
  using K = NegativeKind;
  switch (kind) {
    case DiscKind::visual:
      if (epoch > hard_after) return {{K::mismatched_gen}, {K::mismatched_gt, K::hard_same_activity}};
      return {{K::mismatched_gen}, {K::mismatched_gt}};
    case DiscKind::language: return {{K::generated}, {K::word_shuffle, K::repeat_phrase}};
    case DiscKind::pairwise: return {{K::identical_pair, K::truncated_pair}, {K::order_shuffle}};
    case DiscKind::single: return {{K::generated}, {K::mismatched_gt}};
  }
  return {};
}

std::vector<NegativeKind> own_negative_kinds(DiscKind kind) {
  NegativeBuckets b = negative_buckets(kind, 1 << 20, 0);
  std::vector<NegativeKind> all = b.mu;
  all.insert(all.end(), b.nu.begin(), b.nu.end());
  return all;
}

double DiscAccuracy::against(NegativeKind k) const {
  auto it = negative.find(to_string(k));
  if (it == negative.end()) throw ValidationError(std::string("no held-out accuracy for ") + to_string(k));
  return 0.5 * (positive + it->second);
}

// ---- training --------------------------------------------------------------

namespace {

// Items built for one clip of one video.
struct ClipBatch {
  std::vector<TokenIds> sentences;
  std::vector<TokenIds> prevs;
  std::vector<int> group;  // 0 positive, 1 mu negative, 2 nu negative; or kind index for eval
};

bool clip_has_positive(DiscKind kind, int clip) { return kind != DiscKind::pairwise || clip >= 1; }

void add_positive(ClipBatch& b, const Vocabulary& vocab, const VideoRecord& v, int clip, int ref,
                  bool pairwise, int group) {
  TokenIds s = encode_words(vocab, v.clips[static_cast<std::size_t>(clip)].refs[static_cast<std::size_t>(ref)]);
  if (s.empty()) return;
  TokenIds p;
  if (pairwise) {
    p = encode_words(vocab, v.clips[static_cast<std::size_t>(clip - 1)].refs[static_cast<std::size_t>(ref)]);
    if (p.empty()) return;
  }
  b.sentences.push_back(std::move(s));
  b.prevs.push_back(std::move(p));
  b.group.push_back(group);
}

void add_negative(ClipBatch& b, const NegativeSample& n, int group) {
  b.sentences.push_back(n.sentence);
  b.prevs.push_back(n.prev.empty() ? n.sentence : n.prev);
  b.group.push_back(group);
}

std::uint64_t kind_salt(NegativeKind k) { return static_cast<std::uint64_t>(k) + 1; }

}  // namespace

std::optional<double> discriminator_step(Discriminator& disc, const Vocabulary& vocab,
                                         const VideoRecord& video, const NegativeSources& src,
                                         NegativeKind mu_kind, NegativeKind nu_kind, double mu, double nu,
                                         const AdamConfig& adam, std::uint64_t seed, DiscEpochStats* stats,
                                         std::ostream* audit) {
  const bool pairwise = disc.kind() == DiscKind::pairwise;
  const NegativeKind kinds[2] = {mu_kind, nu_kind};
  Graph g;
  std::vector<Var> groups[3];
  for (int clip = 0; clip < static_cast<int>(video.clips.size()); ++clip) {
    if (!clip_has_positive(disc.kind(), clip)) continue;
    ClipBatch b;
    for (int ref = 0; ref < 2; ++ref) add_positive(b, vocab, video, clip, ref, pairwise, 0);
    for (int bucket = 0; bucket < 2; ++bucket) {
      for (int ref = 0; ref < 2; ++ref) {
        NegativeSpec spec{kinds[bucket],
                          sub_seed(seed, static_cast<std::uint64_t>(clip) * 4 + static_cast<std::uint64_t>(bucket) * 2 +
                                             static_cast<std::uint64_t>(ref) + 1),
                          clip, ref};
        NegativeSample n = make_negative(spec, video, src);
        if (stats != nullptr) {
          stats->kind_counts[to_string(n.requested)]++;
          stats->fallbacks += n.fallback ? 1 : 0;
        }
        if (audit != nullptr) write_audit_line(*audit, n);
        add_negative(b, n, bucket + 1);
      }
    }
    DiscOutput out = disc.forward(g, &video.clips[static_cast<std::size_t>(clip)].features, b.sentences, b.prevs);
    for (std::size_t j = 0; j < b.group.size(); ++j) {
      const Var& row = b.group[j] == 0 ? out.log_d : out.log_not_d;
      groups[b.group[j]].push_back(slice_cols(row, static_cast<Eigen::Index>(j), 1));
    }
  }
  if (groups[0].empty() || (groups[1].empty() && groups[2].empty())) return std::nullopt;
  auto mean = [](const std::vector<Var>& xs) {
    return scale(sum(concat_cols(xs)), 1.0 / static_cast<double>(xs.size()));
  };
  Var objective = mean(groups[0]);
  if (!groups[1].empty()) objective = add(objective, scale(mean(groups[1]), mu));
  if (!groups[2].empty()) objective = add(objective, scale(mean(groups[2]), nu));
  disc.params().zero_grad();
  g.backward(scale(objective, -1.0));
  adam_step(disc.params(), adam);
  return objective.scalar();
}

DiscTrainResult train_discriminator(Discriminator& disc, const Vocabulary& vocab,
                                    const std::vector<VideoRecord>& train, const Generator* generator,
                                    const DiscTrainConfig& cfg, const std::vector<VideoRecord>* heldout) {
  if (train.size() < 2) throw ValidationError("train_discriminator needs at least 2 training videos");
  if (disc.config().vocab_size != vocab.size()) {
    throw ValidationError("discriminator vocabulary size does not match corpus");
  }
  NegativeSources src{&vocab, train, generator, cfg.temperature};
  std::ofstream audit;
  if (!cfg.audit_path.empty()) {
    audit.open(cfg.audit_path);
    if (!audit) throw Error("cannot write negative audit log '" + cfg.audit_path + "'");
  }
  DiscTrainResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const NegativeBuckets buckets = negative_buckets(disc.kind(), epoch, cfg.hard_negatives_after);
    for (NegativeKind k : buckets.mu) {
      if (needs_generator(k) && generator == nullptr) {
        throw ValidationError(std::string(to_string(disc.kind())) +
                              " discriminator training needs a generator for generated negatives");
      }
    }
    Rng rng = make_rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), rng);
    // Kinds rotate over videos from a random offset, so every kind of a
    // bucket shows up in each epoch.
    const std::size_t mu_off = rng() % buckets.mu.size();
    const std::size_t nu_off = rng() % buckets.nu.size();
    DiscEpochStats stats;
    stats.epoch = epoch;
    double objective_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t idx = order[pos];
      const VideoRecord& video = train[idx];
      const NegativeKind kinds[2] = {buckets.mu[(mu_off + pos) % buckets.mu.size()],
                                     buckets.nu[(nu_off + pos) % buckets.nu.size()]};
      std::optional<double> obj =
          discriminator_step(disc, vocab, video, src, kinds[0], kinds[1], cfg.mu, cfg.nu, cfg.adam,
                             sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch), idx + 1), &stats,
                             audit.is_open() ? &audit : nullptr);
      if (!obj) {
        ++stats.skipped;
        std::cerr << "warning: skipping degenerate discriminator batch for " << video.id << "\n";
        continue;
      }
      objective_sum += *obj;
      ++stats.batches;
    }
    stats.objective = stats.batches == 0 ? 0.0 : objective_sum / static_cast<double>(stats.batches);
    if (heldout != nullptr && heldout->size() >= 2) {
      stats.heldout = evaluate_discriminator(disc, vocab, *heldout, generator,
                                             sub_seed(cfg.seed, 0xe7a1, static_cast<std::uint64_t>(epoch)),
                                             cfg.temperature);
    }
    if (cfg.on_epoch) cfg.on_epoch(stats);
    result.curve.push_back(std::move(stats));
  }
  return result;
}

DiscAccuracy evaluate_discriminator(const Discriminator& disc, const Vocabulary& vocab,
                                    const std::vector<VideoRecord>& videos, const Generator* generator,
                                    std::uint64_t seed, double temperature) {
  if (videos.size() < 2) throw ValidationError("evaluate_discriminator needs at least 2 videos");
  std::vector<NegativeKind> kinds;
  for (NegativeKind k : own_negative_kinds(disc.kind())) {
    if (!needs_generator(k) || generator != nullptr) kinds.push_back(k);
  }
  const bool pairwise = disc.kind() == DiscKind::pairwise;
  NegativeSources src{&vocab, videos, generator, temperature};
  std::size_t pos_total = 0, pos_correct = 0;
  std::vector<std::size_t> neg_total(kinds.size(), 0), neg_correct(kinds.size(), 0);
  for (std::size_t idx = 0; idx < videos.size(); ++idx) {
    const VideoRecord& video = videos[idx];
    for (int clip = 0; clip < static_cast<int>(video.clips.size()); ++clip) {
      if (!clip_has_positive(disc.kind(), clip)) continue;
      ClipBatch b;
      for (int ref = 0; ref < 2; ++ref) add_positive(b, vocab, video, clip, ref, pairwise, -1);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (int ref = 0; ref < 2; ++ref) {
          NegativeSpec spec{kinds[k],
                            sub_seed(seed, idx * 64 + static_cast<std::uint64_t>(clip) * 2 +
                                               static_cast<std::uint64_t>(ref),
                                     kind_salt(kinds[k])),
                            clip, ref};
          add_negative(b, make_negative(spec, video, src), static_cast<int>(k));
        }
      }
      Vector d = disc.score(&video.clips[static_cast<std::size_t>(clip)].features, b.sentences, b.prevs);
      for (std::size_t j = 0; j < b.group.size(); ++j) {
        const double s = d(static_cast<Eigen::Index>(j));
        if (b.group[j] < 0) {
          ++pos_total;
          pos_correct += s > 0.5 ? 1 : 0;
        } else {
          const auto k = static_cast<std::size_t>(b.group[j]);
          ++neg_total[k];
          neg_correct[k] += s < 0.5 ? 1 : 0;
        }
      }
    }
  }
  DiscAccuracy acc;
  acc.positives = pos_total;
  acc.positive = pos_total == 0 ? 0.0 : static_cast<double>(pos_correct) / static_cast<double>(pos_total);
  double neg_mean = 0.0;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const double a = neg_total[k] == 0 ? 0.0
                                       : static_cast<double>(neg_correct[k]) / static_cast<double>(neg_total[k]);
    acc.negative[to_string(kinds[k])] = a;
    acc.counts[to_string(kinds[k])] = neg_total[k];
    neg_mean += a;
  }
  neg_mean = kinds.empty() ? 0.0 : neg_mean / static_cast<double>(kinds.size());
  acc.balanced = 0.5 * acc.positive + 0.5 * neg_mean;
  return acc;
}

}  // namespace advinfer
