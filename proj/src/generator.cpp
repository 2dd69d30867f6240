#include "advinfer/generator.hpp"

#include "advinfer/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace advinfer {

namespace {

constexpr const char* kModalityNames[3] = {"motion", "appearance", "objects"};
// Added to PAD / BOS logits so they are never produced.
constexpr double kBlockedLogit = -1e4;

const Matrix& modality_rows(const ClipFeatures& clip, int f) {
  return f == 0 ? clip.motion : (f == 1 ? clip.appearance : clip.objects);
}

int modality_dim(const FeatureDims& d, int f) {
  return f == 0 ? d.motion : (f == 1 ? d.appearance : d.objects);
}

int argmax_lowest(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

std::string meta_get(const Metadata& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

Metadata GeneratorConfig::to_metadata() const {
  return {{"kind", "generator"},
          {"vocab_size", std::to_string(vocab_size)},
          {"dims.motion", std::to_string(dims.motion)},
          {"dims.appearance", std::to_string(dims.appearance)},
          {"dims.objects", std::to_string(dims.objects)},
          {"embed", std::to_string(embed)},
          {"hidden", std::to_string(hidden)},
          {"attention", std::to_string(attention)},
          {"max_words", std::to_string(max_words)}};
}

GeneratorConfig GeneratorConfig::from_metadata(const Metadata& m) {
  if (meta_get(m, "kind") != "generator") throw FormatError("checkpoint is not a generator");
  GeneratorConfig c;
  c.vocab_size = std::stoi(meta_get(m, "vocab_size"));
  c.dims.motion = std::stoi(meta_get(m, "dims.motion"));
  c.dims.appearance = std::stoi(meta_get(m, "dims.appearance"));
  c.dims.objects = std::stoi(meta_get(m, "dims.objects"));
  c.embed = std::stoi(meta_get(m, "embed"));
  c.hidden = std::stoi(meta_get(m, "hidden"));
  c.attention = std::stoi(meta_get(m, "attention"));
  c.max_words = std::stoi(meta_get(m, "max_words"));
  return c;
}

ClipCache ClipValues::bind(Graph& g) const {
  ClipCache c;
  for (int f = 0; f < 3; ++f) {
    c.modalities[static_cast<std::size_t>(f)] = {g.constant(segments[static_cast<std::size_t>(f)]),
                                                 g.constant(segment_proj[static_cast<std::size_t>(f)])};
  }
  return c;
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.vocab_size <= Vocabulary::kNumSpecial || cfg.hidden < 1 || cfg.embed < 1 ||
      cfg.attention < 1 || cfg.max_words < 1) {
    throw ValidationError("invalid generator configuration");
  }
  Rng rng = make_rng(seed);
  store_.create_uniform("gen.embed", cfg.embed, cfg.vocab_size, 0.1, rng);
  for (int f = 0; f < 3; ++f) {
    make_attention(store_, std::string("gen.att.") + kModalityNames[f], cfg.hidden,
                   modality_dim(cfg.dims, f), cfg.attention, rng);
  }
  const int visual = cfg.dims.motion + cfg.dims.appearance + cfg.dims.objects;
  make_lstm(store_, "gen.lstm", visual + cfg.embed + cfg.hidden, cfg.hidden, rng);
  make_linear(store_, "gen.out", cfg.hidden, cfg.vocab_size, rng);
  bind();
}

Generator::Generator(const GeneratorConfig& cfg, ParamStore store)
    : cfg_(cfg), store_(std::move(store)) {
  bind();
}

Generator::Generator(const Generator& other) : cfg_(other.cfg_), store_(other.store_) { bind(); }

Generator& Generator::operator=(const Generator& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    store_ = other.store_;
    bind();
  }
  return *this;
}

Generator::Generator(Generator&& other) noexcept
    : cfg_(other.cfg_),
      store_(std::move(other.store_)),
      embed_(other.embed_),
      attention_(other.attention_),
      lstm_(other.lstm_),
      out_(other.out_) {}

Generator& Generator::operator=(Generator&& other) noexcept {
  cfg_ = other.cfg_;
  store_ = std::move(other.store_);
  embed_ = other.embed_;
  attention_ = other.attention_;
  lstm_ = other.lstm_;
  out_ = other.out_;
  return *this;
}

void Generator::bind() {
  embed_ = &store_.at("gen.embed");
  for (int f = 0; f < 3; ++f) {
    const std::string p = std::string("gen.att.") + kModalityNames[f];
    attention_[static_cast<std::size_t>(f)] = {&store_.at(p + ".query"), &store_.at(p + ".segment"),
                                               &store_.at(p + ".bias"), &store_.at(p + ".score")};
  }
  lstm_ = {&store_.at("gen.lstm.weight"), &store_.at("gen.lstm.bias")};
  out_ = {&store_.at("gen.out.weight"), &store_.at("gen.out.bias")};
  if (embed_->value.cols() != cfg_.vocab_size || lstm_.hidden_size() != cfg_.hidden) {
    throw FormatError("generator parameters do not match configuration");
  }
}

ClipCache Generator::prepare_clip(Graph& g, const ClipFeatures& clip) const {
  ClipCache c;
  for (int f = 0; f < 3; ++f) {
    c.modalities[static_cast<std::size_t>(f)] =
        prepare_segments(g, attention_[static_cast<std::size_t>(f)], modality_rows(clip, f));
  }
  return c;
}

ClipValues Generator::clip_values(const ClipFeatures& clip) const {
  ClipValues v;
  for (int f = 0; f < 3; ++f) {
    const auto k = static_cast<std::size_t>(f);
    const Matrix& rows = modality_rows(clip, f);
    if (rows.cols() != attention_[k].segment->value.cols()) {
      throw ShapeError(std::string("clip ") + kModalityNames[f] + " features have dim " +
                       std::to_string(rows.cols()) + ", generator expects " +
                       std::to_string(attention_[k].segment->value.cols()));
    }
    v.segments[k] = rows.transpose();
    v.segment_proj[k] = (attention_[k].segment->value * v.segments[k]).colwise() +
                        attention_[k].bias->value.col(0);
  }
  return v;
}

Generator::Step Generator::step(Graph& g, const ClipCache& clip, std::span<const int> prev_words,
                                const LstmState& state, const Var& context) const {
  const auto B = static_cast<Eigen::Index>(prev_words.size());
  if (state.h.cols() != B || context.cols() != B || context.rows() != cfg_.hidden) {
    throw ShapeError("generator step: state/context/batch size mismatch");
  }
  std::vector<Var> parts;
  parts.reserve(5);
  for (int f = 0; f < 3; ++f) {
    const auto k = static_cast<std::size_t>(f);
    parts.push_back(temporal_attention(g, attention_[k], state.h, clip.modalities[k]));
  }
  parts.push_back(embedding(g.param(*embed_), prev_words));
  parts.push_back(context);
  LstmState next = lstm_cell(g, lstm_, concat_rows(parts), state);
  Matrix block = Matrix::Zero(cfg_.vocab_size, 1);
  block(Vocabulary::kPad, 0) = kBlockedLogit;
  block(Vocabulary::kBos, 0) = kBlockedLogit;
  Var logits = add(out_(g, next.h), g.constant(std::move(block)));
  return {logits, next};
}

Generator::Forced Generator::teacher_force(Graph& g, const ClipCache& clip,
                                           std::span<const TokenIds> sentences,
                                           const Var& context) const {
  const auto B = static_cast<Eigen::Index>(sentences.size());
  // Input steps per sentence. A sentence cut at the word cap (no EOS) gets one
  // extra unweighted step so final_h matches what decoding threads forward.
  std::vector<std::size_t> steps_of;
  std::size_t steps = 0;
  for (const TokenIds& s : sentences) {
    if (s.size() < 2 || s.front() != Vocabulary::kBos) {
      throw ValidationError("teacher forcing needs BOS-initial sequences with at least one target");
    }
    steps_of.push_back(s.back() == Vocabulary::kEos ? s.size() - 1 : s.size());
    steps = std::max(steps, steps_of.back());
  }
  LstmState st = zero_state(g, cfg_.hidden, B);
  Forced out;
  std::vector<Var> losses;
  std::vector<int> inputs(sentences.size()), targets(sentences.size());
  std::vector<double> weights(sentences.size());
  RowVector mask(B);
  for (std::size_t t = 0; t < steps; ++t) {
    bool all_live = true;
    bool any_weight = false;
    for (std::size_t b = 0; b < sentences.size(); ++b) {
      const TokenIds& s = sentences[b];
      const bool live = t < steps_of[b];
      const bool has_target = t + 1 < s.size();
      inputs[b] = live ? s[t] : Vocabulary::kEos;
      targets[b] = has_target ? s[t + 1] : 0;
      weights[b] = has_target ? 1.0 : 0.0;
      mask(static_cast<Eigen::Index>(b)) = live ? 1.0 : 0.0;
      all_live = all_live && live;
      any_weight = any_weight || has_target;
      out.tokens += has_target ? 1 : 0;
    }
    Step s = step(g, clip, inputs, st, context);
    if (any_weight) losses.push_back(cross_entropy(s.logits, targets, weights));
    st = all_live ? s.state : LstmState{blend(s.state.h, st.h, mask), blend(s.state.c, st.c, mask)};
  }
  out.nll = losses.size() == 1 ? losses[0] : sum(concat_rows(losses));
  out.final_h = st.h;
  return out;
}

void Generator::save(const std::string& path, const Vocabulary& vocab) const {
  Metadata meta = cfg_.to_metadata();
  meta["vocab_hash"] = std::to_string(vocab.hash());
  save_checkpoint(store_, meta, path);
}

Generator Generator::load(const std::string& path, const Vocabulary* expect_vocab) {
  Metadata meta;
  ParamStore store = load_checkpoint(path, &meta);
  if (expect_vocab != nullptr && meta_get(meta, "vocab_hash") != std::to_string(expect_vocab->hash())) {
    throw ValidationError("checkpoint '" + path + "' was trained with a different vocabulary");
  }
  return Generator(GeneratorConfig::from_metadata(meta), std::move(store));
}

// ---- value-level decoding --------------------------------------------------

DecoderState DecoderState::zero(int hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden)};
}

TokenIds SampledSentence::words() const {
  TokenIds w;
  for (int t : tokens) {
    if (t != Vocabulary::kEos) w.push_back(t);
  }
  return w;
}

double SampledSentence::normalized_logprob() const {
  return tokens.empty() ? logprob : logprob / static_cast<double>(tokens.size());
}

namespace {

struct StepValues {
  Matrix logprobs;  // V x B
  Matrix h;
  Matrix c;
};

StepValues run_step(const Generator& model, const ClipValues& clip, std::span<const int> prev,
                    const Matrix& h, const Matrix& c, const Matrix& context) {
  Graph g(false);
  ClipCache cache = clip.bind(g);
  LstmState st{g.constant(h), g.constant(c)};
  Generator::Step s = model.step(g, cache, prev, st, g.constant(context));
  return {log_softmax(s.logits).value(), s.state.h.value(), s.state.c.value()};
}

Matrix gather_cols(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace

StepResult decode_step(const Generator& model, const ClipFeatures& clip, int prev_word,
                       const DecoderState& state, const std::optional<Vector>& context) {
  const int H = model.hidden();
  if (state.h.size() != H || state.c.size() != H) throw ShapeError("decode_step: bad state size");
  if (prev_word < 0 || prev_word >= model.config().vocab_size) {
    throw ValidationError("decode_step: word id out of range");
  }
  Vector ctx = context.value_or(Vector::Zero(H));
  if (ctx.size() != H) throw ShapeError("decode_step: bad context size");
  const int words[] = {prev_word};
  StepValues v = run_step(model, model.clip_values(clip), words, state.h, state.c, ctx);
  return {v.logprobs.col(0).array().exp().matrix(), {v.h.col(0), v.c.col(0)}};
}

int sample_index(const Vector& p, Rng& rng) {
  const double total = p.sum();
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    acc += p(i);
    last_positive = static_cast<int>(i);
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

std::vector<SampledSentence> sample_sentences(const Generator& model, const ClipFeatures& clip,
                                              const Vector& context, int K, double tau,
                                              std::uint64_t seed) {
  if (K < 1) throw ValidationError("sample_sentences: K must be >= 1");
  if (!(tau > 0.0)) throw ValidationError("sample_sentences: temperature must be positive");
  const int H = model.hidden();
  if (context.size() != H) throw ShapeError("sample_sentences: bad context size");
  const ClipValues values = model.clip_values(clip);
  std::vector<SampledSentence> out(static_cast<std::size_t>(K));
  std::vector<Rng> rngs;
  for (int k = 0; k < K; ++k) rngs.push_back(make_rng(sub_seed(seed, static_cast<std::uint64_t>(k))));

  std::vector<int> alive(static_cast<std::size_t>(K));
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<int> prev(static_cast<std::size_t>(K), Vocabulary::kBos);
  Matrix h = Matrix::Zero(H, K), c = Matrix::Zero(H, K);
  const int max_words = model.config().max_words;
  for (int m = 0; m <= max_words && !alive.empty(); ++m) {
    Matrix ctx = context.replicate(1, static_cast<Eigen::Index>(alive.size()));
    StepValues v = run_step(model, values, prev, h, c, ctx);
    std::vector<int> keep;
    std::vector<int> next_prev;
    for (std::size_t j = 0; j < alive.size(); ++j) {
      SampledSentence& s = out[static_cast<std::size_t>(alive[j])];
      const auto col = static_cast<Eigen::Index>(j);
      if (m == max_words) {
        s.final_h = v.h.col(col);
        continue;
      }
      Vector p = v.logprobs.col(col).array().exp();
      int w = sample_index(softmax_with_temperature(p, tau), rngs[static_cast<std::size_t>(alive[j])]);
      double lp = v.logprobs(w, col);
      s.tokens.push_back(w);
      s.token_logprobs.push_back(lp);
      s.logprob += lp;
      if (w == Vocabulary::kEos) {
        s.final_h = v.h.col(col);
      } else {
        keep.push_back(static_cast<int>(j));
        next_prev.push_back(w);
      }
    }
    std::vector<int> next_alive;
    for (int j : keep) next_alive.push_back(alive[static_cast<std::size_t>(j)]);
    h = gather_cols(v.h, keep);
    c = gather_cols(v.c, keep);
    alive = std::move(next_alive);
    prev = std::move(next_prev);
  }
  return out;
}

SampledSentence greedy_sentence(const Generator& model, const ClipFeatures& clip,
                                const Vector& context) {
  const int H = model.hidden();
  if (context.size() != H) throw ShapeError("greedy_sentence: bad context size");
  const ClipValues values = model.clip_values(clip);
  SampledSentence s;
  Matrix h = Matrix::Zero(H, 1), c = Matrix::Zero(H, 1);
  int prev = Vocabulary::kBos;
  const int max_words = model.config().max_words;
  for (int m = 0; m <= max_words; ++m) {
    const int words[] = {prev};
    StepValues v = run_step(model, values, words, h, c, context);
    if (m == max_words) {
      s.final_h = v.h.col(0);
      break;
    }
    int w = argmax_lowest(v.logprobs.col(0));
    s.tokens.push_back(w);
    s.token_logprobs.push_back(v.logprobs(w, 0));
    s.logprob += v.logprobs(w, 0);
    if (w == Vocabulary::kEos) {
      s.final_h = v.h.col(0);
      break;
    }
    prev = w;
    h = v.h;
    c = v.c;
  }
  return s;
}

Paragraph greedy_decode(const Generator& model, const VideoRecord& video) {
  Paragraph p{video.id, {}};
  Vector context = Vector::Zero(model.hidden());
  for (const Clip& clip : video.clips) {
    p.sentences.push_back(greedy_sentence(model, clip.features, context));
    context = p.sentences.back().final_h;
  }
  return p;
}

SampledSentence beam_sentence(const Generator& model, const ClipFeatures& clip,
                              const Vector& context, int beam) {
  if (beam < 1) throw ValidationError("beam size must be >= 1");
  const int H = model.hidden();
  if (context.size() != H) throw ShapeError("beam_sentence: bad context size");
  const ClipValues values = model.clip_values(clip);
  struct Hyp {
    SampledSentence s;
    Vector h, c;
    int prev = Vocabulary::kBos;
  };
  std::vector<Hyp> live(1);
  live[0].h = Vector::Zero(H);
  live[0].c = Vector::Zero(H);
  std::vector<SampledSentence> finished;
  const int max_words = model.config().max_words;
  for (int m = 0; m <= max_words && !live.empty(); ++m) {
    const auto B = static_cast<Eigen::Index>(live.size());
    Matrix h(H, B), c(H, B);
    std::vector<int> prev;
    for (Eigen::Index j = 0; j < B; ++j) {
      h.col(j) = live[static_cast<std::size_t>(j)].h;
      c.col(j) = live[static_cast<std::size_t>(j)].c;
      prev.push_back(live[static_cast<std::size_t>(j)].prev);
    }
    StepValues v = run_step(model, values, prev, h, c, context.replicate(1, B));
    if (m == max_words) {
      for (Eigen::Index j = 0; j < B; ++j) {
        live[static_cast<std::size_t>(j)].s.final_h = v.h.col(j);
        finished.push_back(std::move(live[static_cast<std::size_t>(j)].s));
      }
      break;
    }
    struct Cand {
      double score;
      int hyp;
      int word;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(B * v.logprobs.rows()));
    for (Eigen::Index j = 0; j < B; ++j) {
      for (Eigen::Index w = 0; w < v.logprobs.rows(); ++w) {
        if (w == Vocabulary::kPad || w == Vocabulary::kBos) continue;
        cands.push_back({live[static_cast<std::size_t>(j)].s.logprob + v.logprobs(w, j),
                         static_cast<int>(j), static_cast<int>(w)});
      }
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.word < b.word;
                      });
    std::vector<Hyp> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Cand& cd = cands[k];
      Hyp hyp;
      hyp.s = live[static_cast<std::size_t>(cd.hyp)].s;
      const double lp = v.logprobs(cd.word, cd.hyp);
      hyp.s.tokens.push_back(cd.word);
      hyp.s.token_logprobs.push_back(lp);
      hyp.s.logprob += lp;
      if (cd.word == Vocabulary::kEos) {
        hyp.s.final_h = v.h.col(cd.hyp);
        finished.push_back(std::move(hyp.s));
      } else {
        hyp.h = v.h.col(cd.hyp);
        hyp.c = v.c.col(cd.hyp);
        hyp.prev = cd.word;
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
    if (static_cast<int>(finished.size()) >= beam) break;
  }
  return finished[logprob_rerank(finished)];
}

Paragraph beam_search(const Generator& model, const VideoRecord& video, int beam) {
  if (beam < 1) throw ValidationError("beam size must be >= 1");
  Paragraph p{video.id, {}};
  Vector context = Vector::Zero(model.hidden());
  for (const Clip& clip : video.clips) {
    p.sentences.push_back(beam_sentence(model, clip.features, context, beam));
    context = p.sentences.back().final_h;
  }
  return p;
}

std::size_t logprob_rerank(std::span<const SampledSentence> candidates) {
  if (candidates.empty()) throw ValidationError("logprob_rerank of an empty candidate set");
  std::size_t best = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (candidates[k].normalized_logprob() > candidates[best].normalized_logprob()) best = k;
  }
  return best;
}

// ---- MLE -------------------------------------------------------------------

Generator::Forced video_nll(Graph& g, const Generator& model, const Vocabulary& vocab,
                            const VideoRecord& video) {
  Generator::Forced total;
  Var context = g.constant(Matrix::Zero(model.hidden(), 2));
  std::vector<Var> losses;
  for (const Clip& clip : video.clips) {
    const TokenIds refs[] = {encode_sentence(vocab, clip.refs[0]),
                             encode_sentence(vocab, clip.refs[1])};
    ClipCache cache = model.prepare_clip(g, clip.features);
    Generator::Forced f = model.teacher_force(g, cache, refs, context);
    losses.push_back(f.nll);
    total.tokens += f.tokens;
    context = f.final_h;
  }
  total.nll = losses.size() == 1 ? losses[0] : sum(concat_rows(losses));
  total.final_h = context;
  return total;
}

double evaluate_ce(const Generator& model, const Vocabulary& vocab,
                   const std::vector<VideoRecord>& videos) {
  double nll = 0.0;
  long tokens = 0;
  for (const VideoRecord& v : videos) {
    Graph g(false);
    Generator::Forced f = video_nll(g, model, vocab, v);
    nll += f.nll.scalar();
    tokens += f.tokens;
  }
  return tokens == 0 ? 0.0 : nll / static_cast<double>(tokens);
}

MleResult train_mle(Generator& model, const Vocabulary& vocab,
                    const std::vector<VideoRecord>& train, const MleConfig& cfg,
                    const std::vector<VideoRecord>* heldout) {
  if (train.empty()) throw ValidationError("train_mle: empty training corpus");
  if (model.config().vocab_size != vocab.size()) {
    throw ValidationError("train_mle: generator vocabulary size does not match corpus");
  }
  MleResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = make_rng(sub_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double nll = 0.0;
    long tokens = 0;
    for (std::size_t idx : order) {
      try {
        model.params().zero_grad();
        Graph g;
        Generator::Forced f = video_nll(g, model, vocab, train[idx]);
        Var loss = scale(f.nll, 1.0 / static_cast<double>(f.tokens));
        g.backward(loss);
        adam_step(model.params(), cfg.adam);
        nll += f.nll.scalar();
        tokens += f.tokens;
      } catch (const NumericError& e) {
        // The store still holds the last good parameters at this point.
        if (!cfg.divergence_checkpoint.empty()) {
          model.save(cfg.divergence_checkpoint, vocab);
        }
        throw NumericError(std::string("MLE training diverged in epoch ") +
                           std::to_string(epoch + 1) + ": " + e.what());
      }
    }
    result.train_ce.push_back(nll / static_cast<double>(tokens));
    double held = std::numeric_limits<double>::quiet_NaN();
    if (heldout != nullptr && !heldout->empty()) {
      held = evaluate_ce(model, vocab, *heldout);
      result.heldout_ce.push_back(held);
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch + 1, result.train_ce.back(), held);
  }
  return result;
}

}  // namespace advinfer
