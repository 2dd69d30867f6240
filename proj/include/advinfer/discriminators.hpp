#pragma once

// Visual, language, pairwise and single discriminators plus their training.

#include "advinfer/corpus.hpp"
#include "advinfer/generator.hpp"
#include "advinfer/layers.hpp"
#include "advinfer/negatives.hpp"
#include "advinfer/params.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace advinfer {

enum class DiscKind { visual, language, pairwise, single };
const char* to_string(DiscKind k);
DiscKind disc_kind_from_string(const std::string& s);

struct DiscConfig {
  DiscKind kind = DiscKind::visual;
  int vocab_size = 0;
  FeatureDims dims;
  int embed = 64;      // BOW embedding (visual) / word embedding (others)
  int hidden = 64;     // BiLSTM hidden size per direction
  int attention = 32;
  int fusion = 64;     // low-rank bilinear width

  Metadata to_metadata() const;
  static DiscConfig from_metadata(const Metadata& m);
  bool operator==(const DiscConfig&) const = default;
};

// log D and log(1 - D), both 1 x B.
struct DiscOutput {
  Var log_d;
  Var log_not_d;
};

class Discriminator {
 public:
  virtual ~Discriminator() = default;

  const DiscConfig& config() const { return cfg_; }
  DiscKind kind() const { return cfg_.kind; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  bool needs_clip() const { return cfg_.kind == DiscKind::visual || cfg_.kind == DiscKind::single; }
  bool needs_prev() const { return cfg_.kind == DiscKind::pairwise; }

  // B sentences (content ids, nonempty) against one clip. `clip` is ignored by
  // the language / pairwise discriminators; `prevs` is used by pairwise only
  // and must then have one entry per sentence.
  virtual DiscOutput forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                             std::span<const TokenIds> prevs) const = 0;

  // Scores D in (0,1), one per sentence.
  Vector score(const ClipFeatures* clip, std::span<const TokenIds> sentences,
               std::span<const TokenIds> prevs = {}) const;

  void save(const std::string& path, const Vocabulary& vocab) const;

  virtual std::unique_ptr<Discriminator> clone() const = 0;

 protected:
  Discriminator(const DiscConfig& cfg, ParamStore store) : cfg_(cfg), store_(std::move(store)) {}
  Discriminator(const Discriminator& o) : cfg_(o.cfg_), store_(o.store_) {}
  void check_batch(const ClipFeatures* clip, std::span<const TokenIds> sentences,
                   std::span<const TokenIds> prevs) const;

  DiscConfig cfg_;
  ParamStore store_;
};

// D_V: BOW sentence embedding omega, per-modality attention queried by omega,
// low-rank bilinear fusion reduced to a scalar p_f, modality weights
// lambda = softmax(A omega), D_V = sum_f lambda_f p_f.
class VisualDisc final : public Discriminator {
 public:
  VisualDisc(const DiscConfig& cfg, ParamStore store);
  VisualDisc(const VisualDisc& o);
  DiscOutput forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                     std::span<const TokenIds> prevs) const override;
  std::unique_ptr<Discriminator> clone() const override;

  struct Parts {
    Matrix p;       // 3 x B per-modality scores
    Matrix lambda;  // 3 x B modality weights
  };
  Parts parts(const ClipFeatures& clip, std::span<const TokenIds> sentences) const;

 private:
  void bind();
  struct Modality {
    AttentionParams attention;
    Parameter* u = nullptr;  // R x D_f
    Parameter* v = nullptr;  // R x E
    Linear reduce;           // R -> 1
  };
  Var bow_batch(Graph& g, std::span<const TokenIds> sentences) const;
  Var logits(Graph& g, const ClipFeatures& clip, std::span<const TokenIds> sentences,
             Var* lambda_logits) const;
  Linear bow_;
  Linear modality_weights_;  // E -> 3, no bias
  std::array<Modality, 3> modalities_{};
};

// D_L = sigma(W_L [h_fwd; h_bwd] + b_L).
class LanguageDisc final : public Discriminator {
 public:
  LanguageDisc(const DiscConfig& cfg, ParamStore store);
  LanguageDisc(const LanguageDisc& o);
  DiscOutput forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                     std::span<const TokenIds> prevs) const override;
  std::unique_ptr<Discriminator> clone() const override;

 private:
  void bind();
  BiLstmParams encoder_{};
  Linear head_;
};

// D_P = sigma(W_P [enc(prev); enc(cur); enc(prev) * enc(cur)] + b_P), encoder
// shared by both.
class PairwiseDisc final : public Discriminator {
 public:
  PairwiseDisc(const DiscConfig& cfg, ParamStore store);
  PairwiseDisc(const PairwiseDisc& o);
  DiscOutput forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                     std::span<const TokenIds> prevs) const override;
  std::unique_ptr<Discriminator> clone() const override;

 private:
  void bind();
  BiLstmParams encoder_{};
  Linear head_;
};

// Single-discriminator baseline: BiLSTM sentence code, visual attention
// queried by it, bilinear fusion, affine + sigma.
class SingleDisc final : public Discriminator {
 public:
  SingleDisc(const DiscConfig& cfg, ParamStore store);
  SingleDisc(const SingleDisc& o);
  DiscOutput forward(Graph& g, const ClipFeatures* clip, std::span<const TokenIds> sentences,
                     std::span<const TokenIds> prevs) const override;
  std::unique_ptr<Discriminator> clone() const override;

 private:
  void bind();
  BiLstmParams encoder_{};
  std::array<AttentionParams, 3> attention_{};
  Linear visual_;    // concat(v_m, v_a, v_o) -> R
  Linear sentence_;  // 2H -> R
  Linear head_;      // R -> 1
};

// Fresh randomly initialised discriminator of cfg.kind.
std::unique_ptr<Discriminator> make_discriminator(const DiscConfig& cfg, std::uint64_t seed);
std::unique_ptr<Discriminator> load_discriminator(const std::string& path,
                                                  const Vocabulary* expect_vocab = nullptr);

// Zeroes the final affine layer so every score is exactly 0.5 (tests).
void zero_head(Discriminator& d);

// ---- objective and training ------------------------------------------------

// mean log D(pos) + mu * mean log(1 - D(gen)) + nu * mean log(1 - D(mis)).
// Empty groups contribute nothing.
double disc_objective(std::span<const double> pos, std::span<const double> gen_neg,
                      std::span<const double> mis_neg, double mu, double nu);

// Negative kinds per bucket of the objective for one discriminator.
struct NegativeBuckets {
  std::vector<NegativeKind> mu;  // generated-type negatives
  std::vector<NegativeKind> nu;  // mismatch / corruption negatives
};
// epoch is 1-based; visual hard negatives join nu once epoch > hard_after.
NegativeBuckets negative_buckets(DiscKind kind, int epoch, int hard_after);
// All kinds a discriminator is trained against (hard negatives included).
std::vector<NegativeKind> own_negative_kinds(DiscKind kind);

struct DiscAccuracy {
  double positive = 0.0;                       // fraction of positives with D > 0.5
  std::map<std::string, double> negative;      // per kind: fraction with D < 0.5
  std::map<std::string, std::size_t> counts;   // per kind sample count
  std::size_t positives = 0;
  // 0.5 * positive + 0.5 * mean over kinds of negative accuracy.
  double balanced = 0.0;
  // 0.5 * (positive + negative[kind]).
  double against(NegativeKind k) const;
};

struct DiscEpochStats {
  int epoch = 0;
  double objective = 0.0;  // mean per-batch objective (<= 0)
  std::map<std::string, std::size_t> kind_counts;
  std::size_t batches = 0;
  std::size_t skipped = 0;
  std::size_t fallbacks = 0;
  std::optional<DiscAccuracy> heldout;
};

struct DiscTrainConfig {
  AdamConfig adam;
  int epochs = 5;
  double mu = 0.5;
  double nu = 0.5;
  double temperature = 1.0;  // generator sampling temperature for negatives
  int hard_negatives_after = 2;
  std::uint64_t seed = 0;
  std::string audit_path;  // JSONL negative audit log, optional
  std::function<void(const DiscEpochStats&)> on_epoch;
};

struct DiscTrainResult {
  std::vector<DiscEpochStats> curve;
};

// One Adam step on the objective for a single video with one negative kind
// per bucket. Returns the objective value, or nullopt (no step) for a
// degenerate batch.
std::optional<double> discriminator_step(Discriminator& disc, const Vocabulary& vocab,
                                         const VideoRecord& video, const NegativeSources& src,
                                         NegativeKind mu_kind, NegativeKind nu_kind, double mu, double nu,
                                         const AdamConfig& adam, std::uint64_t seed,
                                         DiscEpochStats* stats = nullptr, std::ostream* audit = nullptr);

DiscTrainResult train_discriminator(Discriminator& disc, const Vocabulary& vocab,
                                    const std::vector<VideoRecord>& train,
                                    const Generator* generator, const DiscTrainConfig& cfg,
                                    const std::vector<VideoRecord>* heldout = nullptr);

// Held-out accuracy at threshold 0.5 against the discriminator's own negative
// kinds; negatives are drawn from `videos` themselves.
DiscAccuracy evaluate_discriminator(const Discriminator& disc, const Vocabulary& vocab,
                                    const std::vector<VideoRecord>& videos,
                                    const Generator* generator, std::uint64_t seed,
                                    double temperature = 1.0);

}  // namespace advinfer
