#pragma once

// Experiment configuration (flat "section.key = value" text) and run
// manifests with content hashes, timings and the seeds each stage used.

#include "advinfer/corpus.hpp"
#include "advinfer/discriminators.hpp"
#include "advinfer/generator.hpp"
#include "advinfer/inference.hpp"
#include "advinfer/rl_gan.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace advinfer {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "run";

  struct Corpus {
    std::string path;  // load instead of generating when set
    CorpusSpec spec;
    bool operator==(const Corpus&) const = default;
  } corpus;

  struct Gen {
    int embed = 64;
    int hidden = 64;
    int attention = 64;
    int epochs = 10;
    double lr = 5e-4;
    double max_grad_norm = 5.0;
    bool operator==(const Gen&) const = default;
  } gen;

  struct Disc {
    int embed = 64;
    int hidden = 64;
    int attention = 32;
    int fusion = 64;
    int epochs = 5;
    double lr = 5e-4;
    double max_grad_norm = 5.0;
    double mu = 0.5;
    double nu = 0.5;
    double temperature = 1.0;
    int hard_negatives_after = 2;
    bool operator==(const Disc&) const = default;
  } disc;

  struct Scst {
    std::string reward = "cider_d";
    double lr = 5e-5;
    int epochs = 1;
    int max_updates = 0;
    std::string probe_token;
    bool operator==(const Scst&) const = default;
  } scst;

  struct Gan {
    double lambda_mix = 0.995;
    int generator_steps_per_disc_step = 5;
    double mu = 0.5;
    double nu = 0.5;
    double gen_lr = 5e-5;
    double disc_lr = 5e-4;
    int epochs = 1;
    bool use_ce = true;
    double temperature = 1.0;
    bool operator==(const Gan&) const = default;
  } gan;

  struct Infer {
    std::string split = "test";
    int K = 100;
    double tau = 0.2;
    int beam = 3;
    double alpha = 0.8;
    double beta = 0.2;
    double gamma = 1.0;
    bool audit = true;  // per-candidate scores in prediction files
    bool operator==(const Infer&) const = default;
  } infer;

  struct Metrics {
    std::string lexicon;  // default list when empty
    bool operator==(const Metrics&) const = default;
  } metrics;

  // Throws ValidationError naming the offending key.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;

  // Sets one dotted key from its text form; throws ValidationError for unknown
  // keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Every key with its effective value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  GeneratorConfig generator_config(const Vocabulary& vocab, const FeatureDims& dims) const;
  MleConfig mle_config() const;
  DiscConfig disc_config(DiscKind kind, const Vocabulary& vocab, const FeatureDims& dims) const;
  DiscTrainConfig disc_train_config(DiscKind kind) const;
  ScstConfig scst_config() const;
  GanConfig gan_config() const;
  InferenceConfig inference_config(InferenceMode mode) const;
};

// "key = value" lines; '#' starts a comment, blank lines are ignored, keys not
// mentioned keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Seed a pipeline stage derives from the global seed.
std::uint64_t stage_seed(std::uint64_t global, const std::string& stage);

// Git blob hash: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);
std::string file_blob_hash(const std::string& path);

struct FileRecord {
  std::string path;  // as given on the command line / relative to the run dir
  std::string hash;
  bool operator==(const FileRecord&) const = default;
};

struct RunManifest {
  std::string command;                 // datagen, train, infer, eval, compare
  std::vector<std::string> arguments;  // command-specific (component, mode, ...)
  ExperimentConfig config;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  std::vector<std::pair<std::string, double>> timings_ms;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

}  // namespace advinfer
