#include "advinfer/experiment.hpp"

#include "advinfer/error.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace advinfer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ValidationError("config key '" + key + "': cannot parse '" + value + "'");
}

void parse_value(const std::string& key, const std::string& s, std::string& out) { out = s; (void)key; }
void parse_value(const std::string& key, const std::string& s, bool& out) {
  if (s == "true" || s == "1") out = true;
  else if (s == "false" || s == "0") out = false;
  else bad_value(key, s);
}
template <typename T>
void parse_integral(const std::string& key, const std::string& s, T& out) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad_value(key, s);
  out = v;
}
void parse_value(const std::string& key, const std::string& s, int& out) { parse_integral(key, s, out); }
void parse_value(const std::string& key, const std::string& s, std::uint64_t& out) { parse_integral(key, s, out); }
void parse_value(const std::string& key, const std::string& s, double& out) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, s);
  out = v;
}

// Visits every (key, field) pair in serialization order.
template <typename C, typename F>
void visit_fields(C& c, F&& f) {
  f("seed", c.seed);
  f("out", c.out);
  f("corpus.path", c.corpus.path);
  f("corpus.num_videos", c.corpus.spec.num_videos);
  f("corpus.min_clips", c.corpus.spec.min_clips);
  f("corpus.max_clips", c.corpus.spec.max_clips);
  f("corpus.num_events", c.corpus.spec.num_events);
  f("corpus.num_activities", c.corpus.spec.num_activities);
  f("corpus.noise_sigma", c.corpus.spec.noise_sigma);
  f("corpus.dims.motion", c.corpus.spec.dims.motion);
  f("corpus.dims.appearance", c.corpus.spec.dims.appearance);
  f("corpus.dims.objects", c.corpus.spec.dims.objects);
  f("corpus.train_fraction", c.corpus.spec.train_fraction);
  f("corpus.val_fraction", c.corpus.spec.val_fraction);
  f("corpus.min_count", c.corpus.spec.min_count);
  f("gen.embed", c.gen.embed);
  f("gen.hidden", c.gen.hidden);
  f("gen.attention", c.gen.attention);
  f("gen.epochs", c.gen.epochs);
  f("gen.lr", c.gen.lr);
  f("gen.max_grad_norm", c.gen.max_grad_norm);
  f("disc.embed", c.disc.embed);
  f("disc.hidden", c.disc.hidden);
  f("disc.attention", c.disc.attention);
  f("disc.fusion", c.disc.fusion);
  f("disc.epochs", c.disc.epochs);
  f("disc.lr", c.disc.lr);
  f("disc.max_grad_norm", c.disc.max_grad_norm);
  f("disc.mu", c.disc.mu);
  f("disc.nu", c.disc.nu);
  f("disc.temperature", c.disc.temperature);
  f("disc.hard_negatives_after", c.disc.hard_negatives_after);
  f("scst.reward", c.scst.reward);
  f("scst.lr", c.scst.lr);
  f("scst.epochs", c.scst.epochs);
  f("scst.max_updates", c.scst.max_updates);
  f("scst.probe_token", c.scst.probe_token);
  f("gan.lambda_mix", c.gan.lambda_mix);
  f("gan.generator_steps_per_disc_step", c.gan.generator_steps_per_disc_step);
  f("gan.mu", c.gan.mu);
  f("gan.nu", c.gan.nu);
  f("gan.gen_lr", c.gan.gen_lr);
  f("gan.disc_lr", c.gan.disc_lr);
  f("gan.epochs", c.gan.epochs);
  f("gan.use_ce", c.gan.use_ce);
  f("gan.temperature", c.gan.temperature);
  f("infer.split", c.infer.split);
  f("infer.K", c.infer.K);
  f("infer.tau", c.infer.tau);
  f("infer.beam", c.infer.beam);
  f("infer.alpha", c.infer.alpha);
  f("infer.beta", c.infer.beta);
  f("infer.gamma", c.infer.gamma);
  f("infer.audit", c.infer.audit);
  f("metrics.lexicon", c.metrics.lexicon);
}

AdamConfig adam(double lr, double clip) {
  AdamConfig a;
  a.lr = lr;
  a.max_grad_norm = clip;
  return a;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(*this, [&](const char* k, auto& field) {
    if (key == k) {
      parse_value(key, value, field);
      found = true;
    }
  });
  if (!found) throw ValidationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  visit_fields(*this, [&](const char* k, const auto& field) { out.emplace_back(k, format_value(field)); });
  return out;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ValidationError("config key '" + key + "': " + what);
  };
  if (corpus.path.empty()) corpus.spec.validate();
  need(gen.embed > 0 && gen.hidden > 0 && gen.attention > 0, "gen.*", "sizes must be positive");
  need(gen.epochs >= 0, "gen.epochs", "must be >= 0");
  need(gen.lr > 0, "gen.lr", "must be positive");
  need(gen.max_grad_norm >= 0, "gen.max_grad_norm", "must be >= 0");
  need(disc.embed > 0 && disc.hidden > 0 && disc.attention > 0 && disc.fusion > 0, "disc.*",
       "sizes must be positive");
  need(disc.epochs >= 0, "disc.epochs", "must be >= 0");
  need(disc.lr > 0, "disc.lr", "must be positive");
  need(disc.max_grad_norm >= 0, "disc.max_grad_norm", "must be >= 0");
  need(disc.mu >= 0 && disc.nu >= 0, "disc.mu/nu", "must be >= 0");
  need(disc.temperature > 0, "disc.temperature", "must be positive");
  scst_reward_from_string(scst.reward);
  need(scst.lr > 0, "scst.lr", "must be positive");
  need(scst.epochs >= 0 && scst.max_updates >= 0, "scst.epochs", "must be >= 0");
  need(scst.reward != "token_presence_probe" || !scst.probe_token.empty(), "scst.probe_token",
       "required for the token_presence_probe reward");
  need(gan.gen_lr > 0 && gan.disc_lr > 0, "gan.*_lr", "must be positive");
  gan_config().validate();
  need(infer.split == "train" || infer.split == "val" || infer.split == "test", "infer.split",
       "must be train, val or test");
  inference_config(InferenceMode::hybrid_disc).validate();
}

GeneratorConfig ExperimentConfig::generator_config(const Vocabulary& vocab, const FeatureDims& dims) const {
  GeneratorConfig c;
  c.vocab_size = vocab.size();
  c.dims = dims;
  c.embed = gen.embed;
  c.hidden = gen.hidden;
  c.attention = gen.attention;
  return c;
}

MleConfig ExperimentConfig::mle_config() const {
  MleConfig c;
  c.adam = adam(gen.lr, gen.max_grad_norm);
  c.epochs = gen.epochs;
  c.seed = stage_seed(seed, "gen.train");
  return c;
}

DiscConfig ExperimentConfig::disc_config(DiscKind kind, const Vocabulary& vocab, const FeatureDims& dims) const {
  DiscConfig c;
  c.kind = kind;
  c.vocab_size = vocab.size();
  c.dims = dims;
  c.embed = disc.embed;
  c.hidden = disc.hidden;
  c.attention = disc.attention;
  c.fusion = disc.fusion;
  return c;
}

DiscTrainConfig ExperimentConfig::disc_train_config(DiscKind kind) const {
  DiscTrainConfig c;
  c.adam = adam(disc.lr, disc.max_grad_norm);
  c.epochs = disc.epochs;
  c.mu = disc.mu;
  c.nu = disc.nu;
  c.temperature = disc.temperature;
  c.hard_negatives_after = disc.hard_negatives_after;
  c.seed = stage_seed(seed, std::string("disc.") + to_string(kind) + ".train");
  return c;
}

ScstConfig ExperimentConfig::scst_config() const {
  ScstConfig c;
  c.reward = scst_reward_from_string(scst.reward);
  c.adam = adam(scst.lr, gen.max_grad_norm);
  c.epochs = scst.epochs;
  c.max_updates = scst.max_updates;
  c.probe_token = scst.probe_token;
  c.seed = stage_seed(seed, "scst.train");
  return c;
}

GanConfig ExperimentConfig::gan_config() const {
  GanConfig c;
  c.lambda_mix = gan.lambda_mix;
  c.generator_steps_per_disc_step = gan.generator_steps_per_disc_step;
  c.mu = gan.mu;
  c.nu = gan.nu;
  c.gen_adam = adam(gan.gen_lr, gen.max_grad_norm);
  c.disc_adam = adam(gan.disc_lr, disc.max_grad_norm);
  c.epochs = gan.epochs;
  c.use_ce = gan.use_ce;
  c.temperature = gan.temperature;
  c.seed = stage_seed(seed, "gan.train");
  return c;
}

InferenceConfig ExperimentConfig::inference_config(InferenceMode mode) const {
  InferenceConfig c;
  c.mode = mode;
  c.K = infer.K;
  c.tau = infer.tau;
  c.beam = infer.beam;
  c.weights = {infer.alpha, infer.beta, infer.gamma};
  c.seed = stage_seed(seed, "infer");
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries()) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t stage_seed(std::uint64_t global, const std::string& stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return sub_seed(global, h);
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string file_blob_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["arguments"] = arguments;
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.entries()) c[k] = v;
  j["config"] = c;
  auto files = [](const std::vector<FileRecord>& fs) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const FileRecord& f : fs) a.push_back({{"path", f.path}, {"hash", f.hash}});
    return a;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& [k, v] : timings_ms) t[k] = v;
  j["timings_ms"] = t;
  nlohmann::ordered_json s = nlohmann::ordered_json::object();
  for (const auto& [k, v] : seeds) s[k] = v;
  j["seeds"] = s;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    // Keys are applied in the canonical order so later fields see earlier ones.
    const auto& c = j.at("config");
    for (const auto& [k, _] : m.config.entries()) {
      if (c.contains(k)) m.config.set(k, c.at(k).get<std::string>());
    }
    for (const auto& [k, _] : c.items()) {
      bool known = false;
      for (const auto& e : m.config.entries()) known = known || e.first == k;
      if (!known) throw ValidationError("manifest config has unknown key '" + k + "'");
    }
    auto files = [](const nlohmann::json& a) {
      std::vector<FileRecord> out;
      for (const auto& f : a) out.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
      return out;
    };
    m.inputs = files(j.at("inputs"));
    m.outputs = files(j.at("outputs"));
    for (const auto& [k, v] : j.at("timings_ms").items()) m.timings_ms.emplace_back(k, v.get<double>());
    for (const auto& [k, v] : j.at("seeds").items()) m.seeds.emplace_back(k, v.get<std::uint64_t>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << to_json().dump(1) << "\n";
  if (!out) throw Error("failed writing manifest '" + path + "'");
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read manifest '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest '" + path + "' is not JSON: " + std::string(e.what()));
  }
}

}  // namespace advinfer
