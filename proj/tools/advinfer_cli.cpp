// advinfer: datagen / train / infer / eval / compare / pipeline, plus re-runs
// from a stage manifest.

#include "advinfer/corpus.hpp"
#include "advinfer/discriminators.hpp"
#include "advinfer/error.hpp"
#include "advinfer/experiment.hpp"
#include "advinfer/generator.hpp"
#include "advinfer/inference.hpp"
#include "advinfer/metrics.hpp"
#include "advinfer/rl_gan.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace advinfer;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

// Table rows and the prediction tag behind each.
const std::vector<std::pair<std::string, std::string>> kCompareRows = {
    {"MLE", "greedy"},          {"MLE+BS3", "beam"},          {"MLE+LP", "logprob_sample"},
    {"MLE+SingleDis", "single_disc"}, {"MLE+HybridDis", "hybrid_disc"}, {"SCST", "scst"},
    {"GAN", "gan"}};

const std::vector<std::string> kComponents = {"gen", "disc_v", "disc_l", "disc_p", "disc_single", "scst", "gan"};

struct Stage {
  const ExperimentConfig& cfg;
  fs::path out;
  RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::string path(const std::string& name) const { return (out / name).string(); }
  void input(const std::string& name) {
    if (!fs::exists(path(name))) throw ValidationError("missing input '" + path(name) + "'");
    manifest.inputs.push_back({name, file_blob_hash(path(name))});
  }
  void output(const std::string& name) { manifest.outputs.push_back({name, file_blob_hash(path(name))}); }
  void seed(const std::string& name, std::uint64_t s) { manifest.seeds.emplace_back(name, s); }
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    manifest.timings_ms.emplace_back(name, std::chrono::duration<double, std::milli>(now - start).count());
    start = now;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not JSON: " + e.what());
  }
}

FeatureDims dims_of(const CorpusBundle& b) {
  for (const auto* split : {&b.train, &b.val, &b.test}) {
    for (const VideoRecord& v : *split) {
      if (!v.clips.empty()) {
        const ClipFeatures& f = v.clips[0].features;
        return {static_cast<int>(f.motion.cols()), static_cast<int>(f.appearance.cols()),
                static_cast<int>(f.objects.cols())};
      }
    }
  }
  throw ValidationError("corpus has no clips");
}

CorpusBundle load_stage_corpus(Stage& st) {
  if (!st.cfg.corpus.path.empty()) {
    st.manifest.inputs.push_back({st.cfg.corpus.path, file_blob_hash(st.cfg.corpus.path)});
    return load_corpus(st.cfg.corpus.path);
  }
  st.input("corpus.json");
  return load_corpus(st.path("corpus.json"));
}

DiscKind component_kind(const std::string& c) {
  if (c == "disc_v") return DiscKind::visual;
  if (c == "disc_l") return DiscKind::language;
  if (c == "disc_p") return DiscKind::pairwise;
  return DiscKind::single;
}

std::string manifest_name(const std::string& command, const std::vector<std::string>& args) {
  std::string name = "manifest." + command;
  if (command == "train") name += "." + args.at(0);
  if (command == "infer") name += "." + args.at(1);
  if (command == "eval") name += "." + args.at(0);
  return name + ".json";
}

// ---- stages ----------------------------------------------------------------

void run_datagen(Stage& st) {
  const std::uint64_t s = stage_seed(st.cfg.seed, "corpus");
  st.seed("corpus", s);
  CorpusBundle b = gen_synthetic_corpus(st.cfg.corpus.spec, s);
  save_corpus(b, st.path("corpus.json"));
  st.lap("datagen");
  st.output("corpus.json");
  std::cout << "corpus: " << b.train.size() << " train / " << b.val.size() << " val / " << b.test.size()
            << " test videos, vocabulary " << b.vocab.size() << "\n";
}

void run_train(Stage& st, const std::string& component) {
  const ExperimentConfig& cfg = st.cfg;
  CorpusBundle b = load_stage_corpus(st);
  const FeatureDims dims = dims_of(b);
  const std::vector<VideoRecord>* held = b.val.empty() ? nullptr : &b.val;

  if (component == "gen") {
    const std::uint64_t init = stage_seed(cfg.seed, "gen.init");
    MleConfig mc = cfg.mle_config();
    st.seed("gen.init", init);
    st.seed("gen.train", mc.seed);
    Generator model(cfg.generator_config(b.vocab, dims), init);
    std::ofstream curve(st.path("curve.gen.jsonl"));
    mc.divergence_checkpoint = st.path("ckpt.gen.diverged");
    mc.on_epoch = [&](int epoch, double train_ce, double held_ce) {
      nlohmann::ordered_json j{{"epoch", epoch}, {"train_ce", train_ce}};
      if (held != nullptr) j["heldout_ce"] = held_ce;
      curve << j.dump() << "\n";
      std::cout << "gen epoch " << epoch << ": train CE " << train_ce;
      if (held != nullptr) std::cout << ", held-out CE " << held_ce;
      std::cout << "\n";
    };
    train_mle(model, b.vocab, b.train, mc, held);
    curve.close();
    model.save(st.path("ckpt.gen"), b.vocab);
    st.lap("train");
    st.output("ckpt.gen");
    st.output("curve.gen.jsonl");
    return;
  }

  if (component.rfind("disc_", 0) == 0) {
    const DiscKind kind = component_kind(component);
    st.input("ckpt.gen");
    Generator gen = Generator::load(st.path("ckpt.gen"), &b.vocab);
    const std::uint64_t init = stage_seed(cfg.seed, std::string("disc.") + to_string(kind) + ".init");
    DiscTrainConfig dc = cfg.disc_train_config(kind);
    st.seed(component + ".init", init);
    st.seed(component + ".train", dc.seed);
    auto disc = make_discriminator(cfg.disc_config(kind, b.vocab, dims), init);
    dc.audit_path = st.path("audit." + component + ".jsonl");
    std::ofstream curve(st.path("curve." + component + ".jsonl"));
    dc.on_epoch = [&](const DiscEpochStats& s) {
      nlohmann::ordered_json j{{"epoch", s.epoch}, {"objective", s.objective}, {"batches", s.batches},
                               {"skipped", s.skipped}, {"fallbacks", s.fallbacks}, {"kind_counts", s.kind_counts}};
      if (s.heldout) {
        j["heldout_balanced"] = s.heldout->balanced;
        j["heldout_positive"] = s.heldout->positive;
        j["heldout_negative"] = s.heldout->negative;
      }
      curve << j.dump() << "\n";
      std::cout << component << " epoch " << s.epoch << ": objective " << s.objective;
      if (s.heldout) std::cout << ", held-out accuracy " << s.heldout->balanced;
      std::cout << "\n";
    };
    train_discriminator(*disc, b.vocab, b.train, &gen, dc, held != nullptr && held->size() >= 2 ? held : nullptr);
    curve.close();
    disc->save(st.path("ckpt." + component), b.vocab);
    st.lap("train");
    st.output("ckpt." + component);
    st.output("curve." + component + ".jsonl");
    st.output("audit." + component + ".jsonl");
    return;
  }

  if (component == "scst") {
    st.input("ckpt.gen");
    Generator model = Generator::load(st.path("ckpt.gen"), &b.vocab);
    ScstConfig sc = cfg.scst_config();
    st.seed("scst.train", sc.seed);
    sc.curve_path = st.path("curve.scst.jsonl");
    ScstResult r = scst_train(model, b.vocab, b.train, sc);
    for (const ScstEpoch& e : r.curve) {
      std::cout << "scst epoch " << e.epoch << ": " << e.updates << " updates, reward " << e.sample_reward
                << " vs baseline " << e.baseline_reward << "\n";
    }
    model.save(st.path("ckpt.scst"), b.vocab);
    st.lap("train");
    st.output("ckpt.scst");
    st.output("curve.scst.jsonl");
    return;
  }

  if (component == "gan") {
    st.input("ckpt.gen");
    st.input("ckpt.disc_single");
    Generator model = Generator::load(st.path("ckpt.gen"), &b.vocab);
    auto disc = load_discriminator(st.path("ckpt.disc_single"), &b.vocab);
    GanConfig gc = cfg.gan_config();
    st.seed("gan.train", gc.seed);
    gc.curve_path = st.path("curve.gan.jsonl");
    gc.step_log_path = st.path("steps.gan.jsonl");
    GanResult r = gan_train_loop(model, *disc, b.vocab, b.train, gc, held);
    for (const GanEpoch& e : r.curve) {
      std::cout << "gan epoch " << e.epoch << ": " << e.gen_steps << " G / " << e.disc_steps << " D steps, CE "
                << e.ce << " (pre-GAN " << r.initial_ce << "), D accuracy " << e.disc_accuracy << "\n";
    }
    model.save(st.path("ckpt.gan"), b.vocab);
    disc->save(st.path("ckpt.gan_disc"), b.vocab);
    st.lap("train");
    st.output("ckpt.gan");
    st.output("ckpt.gan_disc");
    st.output("curve.gan.jsonl");
    st.output("steps.gan.jsonl");
    if (r.halted) throw Error(r.diagnostics);
    return;
  }
  throw ValidationError("unknown training component '" + component + "'");
}

void run_infer(Stage& st, const std::string& mode_name, const std::string& tag, const std::string& gen_file) {
  const ExperimentConfig& cfg = st.cfg;
  const InferenceMode mode = inference_mode_from_string(mode_name);
  CorpusBundle b = load_stage_corpus(st);
  std::optional<Generator> model;
  if (mode != InferenceMode::reference) {
    st.input(gen_file);
    model = Generator::load(st.path(gen_file), &b.vocab);
  }
  std::vector<std::unique_ptr<Discriminator>> owned;
  auto load = [&](const std::string& name) {
    st.input(name);
    owned.push_back(load_discriminator(st.path(name), &b.vocab));
    return owned.back().get();
  };
  DiscriminatorSet discs;
  if (mode == InferenceMode::hybrid_disc) {
    discs.visual = load("ckpt.disc_v");
    discs.language = load("ckpt.disc_l");
    discs.pairwise = load("ckpt.disc_p");
  }
  if (mode == InferenceMode::single_disc) discs.single = load("ckpt.disc_single");
  InferenceConfig ic = cfg.inference_config(mode);
  st.seed("infer", ic.seed);
  std::vector<InferenceResult> results;
  for (const VideoRecord& v : b.split(cfg.infer.split)) {
    results.push_back(run_inference(v, model ? &*model : nullptr, discs, ic, b.vocab));
  }
  std::sort(results.begin(), results.end(),
            [](const InferenceResult& a, const InferenceResult& c) { return a.video_id < c.video_id; });
  const std::string name = "preds." + tag + ".json";
  write_text(st.path(name), predictions_to_json(results, ic, b.vocab, cfg.infer.audit).dump(1) + "\n");
  st.lap("infer");
  st.output(name);
  std::cout << "wrote " << st.path(name) << " (" << results.size() << " videos)\n";
}

void run_eval(Stage& st, const std::string& tag) {
  const ExperimentConfig& cfg = st.cfg;
  CorpusBundle b = load_stage_corpus(st);
  const std::string pname = "preds." + tag + ".json";
  st.input(pname);
  PredictionSet preds = predictions_from_json(read_json(st.path(pname)));
  PersonLexicon lex = PersonLexicon::defaults();
  if (!cfg.metrics.lexicon.empty()) {
    st.manifest.inputs.push_back({cfg.metrics.lexicon, file_blob_hash(cfg.metrics.lexicon)});
    lex = PersonLexicon::from_file(cfg.metrics.lexicon);
  }
  MetricsReport r = evaluate_corpus(preds.videos, b.split(cfg.infer.split), lex);
  r.mode = tag;
  const std::string name = "report." + tag + ".json";
  write_text(st.path(name), r.to_json().dump(1) + "\n");
  st.lap("eval");
  st.output(name);
  std::cout << tag << ": BLEU@4 " << r.bleu4 << ", CIDEr-D " << r.cider_d << ", Div-1 " << r.div1 << ", RE-4 "
            << r.re4 << "\n";
}

void run_compare(Stage& st) {
  std::vector<std::string> missing;
  for (const auto& [row, tag] : kCompareRows) {
    if (!fs::exists(st.path("report." + tag + ".json"))) missing.push_back("report." + tag + ".json");
  }
  if (!missing.empty()) {
    std::string m = "compare: missing reports:";
    for (const auto& f : missing) m += " " + f;
    throw ValidationError(m);
  }
  std::ostringstream txt;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  txt << std::left << std::setw(15) << "Method" << std::right;
  const char* cols[] = {"BLEU@4", "CIDEr-D", "Div-1", "Div-2", "RE-4", "RE-4/act", "Vocab", "SentLen",
                        "PersonF1", "PersonF1gp"};
  for (const char* c : cols) txt << std::setw(11) << c;
  txt << "\n";
  for (const auto& [row, tag] : kCompareRows) {
    const std::string name = "report." + tag + ".json";
    st.input(name);
    MetricsReport r = MetricsReport::from_json(read_json(st.path(name)));
    const double vals[] = {r.bleu4 * 100, r.cider_d * 100, r.div1, r.div2, r.re4, r.re4_activity};
    txt << std::left << std::setw(15) << row << std::right << std::fixed;
    for (int i = 0; i < 6; ++i) txt << std::setw(11) << std::setprecision(i < 2 ? 2 : 3) << vals[i];
    txt << std::setw(11) << r.vocab_size << std::setw(11) << std::setprecision(2) << r.sentence_length
        << std::setw(11) << std::setprecision(2) << r.person_f1_exact * 100 << std::setw(11)
        << r.person_f1_gender * 100 << "\n";
    nlohmann::ordered_json j{{"row", row}, {"tag", tag}};
    j["report"] = r.to_json();
    rows.push_back(j);
  }
  write_text(st.path("compare.txt"), txt.str());
  write_text(st.path("compare.json"), nlohmann::ordered_json{{"rows", rows}}.dump(1) + "\n");
  st.lap("compare");
  st.output("compare.txt");
  st.output("compare.json");
  std::cout << txt.str();
}

// Runs one stage and writes its manifest; returns the manifest.
RunManifest run_stage(const ExperimentConfig& cfg, const std::string& command, const std::vector<std::string>& args) {
  fs::path out(cfg.out);
  fs::create_directories(out);
  Stage st{cfg, out, {}};
  st.manifest.command = command;
  st.manifest.arguments = args;
  st.manifest.config = cfg;
  st.seed("global", cfg.seed);
  auto finish = [&] { st.manifest.save(st.path(manifest_name(command, args))); };
  try {
    if (command == "datagen") {
      run_datagen(st);
    } else if (command == "train") {
      run_train(st, args.at(0));
    } else if (command == "infer") {
      run_infer(st, args.at(0), args.at(1), args.at(2));
    } else if (command == "eval") {
      run_eval(st, args.at(0));
    } else if (command == "compare") {
      run_compare(st);
    } else {
      throw ValidationError("unknown command '" + command + "'");
    }
  } catch (const Error&) {
    // Outputs written before a runtime failure (e.g. a halted GAN run) stay
    // reachable from the manifest.
    if (!st.manifest.outputs.empty()) finish();
    throw;
  }
  finish();
  return st.manifest;
}

std::vector<std::pair<std::string, std::vector<std::string>>> pipeline_stages() {
  std::vector<std::pair<std::string, std::vector<std::string>>> s;
  s.push_back({"datagen", {}});
  for (const auto& c : kComponents) s.push_back({"train", {c}});
  for (const char* m : {"greedy", "beam", "logprob_sample", "single_disc", "hybrid_disc"}) {
    s.push_back({"infer", {m, m, "ckpt.gen"}});
  }
  s.push_back({"infer", {"greedy", "scst", "ckpt.scst"}});
  s.push_back({"infer", {"greedy", "gan", "ckpt.gan"}});
  for (const auto& [row, tag] : kCompareRows) s.push_back({"eval", {tag}});
  s.push_back({"compare", {}});
  return s;
}

// Re-runs the stage recorded in a manifest into the manifest's directory and
// checks every output hash.
int rerun(const std::string& manifest_path) {
  RunManifest m = RunManifest::load(manifest_path);
  ExperimentConfig cfg = m.config;
  cfg.out = fs::path(manifest_path).parent_path().string();
  if (cfg.out.empty()) cfg.out = ".";
  if (std::getenv("ADVINFER_SEED") != nullptr) {
    std::cerr << "warning: ADVINFER_SEED is ignored when re-running a manifest\n";
  }
  for (const FileRecord& f : m.inputs) {
    const fs::path p = fs::path(f.path).is_absolute() || f.path == cfg.corpus.path || f.path == cfg.metrics.lexicon
                          ? fs::path(f.path)
                                                                                    : fs::path(cfg.out) / f.path;
    if (!fs::exists(p)) throw ValidationError("manifest input '" + p.string() + "' is missing");
    if (file_blob_hash(p.string()) != f.hash) {
      throw ValidationError("manifest input '" + p.string() + "' changed since the recorded run");
    }
  }
  RunManifest again = run_stage(cfg, m.command, m.arguments);
  int bad = 0;
  for (const FileRecord& f : m.outputs) {
    auto it = std::find_if(again.outputs.begin(), again.outputs.end(),
                           [&](const FileRecord& g) { return g.path == f.path; });
    if (it == again.outputs.end() || it->hash != f.hash) {
      std::cerr << "mismatch: " << f.path << "\n";
      ++bad;
    }
  }
  if (bad != 0) {
    std::cerr << bad << " output(s) differ from the manifest\n";
    return kExitRuntime;
  }
  std::cout << "reproduced " << m.outputs.size() << " output(s) byte-identically\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advinfer: discriminator-guided multi-sentence clip description"};
  app.require_subcommand(0, 1);
  std::string config_path, out_dir, manifest_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--set", overrides, "override a config key (key=value), repeatable");
  app.add_option("--out", out_dir, "output directory (config key 'out')");
  app.add_option("--seed", seed_flag, "global seed (overrides config and ADVINFER_SEED)");
  app.add_option("--manifest", manifest_path, "re-run the stage recorded in a manifest and verify its outputs");

  auto* datagen = app.add_subcommand("datagen", "generate the synthetic corpus (corpus.json)");
  auto* train = app.add_subcommand("train", "train one component");
  std::string component;
  train->add_option("component", component, "gen | disc_v | disc_l | disc_p | disc_single | scst | gan")
      ->required()
      ->check(CLI::IsMember(kComponents));
  auto* infer = app.add_subcommand("infer", "decode a split (preds.<tag>.json)");
  std::string mode, tag, gen_file = "ckpt.gen";
  infer->add_option("--mode", mode, "greedy | beam | logprob_sample | single_disc | hybrid_disc | reference")
      ->required();
  infer->add_option("--tag", tag, "output tag (defaults to the mode)");
  infer->add_option("--generator", gen_file, "generator checkpoint inside the run directory");
  auto* eval = app.add_subcommand("eval", "score predictions (report.<tag>.json)");
  std::string eval_tag;
  eval->add_option("--tag", eval_tag, "prediction tag")->required();
  auto* compare = app.add_subcommand("compare", "side-by-side table (compare.txt / compare.json)");
  auto* pipeline = app.add_subcommand("pipeline", "every stage in order, one manifest per stage");
  auto* show = app.add_subcommand("config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (!manifest_path.empty()) {
      if (app.get_subcommands().size() != 0) throw ValidationError("--manifest takes no subcommand");
      return rerun(manifest_path);
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kExitValidation;
    }
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const std::string& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + o + "'");
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (const char* env = std::getenv("ADVINFER_SEED")) cfg.set("seed", env);
    if (seed_flag) cfg.seed = *seed_flag;
    if (!out_dir.empty()) cfg.out = out_dir;
    cfg.validate();

    if (show->parsed()) {
      std::cout << serialize_config(cfg);
    } else if (datagen->parsed()) {
      run_stage(cfg, "datagen", {});
    } else if (train->parsed()) {
      run_stage(cfg, "train", {component});
    } else if (infer->parsed()) {
      inference_mode_from_string(mode);
      run_stage(cfg, "infer", {mode, tag.empty() ? mode : tag, gen_file});
    } else if (eval->parsed()) {
      run_stage(cfg, "eval", {eval_tag});
    } else if (compare->parsed()) {
      run_stage(cfg, "compare", {});
    } else if (pipeline->parsed()) {
      for (const auto& [command, args] : pipeline_stages()) {
        std::cout << "== " << command;
        for (const auto& a : args) std::cout << " " << a;
        std::cout << "\n";
        run_stage(cfg, command, args);
      }
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
