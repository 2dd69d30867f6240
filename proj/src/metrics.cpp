#include "advinfer/metrics.hpp"

#include "advinfer/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace advinfer {

namespace {

std::map<Words, int> ngram_counts(const Words& p, int n) {
  std::map<Words, int> c;
  if (n < 1) throw ValidationError("n-gram order must be >= 1");
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= p.size(); ++i) {
    c[Words(p.begin() + static_cast<std::ptrdiff_t>(i), p.begin() + static_cast<std::ptrdiff_t>(i) + n)]++;
  }
  return c;
}

}  // namespace

double div_n(const Words& p, int n) {
  if (p.empty()) return 0.0;
  return static_cast<double>(ngram_counts(p, n).size()) / static_cast<double>(p.size());
}

double re_n(const Words& p, int n) {
  auto c = ngram_counts(p, n);
  long total = 0, repeated = 0;
  for (const auto& [_, k] : c) {
    total += k;
    repeated += std::max(k - 1, 0);
  }
  return total == 0 ? 0.0 : static_cast<double>(repeated) / static_cast<double>(total);
}

double re4_per_activity(const std::map<int, std::vector<Words>>& by_activity) {
  double s = 0.0;
  int used = 0;
  for (const auto& [_, paragraphs] : by_activity) {
    std::map<Words, int> pooled;
    bool any = false;
    for (const Words& p : paragraphs) {
      any = any || !p.empty();
      for (const auto& [g, k] : ngram_counts(p, 4)) pooled[g] += k;
    }
    if (!any) continue;
    long total = 0, repeated = 0;
    for (const auto& [g, k] : pooled) {
      total += k;
      repeated += std::max(k - 1, 0);
    }
    s += total == 0 ? 0.0 : static_cast<double>(repeated) / static_cast<double>(total);
    ++used;
  }
  return used == 0 ? 0.0 : s / used;
}

double bleu4(const Words& candidate, const std::vector<Words>& references) {
  if (references.empty()) throw ValidationError("bleu4 needs at least one reference");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    auto cand = ngram_counts(candidate, n);
    std::map<Words, int> max_ref;
    for (const Words& r : references) {
      for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
    }
    long clipped = 0, total = 0;
    for (const auto& [g, k] : cand) {
      total += k;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(k, it->second);
    }
    const double p = clipped == 0 ? kBleuEpsilon : static_cast<double>(clipped) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const auto c = static_cast<long>(candidate.size());
  long r = static_cast<long>(references[0].size());
  for (const Words& ref : references) {
    const long len = static_cast<long>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / 4.0);
}

CiderStats::CiderStats(const std::vector<std::vector<Words>>& reference_sets) : n_(reference_sets.size()) {
  if (n_ == 0) throw ValidationError("CIDEr-D statistics need at least one reference set");
  for (const auto& refs : reference_sets) {
    std::set<Words> seen;
    for (const Words& r : refs) {
      for (int n = 1; n <= 4; ++n) {
        for (const auto& [g, _] : ngram_counts(r, n)) seen.insert(g);
      }
    }
    for (const Words& g : seen) df_[g] += 1.0;
  }
  log_n_ = std::log(static_cast<double>(n_));
}

double CiderStats::df(const Words& ngram) const {
  auto it = df_.find(ngram);
  return it == df_.end() ? 0.0 : it->second;
}

namespace {

struct TfIdf {
  std::array<std::map<Words, double>, 4> vec;
  std::array<double, 4> norm{};
  long length = 0;
};

TfIdf tf_idf(const Words& p, const CiderStats& stats) {
  TfIdf t;
  t.length = static_cast<long>(p.size());
  for (int n = 1; n <= 4; ++n) {
    const auto k = static_cast<std::size_t>(n - 1);
    for (const auto& [g, c] : ngram_counts(p, n)) {
      const double w = c * (stats.log_num_docs() - std::log(std::max(1.0, stats.df(g))));
      t.vec[k][g] = w;
      t.norm[k] += w * w;
    }
    t.norm[k] = std::sqrt(t.norm[k]);
  }
  return t;
}

}  // namespace

double cider_d(const Words& candidate, const std::vector<Words>& references, const CiderStats& stats) {
  if (references.empty()) throw ValidationError("cider_d needs at least one reference");
  constexpr double kSigma = 6.0;
  const TfIdf hyp = tf_idf(candidate, stats);
  double total = 0.0;
  for (const Words& r : references) {
    const TfIdf ref = tf_idf(r, stats);
    const double delta = static_cast<double>(hyp.length - ref.length);
    const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double per_ref = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      double val = 0.0;
      for (const auto& [g, w] : hyp.vec[k]) {
        auto it = ref.vec[k].find(g);
        if (it != ref.vec[k].end()) val += std::min(w, it->second) * it->second;
      }
      if (hyp.norm[k] != 0.0 && ref.norm[k] != 0.0) {
        val /= hyp.norm[k] * ref.norm[k];
      } else {
        val = 0.0;
      }
      per_ref += val * penalty;
    }
    total += per_ref / 4.0;
  }
  return total / static_cast<double>(references.size()) * 10.0;
}

// ---- person words ----------------------------------------------------------

PersonLexicon PersonLexicon::defaults() {
  PersonLexicon l;
  using G = Gender;
  using P = Plurality;
  const std::tuple<const char*, G, P> table[] = {
      {"man", G::male, P::single},         {"men", G::male, P::plural},
      {"woman", G::female, P::single},     {"women", G::female, P::plural},
      {"girl", G::female, P::single},      {"girls", G::female, P::plural},
      {"boy", G::male, P::single},         {"boys", G::male, P::plural},
      {"guy", G::male, P::single},         {"guys", G::male, P::plural},
      {"person", G::neutral, P::single},   {"people", G::neutral, P::plural},
      {"lady", G::female, P::single},      {"ladies", G::female, P::plural},
      {"child", G::neutral, P::single},    {"children", G::neutral, P::plural},
      {"kid", G::neutral, P::single},      {"kids", G::neutral, P::plural},
      {"he", G::male, P::single},          {"she", G::female, P::single},
      {"they", G::neutral, P::plural},
  };
  for (const auto& [w, g, p] : table) l.add(w, g, p);
  return l;
}

PersonLexicon PersonLexicon::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open person lexicon '" + path + "'");
  PersonLexicon l;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string word, g, p;
    if (!std::getline(fields, word, '\t') || !std::getline(fields, g, '\t') || !std::getline(fields, p)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected word<TAB>gender<TAB>plurality");
    }
    l.add(word, gender_from_string(g), plurality_from_string(p));
  }
  return l;
}

void PersonLexicon::add(const std::string& word, Gender g, Plurality p) {
  auto it = words_.find(word);
  if (it != words_.end()) {
    if (it->second.gender != g || it->second.plurality != p) {
      throw ValidationError("person word '" + word + "' mapped to two categories");
    }
    return;
  }
  words_.emplace(word, Entry{g, p});
}

const PersonLexicon::Entry* PersonLexicon::find(const std::string& word) const {
  auto it = words_.find(word);
  return it == words_.end() ? nullptr : &it->second;
}

std::map<std::string, int> person_words(const Words& p, const PersonLexicon& lex, PersonMode mode) {
  std::map<std::string, int> out;
  for (const std::string& w : p) {
    const auto* e = lex.find(w);
    if (e == nullptr) continue;
    if (mode == PersonMode::exact_word) {
      out[w]++;
    } else {
      out[std::string(to_string(e->gender)) + "/" + to_string(e->plurality)]++;
    }
  }
  return out;
}

double PersonCounts::f1() const {
  if (predicted == 0 && reference == 0) return 1.0;
  if (matched == 0) return 0.0;
  const double p = static_cast<double>(matched) / static_cast<double>(predicted);
  const double r = static_cast<double>(matched) / static_cast<double>(reference);
  return 2.0 * p * r / (p + r);
}

void add_person_counts(PersonCounts& c, const Words& prediction, const std::vector<Words>& references,
                       const PersonLexicon& lex, PersonMode mode) {
  auto pred = person_words(prediction, lex, mode);
  std::map<std::string, int> ref;
  for (const Words& r : references) {
    for (const auto& [w, k] : person_words(r, lex, mode)) ref[w] = std::max(ref[w], k);
  }
  for (const auto& [w, k] : pred) {
    c.predicted += k;
    auto it = ref.find(w);
    if (it != ref.end()) c.matched += std::min(k, it->second);
  }
  for (const auto& [_, k] : ref) c.reference += k;
}

double person_f1(const std::vector<Words>& predictions, const std::vector<std::vector<Words>>& references,
                 const PersonLexicon& lex, PersonMode mode) {
  if (predictions.size() != references.size()) {
    throw ValidationError("person_f1: predictions and references differ in length");
  }
  PersonCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) add_person_counts(c, predictions[i], references[i], lex, mode);
  return c.f1();
}

// ---- corpus report ---------------------------------------------------------

Words paragraph_words(const std::vector<std::string>& sentences) {
  Words w;
  for (const std::string& s : sentences) {
    Words t = tokenize(s);
    w.insert(w.end(), t.begin(), t.end());
  }
  return w;
}

MetricsReport evaluate_corpus(const std::vector<std::pair<std::string, std::vector<std::string>>>& predictions,
                              const std::vector<VideoRecord>& videos, const PersonLexicon& lex) {
  if (videos.empty()) throw ValidationError("evaluate_corpus: no videos");
  std::unordered_map<std::string, const std::vector<std::string>*> by_id;
  for (const auto& [id, s] : predictions) {
    if (!by_id.emplace(id, &s).second) throw ValidationError("duplicate prediction for video " + id);
  }
  std::vector<std::vector<Words>> refs;
  for (const VideoRecord& v : videos) {
    std::vector<std::string> chain0, chain1;
    for (const Clip& c : v.clips) {
      chain0.push_back(c.refs[0]);
      chain1.push_back(c.refs[1]);
    }
    refs.push_back({paragraph_words(chain0), paragraph_words(chain1)});
    if (!by_id.count(v.id)) throw ValidationError("no prediction for video " + v.id);
  }
  if (by_id.size() != videos.size()) {
    throw ValidationError("predictions contain videos that are not in the evaluated split");
  }
  const CiderStats stats(refs);
  MetricsReport rep;
  std::map<int, std::vector<Words>> by_activity;
  std::set<std::string> vocab;
  long sentences = 0, words = 0;
  PersonCounts exact, category;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const VideoRecord& v = videos[i];
    const auto& sents = *by_id.at(v.id);
    const Words p = paragraph_words(sents);
    VideoMetrics m;
    m.video_id = v.id;
    m.activity = v.activity;
    m.bleu4 = bleu4(p, refs[i]);
    m.cider_d = cider_d(p, refs[i], stats);
    m.div1 = div_n(p, 1);
    m.div2 = div_n(p, 2);
    m.re4 = re_n(p, 4);
    rep.bleu4 += m.bleu4;
    rep.cider_d += m.cider_d;
    rep.div1 += m.div1;
    rep.div2 += m.div2;
    rep.re4 += m.re4;
    rep.videos.push_back(m);
    by_activity[v.activity].push_back(p);
    vocab.insert(p.begin(), p.end());
    for (const std::string& s : sents) {
      ++sentences;
      words += static_cast<long>(tokenize(s).size());
    }
    add_person_counts(exact, p, refs[i], lex, PersonMode::exact_word);
    add_person_counts(category, p, refs[i], lex, PersonMode::gender_plurality);
  }
  const auto n = static_cast<double>(videos.size());
  rep.bleu4 /= n;
  rep.cider_d /= n;
  rep.div1 /= n;
  rep.div2 /= n;
  rep.re4 /= n;
  rep.re4_activity = re4_per_activity(by_activity);
  rep.vocab_size = static_cast<int>(vocab.size());
  rep.sentence_length = sentences == 0 ? 0.0 : static_cast<double>(words) / static_cast<double>(sentences);
  rep.person_f1_exact = exact.f1();
  rep.person_f1_gender = category.f1();
  return rep;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["bleu4"] = bleu4;
  j["cider_d"] = cider_d;
  j["div1"] = div1;
  j["div2"] = div2;
  j["re4"] = re4;
  j["re4_activity"] = re4_activity;
  j["vocab_size"] = vocab_size;
  j["sentence_length"] = sentence_length;
  j["person_f1"] = {{"exact_word", person_f1_exact}, {"gender_plurality", person_f1_gender}};
  nlohmann::ordered_json vs = nlohmann::ordered_json::array();
  for (const VideoMetrics& v : videos) {
    vs.push_back({{"video_id", v.video_id},
                  {"activity", v.activity},
                  {"bleu4", v.bleu4},
                  {"cider_d", v.cider_d},
                  {"div1", v.div1},
                  {"div2", v.div2},
                  {"re4", v.re4}});
  }
  j["videos"] = std::move(vs);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.mode = j.at("mode").get<std::string>();
    r.bleu4 = j.at("bleu4").get<double>();
    r.cider_d = j.at("cider_d").get<double>();
    r.div1 = j.at("div1").get<double>();
    r.div2 = j.at("div2").get<double>();
    r.re4 = j.at("re4").get<double>();
    r.re4_activity = j.at("re4_activity").get<double>();
    r.vocab_size = j.at("vocab_size").get<int>();
    r.sentence_length = j.at("sentence_length").get<double>();
    r.person_f1_exact = j.at("person_f1").at("exact_word").get<double>();
    r.person_f1_gender = j.at("person_f1").at("gender_plurality").get<double>();
    for (const auto& v : j.at("videos")) {
      r.videos.push_back({v.at("video_id").get<std::string>(), v.at("activity").get<int>(),
                          v.at("bleu4").get<double>(), v.at("cider_d").get<double>(),
                          v.at("div1").get<double>(), v.at("div2").get<double>(), v.at("re4").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
}

}  // namespace advinfer
