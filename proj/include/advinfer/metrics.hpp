#pragma once

// Paragraph-level evaluation: BLEU@4, CIDEr-D, Div-n, RE-n, person-word F1.
// All functions take already tokenised words (see tokenize()).

#include "advinfer/corpus.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace advinfer {

using Words = std::vector<std::string>;

// Unique n-grams over total words (not total n-grams); 0 for an empty paragraph.
double div_n(const Words& p, int n);

// sum_g max(count(g) - 1, 0) / sum_g count(g) over the n-grams g; 0 without n-grams.
double re_n(const Words& p, int n = 4);

// RE-4 over the 4-grams of all paragraphs of an activity (pooled per
// paragraph, never spanning two videos), averaged over activities with words.
double re4_per_activity(const std::map<int, std::vector<Words>>& by_activity);

inline constexpr double kBleuEpsilon = 1e-9;

// Multi-reference BLEU@4 with clipped counts, closest-reference brevity
// penalty, and zero precisions replaced by kBleuEpsilon.
double bleu4(const Words& candidate, const std::vector<Words>& references);

// n-gram document frequencies over the reference sets of a corpus.
class CiderStats {
 public:
  explicit CiderStats(const std::vector<std::vector<Words>>& reference_sets);
  double log_num_docs() const { return log_n_; }
  double df(const Words& ngram) const;
  std::size_t num_docs() const { return n_; }

 private:
  std::map<Words, double> df_;
  std::size_t n_ = 0;
  double log_n_ = 0.0;
};

// CIDEr-D in [0, 10]: tf-idf cosine per n = 1..4 with clipped candidate
// weights and a Gaussian length penalty (sigma 6), averaged over n and
// references, times 10.
double cider_d(const Words& candidate, const std::vector<Words>& references, const CiderStats& stats);

enum class PersonMode { exact_word, gender_plurality };

class PersonLexicon {
 public:
  struct Entry {
    Gender gender;
    Plurality plurality;
  };
  // The fixed default list (man, men, ..., he, she, they).
  static PersonLexicon defaults();
  // Lines of word<TAB>gender<TAB>plurality; '#' starts a comment.
  static PersonLexicon from_file(const std::string& path);
  // Throws ValidationError if `word` already maps to another category.
  void add(const std::string& word, Gender g, Plurality p);
  const Entry* find(const std::string& word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::map<std::string, Entry> words_;
};

// Person-word multiset of a paragraph under `mode`.
std::map<std::string, int> person_words(const Words& p, const PersonLexicon& lex, PersonMode mode);

struct PersonCounts {
  long matched = 0;
  long predicted = 0;
  long reference = 0;
  double f1() const;  // 1 when both sides are empty
};
// Accumulates one video: prediction vs. the multiset union of its references.
void add_person_counts(PersonCounts& c, const Words& prediction, const std::vector<Words>& references,
                       const PersonLexicon& lex, PersonMode mode);

// Micro-averaged F1 over paired (prediction, references) videos.
double person_f1(const std::vector<Words>& predictions, const std::vector<std::vector<Words>>& references,
                 const PersonLexicon& lex, PersonMode mode);

struct VideoMetrics {
  std::string video_id;
  int activity = 0;
  double bleu4 = 0.0;
  double cider_d = 0.0;
  double div1 = 0.0;
  double div2 = 0.0;
  double re4 = 0.0;
};

struct MetricsReport {
  std::string mode;
  std::vector<VideoMetrics> videos;
  double bleu4 = 0.0;
  double cider_d = 0.0;
  double div1 = 0.0;
  double div2 = 0.0;
  double re4 = 0.0;
  double re4_activity = 0.0;
  int vocab_size = 0;
  double sentence_length = 0.0;
  double person_f1_exact = 0.0;
  double person_f1_gender = 0.0;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

// Sentences of each video become one paragraph; references are the two
// reference chains. Every video needs exactly one prediction and vice versa.
MetricsReport evaluate_corpus(const std::vector<std::pair<std::string, std::vector<std::string>>>& predictions,
                              const std::vector<VideoRecord>& videos, const PersonLexicon& lex);

// Words of the sentences joined in order.
Words paragraph_words(const std::vector<std::string>& sentences);

}  // namespace advinfer
