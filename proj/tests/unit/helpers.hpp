#pragma once

#include "advinfer/corpus.hpp"
#include "advinfer/discriminators.hpp"
#include "advinfer/generator.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace testutil {

inline advinfer::FeatureDims small_dims() { return {6, 5, 7}; }

inline advinfer::CorpusSpec small_spec(int videos = 12) {
  advinfer::CorpusSpec s;
  s.num_videos = videos;
  s.num_events = 8;
  s.num_activities = 2;
  s.dims = small_dims();
  return s;
}

inline advinfer::GeneratorConfig small_gen_config(const advinfer::Vocabulary& v, int hidden = 8) {
  advinfer::GeneratorConfig c;
  c.vocab_size = v.size();
  c.dims = small_dims();
  c.embed = 6;
  c.hidden = hidden;
  c.attention = 5;
  return c;
}

inline advinfer::DiscConfig small_disc_config(advinfer::DiscKind k, const advinfer::Vocabulary& v) {
  advinfer::DiscConfig c;
  c.kind = k;
  c.vocab_size = v.size();
  c.dims = small_dims();
  c.embed = 6;
  c.hidden = 5;
  c.attention = 4;
  c.fusion = 6;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("advinfer_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& f) const { return (path / f).string(); }
};

// Generator and all four discriminators trained on a 120-video corpus once
// per process.
struct Trained {
  advinfer::CorpusBundle b;
  advinfer::Generator g;
  std::map<advinfer::DiscKind, std::unique_ptr<advinfer::Discriminator>> d;
};
const Trained& trained();

}  // namespace testutil
