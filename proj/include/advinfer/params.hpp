#pragma once

#include "advinfer/autodiff.hpp"
#include "advinfer/rng.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace advinfer {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Adam first / second moments.
  Matrix m;
  Matrix v;
};

// Named parameter tensors plus optimizer state. Iteration order is by name,
// which keeps checkpoints and updates deterministic.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  // Zero-filled tensor; throws ValidationError on duplicate names.
  Parameter& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  // Uniform(-bound, bound) initialisation.
  Parameter& create_uniform(const std::string& name, Eigen::Index rows,
                            Eigen::Index cols, double bound, Rng& rng);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  double grad_norm() const;
  void scale_grad(double s);

  // Number of optimizer steps applied so far.
  std::int64_t steps = 0;
  // Bumped on every applied update; lets callers prove which parameter
  // version produced a sample.
  std::uint64_t version = 0;

  template <typename F>
  void for_each(F&& f) {
    for (auto& [_, p] : params_) f(*p);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [_, p] : params_) f(*p);
  }

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

// One bias-corrected Adam update from the gradients held in the store.
// Throws NumericError (store untouched) if any gradient is not finite.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// Binary checkpoint: see docs/checkpoint_format.md.
using Metadata = std::map<std::string, std::string>;
void save_checkpoint(const ParamStore& store, const Metadata& meta,
                     const std::string& path);
void save_checkpoint(const ParamStore& store, const Metadata& meta,
                     std::ostream& out);
ParamStore load_checkpoint(const std::string& path, Metadata* meta = nullptr);
ParamStore load_checkpoint(std::istream& in, Metadata* meta = nullptr);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace advinfer
