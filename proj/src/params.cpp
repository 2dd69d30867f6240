#include "advinfer/params.hpp"

#include "advinfer/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace advinfer {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

ParamStore::ParamStore(const ParamStore& other) : steps(other.steps), version(other.version) {
  for (const auto& [name, p] : other.params_) {
    params_.emplace(name, std::make_unique<Parameter>(*p));
  }
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParamStore::create(const std::string& name, Eigen::Index rows,
                              Eigen::Index cols) {
  if (params_.count(name) != 0) {
    throw ValidationError("duplicate parameter name '" + name + "'");
  }
  if (rows <= 0 || cols <= 0) {
    throw ShapeError("parameter '" + name + "' needs positive dimensions");
  }
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->m = Matrix::Zero(rows, cols);
  p->v = Matrix::Zero(rows, cols);
  Parameter& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Parameter& ParamStore::create_uniform(const std::string& name, Eigen::Index rows,
                                      Eigen::Index cols, double bound, Rng& rng) {
  Parameter& p = create(name, rows, cols);
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) p.value(r, c) = dist(rng);
  }
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return *it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return *it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) != 0; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p->grad.setZero();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::scale_grad(double s) {
  for (auto& [_, p] : params_) p->grad *= s;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  store.for_each([](const Parameter& p) {
    if (!p.grad.allFinite()) {
      std::ostringstream os;
      os << "non-finite gradient in parameter '" << p.name << "' (" << p.grad.rows() << "x"
         << p.grad.cols() << ", max |g| = " << p.grad.cwiseAbs().maxCoeff() << ")";
      throw NumericError(os.str());
    }
  });
  double clip = 1.0;
  if (cfg.max_grad_norm > 0.0) {
    double norm = store.grad_norm();
    if (norm > cfg.max_grad_norm) clip = cfg.max_grad_norm / norm;
  }
  store.steps += 1;
  store.version += 1;
  const double t = static_cast<double>(store.steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  store.for_each([&](Parameter& p) {
    Matrix g = p.grad * clip;
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * g;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.value.array() -=
        cfg.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
  });
}

// ---- checkpoint I/O --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_matrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in) {
  auto n = get<std::uint32_t>(in);
  if (n > (1u << 24)) throw FormatError("checkpoint string length implausible");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("checkpoint truncated");
  return s;
}

Matrix get_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw FormatError("checkpoint truncated");
  return m;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const Metadata& meta, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int64_t>(out, store.steps);
  put<std::uint64_t>(out, store.version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  store.for_each([&](const Parameter& p) {
    put_string(out, p.name);
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    put_matrix(out, p.value);
    put_matrix(out, p.m);
    put_matrix(out, p.v);
  });
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const ParamStore& store, const Metadata& meta, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_checkpoint(store, meta, out);
}

ParamStore load_checkpoint(std::istream& in, Metadata* meta) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) +
                       " unsupported (reader is version " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  ParamStore store;
  store.steps = get<std::int64_t>(in);
  store.version = get<std::uint64_t>(in);
  auto nmeta = get<std::uint32_t>(in);
  Metadata m;
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = get_string(in);
    m[k] = get_string(in);
  }
  auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    auto dtype = get<std::uint8_t>(in);
    if (dtype != kDtypeF64) throw FormatError("unsupported dtype in checkpoint");
    auto rows = get<std::uint64_t>(in);
    auto cols = get<std::uint64_t>(in);
    if (rows == 0 || cols == 0 || rows * cols > (1ull << 28)) {
      throw FormatError("implausible tensor shape for '" + name + "'");
    }
    Parameter& p = store.create(name, static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
    p.value = get_matrix(in, rows, cols);
    p.m = get_matrix(in, rows, cols);
    p.v = get_matrix(in, rows, cols);
  }
  if (meta != nullptr) *meta = std::move(m);
  return store;
}

ParamStore load_checkpoint(const std::string& path, Metadata* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in, meta);
}

}  // namespace advinfer
