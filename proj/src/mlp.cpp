#include "evade/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "evade/errors.hpp"

namespace evade::nn {
namespace {

constexpr char kMagic[8] = {'E', 'V', 'M', 'L', 'P', '\0', '\0', '\0'};

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& pre) {
  return (pre.array() > 0.0).cast<double>().matrix();
}

double bounded_tanh(double z) {
  const double t = std::tanh(z);
  // Keep scaled outputs strictly inside the bound.
  if (std::abs(t) >= 1.0) return std::copysign(std::nextafter(1.0, 0.0), z);
  return t;
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, OutputActivation output, double bound)
    : sizes_(std::move(sizes)), output_(output), bound_(bound) {
  if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs at least two layer sizes");
  for (int s : sizes_)
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  if (!(bound_ > 0.0)) throw std::invalid_argument("output bound must be positive");
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k)
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[k + 1], sizes_[k]),
                       Eigen::VectorXd::Zero(sizes_[k + 1])});
}

Mlp Mlp::random(std::vector<int> sizes, OutputActivation output, double bound, Rng& rng,
                double final_scale) {
  Mlp net(std::move(sizes), output, bound);
  for (std::size_t k = 0; k < net.layers_.size(); ++k) {
    Layer& layer = net.layers_[k];
    const double limit = k + 1 == net.layers_.size()
                             ? final_scale
                             : 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = rng.uniform(-limit, limit);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-limit, limit);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_size())
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " values, network expects " +
                                std::to_string(input_size()));
  Eigen::MatrixXd col = x;
  return forward(col, nullptr).col(0);
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  const Eigen::VectorXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd y = forward(in);
  return {y.data(), y.data() + y.size()};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, ForwardCache* cache) const {
  if (x.rows() != input_size())
    throw std::invalid_argument("batch has " + std::to_string(x.rows()) + " rows, network expects " +
                                std::to_string(input_size()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Eigen::MatrixXd z(layers_[k].weight.rows(), a.cols());
    z.noalias() = layers_[k].weight * a;
    z.colwise() += layers_[k].bias;
    const bool last = k + 1 == layers_.size();
    Eigen::MatrixXd next;
    if (!last) {
      next = z.cwiseMax(0.0);
    } else if (output_ == OutputActivation::TanhScaled) {
      next = z.unaryExpr([this](double v) { return bound_ * bounded_tanh(v); });
    } else {
      next = z;
    }
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(std::move(z));
    }
    a = std::move(next);
  }
  if (cache) cache->output = a;
  return a;
}

Gradients Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                        bool parameters) const {
  if (cache.pre.size() != layers_.size())
    throw std::invalid_argument("forward cache does not match the network");
  if (upstream.rows() != output_size() || upstream.cols() != cache.output.cols())
    throw std::invalid_argument("upstream gradient shape mismatch");

  Gradients g;
  if (parameters) g.layers.resize(layers_.size());

  Eigen::MatrixXd delta = upstream;
  if (output_ == OutputActivation::TanhScaled) {
    const Eigen::MatrixXd& z = cache.pre.back();
    delta = delta.cwiseProduct(z.unaryExpr([this](double v) {
      const double t = bounded_tanh(v);
      return bound_ * (1.0 - t * t);
    }));
  }
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (parameters) {
      g.layers[k].weight.noalias() = delta * cache.inputs[k].transpose();
      g.layers[k].bias = delta.rowwise().sum();
    }
    Eigen::MatrixXd below(layers_[k].weight.cols(), delta.cols());
    below.noalias() = layers_[k].weight.transpose() * delta;
    if (k > 0) {
      // ReLU subgradient is 0 at a zero pre-activation.
      delta = below.cwiseProduct(relu_mask(cache.pre[k - 1]));
    } else {
      g.input = std::move(below);
    }
  }
  return g;
}

bool Mlp::same_architecture(const Mlp& other) const {
  return sizes_ == other.sizes_ && output_ == other.output_ && bound_ == other.bound_;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (!a.same_architecture(b)) return false;
  for (std::size_t k = 0; k < a.layers_.size(); ++k) {
    if (a.layers_[k].weight != b.layers_[k].weight || a.layers_[k].bias != b.layers_[k].bias)
      return false;
  }
  return true;
}

Gradients zero_gradients(const Mlp& net) {
  Gradients g;
  for (const auto& l : net.layers())
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  g.input = Eigen::MatrixXd::Zero(net.input_size(), 1);
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  if (into.layers.size() != g.layers.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t k = 0; k < g.layers.size(); ++k) {
    into.layers[k].weight += g.layers[k].weight;
    into.layers[k].bias += g.layers[k].bias;
  }
}

Adam::Adam(const Mlp& net, AdamConfig config) : config_(config) {
  for (const auto& l : net.layers()) {
    m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                  Eigen::VectorXd::Zero(l.bias.size())});
  }
  v_ = m_;
}

void Adam::step(Mlp& net, const Gradients& grads) {
  if (grads.layers.size() != net.layers().size() || m_.size() != net.layers().size())
    throw std::invalid_argument("Adam state does not match the network");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate, eps = config_.epsilon;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < m_.size(); ++k) {
    Layer& p = net.layers()[k];
    update(p.weight, m_[k].weight, v_[k].weight, grads.layers[k].weight);
    update(p.bias, m_[k].bias, v_[k].bias, grads.layers[k].bias);
  }
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
  if (!target.same_architecture(source))
    throw std::invalid_argument("soft update between different architectures");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  for (std::size_t k = 0; k < target.layers().size(); ++k) {
    Layer& t = target.layers()[k];
    const Layer& s = source.layers()[k];
    t.weight = tau * s.weight + (1.0 - tau) * t.weight;
    t.bias = tau * s.bias + (1.0 - tau) * t.bias;
  }
}

// ---------------------------------------------------------------------------
// Model files

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError("model file is truncated");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

 private:
  std::istream& in_;
};

}  // namespace

void save(const Mlp& net, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(net.output_activation()));
  put_f64(out, net.bound());
  put_u32(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) put_u32(out, static_cast<std::uint32_t>(s));
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f64(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(out, l.bias(r));
  }
  if (!out) throw IoError("failed to write model");
}

void save(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  save(net, out);
}

Mlp load(std::istream& in) {
  Reader r(in);
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not a model file");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw DataError("unsupported model format version " + std::to_string(version));
  const std::uint32_t act = r.u32();
  if (act > static_cast<std::uint32_t>(OutputActivation::TanhScaled))
    throw DataError("unknown output activation");
  const double bound = r.f64();
  const std::uint32_t count = r.u32();
  if (count < 2 || count > 64) throw DataError("implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t s = r.u32();
    if (s == 0 || s > (1u << 20)) throw DataError("implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  Mlp net;
  try {
    net = Mlp(sizes, static_cast<OutputActivation>(act), bound);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid model header: ") + e.what());
  }
  for (auto& l : net.layers()) {
    for (Eigen::Index row = 0; row < l.weight.rows(); ++row)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(row, c) = r.f64();
    for (Eigen::Index row = 0; row < l.bias.size(); ++row) l.bias(row) = r.f64();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after model");
  return net;
}

Mlp load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return load(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace evade::nn
