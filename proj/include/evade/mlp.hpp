#pragma once

// Dense feed-forward networks with ReLU hidden layers, exact reverse-mode
// gradients, Adam, soft target tracking and a binary model format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evade/rng.hpp"

namespace evade::nn {

enum class OutputActivation : std::uint32_t { Identity = 0, TanhScaled = 1 };

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Per-layer activations of a batched forward pass (columns are samples).
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[k] feeds layer k
  std::vector<Eigen::MatrixXd> pre;     // pre-activations of layer k
  Eigen::MatrixXd output;
};

/// Gradients with the shapes of the network parameters, plus the gradient
/// with respect to the batch input.
struct Gradients {
  std::vector<Layer> layers;
  Eigen::MatrixXd input;
};

class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialised network; sizes = {input, hidden..., output}.
  Mlp(std::vector<int> sizes, OutputActivation output, double bound = 1.0);

  /// Hidden layers uniform in +-1/sqrt(fan_in), final layer in +-final_scale.
  static Mlp random(std::vector<int> sizes, OutputActivation output, double bound, Rng& rng,
                    double final_scale = 3e-3);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  OutputActivation output_activation() const { return output_; }
  double bound() const { return bound_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  /// Single-sample forward pass. Throws std::invalid_argument on size mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Batched forward pass over the columns of x (input_size x N).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, ForwardCache* cache) const;

  /// Gradients of sum(upstream .* output) for the cached batch. With
  /// parameters = false only the input gradient is computed.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                     bool parameters = true) const;

  bool same_architecture(const Mlp& other) const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<int> sizes_;
  OutputActivation output_ = OutputActivation::Identity;
  double bound_ = 1.0;
  std::vector<Layer> layers_;
};

Gradients zero_gradients(const Mlp& net);
void accumulate(Gradients& into, const Gradients& g);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam with moment buffers shaped like one network.
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, AdamConfig config);

  /// Descends along `grads`.
  void step(Mlp& net, const Gradients& grads);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Layer>& first_moment() const { return m_; }
  const std::vector<Layer>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Layer> m_;
  std::vector<Layer> v_;
  std::int64_t steps_ = 0;
};

/// target <- tau * source + (1 - tau) * target, per parameter.
void soft_update(Mlp& target, const Mlp& source, double tau);

/// Binary container: magic "EVMLP", format version, activation, bound,
/// layer sizes, then weights (row-major) and biases as little-endian doubles.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save(const Mlp& net, std::ostream& out);
void save(const Mlp& net, const std::filesystem::path& path);
/// Throws DataError on a corrupt, truncated or foreign file.
Mlp load(std::istream& in);
Mlp load(const std::filesystem::path& path);

}  // namespace evade::nn
