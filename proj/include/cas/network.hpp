#pragma once

#include "cas/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cas {

enum class Head { kReconstruction, kSegmentation };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

/// Encoder-decoder with `depth` down/up levels. Level l carries
/// base_channels * 2^l channels; the bottleneck carries embedding_dim.
/// Decoder convolutions are always sized for concatenated skip inputs; with
/// use_skips off, the skip half of their input is zero.
struct NetworkConfig {
  int in_channels = 4;
  int num_classes = 4;
  int depth = 3;
  int base_channels = 32;
  int embedding_dim = 128;
  bool use_skips = false;
  Head head = Head::kReconstruction;

  void validate() const;
  int level_channels(int level) const { return base_channels << level; }
  int output_channels() const { return head == Head::kReconstruction ? in_channels : num_classes; }
  /// H and W of inputs must be multiples of this.
  int spatial_multiple() const { return 1 << depth; }
  bool operator==(const NetworkConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  int fan_in = 0;
};

/// Every parameter tensor of the configured network, in a fixed order.
/// Both heads are listed; `init_params` creates only the configured one.
std::vector<TensorSpec> describe(const NetworkConfig& cfg);

/// Named parameter tensors. Convolution weights are (k*k*C_in) x C_out with
/// rows ordered [ky][kx][c_in]; biases are 1 x C_out.
template <typename Scalar>
struct NetworkParams {
  std::map<std::string, Matrix<Scalar>> tensors;

  Matrix<Scalar>& at(const std::string& name);
  const Matrix<Scalar>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }

  NetworkParams zeros_like() const;
  size_t parameter_count() const;
  bool all_finite() const;

  template <typename Other>
  NetworkParams<Other> cast() const {
    NetworkParams<Other> out;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<Other>());
    return out;
  }

  bool operator==(const NetworkParams& other) const;
};

/// Encoder tensors (theta_h) are those under "encoder." and "bottleneck.".
bool is_encoder_tensor(const std::string& name);
bool is_head_tensor(const std::string& name);

/// Fan-in scaled normal weights, zero biases. Each tensor draws from its own
/// stream keyed by (seed, name), so a tensor's initial value does not depend
/// on which other tensors exist.
template <typename Scalar>
NetworkParams<Scalar> init_params(const NetworkConfig& cfg, std::uint64_t seed);

/// Freshly initialized head tensors for cfg.head, same streams as init_params.
template <typename Scalar>
void init_head(NetworkParams<Scalar>& params, const NetworkConfig& cfg, std::uint64_t seed);

/// How the decoder receives the encoder skip maps.
enum class SkipMode {
  kFromEncoder,  // concatenate encoder maps
  kZero,         // concatenate explicit zero maps
  kNone,         // drop the skip half of the decoder weights
};

enum class Extent { kEncoder, kFull };

struct ForwardOptions {
  Extent extent = Extent::kFull;
  std::optional<SkipMode> skips;  // default derived from cfg.use_skips
};

template <typename Scalar>
struct ConvTape {
  FeatureMap<Scalar> input;
  FeatureMap<Scalar> output;  // post-activation
};

/// Activations retained for the backward pass of one sample.
template <typename Scalar>
struct ForwardPass {
  struct EncoderLevel {
    ConvTape<Scalar> conv1, conv2;
    std::vector<int> pool_argmax;
  };
  struct DecoderLevel {
    ConvTape<Scalar> up, conv1, conv2;
  };

  SkipMode skips = SkipMode::kNone;
  std::vector<EncoderLevel> encoder;
  ConvTape<Scalar> bottleneck1, bottleneck2;
  RowVector<Scalar> embedding;
  std::vector<DecoderLevel> decoder;  // index = level
  FeatureMap<Scalar> output;  // reconstruction or logits
  bool has_output = false;

  const FeatureMap<Scalar>& bottleneck() const { return bottleneck2.output; }
};

template <typename Scalar>
ForwardPass<Scalar> forward(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                            const FeatureMap<Scalar>& input, const ForwardOptions& opts = {});

/// Gradients of a scalar loss w.r.t. the head output and/or the pooled
/// embedding. An empty matrix means that output does not enter the loss.
template <typename Scalar>
struct OutputGradient {
  Matrix<Scalar> output;
  RowVector<Scalar> embedding;
};

/// Accumulates parameter gradients into `grads` (which must hold a tensor
/// for every parameter in `params`).
template <typename Scalar>
void backward(const NetworkParams<Scalar>& params, const NetworkConfig& cfg, const ForwardPass<Scalar>& pass,
              const OutputGradient<Scalar>& grad, NetworkParams<Scalar>& grads);

// Batch-level helpers. Each sample is processed independently.

template <typename Scalar>
std::vector<FeatureMap<Scalar>> encode(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                       std::span<const FeatureMap<Scalar>> batch);

/// Global average pool of the bottleneck map, one row per sample (B x D).
template <typename Scalar>
Matrix<Scalar> embed(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                     std::span<const FeatureMap<Scalar>> batch);

/// Linear reconstruction head; requires cfg.head == kReconstruction.
template <typename Scalar>
std::vector<FeatureMap<Scalar>> reconstruct(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                            std::span<const FeatureMap<Scalar>> batch);

/// Per-pixel class probabilities; requires a segmentation head with skips.
template <typename Scalar>
std::vector<FeatureMap<Scalar>> segment(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                        std::span<const FeatureMap<Scalar>> batch);

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits);

template <typename Scalar>
RowVector<Scalar> global_average_pool(const FeatureMap<Scalar>& map);

}  // namespace cas
