#pragma once

#include "cas/dataio.hpp"
#include "cas/network.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cas {

enum class InitMode { kPretrained, kScratch };

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& name);

struct FinetuneConfig {
  int epochs = 50;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::kPretrained;

  void validate() const;
};

/// -(1/(B*H*W)) sum log prob[true class], over every pixel of the batch.
template <typename Scalar>
Scalar pixel_cross_entropy(std::span<const FeatureMap<Scalar>> probs, std::span<const LabelMask> masks);

/// Cross-entropy through the segmentation head, with gradients for all
/// parameters.
template <typename Scalar>
struct SegmentationGradient {
  double loss = 0.0;
  NetworkParams<Scalar> d_params;
};

template <typename Scalar>
SegmentationGradient<Scalar> segmentation_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                                        std::span<const FeatureMap<Scalar>> batch,
                                                        std::span<const LabelMask> masks);

/// Skips on, segmentation head.
NetworkConfig segmentation_network_config(NetworkConfig base);

struct FinetuneResult {
  NetworkParams<float> params;
  std::vector<double> loss_trace;  // epoch-mean cross-entropy
};

/// Fine-tunes every layer on the labeled patches. With kPretrained, all
/// encoder and decoder tensors come from `params_init` and the segmentation
/// head is fresh; with kScratch, `params_init` is ignored.
FinetuneResult finetune_train(const NetworkParams<float>* params_init, std::span<const LabeledPatch> labeled,
                              const NetworkConfig& net, const FinetuneConfig& cfg);

/// Per-pixel argmax of class probabilities (ties to the lower class id).
std::vector<LabelMask> argmax_masks(std::span<const FeatureMap<float>> probs);

/// Predicted masks; inputs whose size is not a multiple of 2^depth are
/// reflect-padded and the prediction is cropped back.
std::vector<LabelMask> predict_masks(const NetworkParams<float>& params, const NetworkConfig& net,
                                     std::span<const RasterPatch> patches);

}  // namespace cas
