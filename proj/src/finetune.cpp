#include "cas/finetune.hpp"

#include "cas/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cas {

std::string to_string(InitMode mode) { return mode == InitMode::kPretrained ? "pretrained" : "scratch"; }

InitMode init_mode_from_string(const std::string& name) {
  if (name == "pretrained") return InitMode::kPretrained;
  if (name == "scratch") return InitMode::kScratch;
  throw ValidationError("unknown init mode: " + name);
}

void FinetuneConfig::validate() const {
  if (epochs < 0) throw ValidationError("finetune config: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("finetune config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("finetune config: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("finetune config: momentum must be in [0, 1)");
}

NetworkConfig segmentation_network_config(NetworkConfig base) {
  base.use_skips = true;
  base.head = Head::kSegmentation;
  base.validate();
  return base;
}

namespace {

template <typename Scalar>
void check_masks(std::span<const FeatureMap<Scalar>> probs, std::span<const LabelMask> masks) {
  if (probs.size() != masks.size()) throw ShapeMismatchError("cross entropy: batch sizes differ");
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].height != masks[i].height || probs[i].width != masks[i].width) {
      throw ShapeMismatchError("cross entropy: sample " + std::to_string(i) + " spatial shapes differ");
    }
    for (auto v : masks[i].labels) {
      if (v >= probs[i].channels()) throw LabelRangeError("cross entropy: label " + std::to_string(v) + " >= L");
    }
  }
}

}  // namespace

template <typename Scalar>
Scalar pixel_cross_entropy(std::span<const FeatureMap<Scalar>> probs, std::span<const LabelMask> masks) {
  check_masks(probs, masks);
  double total = 0.0;
  size_t pixels = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    for (int p = 0; p < probs[i].pixels(); ++p) {
      total -= std::log(static_cast<double>(probs[i].data(p, masks[i].labels[static_cast<size_t>(p)])));
    }
    pixels += static_cast<size_t>(probs[i].pixels());
  }
  return pixels > 0 ? static_cast<Scalar>(total / static_cast<double>(pixels)) : Scalar(0);
}

template <typename Scalar>
SegmentationGradient<Scalar> segmentation_loss_gradient(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                                        std::span<const FeatureMap<Scalar>> batch,
                                                        std::span<const LabelMask> masks) {
  if (cfg.head != Head::kSegmentation) throw ValidationError("head mismatch: segmentation loss needs a segmentation head");
  if (batch.size() != masks.size()) throw ShapeMismatchError("segmentation loss: batch sizes differ");
  size_t pixels = 0;
  for (const auto& x : batch) pixels += static_cast<size_t>(x.pixels());
  const double inv = 1.0 / static_cast<double>(std::max<size_t>(pixels, 1));

  SegmentationGradient<Scalar> g;
  g.d_params = params.zeros_like();
  for (size_t i = 0; i < batch.size(); ++i) {
    auto pass = forward(params, cfg, batch[i]);
    Matrix<Scalar> prob = softmax_rows(pass.output.data);
    if (masks[i].height != pass.output.height || masks[i].width != pass.output.width) {
      throw ShapeMismatchError("segmentation loss: mask shape differs from patch");
    }
    // d(-log softmax_y)/d logits = softmax - onehot(y)
    Matrix<Scalar> d = prob;
    for (int p = 0; p < pass.output.pixels(); ++p) {
      const int y = masks[i].labels[static_cast<size_t>(p)];
      if (y >= cfg.num_classes) throw LabelRangeError("segmentation loss: label " + std::to_string(y) + " >= L");
      g.loss -= std::log(static_cast<double>(prob(p, y)));
      d(p, y) -= Scalar(1);
    }
    OutputGradient<Scalar> og;
    og.output = static_cast<Scalar>(inv) * d;
    backward(params, cfg, pass, og, g.d_params);
  }
  g.loss *= inv;
  return g;
}

FinetuneResult finetune_train(const NetworkParams<float>* params_init, std::span<const LabeledPatch> labeled,
                              const NetworkConfig& net_in, const FinetuneConfig& cfg) {
  cfg.validate();
  if (labeled.empty()) throw ValidationError("finetune_train: empty labeled set");
  const NetworkConfig net = segmentation_network_config(net_in);
  const std::uint64_t init_seed = derive_seed(cfg.seed, 30);

  FinetuneResult result;
  if (cfg.init_mode == InitMode::kScratch) {
    result.params = init_params<float>(net, init_seed);
  } else {
    if (params_init == nullptr) throw ValidationError("finetune_train: pretrained init requires pretrained parameters");
    const auto reference = init_params<float>(net, init_seed);
    for (const auto& [name, t] : reference.tensors) {
      if (is_head_tensor(name)) continue;
      const auto& src = params_init->at(name);
      if (src.rows() != t.rows() || src.cols() != t.cols()) {
        throw ShapeMismatchError("finetune_train: pretrained tensor " + name + " has the wrong shape");
      }
      result.params.tensors.emplace(name, src);
    }
    init_head(result.params, net, init_seed);
  }

  SgdMomentum<float> opt(cfg.learning_rate, cfg.momentum);
  std::mt19937_64 rng(derive_seed(cfg.seed, 31));
  std::vector<size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const auto batch = static_cast<size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      std::vector<RasterPatch> xs;
      std::vector<LabelMask> ys;
      for (size_t k = start; k < end; ++k) {
        xs.push_back(labeled[order[k]].image);
        ys.push_back(labeled[order[k]].mask);
      }
      auto g = segmentation_loss_gradient<float>(result.params, net, xs, ys);
      if (!std::isfinite(g.loss)) {
        throw DivergenceError("finetune_train: non-finite loss at epoch " + std::to_string(epoch));
      }
      opt.step(result.params, g.d_params);
      sum += g.loss * static_cast<double>(end - start);
      count += end - start;
    }
    if (!result.params.all_finite()) throw DivergenceError("finetune_train: parameters became non-finite");
    result.loss_trace.push_back(sum / static_cast<double>(count));
  }
  return result;
}

std::vector<LabelMask> argmax_masks(std::span<const FeatureMap<float>> probs) {
  std::vector<LabelMask> out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    LabelMask m(p.height, p.width);
    for (int r = 0; r < p.pixels(); ++r) {
      Eigen::Index c = 0;
      p.data.row(r).maxCoeff(&c);
      m.labels[static_cast<size_t>(r)] = static_cast<std::uint8_t>(c);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<LabelMask> predict_masks(const NetworkParams<float>& params, const NetworkConfig& net_in,
                                     std::span<const RasterPatch> patches) {
  const NetworkConfig net = segmentation_network_config(net_in);
  std::vector<LabelMask> out;
  out.reserve(patches.size());
  for (const auto& x : patches) {
    const RasterPatch padded = reflect_pad(x, net.spatial_multiple());
    const auto probs = segment<float>(params, net, std::span<const RasterPatch>(&padded, 1));
    LabelMask m = argmax_masks(probs).front();
    out.push_back(padded.height == x.height && padded.width == x.width ? std::move(m) : crop(m, x.height, x.width));
  }
  return out;
}

template float pixel_cross_entropy<float>(std::span<const FeatureMap<float>>, std::span<const LabelMask>);
template double pixel_cross_entropy<double>(std::span<const FeatureMap<double>>, std::span<const LabelMask>);
template SegmentationGradient<float> segmentation_loss_gradient<float>(const NetworkParams<float>&,
                                                                       const NetworkConfig&,
                                                                       std::span<const FeatureMap<float>>,
                                                                       std::span<const LabelMask>);
template SegmentationGradient<double> segmentation_loss_gradient<double>(const NetworkParams<double>&,
                                                                         const NetworkConfig&,
                                                                         std::span<const FeatureMap<double>>,
                                                                         std::span<const LabelMask>);

}  // namespace cas
