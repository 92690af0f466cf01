#include "cas/network.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace cas {

std::string to_string(Head head) { return head == Head::kReconstruction ? "reconstruction" : "segmentation"; }

Head head_from_string(const std::string& name) {
  if (name == "reconstruction") return Head::kReconstruction;
  if (name == "segmentation") return Head::kSegmentation;
  throw ValidationError("unknown head: " + name);
}

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ValidationError("network: in_channels must be >= 1");
  if (num_classes < 1) throw ValidationError("network: num_classes must be >= 1");
  if (depth < 1 || depth > 8) throw ValidationError("network: depth must be in [1, 8]");
  if (base_channels < 1) throw ValidationError("network: base_channels must be >= 1");
  if (embedding_dim < 1) throw ValidationError("network: embedding_dim must be >= 1");
}

std::vector<TensorSpec> describe(const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> specs;
  auto conv = [&](const std::string& prefix, int cin, int cout) {
    specs.push_back({prefix + ".weight", 9 * cin, cout, 9 * cin});
    specs.push_back({prefix + ".bias", 1, cout, 9 * cin});
  };
  for (int l = 0; l < cfg.depth; ++l) {
    const int cin = l == 0 ? cfg.in_channels : cfg.level_channels(l - 1);
    const std::string p = "encoder." + std::to_string(l);
    conv(p + ".conv1", cin, cfg.level_channels(l));
    conv(p + ".conv2", cfg.level_channels(l), cfg.level_channels(l));
  }
  conv("bottleneck.conv1", cfg.level_channels(cfg.depth - 1), cfg.embedding_dim);
  conv("bottleneck.conv2", cfg.embedding_dim, cfg.embedding_dim);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int cin = l == cfg.depth - 1 ? cfg.embedding_dim : cfg.level_channels(l + 1);
    const int c = cfg.level_channels(l);
    const std::string p = "decoder." + std::to_string(l);
    conv(p + ".up", cin, c);
    conv(p + ".conv1", 2 * c, c);
    conv(p + ".conv2", c, c);
  }
  const int c0 = cfg.level_channels(0);
  specs.push_back({"head.reconstruction.weight", c0, cfg.in_channels, c0});
  specs.push_back({"head.reconstruction.bias", 1, cfg.in_channels, c0});
  specs.push_back({"head.segmentation.weight", c0, cfg.num_classes, c0});
  specs.push_back({"head.segmentation.bias", 1, cfg.num_classes, c0});
  return specs;
}

bool is_encoder_tensor(const std::string& name) {
  return name.rfind("encoder.", 0) == 0 || name.rfind("bottleneck.", 0) == 0;
}

bool is_head_tensor(const std::string& name) { return name.rfind("head.", 0) == 0; }

namespace {

std::string head_prefix(Head head) { return "head." + to_string(head) + "."; }

template <typename Scalar>
Matrix<Scalar> init_tensor(const TensorSpec& spec, std::uint64_t seed) {
  if (spec.name.size() >= 5 && spec.name.compare(spec.name.size() - 5, 5, ".bias") == 0) {
    return Matrix<Scalar>::Zero(spec.rows, spec.cols);
  }
  // He scaling for ReLU layers, LeCun scaling for the linear heads.
  const double gain = is_head_tensor(spec.name) ? 1.0 : 2.0;
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / spec.fan_in));
  std::mt19937_64 rng(derive_seed(seed, fnv1a(spec.name)));
  Matrix<Scalar> t(spec.rows, spec.cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace

template <typename Scalar>
Matrix<Scalar>& NetworkParams<Scalar>::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("missing parameter tensor: " + name);
  return it->second;
}

template <typename Scalar>
const Matrix<Scalar>& NetworkParams<Scalar>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("missing parameter tensor: " + name);
  return it->second;
}

template <typename Scalar>
NetworkParams<Scalar> NetworkParams<Scalar>::zeros_like() const {
  NetworkParams out;
  for (const auto& [name, t] : tensors) out.tensors.emplace(name, Matrix<Scalar>::Zero(t.rows(), t.cols()));
  return out;
}

template <typename Scalar>
size_t NetworkParams<Scalar>::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, t] : tensors) n += static_cast<size_t>(t.size());
  return n;
}

template <typename Scalar>
bool NetworkParams<Scalar>::all_finite() const {
  for (const auto& [name, t] : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

template <typename Scalar>
bool NetworkParams<Scalar>::operator==(const NetworkParams& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (const auto& [name, t] : tensors) {
    auto it = other.tensors.find(name);
    if (it == other.tensors.end() || it->second.rows() != t.rows() || it->second.cols() != t.cols()) return false;
    if (std::memcmp(t.data(), it->second.data(), sizeof(Scalar) * static_cast<size_t>(t.size())) != 0) return false;
  }
  return true;
}

template <typename Scalar>
NetworkParams<Scalar> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkParams<Scalar> params;
  const std::string head = head_prefix(cfg.head);
  for (const auto& spec : describe(cfg)) {
    if (is_head_tensor(spec.name) && spec.name.rfind(head, 0) != 0) continue;
    params.tensors.emplace(spec.name, init_tensor<Scalar>(spec, seed));
  }
  return params;
}

template <typename Scalar>
void init_head(NetworkParams<Scalar>& params, const NetworkConfig& cfg, std::uint64_t seed) {
  for (auto it = params.tensors.begin(); it != params.tensors.end();) {
    it = is_head_tensor(it->first) ? params.tensors.erase(it) : std::next(it);
  }
  const std::string head = head_prefix(cfg.head);
  for (const auto& spec : describe(cfg)) {
    if (spec.name.rfind(head, 0) == 0) params.tensors.emplace(spec.name, init_tensor<Scalar>(spec, seed));
  }
}

namespace {

/// (H*W) x (9*C) patch matrix for a 3x3 same-padded convolution.
template <typename Scalar>
Matrix<Scalar> im2col(const FeatureMap<Scalar>& in) {
  const int H = in.height, W = in.width, C = in.channels();
  Matrix<Scalar> col = Matrix<Scalar>::Zero(H * W, 9 * C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Scalar* dst = col.data() + static_cast<Eigen::Index>(y * W + x) * 9 * C;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= W) continue;
          std::memcpy(dst + (ky * 3 + kx) * C, in.data.data() + static_cast<Eigen::Index>(sy * W + sx) * C,
                      sizeof(Scalar) * C);
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
FeatureMap<Scalar> col2im(const Matrix<Scalar>& col, int H, int W, int C) {
  FeatureMap<Scalar> out(H, W, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Scalar* src = col.data() + static_cast<Eigen::Index>(y * W + x) * 9 * C;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= H) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= W) continue;
          Scalar* dst = out.data.data() + static_cast<Eigen::Index>(sy * W + sx) * C;
          const Scalar* s = src + (ky * 3 + kx) * C;
          for (int c = 0; c < C; ++c) dst[c] += s[c];
        }
      }
    }
  }
  return out;
}

/// Rows of a 3x3 weight that act on the first `used` of `total` input channels.
template <typename Scalar>
Matrix<Scalar> channel_slice(const Matrix<Scalar>& weight, int total, int used) {
  Matrix<Scalar> out(9 * used, weight.cols());
  for (int k = 0; k < 9; ++k) out.middleRows(k * used, used) = weight.middleRows(k * total, used);
  return out;
}

template <typename Scalar>
void scatter_channel_slice(const Matrix<Scalar>& slice, int total, int used, Matrix<Scalar>& weight) {
  for (int k = 0; k < 9; ++k) weight.middleRows(k * total, used) += slice.middleRows(k * used, used);
}

template <typename Scalar>
ConvTape<Scalar> conv3x3(FeatureMap<Scalar> input, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias) {
  if (weight.rows() != 9 * input.channels()) throw ShapeMismatchError("conv3x3: input channels do not match weight");
  ConvTape<Scalar> tape;
  Matrix<Scalar> out(input.pixels(), weight.cols());
  out.noalias() = im2col(input) * weight;
  out.rowwise() += bias.row(0);
  tape.output = FeatureMap<Scalar>(input.height, input.width, out.cwiseMax(Scalar(0)));
  tape.input = std::move(input);
  return tape;
}

/// Backward through ReLU(conv3x3). Returns the input gradient when requested.
template <typename Scalar>
Matrix<Scalar> conv3x3_backward(const ConvTape<Scalar>& tape, const Matrix<Scalar>& weight, Matrix<Scalar>& dweight,
                                Matrix<Scalar>& dbias, Matrix<Scalar> dout, bool need_input) {
  dout.array() *= (tape.output.data.array() > Scalar(0)).template cast<Scalar>();
  const Matrix<Scalar> col = im2col(tape.input);
  dweight.noalias() += col.transpose() * dout;
  dbias += dout.colwise().sum();
  if (!need_input) return {};
  Matrix<Scalar> dcol(dout.rows(), weight.rows());
  dcol.noalias() = dout * weight.transpose();
  return col2im(dcol, tape.input.height, tape.input.width, tape.input.channels()).data;
}

template <typename Scalar>
FeatureMap<Scalar> max_pool(const FeatureMap<Scalar>& in, std::vector<int>& argmax) {
  const int H = in.height / 2, W = in.width / 2, C = in.channels();
  FeatureMap<Scalar> out(H, W, C);
  argmax.assign(static_cast<size_t>(H) * W * C, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int r = y * W + x;
      const int src[4] = {(2 * y) * in.width + 2 * x, (2 * y) * in.width + 2 * x + 1,
                          (2 * y + 1) * in.width + 2 * x, (2 * y + 1) * in.width + 2 * x + 1};
      for (int c = 0; c < C; ++c) {
        int best = src[0];
        for (int k = 1; k < 4; ++k) {
          if (in.data(src[k], c) > in.data(best, c)) best = src[k];
        }
        out.data(r, c) = in.data(best, c);
        argmax[static_cast<size_t>(r) * C + c] = best;
      }
    }
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> max_pool_backward(const Matrix<Scalar>& dout, const std::vector<int>& argmax, int in_pixels) {
  const auto C = dout.cols();
  Matrix<Scalar> din = Matrix<Scalar>::Zero(in_pixels, C);
  for (Eigen::Index r = 0; r < dout.rows(); ++r) {
    for (Eigen::Index c = 0; c < C; ++c) din(argmax[static_cast<size_t>(r * C + c)], c) += dout(r, c);
  }
  return din;
}

template <typename Scalar>
FeatureMap<Scalar> upsample(const FeatureMap<Scalar>& in) {
  FeatureMap<Scalar> out(2 * in.height, 2 * in.width, in.channels());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.data.row(y * out.width + x) = in.data.row((y / 2) * in.width + x / 2);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> upsample_backward(const Matrix<Scalar>& dout, int out_h, int out_w) {
  const int H = out_h / 2, W = out_w / 2;
  Matrix<Scalar> din = Matrix<Scalar>::Zero(H * W, dout.cols());
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) din.row((y / 2) * W + x / 2) += dout.row(y * out_w + x);
  }
  return din;
}

template <typename Scalar>
FeatureMap<Scalar> hconcat(const FeatureMap<Scalar>& a, const Matrix<Scalar>& b) {
  Matrix<Scalar> cat(a.data.rows(), a.data.cols() + b.cols());
  cat << a.data, b;
  return FeatureMap<Scalar>(a.height, a.width, std::move(cat));
}

std::string enc(int l, const char* layer) { return "encoder." + std::to_string(l) + "." + layer; }
std::string dec(int l, const char* layer) { return "decoder." + std::to_string(l) + "." + layer; }

}  // namespace

template <typename Scalar>
RowVector<Scalar> global_average_pool(const FeatureMap<Scalar>& map) {
  return map.data.colwise().mean();
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

template <typename Scalar>
ForwardPass<Scalar> forward(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                            const FeatureMap<Scalar>& input, const ForwardOptions& opts) {
  if (input.channels() != cfg.in_channels) {
    throw ShapeMismatchError("forward: input has " + std::to_string(input.channels()) + " channels, network expects " +
                             std::to_string(cfg.in_channels));
  }
  const int m = cfg.spatial_multiple();
  if (input.height % m != 0 || input.width % m != 0 || input.height < m || input.width < m) {
    throw ShapeMismatchError("forward: H and W must be positive multiples of " + std::to_string(m));
  }

  ForwardPass<Scalar> pass;
  pass.skips = opts.skips.value_or(cfg.use_skips ? SkipMode::kFromEncoder : SkipMode::kNone);
  pass.encoder.resize(cfg.depth);
  FeatureMap<Scalar> a = input;
  for (int l = 0; l < cfg.depth; ++l) {
    auto& level = pass.encoder[l];
    level.conv1 = conv3x3(std::move(a), params.at(enc(l, "conv1.weight")), params.at(enc(l, "conv1.bias")));
    level.conv2 = conv3x3(level.conv1.output, params.at(enc(l, "conv2.weight")), params.at(enc(l, "conv2.bias")));
    a = max_pool(level.conv2.output, level.pool_argmax);
  }
  pass.bottleneck1 = conv3x3(std::move(a), params.at("bottleneck.conv1.weight"), params.at("bottleneck.conv1.bias"));
  pass.bottleneck2 =
      conv3x3(pass.bottleneck1.output, params.at("bottleneck.conv2.weight"), params.at("bottleneck.conv2.bias"));
  pass.embedding = global_average_pool(pass.bottleneck2.output);
  if (opts.extent == Extent::kEncoder) return pass;

  pass.decoder.resize(cfg.depth);
  const FeatureMap<Scalar>* d = &pass.bottleneck2.output;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    auto& level = pass.decoder[l];
    const int c = cfg.level_channels(l);
    level.up = conv3x3(upsample(*d), params.at(dec(l, "up.weight")), params.at(dec(l, "up.bias")));
    const auto& w1 = params.at(dec(l, "conv1.weight"));
    switch (pass.skips) {
      case SkipMode::kFromEncoder:
        level.conv1 = conv3x3(hconcat(level.up.output, pass.encoder[l].conv2.output.data), w1,
                              params.at(dec(l, "conv1.bias")));
        break;
      case SkipMode::kZero:
        level.conv1 = conv3x3(hconcat(level.up.output, Matrix<Scalar>::Zero(level.up.output.pixels(), c).eval()), w1,
                              params.at(dec(l, "conv1.bias")));
        break;
      case SkipMode::kNone:
        level.conv1 = conv3x3(level.up.output, channel_slice(w1, 2 * c, c), params.at(dec(l, "conv1.bias")));
        break;
    }
    level.conv2 = conv3x3(level.conv1.output, params.at(dec(l, "conv2.weight")), params.at(dec(l, "conv2.bias")));
    d = &level.conv2.output;
  }
  const std::string head = head_prefix(cfg.head);
  const auto& hw = params.at(head + "weight");
  Matrix<Scalar> out(d->pixels(), hw.cols());
  out.noalias() = d->data * hw;
  out.rowwise() += params.at(head + "bias").row(0);
  pass.output = FeatureMap<Scalar>(d->height, d->width, std::move(out));
  pass.has_output = true;
  return pass;
}

template <typename Scalar>
void backward(const NetworkParams<Scalar>& params, const NetworkConfig& cfg, const ForwardPass<Scalar>& pass,
              const OutputGradient<Scalar>& grad, NetworkParams<Scalar>& grads) {
  const bool has_out = grad.output.size() > 0;
  const bool has_emb = grad.embedding.size() > 0;
  if (!has_out && !has_emb) return;

  auto conv_back = [&](const ConvTape<Scalar>& tape, const std::string& prefix, Matrix<Scalar> dout,
                       bool need_input) {
    return conv3x3_backward(tape, params.at(prefix + ".weight"), grads.at(prefix + ".weight"),
                            grads.at(prefix + ".bias"), std::move(dout), need_input);
  };

  const auto& b2 = pass.bottleneck2.output;
  Matrix<Scalar> d_bottleneck;
  std::vector<Matrix<Scalar>> d_skip(cfg.depth);
  if (has_out) {
    if (!pass.has_output) throw ValidationError("backward: forward pass did not compute the head output");
    if (grad.output.rows() != pass.output.data.rows() || grad.output.cols() != pass.output.data.cols()) {
      throw ShapeMismatchError("backward: output gradient shape mismatch");
    }
    const std::string head = head_prefix(cfg.head);
    const auto& top = pass.decoder[0].conv2.output.data;
    grads.at(head + "weight").noalias() += top.transpose() * grad.output;
    grads.at(head + "bias") += grad.output.colwise().sum();
    Matrix<Scalar> dd = grad.output * params.at(head + "weight").transpose();
    for (int l = 0; l < cfg.depth; ++l) {
      const auto& level = pass.decoder[l];
      const int c = cfg.level_channels(l);
      dd = conv_back(level.conv2, dec(l, "conv2"), std::move(dd), true);
      Matrix<Scalar> dup;
      if (pass.skips == SkipMode::kNone) {
        const auto& w1 = params.at(dec(l, "conv1.weight"));
        const Matrix<Scalar> w_used = channel_slice(w1, 2 * c, c);
        Matrix<Scalar> dw_used = Matrix<Scalar>::Zero(w_used.rows(), w_used.cols());
        dup = conv3x3_backward(level.conv1, w_used, dw_used, grads.at(dec(l, "conv1.bias")), std::move(dd), true);
        scatter_channel_slice(dw_used, 2 * c, c, grads.at(dec(l, "conv1.weight")));
      } else {
        Matrix<Scalar> dcat = conv_back(level.conv1, dec(l, "conv1"), std::move(dd), true);
        dup = dcat.leftCols(c);
        if (pass.skips == SkipMode::kFromEncoder) d_skip[l] = dcat.rightCols(c);
      }
      Matrix<Scalar> du = conv_back(level.up, dec(l, "up"), std::move(dup), true);
      dd = upsample_backward(du, level.up.output.height, level.up.output.width);
    }
    d_bottleneck = std::move(dd);
  } else {
    d_bottleneck = Matrix<Scalar>::Zero(b2.data.rows(), b2.data.cols());
  }
  if (has_emb) {
    if (grad.embedding.size() != b2.channels()) throw ShapeMismatchError("backward: embedding gradient size mismatch");
    d_bottleneck.rowwise() += grad.embedding / static_cast<Scalar>(b2.pixels());
  }

  Matrix<Scalar> da = conv_back(pass.bottleneck2, "bottleneck.conv2", std::move(d_bottleneck), true);
  da = conv_back(pass.bottleneck1, "bottleneck.conv1", std::move(da), true);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const auto& level = pass.encoder[l];
    Matrix<Scalar> d2 = max_pool_backward(da, level.pool_argmax, level.conv2.output.pixels());
    if (d_skip[l].size() > 0) d2 += d_skip[l];
    Matrix<Scalar> d1 = conv_back(level.conv2, enc(l, "conv2"), std::move(d2), true);
    da = conv_back(level.conv1, enc(l, "conv1"), std::move(d1), l > 0);
  }
}

template <typename Scalar>
std::vector<FeatureMap<Scalar>> encode(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                       std::span<const FeatureMap<Scalar>> batch) {
  std::vector<FeatureMap<Scalar>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(forward(params, cfg, x, {Extent::kEncoder, {}}).bottleneck2.output);
  return out;
}

template <typename Scalar>
Matrix<Scalar> embed(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                     std::span<const FeatureMap<Scalar>> batch) {
  Matrix<Scalar> z(static_cast<Eigen::Index>(batch.size()), cfg.embedding_dim);
  for (size_t i = 0; i < batch.size(); ++i) {
    z.row(static_cast<Eigen::Index>(i)) = forward(params, cfg, batch[i], {Extent::kEncoder, {}}).embedding;
  }
  return z;
}

template <typename Scalar>
std::vector<FeatureMap<Scalar>> reconstruct(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                            std::span<const FeatureMap<Scalar>> batch) {
  if (cfg.head != Head::kReconstruction) throw ValidationError("head mismatch: reconstruct needs a reconstruction head");
  std::vector<FeatureMap<Scalar>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(forward(params, cfg, x).output);
  return out;
}

template <typename Scalar>
std::vector<FeatureMap<Scalar>> segment(const NetworkParams<Scalar>& params, const NetworkConfig& cfg,
                                        std::span<const FeatureMap<Scalar>> batch) {
  if (cfg.head != Head::kSegmentation) throw ValidationError("head mismatch: segment needs a segmentation head");
  if (!cfg.use_skips) throw ValidationError("head mismatch: segment requires skip connections");
  std::vector<FeatureMap<Scalar>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) {
    auto pass = forward(params, cfg, x);
    out.emplace_back(pass.output.height, pass.output.width, softmax_rows(pass.output.data));
  }
  return out;
}

#define CAS_INSTANTIATE_NETWORK(S)                                                                                  \
  template struct NetworkParams<S>;                                                                                 \
  template NetworkParams<S> init_params<S>(const NetworkConfig&, std::uint64_t);                                    \
  template void init_head<S>(NetworkParams<S>&, const NetworkConfig&, std::uint64_t);                               \
  template ForwardPass<S> forward<S>(const NetworkParams<S>&, const NetworkConfig&, const FeatureMap<S>&,            \
                                     const ForwardOptions&);                                                        \
  template void backward<S>(const NetworkParams<S>&, const NetworkConfig&, const ForwardPass<S>&,                   \
                            const OutputGradient<S>&, NetworkParams<S>&);                                           \
  template std::vector<FeatureMap<S>> encode<S>(const NetworkParams<S>&, const NetworkConfig&,                      \
                                                std::span<const FeatureMap<S>>);                                    \
  template Matrix<S> embed<S>(const NetworkParams<S>&, const NetworkConfig&, std::span<const FeatureMap<S>>);       \
  template std::vector<FeatureMap<S>> reconstruct<S>(const NetworkParams<S>&, const NetworkConfig&,                 \
                                                     std::span<const FeatureMap<S>>);                               \
  template std::vector<FeatureMap<S>> segment<S>(const NetworkParams<S>&, const NetworkConfig&,                     \
                                                 std::span<const FeatureMap<S>>);                                   \
  template Matrix<S> softmax_rows<S>(const Matrix<S>&);                                                             \
  template RowVector<S> global_average_pool<S>(const FeatureMap<S>&);

CAS_INSTANTIATE_NETWORK(float)
CAS_INSTANTIATE_NETWORK(double)

#undef CAS_INSTANTIATE_NETWORK

}  // namespace cas
