#pragma once

#include "cas/core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cas {

/// Multi-band image patch, H x W x C single-precision values.
using RasterPatch = FeatureMap<float>;

/// Per-pixel class ids in [0, L), row-major H x W.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), labels(static_cast<size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
  bool operator==(const LabelMask&) const = default;
};

struct LabeledPatch {
  RasterPatch image;
  LabelMask mask;
};

struct DatasetManifest {
  int height = 0;
  int width = 0;
  int bands = 0;
  int classes = 0;
  std::vector<std::string> class_names;
  std::optional<std::uint64_t> seed;
};

struct PatchDataset {
  std::vector<LabeledPatch> labeled;
  std::vector<RasterPatch> unlabeled;
  DatasetManifest manifest;

  size_t total() const { return labeled.size() + unlabeled.size(); }
  /// Features of X^l followed by X^u, labels dropped.
  std::vector<RasterPatch> all_features() const;
  void validate() const;
};

struct SyntheticConfig {
  int n_labeled = 10;
  int n_unlabeled = 200;
  int height = 64;
  int width = 64;
  int bands = 4;
  int classes = 4;
  int modes_per_class = 2;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Appearance of one within-class mode of the synthetic world.
struct SyntheticMode {
  int label = 0;
  Eigen::VectorXd band_mean;
  Eigen::VectorXd blob_offset;
  double blob_density = 0.0;
};

/// The per-mode spectral table the generator draws from; a pure function of
/// (bands, classes, modes_per_class, noise_std, seed).
std::vector<SyntheticMode> synthetic_modes(const SyntheticConfig& cfg);

PatchDataset generate_synthetic(const SyntheticConfig& cfg);

/// The synthetic dataset together with what a real survey would not give
/// us: the masks behind the unlabeled patches and an independent labeled
/// holdout drawn from the same modes.
struct SyntheticWorld {
  PatchDataset dataset;
  std::vector<LabelMask> unlabeled_masks;
  std::vector<LabeledPatch> holdout;
};
SyntheticWorld generate_synthetic_world(const SyntheticConfig& cfg, int n_holdout);

/// Writes `manifest.json` plus one raw array per patch. Refuses to write
/// into a non-empty directory unless `force` is set.
std::filesystem::path save_dataset(const PatchDataset& ds, const std::filesystem::path& dir, bool force = false);
PatchDataset load_dataset(const std::filesystem::path& manifest_path);

/// Majority class of the mask; ties go to the smallest class id.
int aggregated_label(const LabelMask& mask, int num_classes);

struct FewShotSplit {
  std::vector<size_t> subset;
  std::vector<size_t> remainder;
};

/// Uniform sample of n labeled indices without replacement.
FewShotSplit few_shot_split(const PatchDataset& ds, size_t n, std::uint64_t seed);

/// Reflect-pads H and W up to the next multiple of `multiple`.
RasterPatch reflect_pad(const RasterPatch& patch, int multiple);
LabelMask crop(const LabelMask& mask, int height, int width);

std::vector<std::string> default_class_names(int classes);

}  // namespace cas
