#include "cas/dataio.hpp"

#include "cas/binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace cas {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kDatasetFormat = "cas-patch-dataset";
constexpr int kDatasetVersion = 1;

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

std::string patch_name(const char* prefix, size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu.%s", prefix, i, ext);
  return buf;
}

void write_patch(const RasterPatch& p, const fs::path& path) {
  std::vector<float> values(p.data.data(), p.data.data() + p.data.size());
  write_bytes(path, encode_f32(values));
}

void write_mask(const LabelMask& m, const fs::path& path) {
  write_bytes(path, std::string(m.labels.begin(), m.labels.end()));
}

RasterPatch read_patch(const fs::path& path, const DatasetManifest& man) {
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path.string());
  std::string bytes = read_bytes(path);
  size_t expected = static_cast<size_t>(man.height) * man.width * man.bands * 4;
  if (bytes.size() != expected) {
    throw ShapeMismatchError("shape mismatch: " + path.string() + " has " + std::to_string(bytes.size()) +
                             " bytes, expected " + std::to_string(expected));
  }
  std::vector<float> values = decode_f32(bytes);
  RasterPatch p(man.height, man.width, man.bands);
  std::copy(values.begin(), values.end(), p.data.data());
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite value in " + path.string());
  }
  return p;
}

LabelMask read_mask(const fs::path& path, const DatasetManifest& man) {
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path.string());
  std::string bytes = read_bytes(path);
  size_t expected = static_cast<size_t>(man.height) * man.width;
  if (bytes.size() != expected) {
    throw ShapeMismatchError("shape mismatch: " + path.string() + " has " + std::to_string(bytes.size()) +
                             " bytes, expected " + std::to_string(expected));
  }
  LabelMask m(man.height, man.width);
  for (size_t i = 0; i < expected; ++i) {
    auto v = static_cast<std::uint8_t>(bytes[i]);
    if (v >= man.classes) {
      throw LabelRangeError("label out of range: " + path.string() + " contains " + std::to_string(v) +
                            " with L=" + std::to_string(man.classes));
    }
    m.labels[i] = v;
  }
  return m;
}

}  // namespace

std::vector<std::string> default_class_names(int classes) {
  static const char* kNames[] = {"cashew", "forest", "urban", "background"};
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) {
    names.push_back(c < 4 ? kNames[c] : "class_" + std::to_string(c));
  }
  return names;
}

std::vector<RasterPatch> PatchDataset::all_features() const {
  std::vector<RasterPatch> out;
  out.reserve(total());
  for (const auto& lp : labeled) out.push_back(lp.image);
  for (const auto& p : unlabeled) out.push_back(p);
  return out;
}

void PatchDataset::validate() const {
  const auto& m = manifest;
  require(m.height >= 1 && m.width >= 1 && m.bands >= 1, "dataset: H, W, C must be positive");
  require(m.classes >= 1 && m.classes <= 256, "dataset: L must be in [1, 256]");
  require(total() >= 1, "dataset: needs at least one patch");
  require(m.class_names.empty() || static_cast<int>(m.class_names.size()) == m.classes,
          "dataset: class_names length must equal L");
  auto check_patch = [&](const RasterPatch& p) {
    if (p.height != m.height || p.width != m.width || p.channels() != m.bands) {
      throw ShapeMismatchError("shape mismatch: patch does not match manifest H x W x C");
    }
    if (!p.data.allFinite()) throw ValidationError("dataset: non-finite pixel value");
  };
  for (const auto& lp : labeled) {
    check_patch(lp.image);
    if (lp.mask.height != m.height || lp.mask.width != m.width ||
        lp.mask.labels.size() != static_cast<size_t>(m.height) * m.width) {
      throw ShapeMismatchError("shape mismatch: mask does not match manifest H x W");
    }
    for (auto v : lp.mask.labels) {
      if (v >= m.classes) throw LabelRangeError("label out of range: " + std::to_string(v));
    }
  }
  for (const auto& p : unlabeled) check_patch(p);
}

void SyntheticConfig::validate() const {
  require(n_labeled >= 0, "n_labeled must be >= 0");
  require(n_unlabeled >= 0, "n_unlabeled must be >= 0");
  require(n_labeled + n_unlabeled >= 1, "n_labeled + n_unlabeled must be >= 1");
  require(height >= 8, "height must be >= 8");
  require(width >= 8, "width must be >= 8");
  require(bands >= 1, "bands must be >= 1");
  require(classes >= 1 && classes <= 255, "classes must be in [1, 255]");
  require(modes_per_class >= 1, "modes_per_class must be >= 1");
  require(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std must be finite and >= 0");
}

std::vector<SyntheticMode> synthetic_modes(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  const double between = std::max(6.0 * cfg.noise_std, 0.15);
  const double within = std::max(4.0 * cfg.noise_std, 0.1);
  // Band means are centred on zero with roughly unit spread.
  double span = 1.5;
  std::vector<SyntheticMode> modes;
  int failures = 0;
  while (static_cast<int>(modes.size()) < cfg.classes * cfg.modes_per_class) {
    const int label = static_cast<int>(modes.size()) / cfg.modes_per_class;
    std::uniform_real_distribution<double> coord(-span, span);
    Eigen::VectorXd mean(cfg.bands);
    for (int b = 0; b < cfg.bands; ++b) mean(b) = coord(rng);
    bool ok = true;
    for (const auto& other : modes) {
      double d = (other.band_mean - mean).norm();
      if (d < (other.label == label ? within : between)) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (++failures % 2000 == 0) span *= 1.25;
      continue;
    }
    SyntheticMode mode;
    mode.label = label;
    mode.band_mean = mean;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd dir(cfg.bands);
    for (int b = 0; b < cfg.bands; ++b) dir(b) = gauss(rng);
    mode.blob_offset = dir.normalized() * cfg.noise_std;
    mode.blob_density = std::uniform_real_distribution<double>(0.05, 0.45)(rng);
    modes.push_back(std::move(mode));
  }
  return modes;
}

namespace {

struct GeneratedPatch {
  RasterPatch image;
  LabelMask mask;
};

GeneratedPatch generate_patch(const SyntheticConfig& cfg, const std::vector<SyntheticMode>& modes,
                              std::uint64_t stream) {
  std::mt19937_64 rng(derive_seed(cfg.seed, stream));
  const int H = cfg.height, W = cfg.width;
  const int n_modes = static_cast<int>(modes.size());
  std::uniform_int_distribution<int> pick_mode(0, n_modes - 1);

  // 2-4 regions: a Voronoi partition of the patch around random sites.
  const int n_regions = std::uniform_int_distribution<int>(2, 4)(rng);
  std::vector<double> sy(n_regions), sx(n_regions);
  std::vector<int> region_mode(n_regions);
  for (int r = 0; r < n_regions; ++r) {
    sy[r] = std::uniform_real_distribution<double>(0, H)(rng);
    sx[r] = std::uniform_real_distribution<double>(0, W)(rng);
    region_mode[r] = pick_mode(rng);
  }
  std::vector<int> mode_map(static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      int best = 0;
      double best_d = 1e300;
      for (int r = 0; r < n_regions; ++r) {
        const double dy = y + 0.5 - sy[r], dx = x + 0.5 - sx[r];
        if (dy * dy + dx * dx < best_d) {
          best_d = dy * dy + dx * dx;
          best = r;
        }
      }
      mode_map[static_cast<size_t>(y) * W + x] = region_mode[best];
    }
  }

  // Texture: each mode scatters small disks at its own density.
  constexpr double kBlobRadius = 1.5;
  std::vector<std::vector<bool>> blob(n_modes);
  for (int m = 0; m < n_modes; ++m) {
    blob[m].assign(static_cast<size_t>(H) * W, false);
    const int count = static_cast<int>(
        std::lround(modes[m].blob_density * H * W / (3.14159265358979 * kBlobRadius * kBlobRadius)));
    for (int i = 0; i < count; ++i) {
      const double cy = std::uniform_real_distribution<double>(0, H)(rng);
      const double cx = std::uniform_real_distribution<double>(0, W)(rng);
      for (int y = std::max(0, int(cy - 2)); y < std::min(H, int(cy + 3)); ++y) {
        for (int x = std::max(0, int(cx - 2)); x < std::min(W, int(cx + 3)); ++x) {
          double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
          if (dy * dy + dx * dx <= kBlobRadius * kBlobRadius) blob[m][static_cast<size_t>(y) * W + x] = true;
        }
      }
    }
  }

  GeneratedPatch out{RasterPatch(H, W, cfg.bands), LabelMask(H, W)};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int p = 0; p < H * W; ++p) {
    const auto& mode = modes[mode_map[p]];
    out.mask.labels[p] = static_cast<std::uint8_t>(mode.label);
    for (int b = 0; b < cfg.bands; ++b) {
      double v = mode.band_mean(b) + (blob[mode_map[p]][p] ? mode.blob_offset(b) : 0.0);
      v += cfg.noise_std * noise(rng);
      out.image.data(p, b) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

SyntheticWorld generate_synthetic_world(const SyntheticConfig& cfg, int n_holdout) {
  cfg.validate();
  if (n_holdout < 0) throw ValidationError("n_holdout must be >= 0");
  const auto modes = synthetic_modes(cfg);
  SyntheticWorld w;
  auto& ds = w.dataset;
  ds.manifest.height = cfg.height;
  ds.manifest.width = cfg.width;
  ds.manifest.bands = cfg.bands;
  ds.manifest.classes = cfg.classes;
  ds.manifest.class_names = default_class_names(cfg.classes);
  ds.manifest.seed = cfg.seed;
  for (int i = 0; i < cfg.n_labeled; ++i) {
    auto g = generate_patch(cfg, modes, 100 + 2 * static_cast<std::uint64_t>(i));
    ds.labeled.push_back({std::move(g.image), std::move(g.mask)});
  }
  for (int i = 0; i < cfg.n_unlabeled; ++i) {
    auto g = generate_patch(cfg, modes, 101 + 2 * static_cast<std::uint64_t>(i));
    ds.unlabeled.push_back(std::move(g.image));
    w.unlabeled_masks.push_back(std::move(g.mask));
  }
  // Held-out streams sit far above any realistic patch count.
  for (int i = 0; i < n_holdout; ++i) {
    auto g = generate_patch(cfg, modes, (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(i));
    w.holdout.push_back({std::move(g.image), std::move(g.mask)});
  }
  return w;
}

PatchDataset generate_synthetic(const SyntheticConfig& cfg) { return generate_synthetic_world(cfg, 0).dataset; }

fs::path save_dataset(const PatchDataset& ds, const fs::path& dir, bool force) {
  ds.validate();
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw IoError("refusing to overwrite non-empty directory " + dir.string() + " (use force)");
  }
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());

  const auto& m = ds.manifest;
  json man;
  man["format"] = kDatasetFormat;
  man["version"] = kDatasetVersion;
  man["H"] = m.height;
  man["W"] = m.width;
  man["C"] = m.bands;
  man["L"] = m.classes;
  man["class_names"] = m.class_names.empty() ? default_class_names(m.classes) : m.class_names;
  man["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  man["labeled"] = json::array();
  man["unlabeled"] = json::array();
  for (size_t i = 0; i < ds.labeled.size(); ++i) {
    std::string img = patch_name("labeled", i, "f32"), msk = patch_name("labeled", i, "u8");
    write_patch(ds.labeled[i].image, dir / img);
    write_mask(ds.labeled[i].mask, dir / msk);
    man["labeled"].push_back({{"image", img}, {"mask", msk}});
  }
  for (size_t i = 0; i < ds.unlabeled.size(); ++i) {
    std::string img = patch_name("unlabeled", i, "f32");
    write_patch(ds.unlabeled[i], dir / img);
    man["unlabeled"].push_back({{"image", img}});
  }
  const fs::path manifest_path = dir / kManifestName;
  write_bytes(manifest_path, man.dump(2) + "\n");
  return manifest_path;
}

PatchDataset load_dataset(const fs::path& manifest_arg) {
  fs::path manifest_path = manifest_arg;
  if (fs::is_directory(manifest_path)) manifest_path /= kManifestName;
  if (!fs::exists(manifest_path)) throw MissingFileError("missing file: " + manifest_path.string());
  json man;
  try {
    man = json::parse(read_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw CorruptFileError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const fs::path dir = manifest_path.parent_path();
  PatchDataset ds;
  try {
    if (man.value("format", std::string()) != kDatasetFormat) throw ValidationError("manifest: unknown format");
    if (man.at("version").get<int>() != kDatasetVersion) {
      throw VersionMismatchError("manifest: unsupported version " + man.at("version").dump());
    }
    auto& m = ds.manifest;
    m.height = man.at("H").get<int>();
    m.width = man.at("W").get<int>();
    m.bands = man.at("C").get<int>();
    m.classes = man.at("L").get<int>();
    m.class_names = man.value("class_names", std::vector<std::string>{});
    if (man.contains("seed") && !man["seed"].is_null()) m.seed = man["seed"].get<std::uint64_t>();
    if (m.height < 1 || m.width < 1 || m.bands < 1 || m.classes < 1 || m.classes > 256) {
      throw ValidationError("manifest: H, W, C, L out of range");
    }
    for (const auto& entry : man.at("labeled")) {
      LabeledPatch lp;
      lp.image = read_patch(dir / entry.at("image").get<std::string>(), m);
      lp.mask = read_mask(dir / entry.at("mask").get<std::string>(), m);
      ds.labeled.push_back(std::move(lp));
    }
    for (const auto& entry : man.at("unlabeled")) {
      ds.unlabeled.push_back(read_patch(dir / entry.at("image").get<std::string>(), m));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

int aggregated_label(const LabelMask& mask, int num_classes) {
  std::vector<size_t> counts(static_cast<size_t>(num_classes), 0);
  for (auto v : mask.labels) {
    if (v >= num_classes) throw LabelRangeError("label out of range: " + std::to_string(v));
    ++counts[v];
  }
  // max_element returns the first maximum, i.e. the smallest class id.
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

FewShotSplit few_shot_split(const PatchDataset& ds, size_t n, std::uint64_t seed) {
  if (n > ds.labeled.size()) {
    throw ValidationError("few_shot_split: n=" + std::to_string(n) + " exceeds N_l=" + std::to_string(ds.labeled.size()));
  }
  std::vector<size_t> order(ds.labeled.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 7));
  std::shuffle(order.begin(), order.end(), rng);
  FewShotSplit split;
  split.subset.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  split.remainder.assign(order.begin() + static_cast<std::ptrdiff_t>(n), order.end());
  std::sort(split.subset.begin(), split.subset.end());
  std::sort(split.remainder.begin(), split.remainder.end());
  return split;
}

RasterPatch reflect_pad(const RasterPatch& patch, int multiple) {
  const int H = (patch.height + multiple - 1) / multiple * multiple;
  const int W = (patch.width + multiple - 1) / multiple * multiple;
  if (H == patch.height && W == patch.width) return patch;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  RasterPatch out(H, W, patch.channels());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      out.data.row(y * W + x) = patch.data.row(reflect(y, patch.height) * patch.width + reflect(x, patch.width));
    }
  }
  return out;
}

LabelMask crop(const LabelMask& mask, int height, int width) {
  LabelMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(y, x);
  }
  return out;
}

}  // namespace cas
