#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cas {

/// Dense row-major matrix. Feature maps use one row per pixel and one
/// column per channel, so a 1x1 convolution is a plain matrix product.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A single H x W x C image or activation map. Row index is y * width + x.
template <typename Scalar>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int channels) : height(h), width(w), data(Matrix<Scalar>::Zero(h * w, channels)) {}
  FeatureMap(int h, int w, Matrix<Scalar> values) : height(h), width(w), data(std::move(values)) {}

  int channels() const { return static_cast<int>(data.cols()); }
  int pixels() const { return height * width; }
  Scalar& at(int y, int x, int c) { return data(y * width + x, c); }
  Scalar at(int y, int x, int c) const { return data(y * width + x, c); }

  template <typename Other>
  FeatureMap<Other> cast() const {
    return FeatureMap<Other>(height, width, data.template cast<Other>());
  }

  bool operator==(const FeatureMap& other) const {
    return height == other.height && width == other.width && data.rows() == other.data.rows() &&
           data.cols() == other.data.cols() && data == other.data;
  }
};

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};
class MissingFileError : public Error {
 public:
  using Error::Error;
};
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};
class LabelRangeError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class CorruptFileError : public Error {
 public:
  using Error::Error;
};
class VersionMismatchError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public Error {
 public:
  using Error::Error;
};
class DegenerateClusteringError : public Error {
 public:
  using Error::Error;
};

/// Mixes a base seed with a stream id; used to derive independent,
/// reproducible RNG streams (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a byte string; stable across runs and platforms.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cas
