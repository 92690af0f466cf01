#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cas/binary_io.hpp"
#include "cas/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <random>

using namespace cas;
namespace fs = std::filesystem;

namespace {

fs::path scratch_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cas_test_checkpoint";
  fs::create_directories(dir);
  fs::remove(dir / name);
  return dir / name;
}

NetworkConfig small_net() {
  NetworkConfig c;
  c.depth = 2;
  c.base_channels = 4;
  c.embedding_dim = 8;
  return c;
}

bool same_bytes(const NetworkParams<float>& a, const NetworkParams<float>& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (const auto& [name, t] : a.tensors) {
    if (!b.contains(name)) return false;
    const auto& u = b.at(name);
    if (t.rows() != u.rows() || t.cols() != u.cols()) return false;
    if (std::memcmp(t.data(), u.data(), sizeof(float) * static_cast<size_t>(t.size())) != 0) return false;
  }
  return true;
}

Checkpoint sample(bool with_clusters) {
  Checkpoint c;
  c.config = small_net();
  c.params = init_params<float>(c.config, 11);
  // awkward values survive the trip too
  c.params.at("encoder.0.conv1.bias")(0, 0) = -0.0f;
  c.params.at("encoder.0.conv1.bias")(0, 1) = 1e-40f;
  if (with_clusters) {
    ClusterState cs;
    cs.centroids = Matrix<double>(3, 8);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index k = 0; k < cs.centroids.size(); ++k) cs.centroids.data()[k] = g(rng);
    c.clusters = cs;
  }
  c.extra["digest"] = "0123456789abcdef";
  return c;
}

}  // namespace

TEST_CASE("round-trip without clusters") {
  const auto path = scratch_file("plain.cas");
  const auto c = sample(false);
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  CHECK(same_bytes(back.params, c.params));
  CHECK_FALSE(back.clusters.has_value());
  CHECK(back.config.depth == 2);
  CHECK(back.config.embedding_dim == 8);
  CHECK(back.extra.at("digest") == "0123456789abcdef");
  CHECK(std::signbit(back.params.at("encoder.0.conv1.bias")(0, 0)));
}

TEST_CASE("round-trip restores centroids exactly") {
  const auto path = scratch_file("clusters.cas");
  const auto c = sample(true);
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  REQUIRE(back.clusters.has_value());
  CHECK(back.clusters->centroids == c.clusters->centroids);
  CHECK(back.clusters->alpha == c.clusters->alpha);
  CHECK(same_bytes(back.params, c.params));

  // saving the loaded checkpoint reproduces the file byte for byte
  const auto again = scratch_file("clusters2.cas");
  save_checkpoint(back, again);
  CHECK(read_bytes(path) == read_bytes(again));
}

TEST_CASE("truncated or damaged files are corrupt") {
  const auto path = scratch_file("trunc.cas");
  save_checkpoint(sample(true), path);
  const auto bytes = read_bytes(path);
  for (size_t keep : {size_t{0}, size_t{100}, size_t{600}, bytes.size() / 2, bytes.size() - 1100}) {
    write_bytes(path, bytes.substr(0, keep));
    CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);
  }
  std::string flipped = bytes;
  flipped[148] ^= 0x11;  // header checksum field
  write_bytes(path, flipped);
  CHECK_THROWS_AS(load_checkpoint(path), CorruptFileError);

  CHECK_THROWS_AS(load_checkpoint(scratch_file("absent.cas")), MissingFileError);
}

TEST_CASE("unknown format version is rejected") {
  const auto path = scratch_file("version.cas");
  save_checkpoint(sample(false), path);
  std::string bytes = read_bytes(path);
  const std::string needle = "\"format_version\": 1";
  const auto at = bytes.find(needle);
  REQUIRE(at != std::string::npos);
  bytes[at + needle.size() - 1] = '7';  // member data only; the header checksum still holds
  write_bytes(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), VersionMismatchError);
}

TEST_CASE("non-finite parameters are refused") {
  auto c = sample(false);
  c.params.at("encoder.0.conv1.weight")(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(save_checkpoint(c, scratch_file("nan.cas")), ValidationError);
}
