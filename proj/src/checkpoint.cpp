#include "cas/checkpoint.hpp"

#include "cas/binary_io.hpp"
#include "cas/config_io.hpp"

#include <cstdio>
#include <map>

namespace cas {

using json = nlohmann::json;

namespace {

constexpr size_t kBlock = 512;

void put_octal(char* field, size_t width, std::uint64_t value) {
  // width - 1 digits followed by NUL
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

std::string tar_header(const std::string& name, size_t size) {
  if (name.size() >= 100) throw ValidationError("archive member name too long: " + name);
  std::string h(kBlock, '\0');
  std::memcpy(h.data(), name.data(), name.size());
  put_octal(h.data() + 100, 8, 0644);
  put_octal(h.data() + 108, 8, 0);
  put_octal(h.data() + 116, 8, 0);
  put_octal(h.data() + 124, 12, size);
  put_octal(h.data() + 136, 12, 0);
  h[156] = '0';
  std::memcpy(h.data() + 257, "ustar", 6);
  std::memcpy(h.data() + 263, "00", 2);
  std::memset(h.data() + 148, ' ', 8);
  unsigned sum = 0;
  for (unsigned char c : h) sum += c;
  std::snprintf(h.data() + 148, 8, "%06o", sum);
  h[155] = ' ';
  return h;
}

void append_member(std::string& out, const std::string& name, const std::string& data) {
  out += tar_header(name, data.size());
  out += data;
  out.append((kBlock - data.size() % kBlock) % kBlock, '\0');
}

std::uint64_t parse_octal(const char* field, size_t width) {
  std::uint64_t v = 0;
  size_t i = 0;
  while (i < width && field[i] == ' ') ++i;
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
  if (i < width && field[i] != '\0' && field[i] != ' ') throw CorruptFileError("bad octal field in archive header");
  return v;
}

std::map<std::string, std::string> read_members(const std::string& bytes) {
  std::map<std::string, std::string> members;
  size_t pos = 0;
  while (true) {
    if (pos + kBlock > bytes.size()) throw CorruptFileError("truncated checkpoint archive");
    const char* h = bytes.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) {
      if (pos + 2 * kBlock > bytes.size()) throw CorruptFileError("truncated checkpoint archive");
      break;
    }
    unsigned sum = 0;
    for (size_t i = 0; i < kBlock; ++i) {
      sum += (i >= 148 && i < 156) ? static_cast<unsigned>(' ') : static_cast<unsigned char>(h[i]);
    }
    if (sum != parse_octal(h + 148, 8)) throw CorruptFileError("checkpoint archive header checksum mismatch");
    std::string name(h, strnlen(h, 100));
    const size_t size = parse_octal(h + 124, 12);
    pos += kBlock;
    if (pos + size > bytes.size()) throw CorruptFileError("truncated checkpoint archive member: " + name);
    members[name] = bytes.substr(pos, size);
    pos += (size + kBlock - 1) / kBlock * kBlock;
  }
  return members;
}

const std::string& member(const std::map<std::string, std::string>& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw CorruptFileError("checkpoint is missing member " + name);
  return it->second;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!ckpt.params.all_finite()) throw ValidationError("refusing to save non-finite parameters");
  json meta = {{"format", "cas-checkpoint"},
               {"format_version", kCheckpointVersion},
               {"network", ckpt.config},
               {"extra", ckpt.extra}};
  json tensors = json::array();
  std::string payload;
  for (const auto& [name, t] : ckpt.params.tensors) {
    const std::string file = "params/" + name + ".f32";
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"file", file}});
    append_member(payload, file, encode_f32(std::vector<float>(t.data(), t.data() + t.size())));
  }
  meta["tensors"] = tensors;
  if (ckpt.clusters) {
    const auto& c = ckpt.clusters->centroids;
    meta["clusters"] = {{"k", c.rows()}, {"dim", c.cols()}, {"alpha", ckpt.clusters->alpha}, {"file", "centroids.f64"}};
    append_member(payload, "centroids.f64", encode_le(std::vector<double>(c.data(), c.data() + c.size())));
  } else {
    meta["clusters"] = nullptr;
  }

  std::string archive;
  append_member(archive, "meta.json", meta.dump(2));
  archive += payload;
  archive.append(2 * kBlock, '\0');

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_bytes(tmp, archive);
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("missing checkpoint: " + path.string());
  const auto members = read_members(read_bytes(path));

  json meta;
  try {
    meta = json::parse(member(members, "meta.json"));
  } catch (const json::parse_error& e) {
    throw CorruptFileError(std::string("checkpoint meta.json: ") + e.what());
  }
  if (meta.value("format", "") != "cas-checkpoint") throw CorruptFileError("not a cas checkpoint: " + path.string());
  const int version = meta.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  try {
    ckpt.config = meta.at("network").get<NetworkConfig>();
    ckpt.extra = meta.value("extra", json::object());
    for (const auto& t : meta.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto values = decode_f32(member(members, t.at("file").get<std::string>()));
      if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
        throw CorruptFileError("tensor " + t.at("name").get<std::string>() + " has wrong size");
      }
      Matrix<float> m(rows, cols);
      std::copy(values.begin(), values.end(), m.data());
      ckpt.params.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
    }
    if (!meta.at("clusters").is_null()) {
      const auto& c = meta.at("clusters");
      const auto k = c.at("k").get<Eigen::Index>();
      const auto d = c.at("dim").get<Eigen::Index>();
      const auto values = decode_le<double>(member(members, c.at("file").get<std::string>()));
      if (static_cast<Eigen::Index>(values.size()) != k * d) throw CorruptFileError("centroids have wrong size");
      ClusterState cs;
      cs.alpha = c.at("alpha").get<double>();
      cs.centroids.resize(k, d);
      std::copy(values.begin(), values.end(), cs.centroids.data());
      ckpt.clusters = std::move(cs);
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("checkpoint metadata: ") + e.what());
  }

  // Tensor set must match the stored architecture.
  for (const auto& spec : describe(ckpt.config)) {
    auto it = ckpt.params.tensors.find(spec.name);
    if (it == ckpt.params.tensors.end()) continue;  // the unused head may be absent
    if (it->second.rows() != spec.rows || it->second.cols() != spec.cols) {
      throw CorruptFileError("tensor " + spec.name + " does not match the stored network config");
    }
  }
  return ckpt;
}

}  // namespace cas
