#include "deepdeblur/io/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::io {

static_assert(std::endian::native == std::endian::little, "blob format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'D', 'B', 'L', 'O', 'B', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  return v;
}

}  // namespace

const diff::Tensor& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("archive has no tensor named '" + name + "'");
}

std::string encode_archive(const TensorArchive& archive) {
  nlohmann::json manifest;
  manifest["version"] = kContainerVersion;
  manifest["meta"] = archive.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const std::uint64_t length = t.size() * sizeof(float);
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", length}});
    offset += length;
  }
  manifest["blob_bytes"] = offset;
  const std::string text = manifest.dump(1);

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& entry : archive.tensors) {
    const auto data = entry.second.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size_bytes());
  }
  return out;
}

TensorArchive decode_archive(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("not a deepdeblur container (bad magic)");
  }
  const std::uint64_t mlen = get_u64(bytes, 8);
  if (mlen > bytes.size() - 16) throw FormatError("manifest length exceeds file size");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }

  TensorArchive archive;
  const std::size_t blob_start = 16 + mlen;
  const std::uint64_t blob_size = bytes.size() - blob_start;
  try {
    if (manifest.at("version").get<int>() != kContainerVersion) {
      throw FormatError("unsupported container version " + manifest.at("version").dump());
    }
    if (manifest.at("blob_bytes").get<std::uint64_t>() != blob_size) {
      throw FormatError("corrupt container: manifest declares " + manifest.at("blob_bytes").dump() +
                        " blob bytes, file holds " + std::to_string(blob_size));
    }
    archive.meta = manifest.at("meta");
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<diff::Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      if (length != diff::shape_numel(shape) * sizeof(float)) {
        throw FormatError("corrupt container: tensor '" + name + "' length does not match its shape");
      }
      if (offset > blob_size || length > blob_size - offset) {
        throw FormatError("corrupt container: tensor '" + name + "' extends past the blob");
      }
      std::vector<float> data(length / sizeof(float));
      std::memcpy(data.data(), bytes.data() + blob_start + offset, length);
      archive.tensors.emplace_back(name, diff::Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return archive;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  write_file(path, encode_archive(archive));
}

TensorArchive read_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }

}  // namespace deepdeblur::io
