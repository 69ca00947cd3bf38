#include "fedstat/emnist/idx.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "fedstat/errors.hpp"

namespace fedstat::emnist {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

}  // namespace

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  // 16 + MAX_WBITS selects the gzip wrapper
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gunzip: inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gunzip: corrupt gzip stream (zlib code " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw LengthError("gunzip: truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (is_gzip(bytes)) {
    const auto inflated = gunzip(bytes);
    return parse_idx(inflated);
  }
  if (bytes.size() < 4) {
    throw LengthError("parse_idx: " + std::to_string(bytes.size()) + " bytes is shorter than the magic");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic && magic != kLabelMagic) {
    throw FormatError("parse_idx: bad magic " + hex32(magic) + " (expected " + hex32(kImageMagic) +
                      " or " + hex32(kLabelMagic) + ")");
  }
  const std::size_t ndims = magic & 0xFF;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw LengthError("parse_idx: header needs " + std::to_string(header) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  IdxTensor t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    t.dims.push_back(read_be32(bytes, 4 + 4 * i));
    count *= t.dims.back();
  }
  const std::uint64_t available = bytes.size() - header;
  if (available != count) {
    throw LengthError("parse_idx: dims announce " + std::to_string(count) + " payload bytes, found " +
                      std::to_string(available));
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
  if (t.dims.size() != 1 && t.dims.size() != 3) {
    throw FormatError("serialize_idx: only 1-d label and 3-d image tensors are supported");
  }
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.data.size()) {
    throw LengthError("serialize_idx: dims describe " + std::to_string(count) + " bytes, data has " +
                      std::to_string(t.data.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * t.dims.size() + t.data.size());
  write_be32(out, t.magic());
  for (auto d : t.dims) write_be32(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

IdxTensor read_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open IDX file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

}  // namespace fedstat::emnist
