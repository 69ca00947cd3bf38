#pragma once

// IDX container format used by the MNIST family: big-endian magic
// 0x0000 08 NN (unsigned bytes, NN dimensions), NN big-endian uint32 sizes,
// then the payload. gzip-wrapped files are inflated transparently.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedstat::emnist {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::uint32_t magic() const { return 0x00000800u | static_cast<std::uint32_t>(dims.size()); }
  bool operator==(const IdxTensor& other) const = default;
};

/// FormatError on an unknown magic (the value is in the message),
/// LengthError when the payload is shorter or longer than the header says.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx(const IdxTensor& t);

/// Inflates a gzip stream; FormatError on corrupt input.
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

/// MissingInputError when the file cannot be opened.
IdxTensor read_idx_file(const std::filesystem::path& path);

}  // namespace fedstat::emnist
