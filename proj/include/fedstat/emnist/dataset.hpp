#pragma once

// EMNIST byclass images, the three client groups and the synthetic-glyph
// stand-in used when the real files are not available.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedstat/emnist/idx.hpp"
#include "fedstat/shard.hpp"
#include "fedstat/stats.hpp"

namespace fedstat::emnist {

inline constexpr std::size_t kNumClasses = 62;

enum class Group { Numbers, Lowercase, Uppercase };
inline constexpr Group kGroups[] = {Group::Numbers, Group::Lowercase, Group::Uppercase};

std::string to_string(Group g);

/// Half-open label range under the byclass mapping: digits 0-9,
/// uppercase 10-35, lowercase 36-61.
struct ClassRange {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t label) const { return label >= begin && label < end; }
};
ClassRange class_range(Group g);
Group group_of(std::size_t label);

char class_char(std::size_t label);
/// ArgumentError for characters outside [0-9A-Za-z].
std::size_t class_of(char c);

/// Raw 8-bit images, row-major, upright.
struct LabeledImages {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * height * width, height * width};
  }
};

/// Pairs an image and a label file. EMNIST stores every image transposed;
/// `transpose` undoes that.
LabeledImages from_idx(const IdxTensor& images, const IdxTensor& labels, bool transpose);

struct EmnistPaths {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;

  /// Standard byclass file names inside `dir`, preferring .gz when present.
  static EmnistPaths in_directory(const std::filesystem::path& dir);
  std::vector<std::filesystem::path> missing() const;
};

struct EmnistData {
  LabeledImages train;
  LabeledImages test;
  bool synthetic = false;
  std::string source;
};

/// MissingInputError listing every absent file.
EmnistData load_emnist(const EmnistPaths& paths);

/// How the download is obtained; printed by the CLI when files are missing.
std::string acquisition_instructions(const std::filesystem::path& dir);

struct GlyphOptions {
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 40;
  std::size_t size = 28;
  /// Distinct ways of writing each character.
  std::size_t variants = 2;
  /// Scales every per-sample perturbation (pose, stroke jitter, noise).
  double distortion = 1.0;
  std::uint64_t seed = 42;
};

/// Procedural 62-class glyph set. Some characters share a stroke prototype
/// across groups (z/Z/2, i/I/1, o/O/0, s/S/5 and several upper/lower pairs)
/// so that only the client group can tell them apart; each group also draws
/// with its own stroke width.
EmnistData synthetic_glyphs(const GlyphOptions& opts);

/// 2x2 mean pooling of one image into doubles in [0, 1].
std::vector<double> downsample2(std::span<const std::uint8_t> image, std::size_t height, std::size_t width);

struct PartitionOptions {
  std::size_t clients_per_group = 2;
  std::size_t points_per_client = 500;
  std::size_t test_per_client = 200;
  /// 28 keeps full resolution, 14 applies downsample2.
  std::size_t image_size = 14;
};

struct EmnistClient {
  std::size_t client_id = 0;
  Group group = Group::Numbers;
  /// Images as rows scaled to [0, 1], labels as class indices,
  /// cluster_id = group index, no bias column.
  ClientShard shard;
};

/// Clients are assigned to groups round-robin (Numbers, Lowercase,
/// Uppercase). Within a group the training and test samples are drawn
/// without replacement, so clients never share an image. CapacityError when
/// a group runs out.
std::vector<EmnistClient> partition_clients(const EmnistData& data, const PartitionOptions& opts,
                                            std::uint64_t seed);

/// nc principal-component loadings of [image || one-hot(label)], or the
/// dummy recipe when nc is 0.
LocalStats client_pcs(const ClientShard& shard, std::size_t nc, const StatsRecipe& dummy);

/// Shards viewed without the group wrapper.
std::vector<ClientShard> shards_of(std::span<const EmnistClient> clients);

}  // namespace fedstat::emnist
