#include "fedstat/emnist/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fedstat/errors.hpp"
#include "fedstat/rng.hpp"

namespace fedstat::emnist {

std::string to_string(Group g) {
  switch (g) {
    case Group::Numbers: return "numbers";
    case Group::Lowercase: return "lowercase";
    case Group::Uppercase: return "uppercase";
  }
  return "unknown";
}

ClassRange class_range(Group g) {
  switch (g) {
    case Group::Numbers: return {0, 10};
    case Group::Uppercase: return {10, 36};
    case Group::Lowercase: return {36, 62};
  }
  throw ArgumentError("class_range: unknown group");
}

Group group_of(std::size_t label) {
  if (label < 10) return Group::Numbers;
  if (label < 36) return Group::Uppercase;
  if (label < kNumClasses) return Group::Lowercase;
  throw ArgumentError("group_of: label " + std::to_string(label) + " outside 0..61");
}

char class_char(std::size_t label) {
  if (label < 10) return static_cast<char>('0' + label);
  if (label < 36) return static_cast<char>('A' + (label - 10));
  if (label < kNumClasses) return static_cast<char>('a' + (label - 36));
  throw ArgumentError("class_char: label " + std::to_string(label) + " outside 0..61");
}

std::size_t class_of(char c) {
  if (c >= '0' && c <= '9') return static_cast<std::size_t>(c - '0');
  if (c >= 'A' && c <= 'Z') return 10 + static_cast<std::size_t>(c - 'A');
  if (c >= 'a' && c <= 'z') return 36 + static_cast<std::size_t>(c - 'a');
  throw ArgumentError(std::string("class_of: '") + c + "' is not an EMNIST character");
}

// ------------------------------------------------------------------ files

LabeledImages from_idx(const IdxTensor& images, const IdxTensor& labels, bool transpose) {
  if (images.dims.size() != 3) throw FormatError("image file must have 3 dimensions");
  if (labels.dims.size() != 1) throw FormatError("label file must have 1 dimension");
  if (images.dims[0] != labels.dims[0]) {
    throw FormatError("image file holds " + std::to_string(images.dims[0]) + " images but label file holds " +
                      std::to_string(labels.dims[0]) + " labels");
  }
  const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
  LabeledImages out;
  out.height = transpose ? w : h;
  out.width = transpose ? h : w;
  out.labels = labels.data;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] >= kNumClasses) {
      throw FormatError("label " + std::to_string(out.labels[i]) + " at index " + std::to_string(i) +
                        " is outside the byclass range 0..61");
    }
  }
  if (!transpose) {
    out.pixels = images.data;
    return out;
  }
  out.pixels.resize(images.data.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* src = images.data.data() + i * h * w;
    std::uint8_t* dst = out.pixels.data() + i * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) dst[x * h + y] = src[y * w + x];
  }
  return out;
}

EmnistPaths EmnistPaths::in_directory(const std::filesystem::path& dir) {
  auto pick = [&](const std::string& stem) {
    const auto gz = dir / (stem + ".gz");
    return std::filesystem::exists(gz) ? gz : dir / stem;
  };
  return {pick("emnist-byclass-train-images-idx3-ubyte"), pick("emnist-byclass-train-labels-idx1-ubyte"),
          pick("emnist-byclass-test-images-idx3-ubyte"), pick("emnist-byclass-test-labels-idx1-ubyte")};
}

std::vector<std::filesystem::path> EmnistPaths::missing() const {
  std::vector<std::filesystem::path> out;
  for (const auto* p : {&train_images, &train_labels, &test_images, &test_labels})
    if (!std::filesystem::exists(*p)) out.push_back(*p);
  return out;
}

EmnistData load_emnist(const EmnistPaths& paths) {
  const auto absent = paths.missing();
  if (!absent.empty()) {
    std::string msg = "EMNIST files not found:";
    for (const auto& p : absent) msg += " " + p.string();
    throw MissingInputError(msg);
  }
  EmnistData d;
  d.train = from_idx(read_idx_file(paths.train_images), read_idx_file(paths.train_labels), true);
  d.test = from_idx(read_idx_file(paths.test_images), read_idx_file(paths.test_labels), true);
  d.source = paths.train_images.parent_path().string();
  return d;
}

std::string acquisition_instructions(const std::filesystem::path& dir) {
  return "Download the EMNIST 'gzip.zip' archive from\n"
         "  https://www.nist.gov/itl/products-and-services/emnist-dataset\n"
         "and extract the four emnist-byclass-{train,test}-{images-idx3,labels-idx1}-ubyte.gz files into\n"
         "  " + dir.string() + "\n"
         "or rerun with --allow-fallback to use procedurally generated glyphs.";
}

// ------------------------------------------------------------------ glyphs

namespace {

struct Point {
  double x;
  double y;
};
using Stroke = std::vector<Point>;
using Prototype = std::vector<Stroke>;

// Characters whose prototype is borrowed from another class.
std::size_t prototype_owner(std::size_t label) {
  switch (class_char(label)) {
    case '0': return class_of('O');
    case '1': return class_of('I');
    case '2': return class_of('Z');
    case '5': return class_of('S');
    default: break;
  }
  static constexpr std::string_view kSharedCase = "cikopsuvwxyz";
  const char ch = class_char(label);
  if (ch >= 'a' && ch <= 'z' && kSharedCase.find(ch) != std::string_view::npos) {
    return class_of(static_cast<char>(ch - 'a' + 'A'));
  }
  return label;
}

Prototype make_prototype(SeededRng& rng) {
  Prototype p;
  const std::size_t strokes = 2 + rng.uniform_index(3);
  for (std::size_t s = 0; s < strokes; ++s) {
    Stroke st;
    if (rng.uniform() < 0.5) {
      st.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});
      st.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});
    } else {
      const double cx = rng.uniform(0.35, 0.65), cy = rng.uniform(0.35, 0.65);
      const double r = rng.uniform(0.15, 0.32);
      const double a0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double sweep = rng.uniform(0.5, 1.5) * std::numbers::pi;
      for (int i = 0; i <= 10; ++i) {
        const double a = a0 + sweep * i / 10.0;
        st.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
      }
    }
    p.push_back(std::move(st));
  }
  return p;
}

// Stroke width in pixels at 28x28, before jitter.
double group_stroke_width(Group g) {
  switch (g) {
    case Group::Numbers: return 2.6;
    case Group::Uppercase: return 2.0;
    case Group::Lowercase: return 1.5;
  }
  return 2.0;
}

double segment_distance(double px, double py, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void render_sample(const Prototype& proto, Group group, std::size_t size, double k, SeededRng& rng,
                   std::uint8_t* out) {
  const double rot = k * rng.uniform(-0.2, 0.2);
  const double scale = 1.0 + k * rng.uniform(-0.15, 0.1);
  const double shear = k * rng.uniform(-0.15, 0.15);
  const double tx = k * rng.uniform(-0.07, 0.07), ty = k * rng.uniform(-0.07, 0.07);
  const double px_scale = static_cast<double>(size) / 28.0;
  const double half = 0.5 * (group_stroke_width(group) + rng.uniform(-0.45, 0.45)) * px_scale;
  const double cr = std::cos(rot), sr = std::sin(rot);

  std::vector<Stroke> placed;
  for (const auto& st : proto) {
    Stroke s;
    for (Point p : st) {
      double x = p.x - 0.5 + k * 0.025 * rng.normal();
      double y = p.y - 0.5 + k * 0.025 * rng.normal();
      x += shear * y;
      const double rx = cr * x - sr * y, ry = sr * x + cr * y;
      s.push_back({(0.5 + scale * rx + tx) * size, (0.5 + scale * ry + ty) * size});
    }
    placed.push_back(std::move(s));
  }
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      double d = 1e9;
      for (const auto& s : placed)
        for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(cx, cy, s[i], s[i + 1]));
      double v = std::clamp(half + 0.5 - d, 0.0, 1.0) + k * 0.06 * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      out[y * size + x] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
}

// protos[owner * variants + v] is variant v of a character.
LabeledImages render_split(const std::vector<Prototype>& protos, const std::vector<std::size_t>& owner,
                           std::size_t per_class, const GlyphOptions& opts, std::uint64_t split) {
  const std::size_t size = opts.size;
  LabeledImages out;
  out.height = out.width = size;
  out.pixels.resize(kNumClasses * per_class * size * size);
  out.labels.resize(kNumClasses * per_class);
  // Interleave classes so that a prefix of the set is roughly balanced.
  std::size_t idx = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < kNumClasses; ++c, ++idx) {
      SeededRng rng = derive_stream(opts.seed, {0x676c797068, split, c, i});
      const auto& proto = protos[owner[c] * opts.variants + rng.uniform_index(opts.variants)];
      render_sample(proto, group_of(c), size, opts.distortion, rng, out.pixels.data() + idx * size * size);
      out.labels[idx] = static_cast<std::uint8_t>(c);
    }
  }
  return out;
}

}  // namespace

EmnistData synthetic_glyphs(const GlyphOptions& opts) {
  if (opts.size < 8) throw ArgumentError("synthetic_glyphs: image size must be at least 8");
  if (opts.variants == 0) throw ArgumentError("synthetic_glyphs: variants must be positive");
  if (!(opts.distortion >= 0.0)) throw ArgumentError("synthetic_glyphs: distortion must be non-negative");
  std::vector<std::size_t> owner(kNumClasses);
  std::vector<Prototype> protos(kNumClasses * opts.variants);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    owner[c] = prototype_owner(c);
    if (owner[c] != c) continue;
    for (std::size_t v = 0; v < opts.variants; ++v) {
      SeededRng rng = derive_stream(opts.seed, {0x70726f746f, c, v});
      protos[c * opts.variants + v] = make_prototype(rng);
    }
  }
  EmnistData d;
  d.train = render_split(protos, owner, opts.train_per_class, opts, 0);
  d.test = render_split(protos, owner, opts.test_per_class, opts, 1);
  d.synthetic = true;
  d.source = "synthetic-glyphs";
  return d;
}

// -------------------------------------------------------------- partition

std::vector<double> downsample2(std::span<const std::uint8_t> image, std::size_t height, std::size_t width) {
  if (image.size() != height * width) throw DimensionError("downsample2: image size does not match its shape");
  const std::size_t h = height / 2, w = width / 2;
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t a = 2 * y * width + 2 * x;
      const double sum = double(image[a]) + image[a + 1] + image[a + width] + image[a + width + 1];
      out[y * w + x] = sum / (4.0 * 255.0);
    }
  }
  return out;
}

namespace {

Tensor2 gather(const LabeledImages& src, std::span<const std::size_t> idx, std::size_t image_size) {
  const bool halve = image_size * 2 == src.height && image_size * 2 == src.width;
  if (!halve && (image_size != src.height || image_size != src.width)) {
    throw ArgumentError("partition_clients: cannot produce " + std::to_string(image_size) + "x" +
                        std::to_string(image_size) + " images from " + std::to_string(src.height) + "x" +
                        std::to_string(src.width));
  }
  Tensor2 x(idx.size(), image_size * image_size);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto row = x.row(r);
    const auto img = src.image(idx[r]);
    if (halve) {
      const auto d = downsample2(img, src.height, src.width);
      std::copy(d.begin(), d.end(), row.begin());
    } else {
      for (std::size_t i = 0; i < img.size(); ++i) row[i] = img[i] / 255.0;
    }
  }
  return x;
}

std::vector<double> labels_of(const LabeledImages& src, std::span<const std::size_t> idx) {
  std::vector<double> y(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) y[r] = src.labels[idx[r]];
  return y;
}

std::vector<std::size_t> group_indices(const LabeledImages& src, Group g) {
  const auto range = class_range(g);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < src.size(); ++i)
    if (range.contains(src.labels[i])) out.push_back(i);
  return out;
}

}  // namespace

std::vector<EmnistClient> partition_clients(const EmnistData& data, const PartitionOptions& opts,
                                            std::uint64_t seed) {
  if (opts.clients_per_group == 0 || opts.points_per_client == 0 || opts.test_per_client == 0) {
    throw ArgumentError("partition_clients: client and sample counts must be positive");
  }
  std::array<std::vector<std::size_t>, 3> train_pool, test_pool;
  for (std::size_t gi = 0; gi < 3; ++gi) {
    const Group g = kGroups[gi];
    train_pool[gi] = group_indices(data.train, g);
    test_pool[gi] = group_indices(data.test, g);
    const std::size_t need_train = opts.clients_per_group * opts.points_per_client;
    const std::size_t need_test = opts.clients_per_group * opts.test_per_client;
    if (train_pool[gi].size() < need_train || test_pool[gi].size() < need_test) {
      throw CapacityError("group " + to_string(g) + " has " + std::to_string(train_pool[gi].size()) + " training and " +
                          std::to_string(test_pool[gi].size()) + " test images; " +
                          std::to_string(opts.clients_per_group) + " clients need " + std::to_string(need_train) +
                          " and " + std::to_string(need_test));
    }
    SeededRng tr = derive_stream(seed, {0x7061727469, gi, 0});
    tr.shuffle(train_pool[gi]);
    SeededRng te = derive_stream(seed, {0x7061727469, gi, 1});
    te.shuffle(test_pool[gi]);
  }

  std::vector<EmnistClient> clients;
  const std::size_t total = 3 * opts.clients_per_group;
  for (std::size_t c = 0; c < total; ++c) {
    const std::size_t gi = c % 3, slot = c / 3;
    std::span<const std::size_t> tr(train_pool[gi].data() + slot * opts.points_per_client, opts.points_per_client);
    std::span<const std::size_t> te(test_pool[gi].data() + slot * opts.test_per_client, opts.test_per_client);
    EmnistClient ec;
    ec.client_id = c;
    ec.group = kGroups[gi];
    ec.shard.client_id = c;
    ec.shard.cluster_id = gi;
    ec.shard.x_train = gather(data.train, tr, opts.image_size);
    ec.shard.y_train = labels_of(data.train, tr);
    ec.shard.x_test = gather(data.test, te, opts.image_size);
    ec.shard.y_test = labels_of(data.test, te);
    ec.shard.has_bias_column = false;
    ec.shard.num_classes = kNumClasses;
    clients.push_back(std::move(ec));
  }
  return clients;
}

LocalStats client_pcs(const ClientShard& shard, std::size_t nc, const StatsRecipe& dummy) {
  if (nc == 0) return client_stats(shard, dummy);
  return client_stats(shard, StatsRecipe::principal_components(nc));
}

std::vector<ClientShard> shards_of(std::span<const EmnistClient> clients) {
  std::vector<ClientShard> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(c.shard);
  return out;
}

}  // namespace fedstat::emnist
