#include "idc/extractor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "idc/random.hpp"

namespace idc {

namespace {

constexpr std::array<char, 4> kMagic{'I', 'D', 'C', 'W'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "weight I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32(const std::string& field) {
    std::uint32_t v;
    take(&v, sizeof v, field);
    return v;
  }
  void take(void* dst, std::size_t n, const std::string& field) {
    if (bytes_.size() - pos_ < n)
      throw FormatError("weight file truncated while reading " + field);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Extractor::Extractor(std::vector<ExtractorLayer> layers, float leaky_slope, Origin origin,
                     std::uint64_t seed)
    : layers_(std::move(layers)), leaky_slope_(leaky_slope), origin_(origin), seed_(seed) {
  if (layers_.empty()) throw ConfigError("extractor needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& f = layers_[i].filter;
    if (f.rank() != 4 || f.dim(2) != f.dim(3) || f.dim(2) % 2 == 0)
      throw ConfigError("extractor layer " + std::to_string(i) +
                        ": filter must be [C_out, C_in, k, k] with odd k");
    if (f.dim(0) == 0 || f.dim(1) == 0)
      throw ConfigError("extractor layer " + std::to_string(i) + ": zero width");
    if (i > 0 && f.dim(1) != layers_[i - 1].filter.dim(0))
      throw ConfigError("extractor layer " + std::to_string(i) + ": expects " +
                        std::to_string(f.dim(1)) + " input channels, previous layer emits " +
                        std::to_string(layers_[i - 1].filter.dim(0)));
  }
}

Extractor Extractor::random_init(const ArchSpec& arch, std::uint64_t seed) {
  if (arch.widths.size() < 2 || arch.kernels.size() + 1 != arch.widths.size())
    throw ConfigError("arch: need widths.size() == kernels.size() + 1 >= 2");
  Rng rng(seed);
  std::vector<ExtractorLayer> layers;
  const double gain = 2.0 / (1.0 + double(arch.leaky_slope) * arch.leaky_slope);
  for (std::size_t i = 0; i < arch.kernels.size(); ++i) {
    const std::size_t cin = arch.widths[i], cout = arch.widths[i + 1], k = arch.kernels[i];
    if (cin == 0 || cout == 0) throw ConfigError("arch: zero-width layer " + std::to_string(i));
    if (k % 2 == 0) throw ConfigError("arch: kernel size must be odd");
    // He-uniform bound for leaky-ReLU
    const double bound = std::sqrt(3.0 * gain / double(cin * k * k));
    Tensor<float> w({cout, cin, k, k});
    for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    layers.push_back({std::move(w), i + 1 < arch.kernels.size()});
  }
  return Extractor(std::move(layers), arch.leaky_slope, Origin::random_init, seed);
}

Extractor Extractor::load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight file " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  std::array<char, 4> magic{};
  r.take(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("weight file: bad magic (expected IDCW)");
  const auto version = r.u32("version");
  if (version != kVersion)
    throw FormatError("weight file: unsupported version " + std::to_string(version));
  const auto count = r.u32("tensor count");
  if (count == 0) throw FormatError("weight file: tensor count is 0");

  std::vector<ExtractorLayer> layers;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string tag = "tensor " + std::to_string(t);
    const auto rank = r.u32(tag + " rank");
    if (rank != 4) throw FormatError(tag + ": rank " + std::to_string(rank) + " (expected 4)");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32(tag + " dims"));
    const std::size_t n = shape_numel(shape);
    if (n == 0) throw FormatError(tag + ": zero-sized dims");
    if (r.remaining() < n * sizeof(float))
      throw FormatError(tag + ": declared " + std::to_string(n * sizeof(float)) +
                        " bytes, only " + std::to_string(r.remaining()) + " remain");
    Tensor<float> w(shape);
    r.take(w.data(), n * sizeof(float), tag + " data");
    layers.push_back({std::move(w), t + 1 < count});
  }
  if (r.remaining() != 0)
    throw FormatError("weight file: " + std::to_string(r.remaining()) +
                      " trailing bytes after declared tensors");
  try {
    return Extractor(std::move(layers), 0.2f, Origin::loaded);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("weight file shape table: ") + e.what());
  }
}

void Extractor::save_weights(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write weight file " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& layer : layers_) {
    put_u32(out, static_cast<std::uint32_t>(layer.filter.rank()));
    for (auto d : layer.filter.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(layer.filter.data()),
              static_cast<std::streamsize>(layer.filter.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing weight file " + path.string());
}

std::size_t Extractor::receptive_field() const {
  std::size_t rf = 1;
  for (const auto& l : layers_) rf += l.filter.dim(2) - 1;
  return rf;
}

template <class T>
Var<T> Extractor::extract(Var<T> patches) const {
  const Tensor<T>& x = patches.value();
  require_rank(x, 4, "extract");
  if (x.dim(1) != in_channels())
    throw ConfigError("extract: expected " + std::to_string(in_channels()) +
                      " channels, got " + std::to_string(x.dim(1)));
  Var<T> h = patches;
  for (const auto& layer : layers_) {
    h = ops::conv2d(h, layer.filter.template cast<T>());
    if (layer.activation) h = ops::leaky_relu(h, static_cast<T>(leaky_slope_));
  }
  return h;
}

template <class T>
Tensor<T> Extractor::extract(const Tensor<T>& patches) const {
  Tape<T> tape;
  return extract(tape.constant(patches)).value();
}

template <class T>
std::vector<bool> Extractor::activation_pattern(const Tensor<T>& patches) const {
  Tape<T> tape;
  Var<T> h = tape.constant(patches);
  std::vector<bool> pattern;
  for (const auto& layer : layers_) {
    h = ops::conv2d(h, layer.filter.template cast<T>());
    if (layer.activation) {
      for (const T v : h.value().values()) pattern.push_back(v > T{0});
      h = ops::leaky_relu(h, static_cast<T>(leaky_slope_));
    }
  }
  return pattern;
}

template Var<float> Extractor::extract(Var<float>) const;
template Var<double> Extractor::extract(Var<double>) const;
template Tensor<float> Extractor::extract(const Tensor<float>&) const;
template Tensor<double> Extractor::extract(const Tensor<double>&) const;
template std::vector<bool> Extractor::activation_pattern(const Tensor<float>&) const;
template std::vector<bool> Extractor::activation_pattern(const Tensor<double>&) const;

}  // namespace idc
