#include "socnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "socnn/linalg.hpp"

namespace socnn {

ImageSet ImageSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw ConfigError("image slice out of range");
  ImageSet out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  const std::size_t bytes = image_bytes();
  out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(begin * bytes),
                    pixels.begin() + static_cast<std::ptrdiff_t>(end * bytes));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

ImageSet read_cifar10_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cifar10: cannot open " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: " + file.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  ImageSet out;
  out.labels.resize(count);
  out.pixels.resize(count * kCifarPixels);
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= kCifarClasses) {
      throw FormatError("cifar10: record " + std::to_string(r) + " of " + file.string() +
                        " has label " + std::to_string(rec[0]));
    }
    out.labels[r] = rec[0];
    std::uint8_t* dst = out.pixels.data() + r * kCifarPixels;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = rec[1 + c * plane + p];
  }
  return out;
}

void write_cifar10_batch(const std::filesystem::path& file, const ImageSet& images) {
  if (images.height != kCifarSide || images.width != kCifarSide || images.channels != 3) {
    throw FormatError("cifar10: only 32x32x3 images can be written");
  }
  std::vector<std::uint8_t> bytes(images.size() * kCifarRecordBytes);
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < images.size(); ++r) {
    std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    rec[0] = images.labels[r];
    const std::uint8_t* src = images.pixels.data() + r * kCifarPixels;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) rec[1 + c * plane + p] = src[p * 3 + c];
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cifar10: cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CifarData load_cifar10(const std::filesystem::path& dir) {
  CifarData data;
  for (int b = 1; b <= 5; ++b) {
    auto part = read_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"));
    data.train.pixels.insert(data.train.pixels.end(), part.pixels.begin(), part.pixels.end());
    data.train.labels.insert(data.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  data.test = read_cifar10_batch(dir / "test_batch.bin");
  return data;
}

template <typename T>
BasicTensor<T> image_tensor(const ImageSet& images, std::size_t i) {
  if (i >= images.size()) throw ConfigError("image index out of range");
  const std::size_t bytes = images.image_bytes();
  BasicTensor<T> out(Shape{images.height, images.width, images.channels});
  const std::uint8_t* src = images.pixels.data() + i * bytes;
  for (std::size_t k = 0; k < bytes; ++k) out[k] = static_cast<T>(src[k]) / T{255};
  return out;
}

std::array<double, 3> channel_means(const ImageSet& images) {
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  if (images.channels != 3) throw ShapeError("channel_means: expects 3 channels");
  const std::size_t sites = images.pixels.size() / 3;
  for (std::size_t p = 0; p < sites; ++p)
    for (std::size_t c = 0; c < 3; ++c) sums[c] += images.pixels[p * 3 + c];
  for (auto& s : sums) s = sites ? s / (255.0 * static_cast<double>(sites)) : 0.0;
  return sums;
}

template <typename T>
void subtract_channel_means(BasicTensor<T>& image, const std::array<double, 3>& means) {
  require_rank(image.shape(), 3, "subtract_channel_means");
  if (image.shape()[2] != 3) throw ShapeError("subtract_channel_means: expects 3 channels");
  for (std::size_t p = 0; p < image.numel() / 3; ++p)
    for (std::size_t c = 0; c < 3; ++c) image[p * 3 + c] -= static_cast<T>(means[c]);
}

template <typename T>
BasicTensor<T> hflip(const BasicTensor<T>& image) {
  if (image.rank() != 2 && image.rank() != 3) throw ShapeError("hflip: expects rank 2 or 3");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  const std::size_t c = image.rank() == 3 ? image.shape()[2] : 1;
  BasicTensor<T> out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k)
        out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
  return out;
}

template <typename T>
BasicTensor<T> crop_at(const BasicTensor<T>& image, std::size_t top, std::size_t left,
                       std::size_t out_h, std::size_t out_w, std::size_t pad) {
  require_rank(image.shape(), 3, "crop");
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (out_h > h + 2 * pad || out_w > w + 2 * pad || top + out_h > h + 2 * pad ||
      left + out_w > w + 2 * pad) {
    throw ShapeError("crop: window does not fit the padded image");
  }
  BasicTensor<T> out(Shape{out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto sy = static_cast<std::ptrdiff_t>(top + y) - static_cast<std::ptrdiff_t>(pad);
    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto sx = static_cast<std::ptrdiff_t>(left + x) - static_cast<std::ptrdiff_t>(pad);
      if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
      for (std::size_t k = 0; k < c; ++k)
        out(y, x, k) = image(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), k);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> random_crop(const BasicTensor<T>& image, std::size_t out_h, std::size_t out_w,
                           Rng& rng, std::size_t pad) {
  require_rank(image.shape(), 3, "random_crop");
  const std::size_t ph = image.shape()[0] + 2 * pad, pw = image.shape()[1] + 2 * pad;
  if (out_h > ph || out_w > pw) throw ShapeError("random_crop: window larger than padded image");
  const std::size_t top = rng.below(ph - out_h + 1);
  const std::size_t left = rng.below(pw - out_w + 1);
  return crop_at(image, top, left, out_h, out_w, pad);
}

// ---------------------------------------------------------------------------

void SynthSpec::validate() const {
  if (classes == 0 || feature_dim == 0 || sites == 0) {
    throw ConfigError("synth: classes, feature_dim and sites must be positive");
  }
  if (factors.size() != classes) {
    throw ConfigError("synth: expected " + std::to_string(classes) + " class factors, got " +
                      std::to_string(factors.size()));
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& f = factors[c];
    if (f.rank() != 2 || f.rows() != feature_dim || f.cols() != feature_dim) {
      throw ConfigError("synth: factor " + std::to_string(c) + " must be D x D");
    }
    const Tensor cov = matmul_nt(f, f);
    const auto eig = sym_eig(cov);
    if (!(eig.values[feature_dim - 1] > 1e-12 * std::max(1.0, eig.values[0]))) {
      throw ConfigError("synth: covariance of class " + std::to_string(c) +
                        " is not positive definite");
    }
  }
}

SynthSpec make_synth_spec(std::size_t classes, std::size_t feature_dim, std::size_t sites,
                          std::uint64_t seed, double max_variance, double condition) {
  SynthSpec spec;
  spec.classes = classes;
  spec.feature_dim = feature_dim;
  spec.sites = sites;
  spec.seed = seed;
  Rng root(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    Rng rng = root.split("synth-factor", c);
    Tensor gauss(Shape{feature_dim, feature_dim});
    for (auto& v : gauss.data()) v = rng.normal();
    const Tensor q = qr_thin(gauss).q;
    Tensor factor(Shape{feature_dim, feature_dim});
    for (std::size_t j = 0; j < feature_dim; ++j) {
      const double t = feature_dim > 1 ? static_cast<double>(j) / static_cast<double>(feature_dim - 1) : 0.0;
      const double variance = max_variance * std::pow(condition, -t);
      const double s = std::sqrt(variance);
      for (std::size_t i = 0; i < feature_dim; ++i) factor(i, j) = q(i, j) * s;
    }
    spec.factors.push_back(std::move(factor));
  }
  spec.validate();
  return spec;
}

FeatureSet gen_synthetic(const SynthSpec& spec, std::size_t count, std::uint64_t stream) {
  spec.validate();
  Rng rng = Rng(spec.seed).split("synth-samples", stream);
  const std::size_t d = spec.feature_dim;
  FeatureSet out;
  out.features.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % spec.classes;
    Tensor z(Shape{spec.sites, d});
    for (auto& v : z.data()) v = rng.normal();
    out.features.push_back(matmul_nt(z, spec.factors[label]));
    out.labels.push_back(label);
  }
  return out;
}

#define SOCNN_INSTANTIATE(T)                                                                 \
  template BasicTensor<T> image_tensor(const ImageSet&, std::size_t);                        \
  template void subtract_channel_means(BasicTensor<T>&, const std::array<double, 3>&);       \
  template BasicTensor<T> hflip(const BasicTensor<T>&);                                      \
  template BasicTensor<T> crop_at(const BasicTensor<T>&, std::size_t, std::size_t,           \
                                  std::size_t, std::size_t, std::size_t);                    \
  template BasicTensor<T> random_crop(const BasicTensor<T>&, std::size_t, std::size_t, Rng&, \
                                      std::size_t);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
