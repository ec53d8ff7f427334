#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "socnn/rng.hpp"
#include "socnn/tensor.hpp"

namespace socnn {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * 3;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;
inline constexpr std::size_t kCifarClasses = 10;

/// Compact 8-bit image store in H×W×C (interleaved) order.
struct ImageSet {
  std::size_t height = kCifarSide;
  std::size_t width = kCifarSide;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const { return height * width * channels; }
  /// Images [begin, end) as a new set.
  ImageSet slice(std::size_t begin, std::size_t end) const;
};

struct CifarData {
  ImageSet train;
  ImageSet test;
};

/// Parses one CIFAR-10 binary batch: 3073-byte records, a label byte then
/// R, G and B planes of 32×32 row-major bytes. Throws FormatError when the
/// size is not a multiple of 3073 or a label exceeds 9.
ImageSet read_cifar10_batch(const std::filesystem::path& file);
/// Inverse of read_cifar10_batch.
void write_cifar10_batch(const std::filesystem::path& file, const ImageSet& images);
/// data_batch_1..5.bin and test_batch.bin from `dir`.
CifarData load_cifar10(const std::filesystem::path& dir);

template <typename T>
struct Sample {
  BasicTensor<T> image;  ///< H×W×C, or N×D features for synthetic data
  std::size_t label = 0;
};

/// Image i scaled to [0, 1].
template <typename T>
BasicTensor<T> image_tensor(const ImageSet& images, std::size_t i);

/// Per-channel mean of the [0, 1]-scaled pixels.
std::array<double, 3> channel_means(const ImageSet& images);

template <typename T>
void subtract_channel_means(BasicTensor<T>& image, const std::array<double, 3>& means);

/// Reverses column order.
template <typename T>
BasicTensor<T> hflip(const BasicTensor<T>& image);

/// Window of out_h×out_w at offset (top, left) of the image zero-padded by
/// `pad` on every side.
template <typename T>
BasicTensor<T> crop_at(const BasicTensor<T>& image, std::size_t top, std::size_t left,
                       std::size_t out_h, std::size_t out_w, std::size_t pad);

/// crop_at with offsets drawn uniformly over all valid positions.
template <typename T>
BasicTensor<T> random_crop(const BasicTensor<T>& image, std::size_t out_h, std::size_t out_w,
                           Rng& rng, std::size_t pad = 0);

// ---------------------------------------------------------------------------
// Covariance-separable synthetic data.

/// Classes share a zero mean and differ only in covariance L_c L_cᵀ.
struct SynthSpec {
  std::size_t classes = 4;
  std::size_t feature_dim = 16;
  std::size_t sites = 64;
  std::vector<Tensor> factors;  ///< one D×D factor per class
  std::uint64_t seed = 0;

  void validate() const;
};

/// Factors Q_c diag(sqrt(λ)) with a shared geometric spectrum λ from
/// `max_variance` down to `max_variance / condition` and a random rotation
/// Q_c per class, so classes differ only in orientation.
SynthSpec make_synth_spec(std::size_t classes, std::size_t feature_dim, std::size_t sites,
                          std::uint64_t seed, double max_variance = 4.0,
                          double condition = 16.0);

struct FeatureSet {
  std::vector<Tensor> features;  ///< N×D each
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// `count` samples with balanced labels (i mod k). Rows are z·L_cᵀ with
/// z ~ N(0, I). `stream` selects an independent substream of spec.seed.
FeatureSet gen_synthetic(const SynthSpec& spec, std::size_t count, std::uint64_t stream = 0);

}  // namespace socnn
