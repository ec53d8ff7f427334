#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "socnn/data.hpp"
#include "socnn/models.hpp"
#include "socnn/optim.hpp"

namespace socnn {

/// Indexed sample provider. `augment` is null for evaluation.
template <typename T>
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t label(std::size_t i) const = 0;
  virtual BasicTensor<T> input(std::size_t i, Rng* augment) const = 0;
};

struct AugmentOptions {
  bool flip = true;
  std::size_t crop_pad = 4;  ///< 0 disables random cropping
};

/// CIFAR-style images, scaled to [0, 1] and mean-centred per channel.
template <typename T>
class ImageSource final : public DataSource<T> {
 public:
  ImageSource(ImageSet images, std::array<double, 3> means, AugmentOptions augment = {});
  std::size_t size() const override { return images_.size(); }
  std::size_t label(std::size_t i) const override { return images_.labels.at(i); }
  BasicTensor<T> input(std::size_t i, Rng* augment) const override;

 private:
  ImageSet images_;
  std::array<double, 3> means_;
  AugmentOptions augment_;
};

/// Precomputed N×D feature matrices (synthetic data). No augmentation.
template <typename T>
class FeatureSource final : public DataSource<T> {
 public:
  explicit FeatureSource(FeatureSet set) : set_(std::move(set)) {}
  std::size_t size() const override { return set_.size(); }
  std::size_t label(std::size_t i) const override { return set_.labels.at(i); }
  BasicTensor<T> input(std::size_t i, Rng* augment) const override;

 private:
  FeatureSet set_;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based, continues across resumes
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
  double lr = 0;  ///< rate used during the epoch
  double wall_seconds = 0;
};

struct TrainOptions {
  SgdConfig sgd;
  std::size_t threads = 1;
  /// Epochs trained with the backbone frozen before fine-tuning everything.
  /// Zero trains all parameters from the start.
  std::size_t phase1_epochs = 0;
  /// Fine-tuning rate; zero means initial_lr / 10.
  double phase2_lr = 0;
  /// When false wall_seconds is reported as 0 so metrics are reproducible.
  bool record_time = true;
};

/// Everything besides the parameters needed to resume a run.
struct TrainState {
  std::size_t epoch = 0;  ///< completed epochs
  std::size_t phase = 0;  ///< 0 before the fine-tuning switch, 1 after
  PlateauScheduler::State scheduler{0, 0, 0, 0};
  double best_val_loss = 0;
  bool initialized = false;
};

struct EvalReport {
  double loss = 0;
  double top1 = 0;
  std::vector<double> per_class;  ///< NaN for classes without samples
  std::vector<std::size_t> class_counts;
  std::size_t count = 0;
};

template <typename T>
EvalReport evaluate(const Model<T>& model, const DataSource<T>& data, std::size_t threads = 1);

/// Summed loss and gradients over samples [begin, end) of `order`.
/// Gradients are accumulated in p.grad of `model`'s trainable parameters.
template <typename T>
double accumulate_batch(Model<T>& model, const DataSource<T>& data,
                        const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t end, const Rng& augment_root, std::size_t epoch,
                        std::size_t threads);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&, bool improved)>;

/// SGD epoch loop with plateau scheduling and optional freeze/fine-tune
/// phases. Resumes from `state` when it is initialized. `on_epoch` runs after
/// every epoch (for metrics and checkpoints).
template <typename T>
std::vector<EpochRecord> train(Model<T>& model, const DataSource<T>& train_data,
                               const DataSource<T>& val_data, const TrainOptions& options,
                               TrainState& state, const EpochCallback& on_epoch = {});

/// Convenience wrapper: phase one for `options.phase1_epochs` with the
/// backbone frozen, then everything at the phase-two rate. Throws
/// ConfigError when a phase has nothing to train.
template <typename T>
std::vector<EpochRecord> two_phase_train(Model<T>& model, const DataSource<T>& train_data,
                                         const DataSource<T>& val_data,
                                         const TrainOptions& options);

}  // namespace socnn
