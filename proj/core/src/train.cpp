#include "socnn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "socnn/nn.hpp"

namespace socnn {

template <typename T>
ImageSource<T>::ImageSource(ImageSet images, std::array<double, 3> means, AugmentOptions augment)
    : images_(std::move(images)), means_(means), augment_(augment) {
  if (images_.channels != 3) throw ConfigError("image source: expected 3 channels");
}

template <typename T>
BasicTensor<T> ImageSource<T>::input(std::size_t i, Rng* augment) const {
  BasicTensor<T> img = image_tensor<T>(images_, i);
  subtract_channel_means(img, means_);
  if (augment == nullptr) return img;
  if (augment_.flip && augment->uniform() < 0.5) img = hflip(img);
  if (augment_.crop_pad > 0) {
    img = random_crop(img, images_.height, images_.width, *augment, augment_.crop_pad);
  }
  return img;
}

template <typename T>
BasicTensor<T> FeatureSource<T>::input(std::size_t i, Rng*) const {
  return set_.features.at(i).template cast<T>();
}

namespace {

// Splits [begin, end) into at most `threads` contiguous shards and runs
// fn(shard, lo, hi) on each. Shard 0 runs on the calling thread.
template <typename Fn>
void for_shards(std::size_t begin, std::size_t end, std::size_t threads, Fn&& fn) {
  const std::size_t n = end - begin;
  const std::size_t shards = std::max<std::size_t>(1, std::min(threads, n));
  if (shards == 1) {
    fn(std::size_t{0}, begin, end);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(shards);
  auto bounds = [&](std::size_t s) { return begin + n * s / shards; };
  for (std::size_t s = 1; s < shards; ++s) {
    pool.emplace_back([&, s] {
      try {
        fn(s, bounds(s), bounds(s + 1));
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  try {
    fn(std::size_t{0}, bounds(0), bounds(1));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

template <typename T>
EvalReport evaluate(const Model<T>& model, const DataSource<T>& data, std::size_t threads) {
  const std::size_t classes = model.spec().classes;
  struct Partial {
    double loss = 0;
    std::vector<std::size_t> hits, counts;
  };
  std::vector<Partial> parts(std::max<std::size_t>(1, threads));
  for (auto& p : parts) {
    p.hits.assign(classes, 0);
    p.counts.assign(classes, 0);
  }
  for_shards(0, data.size(), threads, [&](std::size_t s, std::size_t lo, std::size_t hi) {
    Partial& part = parts[s];
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t label = data.label(i);
      if (label >= classes) throw ConfigError("evaluate: label out of range");
      const BasicTensor<T> logits = model.predict(data.input(i, nullptr));
      const BasicTensor<T> prob = softmax(logits);
      part.loss -= std::log(std::max<double>(prob[label], std::numeric_limits<double>::min()));
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (logits[c] > logits[best]) best = c;
      ++part.counts[label];
      if (best == label) ++part.hits[label];
    }
  });

  EvalReport report;
  report.count = data.size();
  report.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  report.class_counts.assign(classes, 0);
  std::vector<std::size_t> hits(classes, 0);
  for (const auto& p : parts) {
    report.loss += p.loss;
    for (std::size_t c = 0; c < classes; ++c) {
      hits[c] += p.hits[c];
      report.class_counts[c] += p.counts[c];
    }
  }
  std::size_t total_hits = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    total_hits += hits[c];
    if (report.class_counts[c] > 0) {
      report.per_class[c] = static_cast<double>(hits[c]) / report.class_counts[c];
    }
  }
  if (report.count > 0) {
    report.loss /= report.count;
    report.top1 = static_cast<double>(total_hits) / report.count;
  }
  return report;
}

template <typename T>
double accumulate_batch(Model<T>& model, const DataSource<T>& data,
                        const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t end, const Rng& augment_root, std::size_t epoch,
                        std::size_t threads) {
  const std::size_t shards = std::max<std::size_t>(1, std::min(threads, end - begin));
  std::vector<std::vector<BasicTensor<T>>> sinks(shards);
  std::vector<double> losses(shards, 0.0);
  const Rng epoch_rng = augment_root.split("augment", epoch);
  const Model<T>& view = model;

  for_shards(begin, end, shards, [&](std::size_t s, std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t idx = order[k];
      Rng aug = epoch_rng.split("sample", idx);
      Graph<T> g;
      const auto bound = view.bind(g);
      const Var<T> x = g.constant(data.input(idx, &aug));
      const Var<T> loss = softmax_cross_entropy(view.forward(x, bound), data.label(idx));
      g.backward(loss);
      losses[s] += static_cast<double>(loss.value()[0]);
      view.collect_grads(g, bound, sinks[s]);
    }
  });

  auto& params = model.params();
  double total = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    total += losses[s];
    if (sinks[s].empty()) continue;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].trainable) add_inplace(params[i].grad, sinks[s][i]);
    }
  }
  return total;
}

template <typename T>
std::vector<EpochRecord> train(Model<T>& model, const DataSource<T>& train_data,
                               const DataSource<T>& val_data, const TrainOptions& options,
                               TrainState& state, const EpochCallback& on_epoch) {
  const SgdConfig& sgd = options.sgd;
  sgd.validate();
  if (train_data.size() == 0) throw ConfigError("train: empty training set");
  auto& params = model.params();
  const bool two_phase = options.phase1_epochs > 0;
  if (two_phase) {
    bool any_backbone = false;
    for (const auto& p : params.items()) any_backbone = any_backbone || p.backbone;
    if (!any_backbone) throw ConfigError("train: freeze phase requested but model has no backbone");
  }
  const double phase2_lr = options.phase2_lr > 0 ? options.phase2_lr : sgd.initial_lr / 10;

  if (!state.initialized) {
    state = TrainState{};
    state.scheduler = PlateauScheduler(sgd.initial_lr, sgd.plateau_factor, sgd.plateau_patience,
                                       sgd.plateau_threshold)
                          .state();
    state.best_val_loss = std::numeric_limits<double>::infinity();
    state.initialized = true;
  }
  PlateauScheduler scheduler(sgd.initial_lr, sgd.plateau_factor, sgd.plateau_patience,
                             sgd.plateau_threshold);
  scheduler.restore(state.scheduler);

  const Rng root(sgd.seed);
  std::vector<EpochRecord> records;
  for (std::size_t epoch = state.epoch + 1; epoch <= sgd.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (two_phase && state.phase == 0 && epoch > options.phase1_epochs) {
      state.phase = 1;
      scheduler = PlateauScheduler(phase2_lr, sgd.plateau_factor, sgd.plateau_patience,
                                   sgd.plateau_threshold);
    }
    params.freeze_backbone(two_phase && state.phase == 0);
    if (params.trainable_scalar_count() == 0) {
      throw ConfigError("train: no trainable parameters in phase " +
                        std::to_string(state.phase + 1));
    }

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.split("shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const double lr = scheduler.lr();
    double loss_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += sgd.batch_size) {
      const std::size_t e = std::min(order.size(), b + sgd.batch_size);
      params.zero_grad();
      loss_sum += accumulate_batch(model, train_data, order, b, e, root, epoch, options.threads);
      const T inv = static_cast<T>(1.0 / static_cast<double>(e - b));
      for (auto& p : params.items())
        if (p.trainable)
          for (auto& v : p.grad.data()) v *= inv;
      optimizer_step(params, lr, sgd.momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.lr = lr;
    if (val_data.size() > 0) {
      const EvalReport report = evaluate(model, val_data, options.threads);
      rec.val_loss = report.loss;
      rec.val_acc = report.top1;
    } else {
      rec.val_loss = rec.train_loss;
      rec.val_acc = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(rec.train_loss)) {
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    scheduler.observe(rec.val_loss);
    const bool improved = rec.val_loss < state.best_val_loss;
    if (improved) state.best_val_loss = rec.val_loss;
    state.epoch = epoch;
    state.scheduler = scheduler.state();
    rec.wall_seconds = options.record_time ? elapsed(start) : 0.0;
    records.push_back(rec);
    if (on_epoch) on_epoch(rec, state, improved);
  }
  params.freeze_backbone(false);
  return records;
}

template <typename T>
std::vector<EpochRecord> two_phase_train(Model<T>& model, const DataSource<T>& train_data,
                                         const DataSource<T>& val_data,
                                         const TrainOptions& options) {
  TrainState state;
  return train(model, train_data, val_data, options, state);
}

#define SOCNN_INSTANTIATE(T)                                                                 \
  template class ImageSource<T>;                                                             \
  template class FeatureSource<T>;                                                           \
  template EvalReport evaluate(const Model<T>&, const DataSource<T>&, std::size_t);          \
  template double accumulate_batch(Model<T>&, const DataSource<T>&,                          \
                                   const std::vector<std::size_t>&, std::size_t, std::size_t, \
                                   const Rng&, std::size_t, std::size_t);                    \
  template std::vector<EpochRecord> train(Model<T>&, const DataSource<T>&,                   \
                                          const DataSource<T>&, const TrainOptions&,         \
                                          TrainState&, const EpochCallback&);                \
  template std::vector<EpochRecord> two_phase_train(Model<T>&, const DataSource<T>&,         \
                                                    const DataSource<T>&, const TrainOptions&);

SOCNN_INSTANTIATE(float)
SOCNN_INSTANTIATE(double)

#undef SOCNN_INSTANTIATE

}  // namespace socnn
