#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "socnn/data.hpp"
#include "socnn/nn.hpp"
#include "socnn/train.hpp"

using namespace socnn;

namespace {

// Fixed random inputs of any shape, labelled i mod classes.
class RandomSource final : public DataSource<double> {
 public:
  RandomSource(Shape shape, std::size_t n, std::size_t classes, std::uint64_t seed) : classes_(classes) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) inputs_.push_back(oracle::random(shape, rng));
  }
  std::size_t size() const override { return inputs_.size(); }
  std::size_t label(std::size_t i) const override { return i % classes_; }
  Tensor input(std::size_t i, Rng*) const override { return inputs_.at(i); }

 private:
  std::vector<Tensor> inputs_;
  std::size_t classes_;
};

TrainOptions quick_options(std::size_t epochs) {
  TrainOptions o;
  o.sgd.initial_lr = 0.05;
  o.sgd.batch_size = 4;
  o.sgd.max_epochs = epochs;
  o.sgd.seed = 17;
  o.record_time = false;
  return o;
}

std::vector<Tensor> snapshot(const Model<double>& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.params().items()) out.push_back(p.value);
  return out;
}

}  // namespace

TEST_CASE("image source normalizes and augments") {
  ImageSet set;
  set.pixels.assign(kCifarPixels, 255);
  set.labels = {7};
  const ImageSource<double> plain(set, {0.5, 0.25, 0.0}, AugmentOptions{false, 0});
  const Tensor x = plain.input(0, nullptr);
  CHECK(x(3, 4, 0) == 0.5);
  CHECK(x(3, 4, 1) == 0.75);
  CHECK(x(3, 4, 2) == 1.0);
  CHECK(plain.label(0) == 7);

  const ImageSource<double> aug(set, {0, 0, 0}, AugmentOptions{true, 4});
  Rng rng(1);
  bool saw_padding = false;
  for (int i = 0; i < 20; ++i) {
    const Tensor a = aug.input(0, &rng);
    CHECK(a.shape() == Shape{32, 32, 3});
    for (double v : a.data()) saw_padding = saw_padding || v == 0.0;
  }
  CHECK(saw_padding);
  // Evaluation never augments.
  CHECK(aug.input(0, nullptr) == Tensor(Shape{32, 32, 3}, 1.0));
}

TEST_CASE("freeze phase leaves the backbone untouched") {
  const ModelSpec spec = scaled_for_test(model_by_name("so-cnn-1-same"));
  Model<double> model(spec, Rng(2));
  const RandomSource data(spec.input_shape(), 12, spec.classes, 3);
  const RandomSource empty(spec.input_shape(), 0, spec.classes, 3);
  const auto before = snapshot(model);

  TrainOptions o = quick_options(2);
  o.phase1_epochs = 2;
  TrainState state;
  const auto records = train(model, data, empty, o, state);
  CHECK(records.size() == 2);
  CHECK(state.phase == 0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = model.params()[i];
    INFO(p.name);
    if (p.backbone)
      CHECK(p.value == before[i]);
    else
      CHECK_FALSE(p.value == before[i]);
  }
  for (const auto& p : model.params().items()) CHECK(p.trainable);

  // Fine-tuning continues at a tenth of the rate and moves everything.
  o.sgd.max_epochs = 3;
  const auto more = train(model, data, empty, o, state);
  REQUIRE(more.size() == 1);
  CHECK(state.phase == 1);
  CHECK(more[0].lr == doctest::Approx(0.005));
  for (std::size_t i = 0; i < before.size(); ++i) CHECK_FALSE(model.params()[i].value == before[i]);
}

TEST_CASE("single phase equals a hand-written minibatch loop") {
  const ModelSpec spec = build_synth_cdu(12, 3, 2, 3, 3);
  Model<double> trained(spec, Rng(4));
  Model<double> manual(spec, Rng(4));
  const RandomSource data(spec.input_shape(), 8, 2, 5);
  const RandomSource empty(spec.input_shape(), 0, 2, 5);
  TrainOptions o = quick_options(1);
  o.sgd.batch_size = 8;
  TrainState state;
  const auto rec = train(trained, data, empty, o, state);

  auto& params = manual.params();
  params.zero_grad();
  std::vector<Tensor> sink;
  double loss = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Graph<double> g;
    const auto bound = manual.bind(g);
    const auto l = softmax_cross_entropy(manual.forward(g.constant(data.input(i, nullptr)), bound),
                                         data.label(i));
    g.backward(l);
    loss += l.value()[0];
    manual.collect_grads(g, bound, sink);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& p = params[k];
    for (std::size_t j = 0; j < p.value.numel(); ++j) p.value[j] -= 0.05 * sink[k][j] / 8.0;
  }
  CHECK(rec[0].train_loss == doctest::Approx(loss / 8).epsilon(1e-12));
  for (std::size_t k = 0; k < params.size(); ++k)
    CHECK(oracle::max_diff(trained.params()[k].value, params[k].value) < 1e-12);
}

TEST_CASE("training is reproducible") {
  const ModelSpec spec = build_synth_cdu(12, 3, 2, 3, 3);
  const RandomSource data(spec.input_shape(), 20, 2, 6);
  const RandomSource val(spec.input_shape(), 6, 2, 7);
  for (std::size_t threads : {1u, 3u}) {
    TrainOptions o = quick_options(3);
    o.threads = threads;
    Model<double> a(spec, Rng(8)), b(spec, Rng(8));
    TrainState sa, sb;
    const auto ra = train(a, data, val, o, sa);
    const auto rb = train(b, data, val, o, sb);
    for (std::size_t e = 0; e < ra.size(); ++e) {
      CHECK(ra[e].train_loss == rb[e].train_loss);
      CHECK(ra[e].val_loss == rb[e].val_loss);
    }
    for (std::size_t k = 0; k < a.params().size(); ++k) CHECK(a.params()[k].value == b.params()[k].value);
  }
}

TEST_CASE("resume matches an uninterrupted run") {
  const ModelSpec spec = build_synth_cdu(12, 3, 2, 3, 3);
  const RandomSource data(spec.input_shape(), 10, 2, 6);
  const RandomSource val(spec.input_shape(), 4, 2, 7);
  Model<double> whole(spec, Rng(8)), split(spec, Rng(8));
  TrainState sw, ss;
  train(whole, data, val, quick_options(4), sw);
  train(split, data, val, quick_options(2), ss);
  const auto tail = train(split, data, val, quick_options(4), ss);
  REQUIRE(tail.size() == 2);
  CHECK(tail[0].epoch == 3);
  for (std::size_t k = 0; k < whole.params().size(); ++k)
    CHECK(whole.params()[k].value == split.params()[k].value);
}

TEST_CASE("phases without trainable parameters are rejected") {
  const ModelSpec spec = build_synth_cdu(12, 3, 2, 3, 3);
  Model<double> model(spec, Rng(1));
  const RandomSource data(spec.input_shape(), 4, 2, 6);
  TrainOptions o = quick_options(2);
  o.phase1_epochs = 1;
  CHECK_THROWS_AS(two_phase_train(model, data, data, o), ConfigError);

  for (auto& p : model.params().items()) p.backbone = true;
  TrainState state;
  CHECK_THROWS_AS(train(model, data, data, o, state), ConfigError);
}

TEST_CASE("evaluation report") {
  const ModelSpec spec = build_synth_cdu(12, 3, 3, 3, 3);
  const Model<double> model(spec, Rng(1));
  const RandomSource data(spec.input_shape(), 7, 3, 2);
  const EvalReport r = evaluate(model, data, 2);
  CHECK(r.count == 7);
  CHECK(r.class_counts == std::vector<std::size_t>{3, 2, 2});
  double hits = 0;
  for (std::size_t c = 0; c < 3; ++c) hits += r.per_class[c] * static_cast<double>(r.class_counts[c]);
  CHECK(hits / 7 == doctest::Approx(r.top1));
  CHECK(evaluate(model, data, 1).loss == doctest::Approx(r.loss).epsilon(1e-14));
}
