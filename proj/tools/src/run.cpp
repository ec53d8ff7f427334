#include "socnn_cli/run.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "socnn/checkpoint.hpp"
#include "socnn/errors.hpp"

namespace socnn::cli {

namespace fs = std::filesystem;

namespace {

FeatureSet take(const FeatureSet& set, std::size_t begin, std::size_t end) {
  FeatureSet out;
  out.features.assign(set.features.begin() + begin, set.features.begin() + end);
  out.labels.assign(set.labels.begin() + begin, set.labels.begin() + end);
  return out;
}

std::size_t holdout_count(const RunConfig& cfg, std::size_t n) {
  const double frac = cfg.real("data.val_holdout");
  if (!(frac >= 0.0 && frac < 1.0)) throw ConfigError("data.val_holdout must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
}

std::size_t limit(std::size_t n, std::size_t cap) { return cap == 0 ? n : std::min(n, cap); }

void store_features(Checkpoint& ckpt, const std::string& prefix, const FeatureSet& set) {
  std::size_t sites = 0, dim = 0;
  if (set.size() > 0) {
    sites = set.features[0].rows();
    dim = set.features[0].cols();
  }
  Tensor features(Shape{set.size(), sites, dim});
  Tensor labels(Shape{set.size()});
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::copy(set.features[i].data().begin(), set.features[i].data().end(),
              features.data().begin() + static_cast<std::ptrdiff_t>(i * sites * dim));
    labels[i] = static_cast<double>(set.labels[i]);
  }
  ckpt.put(prefix + "/features", std::move(features));
  ckpt.put(prefix + "/labels", std::move(labels));
}

FeatureSet read_features(const Checkpoint& ckpt, const std::string& prefix) {
  const Tensor& features = ckpt.at(prefix + "/features");
  const Tensor& labels = ckpt.at(prefix + "/labels");
  if (features.shape().rank() != 3 || labels.shape().rank() != 1 ||
      features.shape()[0] != labels.numel()) {
    throw FormatError("synthetic dataset: inconsistent '" + prefix + "' entries");
  }
  const std::size_t sites = features.shape()[1], dim = features.shape()[2];
  FeatureSet set;
  for (std::size_t i = 0; i < labels.numel(); ++i) {
    Tensor x(Shape{sites, dim});
    const auto begin = features.data().begin() + static_cast<std::ptrdiff_t>(i * sites * dim);
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(sites * dim), x.data().begin());
    set.features.push_back(std::move(x));
    set.labels.push_back(static_cast<std::size_t>(labels[i]));
  }
  return set;
}

template <typename T>
void save_run_checkpoint(const fs::path& file, const ParamSet<T>& params, const TrainState& s) {
  Checkpoint ckpt;
  store_params(ckpt, params);
  ckpt.put("state/epoch", Tensor::vector({static_cast<double>(s.epoch)}));
  ckpt.put("state/phase", Tensor::vector({static_cast<double>(s.phase)}));
  ckpt.put("state/scheduler",
           Tensor::vector({s.scheduler.lr, s.scheduler.best,
                           static_cast<double>(s.scheduler.bad_epochs),
                           static_cast<double>(s.scheduler.reductions)}));
  ckpt.put("state/best_val_loss", Tensor::vector({s.best_val_loss}));
  ckpt.save(file);
}

TrainState read_run_state(const Checkpoint& ckpt) {
  TrainState s;
  if (!ckpt.contains("state/epoch")) return s;
  const Tensor& sched = ckpt.at("state/scheduler");
  if (sched.numel() != 4) throw FormatError("checkpoint: malformed scheduler state");
  s.epoch = static_cast<std::size_t>(ckpt.at("state/epoch")[0]);
  s.phase = static_cast<std::size_t>(ckpt.at("state/phase")[0]);
  s.scheduler = {sched[0], sched[1], static_cast<std::size_t>(sched[2]),
                 static_cast<std::size_t>(sched[3])};
  s.best_val_loss = ckpt.at("state/best_val_loss")[0];
  s.initialized = true;
  return s;
}

template <typename T>
int train_impl(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.text("out");
  fs::create_directories(dir);
  cfg.write(dir / "config.txt");

  DataSplits<T> data = load_data<T>(cfg);
  const ModelSpec spec = model_from_config(cfg, data.info);
  Model<T> model(spec, Rng(cfg.u64("seed")).split("model"));
  const TrainOptions options = train_options_from_config(cfg);

  TrainState state;
  if (const std::string& resume = cfg.text("checkpoint"); !resume.empty()) {
    const Checkpoint ckpt = Checkpoint::load(resume);
    restore_params(model.params(), ckpt);
    state = read_run_state(ckpt);
    out << "resumed from " << resume << " after epoch " << state.epoch << "\n";
  }

  const fs::path metrics = dir / "metrics.csv";
  const bool append = state.initialized && fs::exists(metrics);
  std::ofstream csv(metrics, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw Error("cannot write " + metrics.string());
  if (!append) csv << kMetricsHeader << "\n";

  out << spec.name << ": " << model.params().scalar_count() << " parameters, "
      << data.train->size() << " train / " << data.val->size() << " val / "
      << data.test->size() << " test\n";

  const auto on_epoch = [&](const EpochRecord& rec, const TrainState& s, bool improved) {
    csv << metrics_row(rec) << "\n";
    csv.flush();
    save_run_checkpoint(dir / "last.ckpt", model.params(), s);
    if (improved) save_run_checkpoint(dir / "best.ckpt", model.params(), s);
    char line[160];
    std::snprintf(line, sizeof line,
                  "epoch %3zu  train_loss %.4f  val_loss %.4f  val_acc %.4f  lr %.2e%s\n",
                  rec.epoch, rec.train_loss, rec.val_loss, rec.val_acc, rec.lr,
                  improved ? "  *" : "");
    out << line << std::flush;
  };
  train(model, *data.train, *data.val, options, state, on_epoch);

  if (data.test->size() > 0) {
    const EvalReport report = evaluate(model, *data.test, options.threads);
    char line[96];
    std::snprintf(line, sizeof line, "test_acc %.4f  test_loss %.4f\n", report.top1, report.loss);
    out << line;
  }
  return 0;
}

template <typename T>
int eval_impl(const RunConfig& cfg, std::ostream& out) {
  const std::string& path = cfg.text("checkpoint");
  if (path.empty()) throw ConfigError("eval needs --checkpoint");
  DataSplits<T> data = load_data<T>(cfg);
  const ModelSpec spec = model_from_config(cfg, data.info);
  Model<T> model(spec, Rng(cfg.u64("seed")).split("model"));
  restore_params(model.params(), Checkpoint::load(path));

  const std::string& split = cfg.text("eval.split");
  const DataSource<T>* source = nullptr;
  if (split == "test") source = data.test.get();
  else if (split == "train") source = data.train.get();
  else throw ConfigError("eval.split must be 'test' or 'train'");

  const EvalReport report = evaluate(model, *source, cfg.count("threads"));
  char line[128];
  std::snprintf(line, sizeof line, "top1 %.4f  loss %.4f  samples %zu\n", report.top1, report.loss,
                report.count);
  out << line;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    std::snprintf(line, sizeof line, "class %2zu  acc %.4f  n %zu\n", c, report.per_class[c],
                  report.class_counts[c]);
    out << line;
  }
  return 0;
}

bool use_float(const RunConfig& cfg) {
  const std::string& p = cfg.text("precision");
  if (p == "float") return true;
  if (p == "double") return false;
  throw ConfigError("precision must be 'float' or 'double'");
}

}  // namespace

SynthSpec synth_spec_from_config(const RunConfig& cfg) {
  return make_synth_spec(cfg.count("synth.classes"), cfg.count("synth.dim"),
                         cfg.count("synth.sites"), cfg.u64("seed"),
                         cfg.real("synth.max_variance"), cfg.real("synth.condition"));
}

SynthDataset generate_synth_dataset(const RunConfig& cfg) {
  SynthDataset d;
  d.spec = synth_spec_from_config(cfg);
  d.train = gen_synthetic(d.spec, cfg.count("synth.train"), 1);
  d.test = gen_synthetic(d.spec, cfg.count("synth.test"), 2);
  return d;
}

void save_synth_dataset(const fs::path& file, const SynthDataset& data) {
  Checkpoint ckpt;
  const auto& s = data.spec;
  ckpt.put("synth/meta", Tensor::vector({static_cast<double>(s.classes),
                                         static_cast<double>(s.feature_dim),
                                         static_cast<double>(s.sites),
                                         static_cast<double>(s.seed & 0xffffffffu),
                                         static_cast<double>(s.seed >> 32)}));
  for (std::size_t c = 0; c < s.factors.size(); ++c) {
    ckpt.put("synth/factor/" + std::to_string(c), s.factors[c]);
  }
  store_features(ckpt, "train", data.train);
  store_features(ckpt, "test", data.test);
  ckpt.save(file);
}

SynthDataset load_synth_dataset(const fs::path& file) {
  const Checkpoint ckpt = Checkpoint::load(file);
  const Tensor& meta = ckpt.at("synth/meta");
  if (meta.numel() != 5) throw FormatError("synthetic dataset: malformed meta entry");
  SynthDataset d;
  d.spec.classes = static_cast<std::size_t>(meta[0]);
  d.spec.feature_dim = static_cast<std::size_t>(meta[1]);
  d.spec.sites = static_cast<std::size_t>(meta[2]);
  d.spec.seed = static_cast<std::uint64_t>(meta[3]) | (static_cast<std::uint64_t>(meta[4]) << 32);
  for (std::size_t c = 0; c < d.spec.classes; ++c) {
    d.spec.factors.push_back(ckpt.at("synth/factor/" + std::to_string(c)));
  }
  d.spec.validate();
  d.train = read_features(ckpt, "train");
  d.test = read_features(ckpt, "test");
  for (const auto* set : {&d.train, &d.test}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      if (set->labels[i] >= d.spec.classes ||
          set->features[i].shape() != Shape{d.spec.sites, d.spec.feature_dim}) {
        throw FormatError("synthetic dataset: sample does not match its spec");
      }
    }
  }
  return d;
}

template <typename T>
DataSplits<T> load_data(const RunConfig& cfg) {
  DataSplits<T> splits;
  const std::string& source = cfg.text("data.source");
  const std::string& path = cfg.text("data.path");
  const std::size_t train_cap = cfg.count("data.train_limit");
  const std::size_t test_cap = cfg.count("data.test_limit");

  if (source == "cifar") {
    if (path.empty()) throw ConfigError("data.path must name the CIFAR-10 binary directory");
    CifarData cifar = load_cifar10(path);
    const ImageSet all = cifar.train.slice(0, limit(cifar.train.size(), train_cap));
    const std::size_t n_val = holdout_count(cfg, all.size());
    const ImageSet train = all.slice(0, all.size() - n_val);
    const auto means = channel_means(train);
    AugmentOptions aug;
    aug.flip = cfg.flag("data.flip");
    aug.crop_pad = cfg.count("data.crop_pad");
    ImageSet test = cifar.test.slice(0, limit(cifar.test.size(), test_cap));
    splits.train = std::make_unique<ImageSource<T>>(train, means, aug);
    splits.test = std::make_unique<ImageSource<T>>(test, means, aug);
    splits.val = n_val > 0
                     ? std::make_unique<ImageSource<T>>(all.slice(all.size() - n_val, all.size()),
                                                        means, aug)
                     : std::make_unique<ImageSource<T>>(test, means, aug);
    splits.info = {true, 0, 0, kCifarClasses};
    return splits;
  }
  if (source != "synth") throw ConfigError("data.source must be 'cifar' or 'synth'");

  SynthDataset d = path.empty() ? generate_synth_dataset(cfg) : load_synth_dataset(path);
  const FeatureSet all = take(d.train, 0, limit(d.train.size(), train_cap));
  const std::size_t n_val = holdout_count(cfg, all.size());
  FeatureSet test = take(d.test, 0, limit(d.test.size(), test_cap));
  splits.train = std::make_unique<FeatureSource<T>>(take(all, 0, all.size() - n_val));
  splits.val = std::make_unique<FeatureSource<T>>(
      n_val > 0 ? take(all, all.size() - n_val, all.size()) : test);
  splits.test = std::make_unique<FeatureSource<T>>(std::move(test));
  splits.info = {false, d.spec.sites, d.spec.feature_dim, d.spec.classes};
  return splits;
}

ModelSpec model_from_config(const RunConfig& cfg, const InputInfo& info) {
  const std::string& name = cfg.text("model");
  ModelSpec spec;
  if (name == "synth-cdu" || name == "synth-meanpool") {
    if (info.images) throw ConfigError("model " + name + " expects synthetic feature input");
    spec = name == "synth-cdu" ? build_synth_cdu(info.sites, info.features, info.classes, 16, 16)
                               : build_synth_meanpool(info.sites, info.features, info.classes, 28);
  } else {
    spec = model_by_name(name);
    if (!info.images) {
      // Image models on feature data: drop the backbone, keep the head.
      spec.backbone.clear();
      spec.input_height = info.sites;
      spec.input_width = 1;
      spec.input_channels = info.features;
    }
    if (info.classes) spec.classes = info.classes;
  }
  if (cfg.flag("model.toy")) {
    if (info.images) throw ConfigError("model.toy needs 8x8 inputs and cannot run on CIFAR");
    spec = scaled_for_test(spec);
  }

  auto& unit = spec.cdu.unit;
  if (const auto dims = cfg.list("model.o2t_dims"); !dims.empty()) unit.o2t_dims = dims;
  if (const auto pv = cfg.count("model.pv_dim"); pv > 0) unit.pv_dim = pv;
  if (const auto fc = cfg.count("model.fc_width"); fc > 0) spec.fc_width = fc;
  unit.mean_augment = cfg.flag("model.mean_augment");
  unit.beta = cfg.real("model.beta");
  unit.robust = cfg.flag("model.robust");
  unit.alpha = cfg.real("model.alpha");
  unit.orthonormal_o2t = cfg.flag("model.orthonormal");
  spec.cdu.groups = cfg.count("model.groups");
  spec.cdu.fusion = FusionSpec::parse(cfg.text("model.fusion"));
  if (const auto t = cfg.count("model.transition"); t > 0) spec.transition_dim = t;
  spec.validate();
  return spec;
}

TrainOptions train_options_from_config(const RunConfig& cfg) {
  TrainOptions o;
  o.sgd.initial_lr = cfg.real("optim.initial_lr");
  o.sgd.plateau_factor = cfg.real("optim.plateau_factor");
  o.sgd.plateau_patience = cfg.count("optim.patience");
  o.sgd.plateau_threshold = cfg.real("optim.threshold");
  o.sgd.momentum = cfg.real("optim.momentum");
  o.sgd.batch_size = cfg.count("optim.batch_size");
  o.sgd.max_epochs = cfg.count("optim.epochs");
  o.sgd.seed = cfg.u64("seed");
  o.sgd.validate();
  o.threads = std::max<std::size_t>(1, cfg.count("threads"));
  o.phase1_epochs = cfg.count("optim.phase1_epochs");
  o.phase2_lr = cfg.real("optim.phase2_lr");
  o.record_time = cfg.flag("metrics.wall_time");
  return o;
}

std::string metrics_row(const EpochRecord& rec) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.3f", rec.epoch, rec.train_loss,
                rec.val_loss, rec.val_acc, rec.lr, rec.wall_seconds);
  return buf;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  return use_float(cfg) ? train_impl<float>(cfg, out) : train_impl<double>(cfg, out);
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  return use_float(cfg) ? eval_impl<float>(cfg, out) : eval_impl<double>(cfg, out);
}

int cmd_count_params(const RunConfig& cfg, const std::vector<std::string>& names,
                     std::ostream& out) {
  std::vector<std::string> todo = names;
  if (todo.empty()) todo.push_back(cfg.text("model"));
  for (const auto& name : todo) {
    RunConfig local = cfg;
    local.set("model", name);
    InputInfo info{true, 0, 0, kCifarClasses};
    if (name.rfind("synth-", 0) == 0) {
      info = {false, cfg.count("synth.sites"), cfg.count("synth.dim"), cfg.count("synth.classes")};
    }
    const ModelSpec spec = model_from_config(local, info);
    char line[160];
    out << spec.name << "\n";
    for (const auto& row : param_breakdown(spec)) {
      std::snprintf(line, sizeof line, "  %-16s %-32s %10zu\n", row.layer.c_str(),
                    row.shape.c_str(), row.count);
      out << line;
    }
    std::snprintf(line, sizeof line, "  %-16s %-32s %10zu\n", "total", "", count_params(spec));
    out << line;
  }
  return 0;
}

int cmd_gen_synth(const RunConfig& cfg, const fs::path& file, std::ostream& out) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const SynthDataset d = generate_synth_dataset(cfg);
  save_synth_dataset(file, d);
  out << "wrote " << d.train.size() << " train / " << d.test.size() << " test samples ("
      << d.spec.classes << " classes, " << d.spec.sites << "x" << d.spec.feature_dim << ") to "
      << file.string() << "\n";
  return 0;
}

template DataSplits<float> load_data(const RunConfig&);
template DataSplits<double> load_data(const RunConfig&);

}  // namespace socnn::cli
